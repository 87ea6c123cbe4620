"""Experiment harness: seeded sweeps, CSV result rows, summaries and plot data.

A config is a plain ``key = value`` file describing one experiment::

    name = fig2_small_k
    problem = qoecp            # or dbocp
    n = 18                     # list ("35, 40") or range ("100..1000:100")
    k = 3..9                   # qoecp: explicit K values, or k_frac = 0.1
    algorithms = MDC, MDE, Random, TopK, OPT, OPT-C
    capacities = identical     # undesignated | identical | pool:c1,c2,...
    repetitions = 100
    seed = 1

dbocp experiments give ``d = 20, 25, 30`` (ms) or ``d_percentiles = 30, 40, 50``
(percentiles of the optimal K=``d_reference_k`` delay over the instances of
each n). Algorithm names with a ``-C`` suffix, plus MDE, Heuristic and MKH,
use the designated capacity regime; the others are undesignated.
"""
from __future__ import annotations

import csv
import hashlib
import io
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import dbocp, exact, qoecp
from .delaymap import all_pairs_delay
from .errors import (BudgetExceededError, CloudletError, ConstraintViolation,
                     InfeasibleCapacityError, InvalidConfigError, TimeLimitExceeded)
from .netmodel import CloudletSpec, generate_topology, identical_capacities, pool_capacities

QOECP_ALGORITHMS = ("MDC", "MDE", "Heuristic", "Random", "Random-C", "TopK", "TopK-C",
                    "OPT", "OPT-C")
DBOCP_ALGORITHMS = ("MKC", "MKH", "Random", "Random-C", "TopK", "TopK-C", "OPT", "OPT-C")
_ALWAYS_DESIGNATED = {"MDE", "Heuristic", "MKH"}
TIMING_COLUMNS = ("wall_time_ms",)


def is_designated(alg):
    return alg in _ALWAYS_DESIGNATED or alg.endswith("-C")


def reference_of(alg):
    """The OPT column an algorithm is compared against."""
    return "OPT-C" if is_designated(alg) else "OPT"


# -- config -------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    name: str
    problem: str = "qoecp"
    n: list = field(default_factory=list)
    k: list = field(default_factory=list)
    k_frac: float | None = None
    d: list = field(default_factory=list)
    d_percentiles: list = field(default_factory=list)
    d_reference_k: int = 5
    algorithms: list = field(default_factory=list)
    capacities: str = "undesignated"
    repetitions: int = 100
    seed: int = 0
    time_limit: float | None = None
    edge_prob: float = 0.02
    delay_range: tuple = (5.0, 50.0)
    req_range: tuple = (50, 500)
    demand_range: tuple = (50, 200)
    subset_limit: int = exact.DEFAULT_SUBSET_LIMIT
    mdc_starts: int = 1
    k_cap: int | None = None

    def __post_init__(self):
        if not self.name:
            raise InvalidConfigError("config needs a name")
        if self.problem not in ("qoecp", "dbocp"):
            raise InvalidConfigError(f"problem must be qoecp or dbocp, got {self.problem!r}")
        if not self.n:
            raise InvalidConfigError("n sweep is empty")
        if self.repetitions < 1:
            raise InvalidConfigError("repetitions must be >= 1")
        if not self.algorithms:
            raise InvalidConfigError("algorithm list is empty")
        known = QOECP_ALGORITHMS if self.problem == "qoecp" else DBOCP_ALGORITHMS
        for alg in self.algorithms:
            if alg not in known:
                raise InvalidConfigError(f"unknown {self.problem} algorithm {alg!r}")
        if self.problem == "qoecp":
            if bool(self.k) == (self.k_frac is not None):
                raise InvalidConfigError("qoecp needs exactly one of k or k_frac")
            if self.k_frac is not None and not 0 < self.k_frac <= 1:
                raise InvalidConfigError("k_frac must lie in (0, 1]")
        elif bool(self.d) == bool(self.d_percentiles):
            raise InvalidConfigError("dbocp needs exactly one of d or d_percentiles")
        if any(v < 0 for v in self.d):
            raise InvalidConfigError("delay budgets must be nonnegative")
        if any(not 0 <= p <= 100 for p in self.d_percentiles):
            raise InvalidConfigError("percentiles must lie in [0, 100]")
        if any(is_designated(a) for a in self.algorithms) and self.capacities == "undesignated":
            raise InvalidConfigError("designated algorithms need a capacities regime")
        self.capacity_rule()  # validates the regime string

    def k_values(self, n):
        if self.k_frac is not None:
            return [max(1, int(math.floor(self.k_frac * n + 0.5)))]
        return [k for k in self.k if k <= n]

    def capacity_rule(self):
        reg = self.capacities
        if reg == "undesignated":
            return None
        if reg == "identical":
            return identical_capacities
        if reg.startswith("pool:"):
            try:
                pool = [int(c) for c in reg[5:].split(",") if c.strip()]
            except ValueError:
                raise InvalidConfigError(f"bad capacity pool {reg!r}") from None
            if not pool:
                raise InvalidConfigError("capacity pool is empty")
            return pool_capacities(pool)
        raise InvalidConfigError(f"unknown capacities regime {reg!r}")

    def schedule_note(self, alg):
        if not is_designated(alg):
            return "undesignated"
        return self.capacity_rule().description

    def instance(self, n, rep):
        seed = instance_seed(self.seed, n, rep)
        return generate_topology(n, self.edge_prob, self.delay_range, self.req_range,
                                 self.demand_range, seed)


def instance_seed(base, n, rep):
    """base XOR a stable 64-bit hash of the sweep point (n) and repetition."""
    h = hashlib.blake2b(f"{n}:{rep}".encode(), digest_size=8).digest()
    return (int(base) ^ int.from_bytes(h, "little")) & (2**64 - 1)


def _int_list(text):
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            span, _, step = part.partition(":")
            lo, hi = span.split("..")
            out.extend(range(int(lo), int(hi) + 1, int(step or 1)))
        else:
            out.append(int(part))
    return out


def _float_list(text):
    return [float(p) for p in text.split(",") if p.strip()]


def _pair(cast):
    def parse(text):
        lo, _, hi = text.partition("..")
        if not hi:
            raise ValueError("expected lo..hi")
        return (cast(lo), cast(hi))
    return parse


_PARSERS = {
    "name": str.strip,
    "problem": str.strip,
    "n": _int_list,
    "k": _int_list,
    "k_frac": float,
    "d": _float_list,
    "d_percentiles": _float_list,
    "d_reference_k": int,
    "algorithms": lambda t: [a.strip() for a in t.split(",") if a.strip()],
    "capacities": lambda t: t.replace(" ", ""),
    "repetitions": int,
    "seed": int,
    "time_limit": float,
    "edge_prob": float,
    "delay": _pair(float),
    "requests": _pair(int),
    "demand": _pair(int),
    "subset_limit": lambda t: int(float(t)),
    "mdc_starts": int,
    "k_cap": int,
}
_FIELD_OF = {"delay": "delay_range", "requests": "req_range", "demand": "demand_range"}


def parse_config(text):
    """Parse a ``key = value`` config; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep:
            raise InvalidConfigError(f"line {lineno}: expected key = value")
        if key not in _PARSERS:
            raise InvalidConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise InvalidConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[key](val.strip())
        except ValueError as e:
            raise InvalidConfigError(f"line {lineno}: bad value for {key}: {e}") from None
    if "name" not in values:
        raise InvalidConfigError("config needs a name")
    return ExperimentConfig(**{_FIELD_OF.get(k, k): v for k, v in values.items()})


def load_config(path):
    return parse_config(Path(path).read_text(encoding="utf-8"))


# -- rows -----------------------------------------------------------------------

@dataclass
class ResultRow:
    config: str
    problem: str
    n: int
    k: int | None
    d_ms: float | None
    algorithm: str
    rep: int
    seed: int
    status: str  # ok | timeout | skipped=budget | infeasible | error
    feasible: bool
    met: bool | None
    k_achieved: int | None
    avg_delay_ms: float | None
    total_delay_ms: float | None
    wall_time_ms: float | None
    capacity_schedule: str

    def sort_key(self):
        point = self.k if self.problem == "qoecp" else self.d_ms
        return (self.n, point, self.algorithm, self.rep)


COLUMNS = [f.name for f in fields(ResultRow)]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows, exclude=()):
    cols = [c for c in COLUMNS if c not in exclude]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        d = asdict(r)
        w.writerow([_fmt(d[c]) for c in cols])
    return buf.getvalue()


_ROW_TYPES = {"n": int, "k": int, "d_ms": float, "rep": int, "seed": int,
              "feasible": lambda s: s == "1", "met": lambda s: s == "1",
              "k_achieved": int, "avg_delay_ms": float, "total_delay_ms": float,
              "wall_time_ms": float}


def rows_from_csv(text):
    rows = []
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != COLUMNS:
        raise InvalidConfigError("not a result CSV (unexpected header)")
    for rec in reader:
        vals = {c: (None if rec[c] == "" else _ROW_TYPES.get(c, str)(rec[c])) for c in COLUMNS}
        vals["capacity_schedule"] = vals["capacity_schedule"] or ""
        rows.append(ResultRow(**vals))
    return rows


# -- running --------------------------------------------------------------------

def _solve_qoecp(cfg, alg, inst, dmap, k, seed, time_limit):
    rule = cfg.capacity_rule()
    spec = rule(inst, k) if is_designated(alg) else CloudletSpec(k)
    base = alg.removesuffix("-C")
    if base == "MDC":
        p = qoecp.mdc(inst, dmap, k, seed=seed, n_init=cfg.mdc_starts)
    elif base == "MDE":
        p = qoecp.mde(inst, dmap, spec)
    elif base == "Heuristic":
        p = qoecp.heuristic_baseline(inst, dmap, spec)
    elif base == "Random":
        p = qoecp.random_placement(inst, dmap, spec, seed=seed)
    elif base == "TopK":
        p = qoecp.topk_placement(inst, dmap, spec)
    else:
        p = exact.opt_qoecp(inst, dmap, spec, cfg.subset_limit, time_limit=time_limit)
    return spec, p, None


def _solve_dbocp(cfg, alg, inst, dmap, d, seed, time_limit):
    rule = cfg.capacity_rule() if is_designated(alg) else None
    base = alg.removesuffix("-C")
    k_cap = cfg.k_cap if cfg.k_cap is None else min(cfg.k_cap, inst.sites.size)
    if base == "MKC":
        sol = dbocp.mkc(inst, dmap, d, seed=seed, k_cap=k_cap)
    elif base == "MKH":
        sol = dbocp.mkh(inst, dmap, d, rule, k_cap=k_cap)
    elif base == "Random":
        sol = dbocp.random_k_search(inst, dmap, d, seed=seed, k_cap=k_cap, capacity_rule=rule)
    elif base == "TopK":
        sol = dbocp.topk_k_search(inst, dmap, d, k_cap=k_cap, capacity_rule=rule)
    else:
        sol = exact.opt_dbocp(inst, dmap, d, rule, cfg.subset_limit, k_cap=k_cap,
                              time_limit=time_limit)
    spec = CloudletSpec(sol.k) if rule is None else rule(inst, sol.k)
    return spec, sol.placement, sol.met


def _run_cell(cfg, alg, inst, dmap, n, point, rep):
    seed = inst.seed
    qo = cfg.problem == "qoecp"
    row = dict(config=cfg.name, problem=cfg.problem, n=n, k=point if qo else None,
               d_ms=None if qo else point, algorithm=alg, rep=rep, seed=seed,
               status="ok", feasible=False, met=None, k_achieved=None, avg_delay_ms=None,
               total_delay_ms=None, wall_time_ms=None,
               capacity_schedule=cfg.schedule_note(alg))
    solve = _solve_qoecp if qo else _solve_dbocp
    t0 = time.perf_counter()
    try:
        spec, p, met = solve(cfg, alg, inst, dmap, point, seed, cfg.time_limit)
    except TimeLimitExceeded:
        row["status"] = "timeout"
    except BudgetExceededError:
        row["status"] = "skipped=budget"
    except InfeasibleCapacityError:
        row["status"] = "infeasible"
    else:
        row["wall_time_ms"] = (time.perf_counter() - t0) * 1000.0
        try:
            ev = qoecp.certify(inst, dmap, p, spec)
        except ConstraintViolation as e:
            row["status"] = f"error={e.constraint}"
        else:
            row.update(feasible=True, k_achieved=p.k, avg_delay_ms=ev.avg_delay,
                       total_delay_ms=ev.total_delay)
            if met is not None:
                # the budget check is redone on the recomputed delay
                row["met"] = dbocp.DelayBudget(point).met(ev.avg_delay)
                if row["met"] != met:
                    row["status"] = "error=C8"
    return ResultRow(**row)


def _run_instance(args):
    cfg, n, rep, points = args
    inst = cfg.instance(n, rep)
    dmap = all_pairs_delay(inst)
    return [_run_cell(cfg, alg, inst, dmap, n, pt, rep)
            for pt in points for alg in cfg.algorithms]


def _reference_delay(args):
    cfg, n, rep = args
    inst = cfg.instance(n, rep)
    k = min(cfg.d_reference_k, inst.sites.size)
    return exact.opt_qoecp(inst, all_pairs_delay(inst), CloudletSpec(k),
                           cfg.subset_limit).avg_delay


def budgets_for(cfg, n, mapper=map):
    """Delay budgets for size ``n``: explicit, or percentiles of the optimal
    reference-K delay over this size's instances."""
    if cfg.d:
        return list(cfg.d)
    ref = list(mapper(_reference_delay, [(cfg, n, rep) for rep in range(cfg.repetitions)]))
    return [float(np.percentile(ref, p)) for p in cfg.d_percentiles]


def run_experiment(cfg, workers=1):
    """Every (n, point, algorithm, repetition) cell, sorted by (point, algorithm, rep)."""
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    mapper = pool.map if pool else map
    try:
        tasks = []
        for n in cfg.n:
            points = cfg.k_values(n) if cfg.problem == "qoecp" else budgets_for(cfg, n, mapper)
            tasks.extend((cfg, n, rep, points) for rep in range(cfg.repetitions))
        rows = [r for batch in mapper(_run_instance, tasks) for r in batch]
    finally:
        if pool:
            pool.shutdown()
    rows.sort(key=ResultRow.sort_key)
    return rows


# -- summaries ------------------------------------------------------------------

@dataclass
class SummaryRow:
    config: str
    problem: str
    n: int
    k: int | None
    d_ms: float | None
    algorithm: str
    runs: int
    ok: int
    mean_delay_ms: float | None
    std_delay_ms: float | None
    mean_k: float | None
    std_k: float | None
    met_rate: float | None
    mean_wall_ms: float | None
    ratio_to_opt: float | None


SUMMARY_COLUMNS = [f.name for f in fields(SummaryRow)]


def _mean_std(vals):
    if not vals:
        return None, None
    return statistics.fmean(vals), statistics.pstdev(vals)


def summarize(rows):
    """Per-cell mean and population stddev, plus the ratio to the matching
    OPT column (paired over repetitions where both succeeded)."""
    rows = list(rows)
    if not rows:
        raise InvalidConfigError("no rows to summarize")
    configs = {r.config for r in rows}
    if len(configs) > 1:
        raise InvalidConfigError(f"rows mix configs {sorted(configs)}; summarize one at a time")
    for r in rows:
        if r.feasible and r.status != "ok":
            raise InvalidConfigError(f"row {r.sort_key()} is feasible with status {r.status}")
    cells = {}
    for r in rows:
        cells.setdefault((r.n, r.k, r.d_ms, r.algorithm), []).append(r)
    qo = rows[0].problem == "qoecp"
    out = []
    for (n, k, d, alg), rs in sorted(cells.items(), key=lambda kv: rows_key(kv[0])):
        good = [r for r in rs if r.status == "ok"]
        md, sd = _mean_std([r.avg_delay_ms for r in good])
        mk, sk = _mean_std([float(r.k_achieved) for r in good])
        mw, _ = _mean_std([r.wall_time_ms for r in good if r.wall_time_ms is not None])
        met = None if qo or not good else sum(bool(r.met) for r in good) / len(good)
        ref = cells.get((n, k, d, reference_of(alg)))
        ratio = None
        if ref is not None:
            base = {r.rep: r for r in ref if r.status == "ok"}
            pair = [(r, base[r.rep]) for r in good if r.rep in base]
            if pair:
                if qo:
                    num = sum(a.avg_delay_ms for a, _ in pair)
                    den = sum(b.avg_delay_ms for _, b in pair)
                else:
                    num = sum(a.k_achieved for a, _ in pair)
                    den = sum(b.k_achieved for _, b in pair)
                ratio = num / den if den > 0 else None
        out.append(SummaryRow(rows[0].config, rows[0].problem, n, k, d, alg, len(rs), len(good),
                              md, sd, mk, sk, met, mw, ratio))
    return out


def rows_key(key):
    n, k, d, alg = key
    return (n, k if k is not None else -1, d if d is not None else -1.0, alg)


def summary_to_csv(summary):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for s in summary:
        d = asdict(s)
        w.writerow([_fmt(d[c]) for c in SUMMARY_COLUMNS])
    return buf.getvalue()


def _short(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4g}" if abs(v) < 1e4 else f"{v:.0f}"
    return str(v)


def summary_to_text(summary):
    cols = [c for c in SUMMARY_COLUMNS if c not in ("config", "problem")]
    table = [cols] + [[_short(getattr(s, c)) for c in cols] for s in summary]
    widths = [max(len(row[i]) for row in table) for i in range(len(cols))]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(row, widths)).rstrip() for row in table]
    return "\n".join(lines) + "\n"


def summary_from_csv(text):
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != SUMMARY_COLUMNS:
        raise InvalidConfigError("not a summary CSV (unexpected header)")
    ints = {"n", "k", "runs", "ok"}
    strs = {"config", "problem", "algorithm"}
    out = []
    for rec in reader:
        vals = {}
        for c in SUMMARY_COLUMNS:
            v = rec[c]
            vals[c] = v if c in strs else None if v == "" else int(v) if c in ints else float(v)
        out.append(SummaryRow(**vals))
    return out


# -- plot data ------------------------------------------------------------------

# figure id -> (x column, y column, y stddev column, x label, y label)
FIGURES = {
    "delay_vs_k_small": ("k", "mean_delay_ms", "std_delay_ms", "K", "average delay (ms)"),
    "delay_vs_k_large": ("k", "mean_delay_ms", "std_delay_ms", "K", "average delay (ms)"),
    "delay_vs_n": ("n", "mean_delay_ms", "std_delay_ms", "n", "average delay (ms)"),
    "runtime_vs_n": ("n", "mean_wall_ms", None, "n", "running time (ms)"),
    "k_vs_d": ("d_ms", "mean_k", "std_k", "D (ms)", "K"),
    "k_vs_n": ("n", "mean_k", "std_k", "n", "K"),
}


def emit_plotdata(summary, figure_id, out_dir=None):
    """One whitespace-separated ``.dat`` series per algorithm plus a gnuplot
    stub. Returns {file name: text}; also writes them when ``out_dir`` is set.

    When the summary has several values of the non-plotted coordinate (say
    several n on a K-vs-D plot) each gets its own series file.
    """
    if figure_id not in FIGURES:
        raise InvalidConfigError(f"unknown figure id {figure_id!r}; choose from {sorted(FIGURES)}")
    summary = list(summary)
    if not summary:
        raise InvalidConfigError("summary is empty; nothing to plot")
    xcol, ycol, ecol, xlabel, ylabel = FIGURES[figure_id]
    others = [c for c in ("n", "k", "d_ms") if c != xcol]
    series = {}
    for s in summary:
        y = getattr(s, ycol)
        if y is None:
            continue
        tag = tuple((c, getattr(s, c)) for c in others if getattr(s, c) is not None)
        series.setdefault((s.algorithm, tag), []).append(s)
    multi = {}
    for alg, tag in series:
        multi.setdefault(alg, set()).add(tag)
    files = {}
    plots = []
    for (alg, tag), ss in sorted(series.items(), key=lambda kv: (kv[0][0], str(kv[0][1]))):
        suffix = "" if len(multi[alg]) == 1 else "_" + "_".join(f"{c}{_fmt(v)}" for c, v in tag)
        fname = f"{figure_id}_{alg}{suffix}.dat".replace("/", "_")
        lines = [f"# {xcol} {ycol}" + (f" {ecol}" if ecol else "")]
        for s in sorted(ss, key=lambda s: getattr(s, xcol)):
            vals = [getattr(s, xcol), getattr(s, ycol)]
            if ecol:
                vals.append(getattr(s, ecol) or 0.0)
            lines.append(" ".join(_fmt(float(v)) for v in vals))
        files[fname] = "\n".join(lines) + "\n"
        title = alg + suffix.replace("_", " ")
        plots.append(f"'{fname}' using 1:2 with linespoints title '{title}'")
    gp = [f"# gnuplot driver for {figure_id}",
          "set terminal pngcairo size 800,600",
          f"set output '{figure_id}.png'",
          f"set xlabel '{xlabel}'",
          f"set ylabel '{ylabel}'",
          "set key top right",
          "plot " + ", \\\n     ".join(plots)]
    files[f"{figure_id}.gp"] = "\n".join(gp) + "\n"
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            (out / name).write_text(text, encoding="utf-8", newline="\n")
    return files
