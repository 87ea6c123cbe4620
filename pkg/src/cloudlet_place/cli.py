"""``cloudlet-place`` command line.

Exit codes: 0 success, 1 usage or input error, 2 infeasible capacities,
3 enumeration budget or time limit exceeded.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench, dbocp, exact, qoecp
from .delaymap import all_pairs_delay
from .errors import (BudgetExceededError, CloudletError, InfeasibleCapacityError,
                     InvalidConfigError, TimeLimitExceeded)
from .netmodel import (CloudletSpec, generate_topology, identical_capacities, pool_capacities,
                       read_instance, save_instance)

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_BUDGET = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    # argparse's own exit status 2 would collide with "infeasible"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _range(cast):
    def parse(text):
        lo, _, hi = text.partition("..")
        return (cast(lo), cast(hi or lo))
    return parse


def _read_capacities(path):
    """Integers separated by whitespace or commas; ``#`` comments to end of line."""
    caps = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        for tok in line.split("#", 1)[0].replace(",", " ").split():
            try:
                caps.append(int(tok))
            except ValueError:
                raise InvalidConfigError(f"{path}: line {lineno}: bad capacity {tok!r}") from None
    return caps


def capacity_rule_from(arg):
    """--capacities value -> per-K rule (None when undesignated)."""
    if arg in (None, "none"):
        return None
    if arg == "identical":
        return identical_capacities
    return pool_capacities(_read_capacities(arg))


def _write_or_print(text, out, default_name):
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    if path.is_dir() or out.endswith("/"):
        path.mkdir(parents=True, exist_ok=True)
        path = path / default_name
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")
    print(f"wrote {path}", file=sys.stderr)


def _placement_json(p, extra=None):
    doc = {
        "algorithm": p.algorithm,
        "k": p.k,
        "locations": list(p.locations),
        "avg_delay_ms": p.avg_delay,
        "total_delay_ms": p.total_delay,
        "capacities": None if p.capacities is None else list(p.capacities),
        "demand_load": p.demand_load.tolist(),
        "request_load": p.request_load.tolist(),
        "ap_cloudlet": p.labels().tolist(),
    }
    doc.update(extra or {})
    return json.dumps(doc, indent=2) + "\n"


def _need_one(args, parser):
    if (args.k is None) == (args.dmax is None):
        parser.error("give exactly one of --k or --dmax")


# -- subcommands ------------------------------------------------------------------

def cmd_gen(args):
    inst = generate_topology(args.n, args.edge_prob, args.delay, args.requests, args.demand,
                             args.seed)
    _write_or_print(save_instance(inst), args.out, f"wman_n{args.n}_s{args.seed}.txt")


_QOECP = {
    "MDC": lambda i, m, spec, s: qoecp.mdc(i, m, spec.count, seed=s),
    "MDE": lambda i, m, spec, s: qoecp.mde(i, m, spec),
    "Heuristic": lambda i, m, spec, s: qoecp.heuristic_baseline(i, m, spec),
    "Random": lambda i, m, spec, s: qoecp.random_placement(i, m, spec, seed=s),
    "TopK": lambda i, m, spec, s: qoecp.topk_placement(i, m, spec),
}
_DBOCP = {
    "MKC": lambda i, m, d, rule, s: dbocp.mkc(i, m, d, seed=s),
    "MKH": lambda i, m, d, rule, s: dbocp.mkh(i, m, d, rule or identical_capacities),
    "Random": lambda i, m, d, rule, s: dbocp.random_k_search(i, m, d, seed=s, capacity_rule=rule),
    "TopK": lambda i, m, d, rule, s: dbocp.topk_k_search(i, m, d, capacity_rule=rule),
}


def _spec(inst, k, rule):
    return CloudletSpec(k) if rule is None else rule(inst, k)


def cmd_solve(args, parser):
    _need_one(args, parser)
    inst = read_instance(args.instance)
    dmap = all_pairs_delay(inst)
    rule = capacity_rule_from(args.capacities)
    if args.k is not None:
        if args.alg not in _QOECP:
            parser.error(f"--alg for --k must be one of {sorted(_QOECP)}")
        if args.alg in ("MDE", "Heuristic") and rule is None:
            rule = identical_capacities
        p = _QOECP[args.alg](inst, dmap, _spec(inst, args.k, rule), args.seed)
        extra = {}
    else:
        if args.alg not in _DBOCP:
            parser.error(f"--alg for --dmax must be one of {sorted(_DBOCP)}")
        sol = _DBOCP[args.alg](inst, dmap, args.dmax, rule, args.seed)
        p, extra = sol.placement, {"met": sol.met, "d_max_ms": args.dmax}
    qoecp.evaluate(inst, dmap, p)
    _write_or_print(_placement_json(p, extra), args.out, "placement.json")


def cmd_opt(args, parser):
    _need_one(args, parser)
    inst = read_instance(args.instance)
    dmap = all_pairs_delay(inst)
    rule = capacity_rule_from(args.capacities)
    if args.k is not None:
        p = exact.opt_qoecp(inst, dmap, _spec(inst, args.k, rule), args.subset_limit,
                            args.method, args.time_limit)
        extra = {}
    else:
        sol = exact.opt_dbocp(inst, dmap, args.dmax, rule, args.subset_limit, args.method,
                              time_limit=args.time_limit)
        p, extra = sol.placement, {"met": sol.met, "d_max_ms": args.dmax}
    _write_or_print(_placement_json(p, extra), args.out, "opt.json")


def cmd_export_lp(args, parser):
    _need_one(args, parser)
    inst = read_instance(args.instance)
    dmap = all_pairs_delay(inst)
    rule = capacity_rule_from(args.capacities)
    if args.k is not None:
        text = exact.lp_export(inst, dmap, "qoecp", spec=_spec(inst, args.k, rule))
    else:
        if rule is not None and rule is not identical_capacities:
            pool = _read_capacities(args.capacities)
            spec = CloudletSpec.designated(pool)
        else:
            spec = None if rule is None else rule(inst, inst.sites.size)
        text = exact.lp_export(inst, dmap, "dbocp", spec=spec, d_max=args.dmax)
    _write_or_print(text, args.out, "model.lp")


def cmd_bench(args, parser):
    if args.config is None:
        parser.error("bench needs --config")
    cfg = bench.load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    rows = bench.run_experiment(cfg, workers=args.workers)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{cfg.name}.csv").write_text(bench.rows_to_csv(rows), encoding="utf-8", newline="\n")
    summary = bench.summarize(rows)
    (out / f"{cfg.name}_summary.csv").write_text(bench.summary_to_csv(summary),
                                                 encoding="utf-8", newline="\n")
    text = bench.summary_to_text(summary)
    (out / f"{cfg.name}_summary.txt").write_text(text, encoding="utf-8", newline="\n")
    sys.stdout.write(text)
    bad = [r for r in rows if r.status != "ok"]
    if bad:
        print(f"{len(bad)} of {len(rows)} cells not ok", file=sys.stderr)


def cmd_summarize(args, parser):
    rows = bench.rows_from_csv(Path(args.results).read_text(encoding="utf-8"))
    summary = bench.summarize(rows)
    text = bench.summary_to_text(summary)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        stem = Path(args.results).stem
        (out / f"{stem}_summary.csv").write_text(bench.summary_to_csv(summary),
                                                 encoding="utf-8", newline="\n")
        (out / f"{stem}_summary.txt").write_text(text, encoding="utf-8", newline="\n")
    sys.stdout.write(text)


def cmd_plotdata(args, parser):
    summary = bench.summary_from_csv(Path(args.summary).read_text(encoding="utf-8"))
    files = bench.emit_plotdata(summary, args.figure, args.out or ".")
    for name in files:
        print(name)


def build_parser():
    p = _Parser(prog="cloudlet-place", description=__doc__.splitlines()[0].strip("`"))
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, instance=True):
        if instance:
            sp.add_argument("instance", help="instance file (wman v1 text)")
        sp.add_argument("--out", help="output file or directory (default: stdout)")
        sp.add_argument("--seed", type=int, default=0)

    g = sub.add_parser("gen", help="generate a random AP network instance")
    common(g, instance=False)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--edge-prob", type=float, default=0.02)
    g.add_argument("--delay", type=_range(float), default=(5.0, 50.0), help="ms range lo..hi")
    g.add_argument("--requests", type=_range(int), default=(50, 500), help="requests per AP")
    g.add_argument("--demand", type=_range(int), default=(50, 200), help="MHz per request")

    for name, helptext in (("solve", "run a heuristic"), ("opt", "exact optimum"),
                           ("export-lp", "write the ILP in CPLEX-LP format")):
        sp = sub.add_parser(name, help=helptext)
        common(sp)
        sp.add_argument("--k", type=int, help="number of cloudlets (placement problem)")
        sp.add_argument("--dmax", type=float, help="average delay budget in ms (min-K problem)")
        sp.add_argument("--capacities", default="none",
                        help="capacity file (integers), 'identical' or 'none'")
        if name == "solve":
            sp.add_argument("--alg", default="MDC",
                            help="MDC, MDE, Heuristic, Random, TopK (--k); MKC, MKH, Random, TopK (--dmax)")
        if name == "opt":
            sp.add_argument("--method", choices=("auto", "enumerate", "milp"), default="auto")
            sp.add_argument("--subset-limit", type=int, default=exact.DEFAULT_SUBSET_LIMIT)
            sp.add_argument("--time-limit", type=float)

    b = sub.add_parser("bench", help="run an experiment config")
    b.add_argument("--config", required=True)
    b.add_argument("--out", help="output directory")
    b.add_argument("--seed", type=int, help="override the config's base seed")
    b.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("summarize", help="aggregate a result CSV")
    s.add_argument("results")
    s.add_argument("--out", help="output directory")

    pd = sub.add_parser("plotdata", help="gnuplot series from a summary CSV")
    pd.add_argument("summary")
    pd.add_argument("--figure", required=True, choices=sorted(bench.FIGURES))
    pd.add_argument("--out", help="output directory")
    return p


_COMMANDS = {
    "gen": lambda a, p: cmd_gen(a),
    "solve": cmd_solve,
    "opt": cmd_opt,
    "export-lp": cmd_export_lp,
    "bench": cmd_bench,
    "summarize": cmd_summarize,
    "plotdata": cmd_plotdata,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _COMMANDS[args.command](args, parser)
    except InfeasibleCapacityError as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (BudgetExceededError, TimeLimitExceeded) as e:
        print(f"budget: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except (CloudletError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
