"""QoS-aware cloudlet placement in wireless metropolitan area networks."""
from .dbocp import DelayBudget, KSolution, mkc, mkh, random_k_search, topk_k_search
from .delaymap import DelayMap, all_pairs_delay
from .errors import (BudgetExceededError, CloudletError, ConstraintViolation,
                     InfeasibleCapacityError, InvalidConfigError, ParseError,
                     TimeLimitExceeded, UnreachableError)
from .estimators import (HeuristicPlacer, MDCPlacer, MDEPlacer, MinCloudletSearch,
                         OptimalPlacer, RandomPlacer, TopKPlacer)
from .exact import FlowProblem, exact_assignment, lp_export, opt_dbocp, opt_qoecp
from .netmodel import (CloudletSpec, Edge, NetworkInstance, generate_topology,
                       identical_capacities, instance_from_lists, load_instance,
                       pool_capacities, read_instance, save_instance, write_instance)
from .qoecp import (Placement, certify, evaluate, heuristic_baseline, mdc, mde,
                    random_placement, topk_placement)

__version__ = "0.1.0"
