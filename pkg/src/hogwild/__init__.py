"""Lock-free parallel stochastic gradient descent for sparse separable problems."""
from .baselines import LockTable, aig_run, avg_run, rr_run, serial_run
from .engine import (MODES, SCHEDULERS, RunConfig, RunReport, SharedVector, StepSchedule,
                     atomic_add, gamma_search, hogwild_step, run, run_hogwild,
                     sgd_with_replacement, snapshot, with_replacement_step)
from .estimators import HogwildMatrixCompletion, HogwildMultiwayCut, HogwildSVC
from .hypergraph import Edge, GraphStats, Hypergraph, Violation, compute_stats, validate
from .ingest import (DataError, DatasetSpec, gen_cut, gen_mc, gen_svm, gen_synthetic, load,
                     parse_edgelist, parse_svmlight, parse_terminals, parse_triplets,
                     write_edgelist, write_svmlight, write_terminals, write_triplets)
from .problems import (CutProblem, McProblem, SparseVec, SvmProblem, full_objective,
                       induced_hypergraph, project_simplex, term_subgradient, term_value)
from .theory import (FixedPoint, ProblemConstants, RecursionSpec, a_infinity,
                     backoff_total_bound, epoch_k_bound, estimate_constants, gamma_prop1,
                     k_prop1, optimal_beta, recursion_trace, simulate_backoff, theory_report)

__version__ = "0.1.0"
