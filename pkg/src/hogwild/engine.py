"""Lock-free parallel SGD driver.

Workers are plain Python threads running compiled ``nogil`` loops, so they
execute truly concurrently.  The decision vector is the only shared mutable
state and is only ever changed through per-component atomic adds.  Workers
meet at a barrier at the end of every epoch, where the objective is
recorded and the stepsize is multiplied by ``beta``.
"""
import hashlib
import time
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
from numba import njit

from . import _kernels
from ._atomics import atomic_add_f64, atomic_load_f64

SCHEDULERS = ("hogwild", "serial", "rr", "aig", "avg")
MODES = ("without-replacement", "with-replacement")


@njit(nogil=True)
def _add_one(x, v, a):
    atomic_add_f64(x, v, a)


@njit(nogil=True)
def _add_many(x, idx, vals):
    for i in range(idx.shape[0]):
        atomic_add_f64(x, idx[i], vals[i])


@njit(nogil=True)
def _snapshot(x, out):
    for i in range(x.shape[0]):
        out[i] = atomic_load_f64(x, i)


class SharedVector:
    """Dense float64 vector whose components are updated with atomic adds."""

    def __init__(self, values):
        self.values = np.ascontiguousarray(values, dtype=np.float64).copy()

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n))

    def __len__(self):
        return self.values.shape[0]

    def atomic_add(self, v, a):
        if not 0 <= v < len(self):
            raise IndexError(f"component {v} out of range [0, {len(self)})")
        _add_one(self.values, v, float(a))

    def atomic_add_batch(self, indices, addends):
        """Atomic adds of ``addends[i]`` to ``indices[i]``, in order, without
        holding the GIL (callable from many threads at once)."""
        idx = np.ascontiguousarray(indices, dtype=np.int64)
        vals = np.ascontiguousarray(np.broadcast_to(addends, idx.shape), dtype=np.float64)
        if idx.size and (idx.min() < 0 or idx.max() >= len(self)):
            raise IndexError("component index out of range")
        _add_many(self.values, idx, vals)

    def snapshot(self):
        """Component-wise atomic copy; components may come from different
        moments if writers are active."""
        out = np.empty_like(self.values)
        _snapshot(self.values, out)
        return out


def atomic_add(x: SharedVector, v: int, a: float):
    x.atomic_add(v, a)


def snapshot(x: SharedVector):
    return x.snapshot()


@dataclass(frozen=True)
class StepSchedule:
    gamma0: float
    beta: float = 0.9

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise ValueError("gamma0 must be positive")
        if not 0 < self.beta <= 1:
            raise ValueError("beta must lie in (0, 1]")

    def gamma(self, epoch):
        return self.gamma0 * self.beta ** epoch


@dataclass(frozen=True)
class RunConfig:
    threads: int = 1
    epochs: int = 20
    mode: str = "without-replacement"
    seed: int = 0
    delay_ns: int = 0
    scheduler: str = "hogwild"

    def __post_init__(self):
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.delay_ns < 0:
            raise ValueError("delay_ns must be >= 0")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.scheduler not in SCHEDULERS:
            raise ValueError(f"unknown scheduler {self.scheduler!r}; choose from {SCHEDULERS}")


@dataclass
class RunReport:
    scheduler: str
    threads: int
    epochs: int
    mode: str
    seed: int
    delay_ns: int
    wall_seconds: float
    objectives: List[float]
    gammas: List[float]
    train_metric: List[Optional[float]]
    x: np.ndarray = field(repr=False)
    updates_performed: int
    extra: Dict = field(default_factory=dict)

    @property
    def final_objective(self):
        return self.objectives[-1]

    def digest(self):
        return hashlib.sha256(np.ascontiguousarray(self.x).tobytes()).hexdigest()

    def to_dict(self, include_x=False):
        out = asdict(self)
        out.pop("x")
        out["x_sha256"] = self.digest()
        if include_x:
            out["x"] = self.x.tolist()
        return out


class _Compiled:
    """Kernel inputs for one problem, built once and reused across runs."""

    def __init__(self, problem):
        h = problem.hypergraph()
        self.hptr = h.indptr
        self.hidx = h.indices
        self.n_edges = h.n_edges
        self.width = int(np.max(np.diff(h.indptr))) if h.n_edges else 1
        self.data = _kernels.kernel_data(problem)
        self.loops = _kernels.loops_for(problem.kind)
        self.kind = problem.kind


_compiled_cache = weakref.WeakKeyDictionary()


def compiled(problem) -> _Compiled:
    try:
        return _compiled_cache[problem]
    except KeyError:
        ctx = _compiled_cache[problem] = _Compiled(problem)
        return ctx


def epoch_order(seed, epoch, n_edges, stream=0):
    """The epoch's shuffled edge order, reproducible from (seed, epoch, stream)."""
    rng = np.random.default_rng([seed, epoch, stream])
    return rng.permutation(n_edges).astype(np.int64)


def chunk_bounds(n, p):
    """``p`` contiguous chunks of ``range(n)``; sizes differ by at most one."""
    q, r = divmod(n, p)
    sizes = [q + (i < r) for i in range(p)]
    return np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)


def worker_seed(seed, worker, epoch):
    return int(np.random.SeedSequence([seed, worker, epoch]).generate_state(1)[0])


def parallel(pool, fn, arglists):
    """Run ``fn(*args)`` for every args tuple, one per worker, and wait for
    all of them (the epoch barrier).  Worker exceptions propagate."""
    if pool is None or len(arglists) == 1:
        return [fn(*args) for args in arglists]
    futures = [pool.submit(fn, *args) for args in arglists]
    return [f.result() for f in futures]


def drive(problem, config: RunConfig, schedule: StepSchedule,
          epoch_fn: Callable, warm: Callable, x0=None) -> RunReport:
    """Generic epoch loop shared by every scheduler.

    ``epoch_fn(ctx, x, epoch, gamma, pool) -> (updates, extra)`` performs one
    epoch and returns after all workers finished.  Only the time spent inside
    ``epoch_fn`` is counted as wall time.
    """
    ctx = compiled(problem)
    x = SharedVector(problem.initial_point(config.seed) if x0 is None else x0)
    warm(ctx)
    objectives, gammas, metrics = [], [], []
    wall = 0.0
    updates = 0
    extra = {}
    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    try:
        for epoch in range(config.epochs):
            gamma = schedule.gamma(epoch)
            t0 = time.perf_counter()
            done, info = epoch_fn(ctx, x.values, epoch, gamma, pool)
            wall += time.perf_counter() - t0
            updates += done
            for k, v in info.items():
                extra[k] = extra.get(k, 0) + v
            objectives.append(problem.objective(x.values))
            metrics.append(problem.train_metric(x.values))
            gammas.append(gamma)
    finally:
        if pool is not None:
            pool.shutdown()
    return RunReport(config.scheduler, config.threads, config.epochs, config.mode,
                     config.seed, config.delay_ns, wall, objectives, gammas, metrics,
                     x.values, updates, extra)


def hogwild_step(problem, x: SharedVector, e: int, gamma: float):
    """One full-edge lock-free update on edge ``e``."""
    ctx = compiled(problem)
    order = np.array([e], dtype=np.int64)
    ctx.loops["hogwild"](ctx.data, ctx.hptr, ctx.hidx, x.values, order, 0, 1,
                         float(gamma), ctx.width, 0)


def with_replacement_step(problem, x: SharedVector, rng: np.random.Generator, gamma: float):
    """Sample an edge and one of its variables; move only that variable,
    with the step enlarged by the edge size.  Returns ``(edge, variable)``."""
    if problem.kind == "cut":
        raise ValueError("single-component updates would leave the simplex; "
                         "use full-edge updates for cut problems")
    ctx = compiled(problem)
    e = int(rng.integers(ctx.n_edges))
    size = int(ctx.hptr[e + 1] - ctx.hptr[e])
    pos = int(rng.integers(size))
    ctx.loops["wr_apply"](ctx.data, ctx.hptr, ctx.hidx, x.values, e, pos,
                          float(gamma), ctx.width)
    return e, int(ctx.hidx[ctx.hptr[e] + pos])


def _hogwild_epoch(config):
    p = config.threads

    def epoch_fn(ctx, x, epoch, gamma, pool):
        if config.mode == "with-replacement":
            shares = chunk_bounds(ctx.n_edges, p)
            args = [(ctx.data, ctx.hptr, ctx.hidx, x, int(shares[w + 1] - shares[w]),
                     gamma, ctx.width, config.delay_ns, worker_seed(config.seed, w, epoch))
                    for w in range(p)]
            done = parallel(pool, ctx.loops["wr"], args)
            return sum(done), {}
        order = epoch_order(config.seed, epoch, ctx.n_edges)
        bounds = chunk_bounds(ctx.n_edges, p)
        args = [(ctx.data, ctx.hptr, ctx.hidx, x, order, bounds[w], bounds[w + 1],
                 gamma, ctx.width, config.delay_ns) for w in range(p)]
        done = parallel(pool, ctx.loops["hogwild"], args)
        return sum(done), {}

    return epoch_fn


def _warm_hogwild(ctx):
    empty = np.zeros(0, dtype=np.int64)
    scratch = np.zeros(1)
    ctx.loops["hogwild"](ctx.data, ctx.hptr, ctx.hidx, scratch, empty, 0, 0, 0.0, ctx.width, 0)


def _warm_wr(ctx):
    if ctx.kind != "cut":
        ctx.loops["wr"](ctx.data, ctx.hptr, ctx.hidx, np.zeros(1), 0, 0.0, ctx.width, 0, 0)


def run_hogwild(problem, config: RunConfig, schedule: StepSchedule, x0=None) -> RunReport:
    if config.mode == "with-replacement" and problem.kind == "cut":
        raise ValueError("with-replacement mode is not defined for cut problems")
    warm = _warm_wr if config.mode == "with-replacement" else _warm_hogwild
    return drive(problem, config, schedule, _hogwild_epoch(config), warm, x0)


def run(problem, config: RunConfig, schedule: StepSchedule, x0=None) -> RunReport:
    """Train ``problem`` with the scheduler named in ``config``."""
    from . import baselines

    runners = {"hogwild": run_hogwild, "serial": baselines.serial_run,
               "rr": baselines.rr_run, "aig": baselines.aig_run,
               "avg": baselines.avg_run}
    return runners[config.scheduler](problem, config, schedule, x0=x0)


def sgd_with_replacement(problem, x0, gamma, n_updates, seed=0, threads=1):
    """``n_updates`` single-component updates at constant ``gamma``; returns
    the final iterate.  Used by the convergence checks."""
    ctx = compiled(problem)
    x = SharedVector(x0)
    shares = chunk_bounds(int(n_updates), threads)
    args = [(ctx.data, ctx.hptr, ctx.hidx, x.values, int(shares[w + 1] - shares[w]),
             float(gamma), ctx.width, 0, worker_seed(seed, w, 0)) for w in range(threads)]
    if threads == 1:
        parallel(None, ctx.loops["wr"], args)
    else:
        with ThreadPoolExecutor(threads) as pool:
            parallel(pool, ctx.loops["wr"], args)
    return x.values


def gamma_search(problem, config: RunConfig, gamma0: float, beta=0.9, probe_epochs=2,
                 max_probes=40):
    """Largest stepsize (on a factor-2 grid around ``gamma0``) whose short
    probe run ends finite and below the starting objective.  Heuristic.
    """
    from dataclasses import replace

    start = problem.objective(problem.initial_point(config.seed))
    probe = replace(config, epochs=probe_epochs)

    def converges(g):
        rep = run(problem, probe, StepSchedule(g, beta))
        last = rep.objectives[-1]
        return bool(np.isfinite(last) and last < start)

    g = gamma0
    if converges(g):
        for _ in range(max_probes):
            if not converges(2 * g):
                return g
            g *= 2
        return g
    for _ in range(max_probes):
        g /= 2
        if converges(g):
            return g
    raise RuntimeError("no converging stepsize found")
