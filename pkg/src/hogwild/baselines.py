"""Comparison schedulers: serial SGD, round-robin, edge locking, averaging.

All of them share the epoch driver and edge ordering of
:mod:`hogwild.engine`; only the way updates reach memory differs.
"""
from concurrent.futures import ThreadPoolExecutor
import time

import numpy as np

from .engine import (RunConfig, RunReport, StepSchedule, chunk_bounds, drive,
                     epoch_order, parallel)


class LockTable:
    """One spinlock word per variable; 0 = free, 1 = held."""

    def __init__(self, n):
        self.locks = np.zeros(n, dtype=np.int64)

    def acquire_all(self, vars):
        from ._atomics import spin_lock
        waits = 0
        for v in sorted(vars):
            waits += spin_lock(self.locks, int(v))
        return waits

    def release_all(self, vars):
        from ._atomics import spin_unlock
        for v in sorted(vars, reverse=True):
            spin_unlock(self.locks, int(v))

    def held(self):
        return np.flatnonzero(self.locks)


def _warm(name):
    def warm(ctx):
        empty = np.zeros(0, dtype=np.int64)
        scratch = np.zeros(1)
        loops = ctx.loops
        if name == "serial":
            loops["serial"](ctx.data, ctx.hptr, ctx.hidx, scratch, empty, 0, 0, 0.0, ctx.width, 0)
        elif name == "rr":
            one = np.zeros(1, dtype=np.int64)
            loops["rr"](ctx.data, ctx.hptr, ctx.hidx, scratch, empty, 0, 1, 0.0, ctx.width,
                        0, one, one.copy(), empty)
        elif name == "aig":
            loops["aig"](ctx.data, ctx.hptr, ctx.hidx, scratch, empty, 0, 0, 0.0, ctx.width,
                         0, np.zeros(1, dtype=np.int64))
    return warm


def _serial_epoch(config, stream=0):
    def epoch_fn(ctx, x, epoch, gamma, pool):
        order = epoch_order(config.seed, epoch, ctx.n_edges, stream)
        done = ctx.loops["serial"](ctx.data, ctx.hptr, ctx.hidx, x, order, 0,
                                   ctx.n_edges, gamma, ctx.width, config.delay_ns)
        return done, {}
    return epoch_fn


def serial_run(problem, config: RunConfig, schedule: StepSchedule, x0=None) -> RunReport:
    """Single-threaded incremental gradient with plain (non-atomic) writes."""
    if config.mode != "without-replacement":
        raise ValueError("serial baseline runs full-edge passes only")
    cfg = _replace(config, scheduler="serial", threads=1)
    return drive(problem, cfg, schedule, _serial_epoch(cfg), _warm("serial"), x0)


def _rr_epoch(config):
    p = config.threads

    def epoch_fn(ctx, x, epoch, gamma, pool):
        order = epoch_order(config.seed, epoch, ctx.n_edges)
        ticket = np.zeros(1, dtype=np.int64)
        counter = np.zeros(1, dtype=np.int64)
        log = np.full(ctx.n_edges, -1, dtype=np.int64)
        args = [(ctx.data, ctx.hptr, ctx.hidx, x, order, w, p, gamma, ctx.width,
                 config.delay_ns, ticket, counter, log) for w in range(p)]
        waits = parallel(pool, ctx.loops["rr"], args)
        out_of_order = int(np.count_nonzero(log != np.arange(ctx.n_edges)))
        return ctx.n_edges, {"spin_waits": int(sum(waits)), "out_of_order_commits": out_of_order}

    return epoch_fn


def rr_run(problem, config: RunConfig, schedule: StepSchedule, x0=None) -> RunReport:
    """Gradients computed concurrently, commits in strict cyclic order.

    Update ``j`` of an epoch belongs to worker ``j % p`` and is written only
    after update ``j - 1``; waiting is a busy spin.
    """
    if config.mode != "without-replacement":
        raise ValueError("round-robin runs full-edge passes only")
    cfg = _replace(config, scheduler="rr")
    return drive(problem, cfg, schedule, _rr_epoch(cfg), _warm("rr"), x0)


def _aig_epoch(config, locks):
    p = config.threads

    def epoch_fn(ctx, x, epoch, gamma, pool):
        order = epoch_order(config.seed, epoch, ctx.n_edges)
        bounds = chunk_bounds(ctx.n_edges, p)
        args = [(ctx.data, ctx.hptr, ctx.hidx, x, order, bounds[w], bounds[w + 1],
                 gamma, ctx.width, config.delay_ns, locks) for w in range(p)]
        waits = parallel(pool, ctx.loops["aig"], args)
        return ctx.n_edges, {"lock_waits": int(sum(waits))}

    return epoch_fn


def aig_run(problem, config: RunConfig, schedule: StepSchedule, x0=None) -> RunReport:
    """HOGWILD with every variable of the edge locked around read and write."""
    if config.mode != "without-replacement":
        raise ValueError("AIG runs full-edge passes only")
    cfg = _replace(config, scheduler="aig")
    locks = LockTable(problem.dim).locks
    return drive(problem, cfg, schedule, _aig_epoch(cfg, locks), _warm("aig"), x0)


def avg_run(problem, config: RunConfig, schedule: StepSchedule, x0=None) -> RunReport:
    """``p`` independent serial runs over the whole data; reports the average.

    Instance ``i`` shuffles with stream ``i`` (instance 0 matches the serial
    baseline); all start from the same point.  The per-epoch objective is
    that of the mean iterate, taken at the barrier.
    """
    from .engine import compiled

    if config.mode != "without-replacement":
        raise ValueError("averaging runs full-edge passes only")
    cfg = _replace(config, scheduler="avg")
    p = cfg.threads
    ctx = compiled(problem)
    _warm("serial")(ctx)
    start = problem.initial_point(cfg.seed) if x0 is None else np.asarray(x0, dtype=np.float64)
    xs = [start.copy() for _ in range(p)]
    objectives, gammas, metrics = [], [], []
    wall = 0.0
    pool = ThreadPoolExecutor(p) if p > 1 else None
    try:
        for epoch in range(cfg.epochs):
            gamma = schedule.gamma(epoch)
            args = [(ctx.data, ctx.hptr, ctx.hidx, xs[i],
                     epoch_order(cfg.seed, epoch, ctx.n_edges, i), 0, ctx.n_edges,
                     gamma, ctx.width, cfg.delay_ns) for i in range(p)]
            t0 = time.perf_counter()
            parallel(pool, ctx.loops["serial"], args)
            wall += time.perf_counter() - t0
            mean = np.mean(xs, axis=0) if p > 1 else xs[0].copy()
            objectives.append(problem.objective(mean))
            metrics.append(problem.train_metric(mean))
            gammas.append(gamma)
    finally:
        if pool is not None:
            pool.shutdown()
    return RunReport("avg", p, cfg.epochs, cfg.mode, cfg.seed, cfg.delay_ns, wall,
                     objectives, gammas, metrics, mean, p * cfg.epochs * ctx.n_edges,
                     {"instances": p})


def _replace(config, **kw):
    from dataclasses import replace
    return replace(config, **kw)
