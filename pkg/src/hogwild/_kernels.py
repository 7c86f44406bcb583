"""Compiled worker loops.

Each family supplies two ``nogil`` functions over a flat data tuple:

``grad(data, x, e, buf)``
    writes the scaled subgradient of term ``e`` into ``buf`` in the order of
    the edge's (sorted) variables and returns the edge size;
``delta(data, x, e, gamma, buf)``
    writes the increment the edge update adds to each of those variables.

For unconstrained families the delta is ``-gamma * grad``; for cuts it is
the projected step minus the value read.  ``_make_loops`` builds the
scheduler loops around them.  All reads of the shared vector go through
relaxed atomic loads so that a torn 64-bit value is never observed.
"""
import numpy as np
from numba import njit

from ._atomics import (SPINS_BEFORE_YIELD, atomic_add_f64, atomic_load_f64,
                       atomic_load_i64, atomic_store_i64, busy_wait, cas_i64,
                       cpu_yield, spin_lock, spin_unlock)


@njit(nogil=True)
def fetch_add_i64(arr, i, a):
    while True:
        old = atomic_load_i64(arr, i)
        if cas_i64(arr, i, old, old + a):
            return old


@njit(nogil=True)
def simplex_project_into(y, out):
    n = y.shape[0]
    s = np.sort(y)[::-1]
    acc = 0.0
    theta = 0.0
    for k in range(n):
        acc += s[k]
        t = (acc - 1.0) / (k + 1)
        if s[k] - t > 0:
            theta = t
    for i in range(n):
        v = y[i] - theta
        out[i] = v if v > 0 else 0.0


# ---------------------------------------------------------------- sparse SVM

@njit(nogil=True)
def svm_grad(data, x, e, buf):
    indptr, indices, values, labels, inv_deg, lam, n_edges = data
    start, stop = indptr[e], indptr[e + 1]
    y = labels[e]
    dot = 0.0
    for p in range(start, stop):
        dot += atomic_load_f64(x, indices[p]) * values[p]
    active = y * dot < 1.0
    for p in range(start, stop):
        u = indices[p]
        g = 2.0 * lam * atomic_load_f64(x, u) * inv_deg[u]
        if active:
            g -= y * values[p]
        buf[p - start] = n_edges * g
    return stop - start


@njit(nogil=True)
def svm_delta(data, x, e, gamma, buf):
    m = svm_grad(data, x, e, buf)
    for i in range(m):
        buf[i] = -gamma * buf[i]
    return m


# ---------------------------------------------------------- matrix completion

@njit(nogil=True)
def mc_grad(data, x, e, buf):
    rows, cols, vals, inv_rc, inv_cc, r, n_r, mu, n_edges = data
    u, v = rows[e], cols[e]
    lo = u * r
    ro = n_r * r + v * r
    res = -vals[e]
    for k in range(r):
        res += atomic_load_f64(x, lo + k) * atomic_load_f64(x, ro + k)
    for k in range(r):
        lk = atomic_load_f64(x, lo + k)
        rk = atomic_load_f64(x, ro + k)
        buf[k] = n_edges * (2.0 * res * rk + mu * inv_rc[u] * lk)
        buf[r + k] = n_edges * (2.0 * res * lk + mu * inv_cc[v] * rk)
    return 2 * r


@njit(nogil=True)
def mc_delta(data, x, e, gamma, buf):
    m = mc_grad(data, x, e, buf)
    for i in range(m):
        buf[i] = -gamma * buf[i]
    return m


# ------------------------------------------------------------------ graph cut

@njit(nogil=True)
def cut_grad(data, x, e, buf):
    src, dst, w, D, terminals, n_edges = data
    u, v = src[e], dst[e]
    # lower node's block comes first to match the sorted edge variables
    first = 0 if u < v else D
    second = D - first
    for k in range(D):
        d = atomic_load_f64(x, u * D + k) - atomic_load_f64(x, v * D + k)
        s = 0.0
        if d > 0:
            s = 1.0
        elif d < 0:
            s = -1.0
        buf[first + k] = n_edges * w[e] * s
        buf[second + k] = -n_edges * w[e] * s
    return 2 * D


@njit(nogil=True)
def cut_delta(data, x, e, gamma, buf):
    src, dst, w, D, terminals, n_edges = data
    m = cut_grad(data, x, e, buf)
    lo = min(src[e], dst[e])
    hi = max(src[e], dst[e])
    y = np.empty(D)
    p = np.empty(D)
    for half in range(2):
        node = lo if half == 0 else hi
        off = half * D
        if terminals[node] >= 0:
            for k in range(D):
                buf[off + k] = 0.0
            continue
        for k in range(D):
            y[k] = atomic_load_f64(x, node * D + k)
        for k in range(D):
            p[k] = y[k] - gamma * buf[off + k]
        simplex_project_into(p.copy(), p)
        for k in range(D):
            buf[off + k] = p[k] - y[k]
    return m


# ------------------------------------------------------------ scheduler loops

def _make_loops(grad, delta):

    @njit(nogil=True)
    def serial_chunk(data, hptr, hidx, x, order, start, stop, gamma, width, delay_ns):
        buf = np.empty(width)
        clk = np.zeros(2, np.int64)
        for t in range(start, stop):
            e = order[t]
            m = delta(data, x, e, gamma, buf)
            if delay_ns > 0:
                busy_wait(delay_ns, clk)
            base = hptr[e]
            for i in range(m):
                x[hidx[base + i]] += buf[i]
        return stop - start

    @njit(nogil=True)
    def hogwild_chunk(data, hptr, hidx, x, order, start, stop, gamma, width, delay_ns):
        buf = np.empty(width)
        clk = np.zeros(2, np.int64)
        for t in range(start, stop):
            e = order[t]
            m = delta(data, x, e, gamma, buf)
            if delay_ns > 0:
                busy_wait(delay_ns, clk)
            base = hptr[e]
            for i in range(m):
                atomic_add_f64(x, hidx[base + i], buf[i])
        return stop - start

    @njit(nogil=True)
    def rr_chunk(data, hptr, hidx, x, order, worker, p, gamma, width, delay_ns,
                 ticket, counter, log):
        # update j of the epoch belongs to worker j % p and commits only
        # once the ticket reaches j
        buf = np.empty(width)
        clk = np.zeros(2, np.int64)
        waits = 0
        for j in range(worker, order.shape[0], p):
            e = order[j]
            m = delta(data, x, e, gamma, buf)
            if delay_ns > 0:
                busy_wait(delay_ns, clk)
            spins = 0
            while atomic_load_i64(ticket, 0) != j:
                spins += 1
                if spins % SPINS_BEFORE_YIELD == 0:
                    cpu_yield()
            waits += spins
            base = hptr[e]
            for i in range(m):
                atomic_add_f64(x, hidx[base + i], buf[i])
            log[fetch_add_i64(counter, 0, 1)] = j
            atomic_store_i64(ticket, 0, j + 1)
        return waits

    @njit(nogil=True)
    def aig_chunk(data, hptr, hidx, x, order, start, stop, gamma, width, delay_ns, locks):
        buf = np.empty(width)
        clk = np.zeros(2, np.int64)
        waits = 0
        for t in range(start, stop):
            e = order[t]
            base, end = hptr[e], hptr[e + 1]
            # ascending variable order everywhere: no lock cycles
            for q in range(base, end):
                waits += spin_lock(locks, hidx[q])
            m = delta(data, x, e, gamma, buf)
            if delay_ns > 0:
                busy_wait(delay_ns, clk)
            for i in range(m):
                atomic_add_f64(x, hidx[base + i], buf[i])
            for q in range(end - 1, base - 1, -1):
                spin_unlock(locks, hidx[q])
        return waits

    @njit(nogil=True)
    def wr_apply(data, hptr, hidx, x, e, pos, gamma, width):
        buf = np.empty(width)
        m = grad(data, x, e, buf)
        atomic_add_f64(x, hidx[hptr[e] + pos], -gamma * m * buf[pos])

    @njit(nogil=True)
    def wr_chunk(data, hptr, hidx, x, n_updates, gamma, width, delay_ns, seed):
        np.random.seed(seed)
        buf = np.empty(width)
        clk = np.zeros(2, np.int64)
        n_edges = hptr.shape[0] - 1
        for _ in range(n_updates):
            e = np.random.randint(0, n_edges)
            m = grad(data, x, e, buf)
            pos = np.random.randint(0, m)
            if delay_ns > 0:
                busy_wait(delay_ns, clk)
            atomic_add_f64(x, hidx[hptr[e] + pos], -gamma * m * buf[pos])
        return n_updates

    return {"serial": serial_chunk, "hogwild": hogwild_chunk, "rr": rr_chunk,
            "aig": aig_chunk, "wr": wr_chunk, "wr_apply": wr_apply,
            "grad": grad, "delta": delta}


_LOOPS = {}


def loops_for(kind):
    if kind not in _LOOPS:
        table = {"svm": (svm_grad, svm_delta), "mc": (mc_grad, mc_delta),
                 "cut": (cut_grad, cut_delta)}
        _LOOPS[kind] = _make_loops(*table[kind])
    return _LOOPS[kind]


def kernel_data(problem):
    """Flat tuple consumed by the family's ``grad``/``delta``."""
    E = float(problem.n_edges)
    if problem.kind == "svm":
        return (problem.indptr, problem.indices, problem.values, problem.labels,
                problem.inv_degree(), float(problem.lam), E)
    if problem.kind == "mc":
        inv_rc = np.where(problem.row_counts > 0, 1.0 / np.maximum(problem.row_counts, 1), 0.0)
        inv_cc = np.where(problem.col_counts > 0, 1.0 / np.maximum(problem.col_counts, 1), 0.0)
        return (problem.rows, problem.cols, problem.vals, inv_rc, inv_cc,
                int(problem.r), int(problem.n_r), float(problem.mu), E)
    if problem.kind == "cut":
        return (problem.src, problem.dst, problem.weights, int(problem.D),
                problem.terminals, E)
    raise TypeError(f"unknown problem kind {problem.kind!r}")
