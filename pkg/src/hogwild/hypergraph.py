"""Hypergraph induced by a separable cost and its sparsity statistics.

Edges are kept in CSR form (``indptr``/``indices``) so that hundreds of
thousands of cost terms do not turn into as many Python objects.
"""
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence

import numpy as np
from numba import njit


@dataclass(frozen=True)
class Edge:
    id: int
    vars: tuple
    payload: int = -1


@dataclass(frozen=True)
class GraphStats:
    omega: int
    delta: float
    rho: float
    exact: bool = True

    def as_dict(self):
        return {"omega": self.omega, "delta": self.delta, "rho": self.rho,
                "exact": self.exact}


@dataclass(frozen=True)
class Violation:
    edge: int
    message: str

    def __str__(self):
        return f"edge {self.edge}: {self.message}"


@dataclass(frozen=True, eq=False)
class Hypergraph:
    """``n`` variables and a list of edges, edge ``i`` being
    ``indices[indptr[i]:indptr[i+1]]``.

    Construction does not check invariants; call :func:`validate`.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    payload: Optional[np.ndarray] = field(default=None)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[int]], payload=None):
        edges = [list(e) for e in edges]
        indptr = np.zeros(len(edges) + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(e) for e in edges])
        if edges and indptr[-1]:
            indices = np.concatenate([np.asarray(e, dtype=np.int64) for e in edges])
        else:
            indices = np.zeros(0, dtype=np.int64)
        if payload is not None:
            payload = np.asarray(payload, dtype=np.int64)
        return cls(int(n), indptr, indices, payload)

    @property
    def n_edges(self) -> int:
        return len(self.indptr) - 1

    def edge_vars(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def edge(self, i: int) -> Edge:
        payload = i if self.payload is None else int(self.payload[i])
        return Edge(i, tuple(int(v) for v in self.edge_vars(i)), payload)

    @property
    def edges(self) -> List[Edge]:
        return [self.edge(i) for i in range(self.n_edges)]

    def edge_sizes(self) -> np.ndarray:
        return np.diff(self.indptr)

    def degrees(self) -> np.ndarray:
        return np.bincount(self.indices, minlength=self.n)

    def incidence(self):
        """Vertex -> edge lists in CSR form (``vptr``, ``vedges``)."""
        sizes = self.edge_sizes()
        owner = np.repeat(np.arange(self.n_edges, dtype=np.int64), sizes)
        order = np.argsort(self.indices, kind="stable")
        vptr = np.zeros(self.n + 1, dtype=np.int64)
        vptr[1:] = np.cumsum(self.degrees())
        return vptr, owner[order]


def validate(h: Hypergraph) -> List[Violation]:
    """All invariant violations of ``h``; an empty list means well-formed."""
    out = []
    if h.n_edges < 1:
        out.append(Violation(-1, "hypergraph has no edges"))
    for i in range(h.n_edges):
        vs = h.edge_vars(i)
        if len(vs) == 0:
            out.append(Violation(i, "empty edge"))
            continue
        for v in vs:
            if v < 0:
                out.append(Violation(i, f"index {v} < 0"))
            elif v >= h.n:
                out.append(Violation(i, f"index {v} ≥ n ({h.n})"))
        if np.any(np.diff(vs) <= 0):
            out.append(Violation(i, "vars not strictly increasing"))
    return out


@njit(nogil=True)
def _max_conflicts(indptr, indices, vptr, vedges, which, n_edges):
    # generation-stamped visited array: stamp[e] == g marks e as counted
    # while scanning the g-th edge, so it never needs clearing
    stamp = np.full(n_edges, -1, dtype=np.int64)
    best = 0
    for g in range(len(which)):
        e = which[g]
        count = 0
        for p in range(indptr[e], indptr[e + 1]):
            v = indices[p]
            for q in range(vptr[v], vptr[v + 1]):
                f = vedges[q]
                if stamp[f] != g:
                    stamp[f] = g
                    count += 1
        if count > best:
            best = count
    return best


def compute_stats(h: Hypergraph, mode: str = "exact", k: Optional[int] = None,
                  seed: Optional[int] = None) -> GraphStats:
    """Maximum edge size, node regularity and edge-conflict fraction.

    ``mode="sampled"`` maximizes the conflict count over ``k`` distinct
    uniformly chosen edges only; omega and delta are always exact.
    """
    if h.n_edges < 1:
        raise ValueError("empty hypergraph")
    problems = validate(h)
    if problems:
        raise ValueError("invalid hypergraph: " + "; ".join(map(str, problems[:5])))
    n_edges = h.n_edges
    omega = int(h.edge_sizes().max())
    delta = float(h.degrees().max()) / n_edges
    if mode == "exact":
        which = np.arange(n_edges, dtype=np.int64)
    elif mode == "sampled":
        if k is None or k < 1:
            raise ValueError("sampled mode requires k >= 1")
        rng = np.random.default_rng(seed)
        which = np.sort(rng.choice(n_edges, size=min(k, n_edges), replace=False))
        which = which.astype(np.int64)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    vptr, vedges = h.incidence()
    hits = _max_conflicts(h.indptr, h.indices, vptr, vedges, which, n_edges)
    return GraphStats(omega, delta, hits / n_edges, exact=(mode == "exact"))
