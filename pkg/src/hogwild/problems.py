"""Separable cost functions: sparse SVM, matrix completion, multiway cuts.

Every problem is a sum of terms ``f_e`` over the edges of its hypergraph.
``term_subgradient`` returns a subgradient of ``f_e`` multiplied by the
number of terms, so a uniformly drawn edge gives an unbiased subgradient of
the whole objective.  The per-term methods here are the plain reference
path; the threaded kernels in :mod:`hogwild._kernels` are checked against
them.
"""
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .hypergraph import Hypergraph


@dataclass(frozen=True)
class SparseVec:
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.indices.shape != self.values.shape:
            raise ValueError("indices and values differ in length")
        if np.any(np.diff(self.indices) <= 0):
            raise ValueError("indices must be strictly increasing")

    def to_dense(self, n):
        out = np.zeros(n)
        out[self.indices] = self.values
        return out


def project_simplex(y) -> np.ndarray:
    """Euclidean projection of ``y`` onto the probability simplex."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.size < 1:
        raise ValueError("need a nonempty vector")
    s = np.sort(y)[::-1]
    css = np.cumsum(s) - 1.0
    ks = np.arange(1, y.size + 1)
    k = ks[s - css / ks > 0][-1]
    theta = css[k - 1] / k
    return np.maximum(y - theta, 0.0)


class _Problem:
    kind = ""

    @property
    def n_edges(self) -> int:
        raise NotImplementedError

    def _check_x(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise ValueError(f"expected x of length {self.dim}, got {x.shape}")
        return x

    def _check_edge(self, e):
        if not 0 <= e < self.n_edges:
            raise IndexError(f"edge {e} out of range [0, {self.n_edges})")


@dataclass(frozen=True, eq=False)
class SvmProblem(_Problem):
    """Hinge loss with the ridge penalty split across examples.

    Examples are CSR rows (``indptr``, ``indices``, ``values``) with labels
    in {-1, +1}.  Feature ``u`` carries weight ``1/d_u`` in every term that
    touches it, ``d_u`` being the number of examples that store it.
    """

    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    labels: np.ndarray
    n: int
    lam: float = 0.0
    degree: np.ndarray = field(init=False)
    kind = "svm"

    def __post_init__(self):
        for name, dt in (("indptr", np.int64), ("indices", np.int64),
                         ("values", np.float64), ("labels", np.float64)):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=dt))
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if not np.all(np.abs(self.labels) == 1):
            raise ValueError("labels must be ±1")
        if len(self.labels) != len(self.indptr) - 1:
            raise ValueError("one label per example required")
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= self.n):
            raise ValueError("feature index out of range")
        object.__setattr__(self, "degree", np.bincount(self.indices, minlength=self.n))

    @classmethod
    def from_examples(cls, examples, n, lam=0.0):
        """Build from ``[(SparseVec, label), ...]``."""
        indptr = [0]
        idx, val, lab = [], [], []
        for z, y in examples:
            if not isinstance(z, SparseVec):
                z = SparseVec(*z)
            idx.append(z.indices)
            val.append(z.values)
            lab.append(y)
            indptr.append(indptr[-1] + len(z.indices))
        cat = lambda parts, dt: np.concatenate(parts).astype(dt) if parts else np.zeros(0, dt)
        return cls(np.array(indptr), cat(idx, np.int64), cat(val, np.float64),
                   np.array(lab, dtype=np.float64), n, lam)

    def with_lambda(self, lam):
        return SvmProblem(self.indptr, self.indices, self.values, self.labels, self.n, lam)

    def subset(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        m = self.matrix()[rows]
        return SvmProblem(m.indptr, m.indices, m.data, self.labels[rows], self.n, self.lam)

    @property
    def n_edges(self):
        return len(self.labels)

    @property
    def dim(self):
        return self.n

    def example(self, a) -> SparseVec:
        s = slice(self.indptr[a], self.indptr[a + 1])
        return SparseVec(self.indices[s], self.values[s])

    def matrix(self):
        return sp.csr_matrix((self.values, self.indices, self.indptr),
                             shape=(self.n_edges, self.n))

    def inv_degree(self):
        out = np.zeros(self.n)
        seen = self.degree > 0
        out[seen] = 1.0 / self.degree[seen]
        return out

    def hypergraph(self) -> Hypergraph:
        return Hypergraph(self.n, self.indptr, self.indices)

    def initial_point(self, seed=None):
        return np.zeros(self.n)

    def term_value(self, a, x):
        self._check_edge(a)
        x = self._check_x(x)
        z = self.example(a)
        margin = self.labels[a] * np.dot(x[z.indices], z.values)
        reg = self.lam * np.sum(x[z.indices] ** 2 / self.degree[z.indices])
        return max(1.0 - margin, 0.0) + reg

    def term_subgradient(self, a, x) -> SparseVec:
        self._check_edge(a)
        x = self._check_x(x)
        z = self.example(a)
        y = self.labels[a]
        g = 2.0 * self.lam * x[z.indices] / self.degree[z.indices]
        # margin exactly 1 takes the zero element of the hinge subdifferential
        if y * np.dot(x[z.indices], z.values) < 1.0:
            g = g - y * z.values
        return SparseVec(z.indices, self.n_edges * g)

    def margins(self, x):
        return self.labels * (self.matrix() @ self._check_x(x))

    def objective(self, x):
        x = self._check_x(x)
        hinge = np.maximum(1.0 - self.margins(x), 0.0)
        w = x[self.indices] ** 2 * self.inv_degree()[self.indices]
        reg = np.add.reduceat(w, self.indptr[:-1]) if w.size else np.zeros(self.n_edges)
        reg[np.diff(self.indptr) == 0] = 0.0
        return float(np.sum(hinge + self.lam * reg))

    def predict(self, x):
        s = self.matrix() @ np.asarray(x)
        return np.where(s >= 0, 1.0, -1.0)

    def error_rate(self, x):
        return float(np.mean(self.predict(x) != self.labels))

    train_metric = error_rate

    def curvature(self):
        from .theory import svm_curvature
        return svm_curvature(self)


@dataclass(frozen=True, eq=False)
class McProblem(_Problem):
    """Low-rank factorization ``Z ~ L R^T`` fitted to observed entries.

    The decision vector holds ``L`` row-major (``n_r * r`` values) followed
    by ``R`` row-major (``n_c * r``).
    """

    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    n_r: int
    n_c: int
    r: int = 1
    mu: float = 0.0
    row_counts: np.ndarray = field(init=False)
    col_counts: np.ndarray = field(init=False)
    kind = "mc"

    def __post_init__(self):
        for name, dt in (("rows", np.int64), ("cols", np.int64), ("vals", np.float64)):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=dt))
        if self.r < 1:
            raise ValueError("rank must be >= 1")
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")
        if not (len(self.rows) == len(self.cols) == len(self.vals)):
            raise ValueError("rows, cols, vals differ in length")
        if len(self.rows) and (self.rows.min() < 0 or self.rows.max() >= self.n_r
                               or self.cols.min() < 0 or self.cols.max() >= self.n_c):
            raise ValueError("entry index out of range")
        object.__setattr__(self, "row_counts", np.bincount(self.rows, minlength=self.n_r))
        object.__setattr__(self, "col_counts", np.bincount(self.cols, minlength=self.n_c))

    @property
    def n_edges(self):
        return len(self.rows)

    @property
    def dim(self):
        return (self.n_r + self.n_c) * self.r

    def with_rank(self, r, mu=None):
        return McProblem(self.rows, self.cols, self.vals, self.n_r, self.n_c, r,
                         self.mu if mu is None else mu)

    def factors(self, x):
        x = self._check_x(x)
        split = self.n_r * self.r
        return x[:split].reshape(self.n_r, self.r), x[split:].reshape(self.n_c, self.r)

    def _blocks(self, e):
        u, v, r = self.rows[e], self.cols[e], self.r
        lu = np.arange(u * r, u * r + r)
        rv = np.arange(self.n_r * r + v * r, self.n_r * r + v * r + r)
        return lu, rv

    def hypergraph(self) -> Hypergraph:
        r = self.r
        base = np.arange(r)
        left = self.rows[:, None] * r + base
        right = self.n_r * r + self.cols[:, None] * r + base
        indices = np.hstack([left, right]).ravel()
        indptr = np.arange(self.n_edges + 1, dtype=np.int64) * 2 * r
        return Hypergraph(self.dim, indptr, indices.astype(np.int64))

    def initial_point(self, seed=None):
        rng = np.random.default_rng(seed)
        bound = 0.5 / np.sqrt(self.r)
        return rng.uniform(-bound, bound, size=self.dim)

    def term_value(self, e, x):
        self._check_edge(e)
        x = self._check_x(x)
        lu, rv = self._blocks(e)
        u, v = self.rows[e], self.cols[e]
        res = np.dot(x[lu], x[rv]) - self.vals[e]
        return (res ** 2 + self.mu / (2 * self.row_counts[u]) * np.dot(x[lu], x[lu])
                + self.mu / (2 * self.col_counts[v]) * np.dot(x[rv], x[rv]))

    def term_subgradient(self, e, x) -> SparseVec:
        self._check_edge(e)
        x = self._check_x(x)
        lu, rv = self._blocks(e)
        u, v = self.rows[e], self.cols[e]
        res = np.dot(x[lu], x[rv]) - self.vals[e]
        gl = 2 * res * x[rv] + self.mu / self.row_counts[u] * x[lu]
        gr = 2 * res * x[lu] + self.mu / self.col_counts[v] * x[rv]
        return SparseVec(np.concatenate([lu, rv]), self.n_edges * np.concatenate([gl, gr]))

    def predict(self, x, rows, cols):
        L, R = self.factors(x)
        return np.einsum("ij,ij->i", L[np.asarray(rows)], R[np.asarray(cols)])

    def objective(self, x):
        L, R = self.factors(x)
        res = np.einsum("ij,ij->i", L[self.rows], R[self.cols]) - self.vals
        lreg = np.einsum("ij,ij->i", L, L)
        rreg = np.einsum("ij,ij->i", R, R)
        terms = (res ** 2 + self.mu / (2 * self.row_counts[self.rows]) * lreg[self.rows]
                 + self.mu / (2 * self.col_counts[self.cols]) * rreg[self.cols])
        return float(np.sum(terms))

    def rmse(self, x, rows=None, cols=None, vals=None):
        if rows is None:
            rows, cols, vals = self.rows, self.cols, self.vals
        return float(np.sqrt(np.mean((self.predict(x, rows, cols) - vals) ** 2)))

    train_metric = rmse

    def curvature(self):
        # nonconvex in (L, R): no strong convexity constant
        return 0.0, float("inf")


@dataclass(frozen=True, eq=False)
class CutProblem(_Problem):
    """Weighted l1 cut over simplex-valued node labels.

    Node ``i`` owns variables ``i*D .. i*D + D - 1``.  ``terminals[i] = k``
    pins node ``i`` to the ``k``-th simplex vertex (``-1``: free); without
    terminals every constant labelling is optimal.
    """

    src: np.ndarray
    dst: np.ndarray
    weights: np.ndarray
    n: int
    D: int = 2
    terminals: Optional[np.ndarray] = None
    kind = "cut"

    def __post_init__(self):
        for name, dt in (("src", np.int64), ("dst", np.int64), ("weights", np.float64)):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=dt))
        if self.terminals is None:
            object.__setattr__(self, "terminals", np.full(self.n, -1, dtype=np.int64))
        else:
            t = np.ascontiguousarray(self.terminals, dtype=np.int64)
            if t.shape != (self.n,) or t.min(initial=-1) < -1 or t.max(initial=-1) >= self.D:
                raise ValueError("terminals must hold -1 or a class in [0, D) per node")
            object.__setattr__(self, "terminals", t)
        if self.D < 2:
            raise ValueError("simplex dimension D must be >= 2")
        if np.any(self.weights <= 0):
            raise ValueError("arc weights must be positive")
        if np.any(self.src == self.dst):
            raise ValueError("self-loop")
        if len(self.src) and max(self.src.max(), self.dst.max()) >= self.n:
            raise ValueError("node index out of range")

    @property
    def n_edges(self):
        return len(self.src)

    @property
    def dim(self):
        return self.n * self.D

    def _blocks(self, e):
        D = self.D
        u, v = self.src[e], self.dst[e]
        return np.arange(u * D, u * D + D), np.arange(v * D, v * D + D)

    def hypergraph(self) -> Hypergraph:
        D = self.D
        lo = np.minimum(self.src, self.dst)[:, None] * D + np.arange(D)
        hi = np.maximum(self.src, self.dst)[:, None] * D + np.arange(D)
        indices = np.hstack([lo, hi]).ravel().astype(np.int64)
        indptr = np.arange(self.n_edges + 1, dtype=np.int64) * 2 * D
        return Hypergraph(self.dim, indptr, indices)

    def initial_point(self, seed=None):
        X = np.full((self.n, self.D), 1.0 / self.D)
        pinned = np.flatnonzero(self.terminals >= 0)
        X[pinned] = 0.0
        X[pinned, self.terminals[pinned]] = 1.0
        return X.ravel()

    def term_value(self, e, x):
        self._check_edge(e)
        x = self._check_x(x)
        bu, bv = self._blocks(e)
        return self.weights[e] * np.sum(np.abs(x[bu] - x[bv]))

    def term_subgradient(self, e, x) -> SparseVec:
        self._check_edge(e)
        x = self._check_x(x)
        bu, bv = self._blocks(e)
        # np.sign(0) == 0 picks the zero element at the l1 kink
        g = self.n_edges * self.weights[e] * np.sign(x[bu] - x[bv])
        idx = np.concatenate([bu, bv])
        val = np.concatenate([g, -g])
        order = np.argsort(idx)
        return SparseVec(idx[order], val[order])

    def objective(self, x):
        X = self._check_x(x).reshape(self.n, self.D)
        return float(np.sum(self.weights * np.abs(X[self.src] - X[self.dst]).sum(axis=1)))

    def labels(self, x):
        return np.argmax(self._check_x(x).reshape(self.n, self.D), axis=1)

    def train_metric(self, x):
        return None

    def curvature(self):
        return 0.0, float("inf")


Problem = (SvmProblem, McProblem, CutProblem)


def term_value(problem, edge_id, x):
    return problem.term_value(edge_id, x)


def term_subgradient(problem, edge_id, x) -> SparseVec:
    return problem.term_subgradient(edge_id, x)


def full_objective(problem, x):
    return problem.objective(x)


def induced_hypergraph(problem) -> Hypergraph:
    return problem.hypergraph()
