"""Text formats and synthetic generators for the three problem families.

Formats (whitespace = any run of spaces/tabs, LF or CRLF, ``#`` comments):

* svmlight: ``<label> <idx>:<val> ...`` with labels ±1 and 1-based,
  strictly ascending indices;
* triplets: ``u v value`` with 0-based row and column;
* edgelist: ``u v w`` with 0-based nodes and ``w > 0``.
"""
import io
import json
import re
from dataclasses import dataclass, field
from typing import Dict, NamedTuple, Optional

import numpy as np

from .problems import CutProblem, McProblem, SvmProblem


class DataError(ValueError):
    """Malformed input; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"{message} (line {line})" if line is not None else message)


def _lines(stream):
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    for no, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield no, line.split()


def _number(tok, kind, no):
    try:
        return kind(tok)
    except ValueError:
        raise DataError(f"cannot parse {tok!r} as {kind.__name__}", no) from None


# ------------------------------------------------------------------ svmlight

def parse_svmlight(stream, n=None, lam=0.0) -> SvmProblem:
    """Examples from svmlight text; features become 0-based."""
    indptr, indices, values, labels = [0], [], [], []
    top = 0
    for no, toks in _lines(stream):
        y = _number(toks[0], float, no)
        if y not in (1.0, -1.0):
            raise DataError("label must be ±1", no)
        prev = 0
        for tok in toks[1:]:
            idx, sep, val = tok.partition(":")
            if not sep or not idx or not val:
                raise DataError(f"malformed pair {tok!r}", no)
            i = _number(idx, int, no)
            if i < 1:
                raise DataError(f"feature index {i} must be >= 1", no)
            if i <= prev:
                raise DataError("feature indices must be strictly ascending", no)
            prev = i
            indices.append(i - 1)
            values.append(_number(val, float, no))
        top = max(top, prev)
        labels.append(y)
        indptr.append(len(indices))
    if n is None:
        n = top
    elif top > n:
        raise DataError(f"feature index {top} exceeds n={n}")
    if not labels:
        raise DataError("no examples")
    return SvmProblem(np.array(indptr), np.array(indices, dtype=np.int64),
                      np.array(values, dtype=np.float64), np.array(labels), n, lam)


def write_svmlight(problem: SvmProblem, stream):
    for a in range(problem.n_edges):
        z = problem.example(a)
        pairs = " ".join(f"{i + 1}:{v!r}" for i, v in zip(z.indices.tolist(), z.values.tolist()))
        label = "+1" if problem.labels[a] > 0 else "-1"
        stream.write(f"{label} {pairs}".rstrip() + "\n")


# ------------------------------------------------------------------ triplets

def parse_triplets(stream, n_r, n_c, r=1, mu=0.0) -> McProblem:
    rows, cols, vals = [], [], []
    seen = set()
    for no, toks in _lines(stream):
        if len(toks) != 3:
            raise DataError("expected 'u v value'", no)
        u, v = _number(toks[0], int, no), _number(toks[1], int, no)
        z = _number(toks[2], float, no)
        if not (0 <= u < n_r and 0 <= v < n_c):
            raise DataError(f"entry ({u}, {v}) outside {n_r}x{n_c}", no)
        if (u, v) in seen:
            raise DataError(f"duplicate entry ({u}, {v})", no)
        seen.add((u, v))
        rows.append(u)
        cols.append(v)
        vals.append(z)
    if not rows:
        raise DataError("no entries")
    return McProblem(np.array(rows), np.array(cols), np.array(vals), n_r, n_c, r, mu)


def write_triplets(problem: McProblem, stream):
    for u, v, z in zip(problem.rows.tolist(), problem.cols.tolist(), problem.vals.tolist()):
        stream.write(f"{u} {v} {z!r}\n")


# ------------------------------------------------------------------ edgelist

def parse_edgelist(stream, D=2, n=None, terminals=None) -> CutProblem:
    src, dst, w = [], [], []
    for no, toks in _lines(stream):
        if len(toks) != 3:
            raise DataError("expected 'u v w'", no)
        u, v = _number(toks[0], int, no), _number(toks[1], int, no)
        wt = _number(toks[2], float, no)
        if u < 0 or v < 0:
            raise DataError("node indices must be >= 0", no)
        if u == v:
            raise DataError("self-loop", no)
        if wt < 0:
            raise DataError("nonnegative weight required", no)
        if wt == 0:
            raise DataError("zero-weight arc", no)
        src.append(u)
        dst.append(v)
        w.append(wt)
    if not src:
        raise DataError("no arcs")
    top = max(max(src), max(dst)) + 1
    if n is None:
        n = top
    elif top > n:
        raise DataError(f"node index {top - 1} exceeds n={n}")
    if terminals is not None and not isinstance(terminals, np.ndarray):
        terminals = parse_terminals(terminals, n)
    return CutProblem(np.array(src), np.array(dst), np.array(w), n, D, terminals)


def parse_terminals(stream, n):
    """Lines ``node class`` pinning nodes to simplex vertices."""
    out = np.full(n, -1, dtype=np.int64)
    for no, toks in _lines(stream):
        if len(toks) != 2:
            raise DataError("expected 'node class'", no)
        node, cls = _number(toks[0], int, no), _number(toks[1], int, no)
        if not 0 <= node < n:
            raise DataError(f"node {node} out of range", no)
        out[node] = cls
    return out


def write_edgelist(problem: CutProblem, stream):
    for u, v, w in zip(problem.src.tolist(), problem.dst.tolist(), problem.weights.tolist()):
        stream.write(f"{u} {v} {w!r}\n")


def write_terminals(problem: CutProblem, stream):
    for node in np.flatnonzero(problem.terminals >= 0).tolist():
        stream.write(f"{node} {int(problem.terminals[node])}\n")


# ---------------------------------------------------------------- generators

class Synthetic(NamedTuple):
    problem: object
    holdout: Optional[object]
    truth: Optional[np.ndarray]


def gen_svm(m, n, k, noise=0.0, seed=0, lam=0.0, test=0):
    """``m`` training and ``test`` held-out examples with exactly ``k``
    distinct standard-normal features each, labelled by a planted Gaussian
    separator with label-flip probability ``noise``."""
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if m < 1:
        raise ValueError("need at least one example")
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(n)
    total = m + test
    idx = np.sort(rng.integers(0, n, size=(total, k)), axis=1)
    while True:
        bad = np.flatnonzero(np.any(np.diff(idx, axis=1) == 0, axis=1))
        if bad.size == 0:
            break
        idx[bad] = np.sort(rng.integers(0, n, size=(bad.size, k)), axis=1)
    vals = rng.standard_normal((total, k))
    score = np.einsum("ij,ij->i", vals, w[idx])
    y = np.where(score >= 0, 1.0, -1.0)
    y[rng.random(total) < noise] *= -1
    indptr = np.arange(total + 1, dtype=np.int64) * k
    full = SvmProblem(indptr, idx.ravel(), vals.ravel(), y, n, lam)
    if test == 0:
        return Synthetic(full, None, w)
    return Synthetic(full.subset(np.arange(m)), full.subset(np.arange(m, total)), w)


def gen_mc(n_r, n_c, r, fraction, noise=0.0, seed=0, mu=0.0, rank=None):
    """Rank-``r`` matrix with standard-normal factors; a uniform
    ``fraction`` of entries observed, the rest held out.  ``rank`` sets the
    fitted rank (default ``r``)."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    L = rng.standard_normal((n_r, r))
    R = rng.standard_normal((n_c, r))
    Z = L @ R.T
    cells = n_r * n_c
    chosen = np.zeros(cells, dtype=bool)
    chosen[rng.choice(cells, size=max(1, int(round(fraction * cells))), replace=False)] = True
    obs = np.flatnonzero(chosen)
    rest = np.flatnonzero(~chosen)
    z = Z.ravel()[obs] + noise * rng.standard_normal(obs.size)
    fit_rank = r if rank is None else rank
    train = McProblem(obs // n_c, obs % n_c, z, n_r, n_c, fit_rank, mu)
    holdout = None
    if rest.size:
        holdout = McProblem(rest // n_c, rest % n_c, Z.ravel()[rest], n_r, n_c, fit_rank, mu)
    return Synthetic(train, holdout, np.concatenate([L.ravel(), R.ravel()]))


def grid_arcs(N):
    """6-connected ``N x N x N`` grid; ``3 N^2 (N-1)`` arcs."""
    ids = np.arange(N ** 3).reshape(N, N, N)
    src, dst = [], []
    for axis in range(3):
        a = np.take(ids, np.arange(N - 1), axis=axis).ravel()
        b = np.take(ids, np.arange(1, N), axis=axis).ravel()
        src.append(a)
        dst.append(b)
    return np.concatenate(src), np.concatenate(dst)


def gen_cut(N=10, D=2, graph="grid3d", n=None, radius=0.15, terminals=4,
            max_weight=10.0, seed=0):
    """Grid or random geometric graph with uniform (0, max_weight] weights
    and ``terminals`` nodes pinned to random classes."""
    rng = np.random.default_rng(seed)
    if graph == "grid3d":
        src, dst = grid_arcs(N)
        nodes = N ** 3
    elif graph == "geometric":
        from scipy.spatial import cKDTree

        nodes = n if n is not None else N
        pts = rng.random((nodes, 2))
        pairs = cKDTree(pts).query_pairs(radius, output_type="ndarray")
        if len(pairs) == 0:
            raise ValueError("radius too small: no arcs")
        src, dst = pairs[:, 0], pairs[:, 1]
    else:
        raise ValueError(f"unknown graph {graph!r}")
    w = max_weight * (1.0 - rng.random(len(src)))
    term = np.full(nodes, -1, dtype=np.int64)
    pinned = rng.choice(nodes, size=min(terminals, nodes), replace=False)
    term[pinned] = np.arange(len(pinned)) % D
    return Synthetic(CutProblem(src, dst, w, nodes, D, term), None, None)


@dataclass
class DatasetSpec:
    """Where a problem comes from: a file in one of the text formats or a
    generator with its parameters."""

    format: str
    path: Optional[str] = None
    params: Dict = field(default_factory=dict)
    seed: int = 0

    _GENERATORS = {"svm": gen_svm, "mc": gen_mc, "cut": gen_cut}

    def __post_init__(self):
        if self.format not in ("svmlight", "triplets", "edgelist", "synthetic"):
            raise ValueError(f"unknown format {self.format!r}")
        if self.format != "synthetic" and not self.path:
            raise ValueError("file formats need a path")
        if self.format == "synthetic" and self.params.get("kind") not in self._GENERATORS:
            raise ValueError("synthetic spec needs params.kind in svm|mc|cut")

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))

    def to_dict(self):
        return {"format": self.format, "path": self.path, "params": dict(self.params),
                "seed": self.seed}


def gen_synthetic(spec: DatasetSpec) -> Synthetic:
    params = dict(spec.params)
    kind = params.pop("kind")
    for key, value in params.items():
        if isinstance(value, (int, float)) and not isinstance(value, bool) and value < 0:
            raise ValueError(f"generator parameter {key} must be nonnegative")
    return DatasetSpec._GENERATORS[kind](seed=spec.seed, **params)


def load(spec: DatasetSpec, **kw) -> Synthetic:
    """Problem (and held-out part, if any) described by ``spec``.  Keyword
    arguments go to the parser (``n_r``, ``n_c``, ``r``, ``mu``, ``D``,
    ``lam``, ``terminals`` ...)."""
    if spec.format == "synthetic":
        return gen_synthetic(spec)
    try:
        fh = open(spec.path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {spec.path}: {exc.strerror}") from None
    with fh:
        if spec.format == "svmlight":
            return Synthetic(parse_svmlight(fh, **kw), None, None)
        if spec.format == "triplets":
            return Synthetic(parse_triplets(fh, **kw), None, None)
        terminals = kw.pop("terminals", None)
        problem = parse_edgelist(fh, **kw)
        if terminals is not None:
            with open(terminals, encoding="utf-8") as th:
                t = parse_terminals(th, problem.n)
            problem = CutProblem(problem.src, problem.dst, problem.weights,
                                 problem.n, problem.D, t)
        return Synthetic(problem, None, None)
