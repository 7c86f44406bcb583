"""scikit-learn style wrappers around the training engine."""
import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import engine
from .problems import CutProblem, McProblem, SvmProblem


class _HogwildMixin:
    """Shared training hyperparameters and the engine call."""

    def _train(self, problem):
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be positive")
        gamma = self.gamma if self.gamma is not None else self.gamma_scale / problem.n_edges
        config = engine.RunConfig(self.threads, self.epochs, self.mode, self.seed,
                                  self.delay_ns, self.scheduler)
        report = engine.run(problem, config, engine.StepSchedule(gamma, self.beta))
        self.report_ = report
        self.objective_curve_ = np.asarray(report.objectives)
        self.gamma_ = gamma
        return report.x


class HogwildSVC(_HogwildMixin, ClassifierMixin, BaseEstimator):
    """Linear SVM (hinge loss plus degree-split ridge penalty) trained with
    lock-free parallel SGD.

    ``gamma`` is the initial stepsize for the |E|-scaled gradients; when
    ``None`` it defaults to ``gamma_scale / n_samples``.
    """

    def __init__(self, lam=1e-4, gamma=None, gamma_scale=0.1, beta=0.9, epochs=20,
                 threads=1, scheduler="hogwild", mode="without-replacement", seed=0,
                 delay_ns=0):
        self.lam = lam
        self.gamma = gamma
        self.gamma_scale = gamma_scale
        self.beta = beta
        self.epochs = epochs
        self.threads = threads
        self.scheduler = scheduler
        self.mode = mode
        self.seed = seed
        self.delay_ns = delay_ns

    def fit(self, X, y):
        X, y = check_X_y(X, y, accept_sparse="csr", dtype=np.float64)
        check_classification_targets(y)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ValueError(f"binary targets required, got {len(self.classes_)} classes")
        Z = sp.csr_matrix(X)
        Z.eliminate_zeros()
        Z.sort_indices()
        labels = np.where(y == self.classes_[1], 1.0, -1.0)
        problem = SvmProblem(Z.indptr, Z.indices, Z.data, labels, Z.shape[1], self.lam)
        self.coef_ = self._train(problem)
        self.n_features_in_ = Z.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, accept_sparse="csr", dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return np.asarray(X @ self.coef_).ravel()

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[(scores >= 0).astype(int)]


class HogwildMatrixCompletion(_HogwildMixin, RegressorMixin, BaseEstimator):
    """Rank-``rank`` factorization fitted to observed entries.

    ``X`` is an ``(m, 2)`` integer array of (row, column) positions and
    ``y`` the observed values; ``predict`` returns the fitted entries.
    """

    def __init__(self, rank=1, mu=0.0, n_rows=None, n_cols=None, gamma=None,
                 gamma_scale=0.01, beta=0.9, epochs=20, threads=1, scheduler="hogwild",
                 mode="without-replacement", seed=0, delay_ns=0):
        self.rank = rank
        self.mu = mu
        self.n_rows = n_rows
        self.n_cols = n_cols
        self.gamma = gamma
        self.gamma_scale = gamma_scale
        self.beta = beta
        self.epochs = epochs
        self.threads = threads
        self.scheduler = scheduler
        self.mode = mode
        self.seed = seed
        self.delay_ns = delay_ns

    @staticmethod
    def _positions(X):
        X = check_array(X, dtype=np.int64)
        if X.shape[1] != 2:
            raise ValueError("X must have two columns: row and column index")
        if X.size and X.min() < 0:
            raise ValueError("negative matrix index")
        return X

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=None, y_numeric=True)
        X = self._positions(X)
        n_r = self.n_rows if self.n_rows is not None else int(X[:, 0].max()) + 1
        n_c = self.n_cols if self.n_cols is not None else int(X[:, 1].max()) + 1
        problem = McProblem(X[:, 0], X[:, 1], np.asarray(y, dtype=np.float64), n_r, n_c,
                            self.rank, self.mu)
        x = self._train(problem)
        self.row_factors_, self.col_factors_ = problem.factors(x)
        self.shape_ = (n_r, n_c)
        self.n_features_in_ = 2
        return self

    def predict(self, X):
        check_is_fitted(self, "row_factors_")
        X = self._positions(X)
        if X.size and (X[:, 0].max() >= self.shape_[0] or X[:, 1].max() >= self.shape_[1]):
            raise ValueError("index outside the fitted matrix")
        return np.einsum("ij,ij->i", self.row_factors_[X[:, 0]], self.col_factors_[X[:, 1]])


class HogwildMultiwayCut(_HogwildMixin, BaseEstimator):
    """Relaxed multiway cut over simplex-valued node labels.

    ``fit`` takes an ``(m, 3)`` array of ``(u, v, weight)`` arcs and a
    per-node ``terminals`` vector (-1 for free nodes); ``labels_`` holds
    the rounded class of each node.
    """

    def __init__(self, n_classes=2, gamma=None, gamma_scale=0.01, beta=0.9, epochs=20,
                 threads=1, scheduler="hogwild", seed=0, delay_ns=0):
        self.n_classes = n_classes
        self.gamma = gamma
        self.gamma_scale = gamma_scale
        self.beta = beta
        self.epochs = epochs
        self.threads = threads
        self.scheduler = scheduler
        self.seed = seed
        self.delay_ns = delay_ns

    mode = "without-replacement"

    def fit(self, X, y=None, terminals=None):
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != 3:
            raise ValueError("X must have three columns: u, v, weight")
        src, dst = X[:, 0].astype(np.int64), X[:, 1].astype(np.int64)
        if np.any(src != X[:, 0]) or np.any(dst != X[:, 1]):
            raise ValueError("node ids must be integers")
        n = int(max(src.max(), dst.max())) + 1
        if terminals is not None:
            terminals = np.asarray(terminals, dtype=np.int64)
            n = max(n, len(terminals))
            terminals = np.concatenate([terminals, np.full(n - len(terminals), -1)])
        problem = CutProblem(src, dst, X[:, 2], n, self.n_classes, terminals)
        x = self._train(problem)
        self.assignment_ = x.reshape(n, self.n_classes)
        self.labels_ = problem.labels(x)
        self.energy_ = problem.objective(x)
        return self

    def predict(self, X=None):
        check_is_fitted(self, "labels_")
        return self.labels_
