"""Convergence constants, iteration bounds and recursion simulators.

Logs are natural logs.  Iteration bounds are returned as ceilinged ints.
"""
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import optimize

from .hypergraph import compute_stats


@dataclass(frozen=True)
class ProblemConstants:
    """Strong convexity ``c``, gradient Lipschitz ``L``, subgradient bound
    ``M``, hypergraph statistics and maximum lag ``tau``."""

    c: float
    L: float
    M: float
    omega: float = 1.0
    delta: float = 0.0
    rho: float = 0.0
    tau: float = 0.0

    def __post_init__(self):
        if self.c < 0 or self.M < 0 or self.tau < 0:
            raise ValueError("c, M and tau must be nonnegative")
        if self.omega < 1:
            raise ValueError("omega must be >= 1")
        if not (0 <= self.delta <= 1 and 0 <= self.rho <= 1):
            raise ValueError("delta and rho are fractions in [0, 1]")

    @property
    def strongly_convex(self):
        return self.c > 0 and math.isfinite(self.L)


@dataclass(frozen=True)
class RecursionSpec:
    c_r: float
    B: float
    gamma: float
    beta: float = 0.9
    a0: float = 1.0
    theta: float = 1.0

    def __post_init__(self):
        if min(self.c_r, self.B, self.gamma, self.beta, self.a0, self.theta) <= 0:
            raise ValueError("recursion constants must be positive")
        if self.c_r * self.gamma >= 1:
            raise ValueError("need c_r * gamma < 1")


class FixedPoint(NamedTuple):
    a_inf: float
    C: float
    delta_lin: float
    Q: float


class SerialConstants(NamedTuple):
    c_r: float
    B: float
    a_inf: float


def _require_prop1(pc, epsilon, theta):
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    if pc.c <= 0 or pc.L <= 0 or pc.M <= 0:
        raise ValueError("c, L and M must be positive (strongly convex, smooth problem)")


def _lag_factor(pc, quad_coef):
    return 1 + 6 * pc.rho * pc.tau + quad_coef * pc.tau ** 2 * pc.omega * math.sqrt(pc.delta)


def gamma_prop1(pc: ProblemConstants, epsilon, theta):
    """Constant stepsize that reaches expected suboptimality ``epsilon``."""
    _require_prop1(pc, epsilon, theta)
    return theta * epsilon * pc.c / (2 * pc.L * pc.M ** 2 * pc.omega * _lag_factor(pc, 4))


def k_prop1(pc: ProblemConstants, epsilon, theta, D0):
    """Number of component updates sufficient at the stepsize of
    :func:`gamma_prop1`; ``D0`` is the squared initial distance."""
    _require_prop1(pc, epsilon, theta)
    if D0 <= 0:
        raise ValueError("D0 must be positive")
    ratio = pc.L * D0 / epsilon
    if ratio <= 1:
        return 0
    top = 2 * pc.L * pc.M ** 2 * pc.omega * _lag_factor(pc, 6) * math.log(ratio)
    return math.ceil(top / (pc.c ** 2 * theta * epsilon))


def a_infinity(pc: ProblemConstants, gamma) -> FixedPoint:
    """Steady state of the lag-perturbed recursion and its linearization.

    Returns the bound ``C M^2 gamma / (2c)`` on the fixed point, the factor
    ``C``, the curvature loss ``delta_lin`` (effective curvature is
    ``c (1 - delta_lin)``) and ``Q``.
    """
    if gamma <= 0 or pc.c <= 0:
        raise ValueError("need gamma > 0 and c > 0")
    if pc.c * gamma >= 1:
        raise ValueError(f"c * gamma = {pc.c * gamma:g} must be < 1")
    om, tau, rho, dl = pc.omega, pc.tau, pc.rho, pc.delta
    Q = om + 2 * tau * rho + 4 * om * rho * tau + 2 * tau ** 2 * om ** 2 * math.sqrt(dl)
    lag = om ** 2 * tau ** 2 * dl
    if lag == 0:
        C = Q
        delta_lin = 0.0
    else:
        C = (om * tau * math.sqrt(dl) + math.sqrt(lag + Q)) ** 2
        delta_lin = 1.0 / (1.0 + math.sqrt(1.0 + Q / (pc.c * gamma * lag)))
    return FixedPoint(C * pc.M ** 2 * gamma / (2 * pc.c), C, delta_lin, Q)


def a_infinity_exact(pc: ProblemConstants, gamma):
    """Exact root of the steady-state equation (before bounding ``c*gamma<1``)."""
    fp = a_infinity(pc, gamma)
    om, tau, dl = pc.omega, pc.tau, pc.delta
    inner = om * tau * math.sqrt(dl) + math.sqrt(om ** 2 * tau ** 2 * dl + fp.Q / (pc.c * gamma))
    return pc.M ** 2 * gamma ** 2 / 2 * inner ** 2


def recursion_trace(spec: RecursionSpec, a_inf, steps):
    """``a_0 .. a_steps`` of ``a_{k+1} = (1 - c_r gamma)(a_k - a_inf) + a_inf``."""
    q = 1.0 - spec.c_r * spec.gamma
    out = np.empty(steps + 1)
    a = spec.a0
    out[0] = a
    for k in range(1, steps + 1):
        a = q * (a - a_inf) + a_inf
        out[k] = a
    return out


def recursion_value(spec: RecursionSpec, a_inf, k):
    """Closed form of :func:`recursion_trace` at step ``k``."""
    q = 1.0 - spec.c_r * spec.gamma
    return q ** k * (spec.a0 - a_inf) + a_inf


def epoch_k_bound(spec: RecursionSpec, epsilon):
    """Steps to reach ``a_k <= epsilon`` at stepsize ``theta eps / (2B)``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    ratio = 2 * spec.a0 / epsilon
    if ratio <= 1:
        return 0
    return math.ceil(2 * spec.B * math.log(ratio) / (spec.theta * epsilon * spec.c_r))


def _phase1_steps(spec):
    return max(0.0, math.log(spec.a0 * spec.c_r / (spec.theta * spec.B)) / spec.theta)


def backoff_total_bound(spec: RecursionSpec, epsilon):
    """Iterations of the two-phase backoff scheme to reach ``epsilon``:
    a burn-in at stepsize ``theta / c_r`` followed by epochs whose stepsize
    shrinks by ``beta``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if not 0 < spec.beta < 1:
        raise ValueError("backoff needs 0 < beta < 1")
    phase2 = 2 * spec.B / (spec.c_r * epsilon) * backoff_factor(spec.beta)
    return math.ceil(_phase1_steps(spec) + phase2)


def epsilon_from_k(spec: RecursionSpec, k):
    """Accuracy guaranteed by the backoff scheme after ``k`` iterations."""
    room = k - _phase1_steps(spec)
    if room <= 0:
        return math.inf
    return 2 * backoff_factor(spec.beta) * spec.B / spec.c_r / room


def backoff_factor(beta):
    return math.log(2 / beta) / (1 - beta)


def _steps_until(q, a, a_inf, target):
    """Smallest k with ``q^k (a - a_inf) + a_inf <= target``, or None."""
    if a <= target:
        return 0
    if a_inf >= target:
        return None
    k = max(0, math.ceil(math.log((target - a_inf) / (a - a_inf)) / math.log(q)))
    # guard the float log against an off-by-one in either direction
    while k > 0 and q ** (k - 1) * (a - a_inf) + a_inf <= target:
        k -= 1
    while q ** k * (a - a_inf) + a_inf > target:
        k += 1
    return k


def simulate_backoff(spec: RecursionSpec, epsilon, max_epochs=10_000):
    """Run the worst-case recursion under the backoff scheme; return the
    number of iterations until ``a_k <= epsilon``.

    Burn-in uses stepsize ``theta / c_r`` until ``a <= 2 theta B / c_r``.
    Epoch ``nu >= 1`` then uses stepsize ``theta beta^nu / c_r`` for
    ``ceil(log(2/beta) / (theta beta^nu))`` steps.  The steady state at
    stepsize ``g`` is ``g B``.
    """
    th, cr, B, beta = spec.theta, spec.c_r, spec.B, spec.beta
    a = spec.a0
    total = 0
    g = th / cr
    if g * cr >= 1:
        raise ValueError("burn-in stepsize needs theta < 1")
    q = 1 - g * cr
    burn = _steps_until(q, a, g * B, max(epsilon, 2 * th * B / cr))
    a = q ** burn * (a - g * B) + g * B
    total += burn
    for nu in range(1, max_epochs + 1):
        if a <= epsilon:
            return total
        g = th * beta ** nu / cr
        q = 1 - g * cr
        length = math.ceil(math.log(2 / beta) / (th * beta ** nu))
        hit = _steps_until(q, a, g * B, epsilon)
        if hit is not None and hit <= length:
            return total + hit
        a = q ** length * (a - g * B) + g * B
        total += length
    raise RuntimeError("backoff simulation did not reach epsilon")


def serial_constants(M, c, gamma) -> SerialConstants:
    """Recursion constants of plain serial SGD at constant stepsize."""
    if M <= 0 or c <= 0:
        raise ValueError("M and c must be positive")
    return SerialConstants(2 * c, M ** 2 / (4 * c), gamma * M ** 2 / (4 * c))


def decreasing_step_constant(Theta):
    """Leading constant of the ``Theta / (2ck)`` stepsize rule; negative
    (no guarantee) for ``Theta < 1``."""
    return Theta ** 2 / (4 * Theta - 4)


def backoff_constant(beta):
    """Leading constant of the serial backoff rate."""
    return math.log(2 / beta) / (4 * (1 - beta))


def optimal_beta():
    """Minimizer of ``log(2/beta) / (1 - beta)`` on (0, 1) and its value."""
    res = optimize.minimize_scalar(backoff_factor, bounds=(1e-6, 1 - 1e-6),
                                   method="bounded", options={"xatol": 1e-12})
    return float(res.x), float(res.fun)


# ------------------------------------------------------------ problem constants

def estimate_constants(problem, samples=1000, seed=0, tau=0, iterates=None, spread=1.0):
    """Conservative constants for ``problem``.

    ``c`` and ``L`` come from ``problem.curvature()``.  ``M`` is 1.1 times
    the largest sampled ``||G_e(x)||`` over random edges and points; points
    are ``iterates`` when given, else the initial point plus Gaussian noise
    of scale ``spread``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    c, L = problem.curvature()
    stats = compute_stats(problem.hypergraph())
    if iterates is None:
        base = problem.initial_point(seed)
        iterates = [base] + [base + spread * rng.standard_normal(problem.dim)
                             for _ in range(7)]
    M = 0.0
    for s in range(samples):
        x = iterates[s % len(iterates)]
        g = problem.term_subgradient(int(rng.integers(problem.n_edges)), x)
        M = max(M, float(np.linalg.norm(g.values)))
    return ProblemConstants(c, L, 1.1 * M, stats.omega, stats.delta, stats.rho, tau)


def svm_curvature(problem):
    """``c = 2 lambda`` (on the observed features) and a data-norm
    smoothness proxy ``L = 2 lambda + sigma_max(Z)^2``."""
    from scipy.sparse.linalg import svds

    Z = problem.matrix()
    if min(Z.shape) > 1 and Z.nnz:
        sigma = float(svds(Z.astype(np.float64), k=1, return_singular_vectors=False)[0])
    else:
        sigma = float(np.sqrt(np.sum(Z.multiply(Z))))
    return 2 * problem.lam, 2 * problem.lam + sigma ** 2


def _unsupported_curvature(problem):
    return 0.0, math.inf


def theory_report(pc: ProblemConstants, epsilon, theta, D0=1.0, beta=None):
    """Everything the ``theory`` command prints, in one dict."""
    gamma = gamma_prop1(pc, epsilon, theta)
    fp = a_infinity(pc, gamma)
    beta_star, g_star = optimal_beta()
    spec = RecursionSpec(pc.c * (1 - fp.delta_lin), fp.C * pc.M ** 2 / (2 * pc.c), gamma,
                         beta if beta is not None else beta_star, D0 / 2, theta)
    return {
        "gamma": gamma,
        "k": k_prop1(pc, epsilon, theta, D0),
        "a_inf": fp.a_inf,
        "C": fp.C,
        "delta_lin": fp.delta_lin,
        "Q": fp.Q,
        "c_r": spec.c_r,
        "B": spec.B,
        "backoff_bound": backoff_total_bound(spec, epsilon / pc.L),
        "beta_star": beta_star,
        "backoff_factor_min": g_star,
        "constants": {"c": pc.c, "L": pc.L, "M": pc.M, "omega": pc.omega,
                      "delta": pc.delta, "rho": pc.rho, "tau": pc.tau},
        "epsilon": epsilon,
        "theta": theta,
        "D0": D0,
    }
