import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hogwild import (ProblemConstants, RecursionSpec, SparseVec, SvmProblem, a_infinity,
                     backoff_total_bound, epoch_k_bound, estimate_constants, gamma_prop1, k_prop1,
                     optimal_beta, recursion_trace, simulate_backoff, theory_report)
from hogwild.theory import (a_infinity_exact, backoff_constant, backoff_factor,
                            decreasing_step_constant, epsilon_from_k, recursion_value,
                            serial_constants)


def unit(**kw):
    base = dict(c=1.0, L=1.0, M=1.0, omega=1, delta=0.0, rho=0.0, tau=0)
    base.update(kw)
    return ProblemConstants(**base)


def random_constants(rng):
    c = 10 ** rng.uniform(-2, 1)
    L = c * 10 ** rng.uniform(0, 2)
    M = 10 ** rng.uniform(-1, 2)
    omega = int(rng.integers(1, 20))
    delta = rng.uniform(0, 1)
    rho = rng.uniform(delta, 1)
    tau = int(rng.integers(0, 16))
    return ProblemConstants(c, L, M, omega, delta, rho, tau)


# ------------------------------------------------------------ frozen values

def test_gamma_example():
    assert gamma_prop1(unit(), 0.1, 0.5) == pytest.approx(0.025, rel=1e-15)


def test_gamma_serial_reduction():
    pc = unit(c=0.7, L=3.0, M=2.0, omega=4, delta=0.3, rho=0.6, tau=0)
    assert gamma_prop1(pc, 0.2, 0.4) == pytest.approx(0.4 * 0.2 * 0.7 / (2 * 3 * 4 * 4), rel=1e-15)


def test_gamma_linear_in_theta():
    pc = random_constants(np.random.default_rng(1))
    assert gamma_prop1(pc, 0.1, 0.8) == pytest.approx(2 * gamma_prop1(pc, 0.1, 0.4), rel=1e-15)


def test_k_example():
    assert k_prop1(unit(), 0.01, 1.0, 1.0) == 922


def test_k_serial_reduction():
    pc = unit(c=0.5, L=2.0, M=3.0, delta=0.4, rho=0.9, tau=0)
    expect = math.ceil(2 * 2 * 9 * math.log(2 * 5 / 0.1) / (0.25 * 0.7 * 0.1))
    assert k_prop1(pc, 0.1, 0.7, 5.0) == expect


def test_k_already_converged():
    assert k_prop1(unit(L=2.0), 1.0, 0.5, 0.5) == 0


def test_lag_coefficients_differ():
    # stepsize uses 4 on the quadratic lag term, iteration count uses 6
    pc = unit(omega=2, delta=0.25, rho=0.0, tau=3)
    g = gamma_prop1(pc, 0.1, 1.0)
    assert g == pytest.approx(0.1 / (2 * 2 * (1 + 4 * 9 * 2 * 0.5)), rel=1e-15)
    k = k_prop1(pc, 0.1, 1.0, 1.0)
    assert k == math.ceil(2 * 2 * (1 + 6 * 9 * 2 * 0.5) * math.log(10) / 0.1)


@pytest.mark.parametrize("kw", [dict(epsilon=0.0), dict(theta=0.0), dict(theta=1.5)])
def test_prop1_rejects(kw):
    args = dict(epsilon=0.1, theta=0.5)
    args.update(kw)
    with pytest.raises(ValueError):
        gamma_prop1(unit(), **args)


def test_rejects_non_strongly_convex():
    with pytest.raises(ValueError):
        gamma_prop1(unit(c=0.0), 0.1, 0.5)


def test_a_inf_serial():
    fp = a_infinity(unit(omega=3, delta=0.5, rho=0.5, tau=0), 0.01)
    assert (fp.Q, fp.C, fp.delta_lin) == (3, 3, 0.0)


def test_a_inf_no_overlap_lag():
    fp = a_infinity(unit(M=2.0, c=0.5, tau=1), 0.1)
    assert (fp.Q, fp.C) == (1, 1)
    assert fp.a_inf == pytest.approx(4 * 0.1 / (2 * 0.5), rel=1e-15)


def test_a_inf_rejects_large_step():
    with pytest.raises(ValueError):
        a_infinity(unit(c=2.0), 0.5)


def test_a_inf_bound_dominates_exact(rng):
    for _ in range(200):
        pc = random_constants(rng)
        g = rng.uniform(0.01, 0.99) / pc.c
        assert a_infinity_exact(pc, g) <= a_infinity(pc, g).a_inf * (1 + 1e-12)


def test_fixed_point_chain_bound(rng):
    for _ in range(10_000):
        pc = random_constants(rng)
        g = gamma_prop1(pc, 10 ** rng.uniform(-4, 0), rng.uniform(0.01, 1))
        if pc.c * g >= 1:
            continue
        fp = a_infinity(pc, g)
        lag = 1 + 6 * pc.tau * pc.rho + 6 * pc.tau ** 2 * pc.omega * math.sqrt(pc.delta)
        assert fp.C / (1 - fp.delta_lin) <= 2 * pc.omega * lag * (1 + 1e-12)


def test_recursion_examples():
    spec = RecursionSpec(c_r=1.0, B=1.0, gamma=0.5, a0=5.0)
    np.testing.assert_allclose(recursion_trace(spec, 1.0, 4), [5, 3, 2, 1.5, 1.25], rtol=1e-15)
    flat = recursion_trace(RecursionSpec(1.0, 1.0, 0.3, a0=2.0), 2.0, 10)
    assert np.all(flat == 2.0)


def test_recursion_closed_form(rng):
    for _ in range(50):
        spec = RecursionSpec(rng.uniform(0.1, 2), 1.0, rng.uniform(0.01, 0.4), a0=rng.uniform(1, 9))
        a_inf = rng.uniform(0, 1)
        tr = recursion_trace(spec, a_inf, 30)
        q = 1 - spec.c_r * spec.gamma
        np.testing.assert_allclose(tr - a_inf, q ** np.arange(31) * (spec.a0 - a_inf), rtol=1e-12,
                                   atol=1e-14)
        assert recursion_value(spec, a_inf, 30) == pytest.approx(tr[-1], rel=1e-12)


def test_epoch_k_examples():
    assert epoch_k_bound(RecursionSpec(1.0, 1.0, 0.05, a0=1.0, theta=1.0), 0.1) == 60
    assert epoch_k_bound(RecursionSpec(1.0, 1.0, 0.05, a0=0.05), 0.1) == 0


def test_epoch_k_confirmed_by_trace(rng):
    for _ in range(50):
        B, c_r, th = rng.uniform(0.5, 5), rng.uniform(0.1, 2), rng.uniform(0.1, 1)
        eps = 10 ** rng.uniform(-3, -1)
        g = th * eps / (2 * B)
        if c_r * g >= 1:
            continue
        spec = RecursionSpec(c_r, B, g, a0=rng.uniform(1, 10), theta=th)
        k = epoch_k_bound(spec, eps)
        assert recursion_value(spec, g * B, k) <= eps


def test_backoff_phase2_example():
    spec = RecursionSpec(1.0, 1.0, 0.01, beta=0.5, a0=1.0, theta=1.0)
    assert 2 / 0.01 * backoff_factor(0.5) == pytest.approx(554.517744, rel=1e-9)
    assert backoff_total_bound(spec, 0.01) == 555


def test_epsilon_from_k_inverts_bound():
    spec = RecursionSpec(0.5, 2.0, 0.1, beta=0.6, a0=3.0, theta=0.5)
    k = backoff_total_bound(spec, 1e-3)
    assert epsilon_from_k(spec, k) <= 1e-3


def test_serial_constants_examples():
    assert serial_constants(2.0, 1.0, 0.1) == (2.0, 1.0, 0.1)
    assert decreasing_step_constant(2.0) == 1.0
    assert decreasing_step_constant(0.2) < 0


def test_optimal_beta():
    b, g = optimal_beta()
    assert 0.36 <= b <= 0.38
    assert math.log(2 / b) == pytest.approx((1 - b) / b, abs=1e-6)
    assert g < backoff_factor(0.2) and g < backoff_factor(0.8)
    assert backoff_constant(b) == pytest.approx(g / 4, rel=1e-12)
    assert backoff_constant(b) == pytest.approx(0.6696, abs=1e-4)


def test_appendix_inequalities():
    x = np.concatenate([[0.0], np.logspace(-12, 6, 5000)])
    s = np.sqrt(1 + x)
    assert np.all((1 + s) ** 2 <= (4 + 2 * x) * (1 + 1e-14))
    assert np.all((1 + s) ** 3 / s <= (8 + 2 * x) * (1 + 1e-14))


def test_prop1_chain_holds_numerically(rng):
    for _ in range(100):
        pc = random_constants(rng)
        eps, th = 10 ** rng.uniform(-3, -1), rng.uniform(0.1, 1)
        D0 = 10 ** rng.uniform(-1, 1)
        if pc.L * D0 <= eps:
            continue
        g = gamma_prop1(pc, eps, th)
        fp = a_infinity(pc, g)
        spec = RecursionSpec(pc.c * (1 - fp.delta_lin), 1.0, g, a0=D0 / 2)
        k = k_prop1(pc, eps, th, D0)
        assert recursion_value(spec, fp.a_inf, k) <= eps / pc.L


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 5), st.floats(0.05, 5), st.floats(0.3, 0.95), st.floats(0.1, 0.95),
       st.floats(0.1, 100), st.floats(1e-4, 1e-1))
def test_backoff_simulation_within_bound(c_r, B, beta, theta, a0, eps):
    spec = RecursionSpec(c_r, B, 0.5 / c_r, beta=beta, a0=a0, theta=theta)
    assert simulate_backoff(spec, eps) <= backoff_total_bound(spec, eps)


def test_backoff_bound_misses_epoch_rounding_for_small_beta():
    # 2.48 epochs are needed; the closed-form sum does not round the count up
    spec = RecursionSpec(1.0, 1.0, 0.5, beta=0.1875, a0=1.0, theta=0.5)
    assert simulate_backoff(spec, 1 / 64) == 406
    assert backoff_total_bound(spec, 1 / 64) == 375


def test_backoff_rate_is_one_over_k():
    spec = RecursionSpec(1.0, 1.0, 0.5, beta=0.5, a0=10.0, theta=0.5)
    prods = [e * backoff_total_bound(spec, e) for e in (1e-1, 1e-2, 1e-3, 1e-4)]
    assert max(prods) <= 2 * min(prods)


def test_theory_report_consistency():
    pc = unit(c=0.5, L=2.0, M=3.0, omega=3, delta=0.2, rho=0.4, tau=2)
    rep = theory_report(pc, 0.05, 0.5, D0=2.0)
    assert rep["gamma"] == gamma_prop1(pc, 0.05, 0.5)
    assert rep["k"] == k_prop1(pc, 0.05, 0.5, 2.0)
    assert 0.36 <= rep["beta_star"] <= 0.38
    for key in ("a_inf", "C", "delta_lin", "backoff_bound"):
        assert key in rep


def test_estimate_constants_svm():
    p = SvmProblem.from_examples([(SparseVec([0, 1], [1.0, 2.0]), 1.0),
                                  (SparseVec([1], [1.0]), -1.0)], 2, 0.0)
    pc = estimate_constants(p, samples=50)
    assert pc.c == 0 and not pc.strongly_convex
    pc = estimate_constants(p.with_lambda(0.3), samples=50)
    assert pc.c == pytest.approx(0.6) and pc.L >= pc.c and pc.M > 0


def test_estimate_M_monotone(small_svm):
    pts = [small_svm.initial_point() + 0.5 * np.random.default_rng(i).normal(size=small_svm.dim)
           for i in range(4)]
    Ms = [estimate_constants(small_svm, samples=s, seed=3, iterates=pts).M
          for s in (1, 10, 100, 1000)]
    assert Ms == sorted(Ms)


class SingletonQuadratic:
    """f(x) = sum_v (x_v - 1)^2, one singleton edge per coordinate."""

    kind = "quad"

    def __init__(self, n):
        self.n_edges = self.dim = n

    def curvature(self):
        return 2.0, 2.0

    def hypergraph(self):
        from hogwild import Hypergraph
        return Hypergraph.from_edges(self.dim, [[v] for v in range(self.dim)])

    def initial_point(self, seed=None):
        return np.zeros(self.dim)

    def term_subgradient(self, e, x):
        return SparseVec([e], [self.n_edges * 2 * (x[e] - 1)])


def test_quadratic_singletons():
    p = SingletonQuadratic(5)
    pc = estimate_constants(p, samples=200, iterates=[np.zeros(5)])
    assert (pc.c, pc.L) == (2.0, 2.0)
    assert pc.M == pytest.approx(1.1 * 5 * 2, rel=1e-15)
    assert (pc.omega, pc.delta, pc.rho) == (1, 0.2, 0.2)
