import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import kl as kl_oracle
from shadowot import measures as M
from shadowot.divergences import (
    KL,
    QUADRATIC,
    check_data_processing,
    custom_divergence,
    divergence,
    f_divergence,
    kl_divergence,
    make_kernel,
    push_kernel,
    transport_constant,
)
from shadowot.errors import EmptyGrid, InvalidDivergence, NonpositiveAlpha, ShadowOTError, SpaceMismatch

X2 = M.MetricSpace.discrete(2)


def bern(p):
    return M.make_discrete_measure(X2, [1 - p, p])


def test_kl_examples():
    mu = bern(0.5)
    assert kl_divergence(mu, mu) == 0
    assert kl_divergence(M.dirac(X2, 0), M.dirac(X2, 1)) == math.inf
    want = 0.5 * math.log(0.5 / 0.75) + 0.5 * math.log(0.5 / 0.25)
    assert kl_divergence(bern(0.5), bern(0.25)) == pytest.approx(want, abs=1e-12)
    assert want == pytest.approx(0.143841, abs=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["kl", "quadratic"]))
def test_nonnegative_with_equality_iff_equal(seed, f):
    rng = np.random.default_rng(seed)
    X = M.MetricSpace.discrete(4)
    mu = M.make_discrete_measure(X, rng.dirichlet(np.ones(4)))
    nu = M.make_discrete_measure(X, rng.dirichlet(np.ones(4)))
    assert f_divergence(mu, nu, f) > 0
    assert abs(f_divergence(mu, mu, f)) <= 1e-10
    if f == "kl":
        assert f_divergence(mu, nu, f) == pytest.approx(kl_oracle(mu.weights, nu.weights), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1))
def test_joint_convexity(seed, t):
    rng = np.random.default_rng(seed)
    X = M.MetricSpace.discrete(3)
    m1, m2, n1, n2 = (M.make_discrete_measure(X, rng.dirichlet(np.ones(3))) for _ in range(4))
    mix = lambda a, b: M.make_discrete_measure(X, t * a.weights + (1 - t) * b.weights)  # noqa: E731
    lhs = kl_divergence(mix(m1, m2), mix(n1, n2))
    assert lhs <= t * kl_divergence(m1, n1) + (1 - t) * kl_divergence(m2, n2) + 1e-12


def test_quadratic_is_chi_square():
    p, q = bern(0.3), bern(0.6)
    chi2 = (0.7 - 0.4) ** 2 / 0.4 + (0.3 - 0.6) ** 2 / 0.6
    assert f_divergence(p, q, QUADRATIC) == pytest.approx(chi2)


def test_divergence_lookup_and_validation():
    assert divergence("kl") is KL
    with pytest.raises(InvalidDivergence):
        divergence("hellinger")
    with pytest.raises(InvalidDivergence):
        custom_divergence(lambda x: x**2)  # f(1) != 0
    with pytest.raises(InvalidDivergence):
        custom_divergence(lambda x: np.abs(x - 1.0))  # not strictly convex
    spec = custom_divergence(lambda x: (x - 1.0) ** 2 + 0 * x, name="q2")
    assert spec.density_from_dual(np.array([2.0]))[0] == pytest.approx(QUADRATIC.density_from_dual(np.array(2.0)), abs=1e-9)


def test_push_kernel_examples():
    mu = M.make_discrete_measure(X2, [0.5, 0.5])
    I = make_kernel(X2, X2, np.eye(2))
    assert np.allclose(push_kernel(mu, I).weights, mu.weights)
    nu = [0.2, 0.8]
    const = make_kernel(X2, X2, [nu, nu])
    assert np.allclose(push_kernel(bern(0.9), const).weights, nu)
    K = make_kernel(X2, X2, [[1, 0], [0.5, 0.5]])
    assert np.allclose(push_kernel(mu, K).weights, [0.75, 0.25])
    with pytest.raises(SpaceMismatch):
        push_kernel(M.uniform(M.MetricSpace.discrete(3)), K)
    with pytest.raises(ShadowOTError):
        make_kernel(X2, X2, [[0.5, 0.4], [0.5, 0.5]])


def test_data_processing_examples():
    mu, nu = bern(0.3), bern(0.8)
    c = check_data_processing(mu, nu, make_kernel(X2, X2, np.eye(2)))
    assert c.holds and c.lhs == pytest.approx(c.rhs)
    c = check_data_processing(mu, nu, make_kernel(X2, X2, [[0.4, 0.6], [0.4, 0.6]]))
    assert c.holds and c.lhs == pytest.approx(0, abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["kl", "quadratic"]))
def test_data_processing_random(seed, f):
    rng = np.random.default_rng(seed)
    X, Y = M.MetricSpace.discrete(4), M.MetricSpace.discrete(3)
    mu = M.make_discrete_measure(X, rng.dirichlet(np.ones(4)))
    nu = M.make_discrete_measure(X, rng.dirichlet(np.ones(4)))
    K = make_kernel(X, Y, rng.dirichlet(np.ones(3), size=4))
    assert check_data_processing(mu, nu, K, f).holds


def test_transport_constant_examples():
    assert transport_constant("bounded", 1, diam=2) == pytest.approx(math.sqrt(2))
    assert transport_constant("bounded", 2, diam=2) == pytest.approx(2**0.75)
    X = M.MetricSpace.line([0.0])
    d0 = M.dirac(X, 0)
    val = transport_constant("expq", 1, marginals=[d0, d0], alphas=[float(a) for a in range(1, 65)])
    assert val == pytest.approx(3 / 32)


def test_transport_constant_errors():
    X = M.MetricSpace.line([0.0, 1.0])
    mu = M.uniform(X)
    with pytest.raises(EmptyGrid):
        transport_constant("expq", 1, marginals=[mu], alphas=[])
    with pytest.raises(NonpositiveAlpha):
        transport_constant("exp2q", 1, marginals=[mu], alphas=[-1.0])
    with pytest.raises(ShadowOTError):
        transport_constant("bounded", 1, diam=0)


def test_grid_minimum_is_no_larger_than_any_grid_point():
    X = M.MetricSpace.line([0.0, 0.5, 2.0])
    mu = M.make_discrete_measure(X, [0.2, 0.5, 0.3])
    full = transport_constant("exp2q", 1, marginals=[mu, mu])
    for a in (0.25, 1.0, 4.0):
        assert full <= transport_constant("exp2q", 1, marginals=[mu, mu], alphas=[a]) + 1e-15
