import math

import numpy as np
import pytest

from oracles import kl
from shadowot import bounds as B
from shadowot import measures as M
from shadowot.errors import BadOrder, MissingFactors, ShadowOTError
from shadowot.exact import coupling_distance, marginal_tuple_distance
from shadowot.instances import sharpness_alpha, sharpness_instance, sharpness_w1
from shadowot.regularized import make_cost, sinkhorn_solve, sqeuclidean_cost


def grid2():
    X = M.MetricSpace.line([0.0, 1.0])
    return X, M.ProductSpace((X, X))


# ---------------------------------------------------------------------------
# the cost condition
# ---------------------------------------------------------------------------


def test_quadratic_constant_with_unit_moments():
    X, prod = grid2()
    c = sqeuclidean_cost(prod)
    L = B.cost_condition_constant("quadratic", c, [], [], 2, moments=[1, 1, 1, 1])
    assert L == pytest.approx(4 * math.sqrt(2), abs=1e-12)


def test_quadratic_constant_from_moments():
    X = M.MetricSpace.line([-1.0, 1.0])
    prod = M.ProductSpace((X, X))
    u = M.uniform(X)
    L = B.cost_condition_constant("quadratic", sqeuclidean_cost(prod), [u, u], [u, u], 2)
    assert L == pytest.approx(4 * math.sqrt(2), abs=1e-12)


def test_power_constant_with_supplied_cp():
    X, prod = grid2()
    c = make_cost(prod, np.abs(np.subtract.outer([0.0, 1.0], [0.0, 1.0])) ** 2)
    L = B.cost_condition_constant("power", c, [], [], 2, Cp=2 * math.sqrt(2), moments=[1, 1, 1, 1])
    assert L == pytest.approx(8 * math.sqrt(2), abs=1e-12)
    assert B.default_power_constant(2) == pytest.approx(2 * math.sqrt(2))


def test_product_constant_bounded_unit_lipschitz():
    X, prod = grid2()
    f = np.array([[0.0, 0.0], [1.0, 1.0]])  # x_1
    g = np.array([[0.0, 1.0], [0.0, 1.0]])  # x_2
    c = make_cost(prod, f * g, factors=(f, g))
    u = M.uniform(X)
    assert B.cost_condition_constant("product", c, [u, u], [u, u], math.inf) == pytest.approx(2.0)


def test_cost_condition_errors():
    X, prod = grid2()
    c = sqeuclidean_cost(prod)
    u = M.uniform(X)
    with pytest.raises(MissingFactors):
        B.cost_condition_constant("product", make_cost(prod, c.values), [u, u], [u, u], 2)
    with pytest.raises(BadOrder):
        B.cost_condition_constant("quadratic", c, [u, u], [u, u], 1)
    with pytest.raises(BadOrder):
        B.cost_condition_constant("power", c, [u, u], [u, u], math.inf)
    with pytest.raises(ShadowOTError):
        B.cost_condition_constant("nope", c, [u, u], [u, u], 2)


@pytest.mark.parametrize("p", [1.0, 2.0, math.inf])
def test_cost_condition_dominates_empirical_ratios(rng, p):
    """(A_L) with the computed L against random pairs of couplings."""
    X = M.MetricSpace.line(rng.uniform(-1, 1, 3))
    Y = M.MetricSpace.line(rng.uniform(-1, 1, 3))
    prod = M.ProductSpace((X, Y))
    f = rng.uniform(0.5, 1.5, size=3)[:, None] * np.ones((3, 3))
    g = np.ones((3, 1)) * np.abs(Y.coords[:, 0])[None, :]
    c = make_cost(prod, f * g, factors=(f, g))
    for _ in range(10):
        mus = [M.make_discrete_measure(S, rng.dirichlet(np.ones(3))) for S in (X, Y)]
        nus = [M.make_discrete_measure(S, rng.dirichlet(np.ones(3))) for S in (X, Y)]
        for variant in ("lipschitz", "product"):
            L = B.cost_condition_constant(variant, c, mus, nus, p)
            pi = sinkhorn_solve(mus, make_cost(prod, rng.uniform(0, 3, (3, 3)))).optimizer
            rho = sinkhorn_solve(nus, make_cost(prod, rng.uniform(0, 3, (3, 3)))).optimizer
            assert B.empirical_AL_ratio(c, pi, rho, p) <= L + 1e-9


def test_empirical_ratio_trivial_cases(rng):
    X, prod = grid2()
    pi = M.make_coupling(prod, [[0.4, 0.1], [0.1, 0.4]])
    rho = M.make_coupling(prod, [[0.25, 0.25], [0.25, 0.25]])
    c = sqeuclidean_cost(prod)
    assert B.empirical_AL_ratio(c, pi, pi, 2) == 0.0
    assert B.empirical_AL_ratio(make_cost(prod, np.full((2, 2), 3.0)), pi, rho, 2) == 0.0


# ---------------------------------------------------------------------------
# marginal stability
# ---------------------------------------------------------------------------


def test_value_bound_examples():
    assert B.value_stability_bound(2, 0.5) == 1.0
    assert B.value_stability_bound(7.0, 0) == 0.0
    with pytest.raises(ShadowOTError):
        B.value_stability_bound(-1, 1)


def test_optimizer_bound_examples():
    x = B.BoundInputs(N=2, p=1, q=1, L=2, C_q=math.sqrt(2), delta=0.5)
    assert B.optimizer_stability_bound("Iq", x) == pytest.approx(2.5, abs=1e-12)
    assert B.optimizer_stability_bound("Iq", B.BoundInputs(N=3, p=2, q=1, L=5, C_q=3)) == 0.0
    assert B.optimizer_stability_bound("Iq_prime", B.BoundInputs(N=3, p=2, q=1, L=5, C_q_prime=3)) == 0.0
    # halving L shrinks only the Hölder term
    half = B.optimizer_stability_bound("Iq", x, half_L=True)
    assert half == pytest.approx(0.5 + math.sqrt(2) * math.sqrt(1.0), abs=1e-12)
    y = B.BoundInputs(N=2, p=2, q=1, L=1, C_q_prime=2, delta=0.5)
    assert B.optimizer_stability_bound("Iq_prime", y) == pytest.approx(2 ** 0.5 * 0.5 + 2 * (1 + 0.5**0.5), abs=1e-12)


def test_bound_input_validation():
    with pytest.raises(BadOrder):
        B.optimizer_stability_bound("Iq", B.BoundInputs(p=1, q=2))
    with pytest.raises(ShadowOTError):
        B.BoundInputs(L=-1)
    with pytest.raises(ShadowOTError):
        B.optimizer_stability_bound("other", B.BoundInputs())


def test_value_and_optimizer_certificates_on_random_instances(rng):
    for _ in range(15):
        X = M.MetricSpace.line(rng.uniform(-1, 1, 3))
        Y = M.MetricSpace.line(rng.uniform(-1, 1, 3))
        prod = M.ProductSpace((X, Y))
        c = sqeuclidean_cost(prod) if rng.uniform() < 0.5 else make_cost(prod, np.abs(np.subtract.outer(X.coords[:, 0], Y.coords[:, 0])))
        mus = [M.make_discrete_measure(S, rng.dirichlet(np.ones(3))) for S in (X, Y)]
        nus = [M.make_discrete_measure(S, rng.dirichlet(np.ones(3))) for S in (X, Y)]
        for p in (1.0, 2.0, math.inf):
            delta = marginal_tuple_distance(mus, nus, p)
            L = B.cost_condition_constant("lipschitz", c, mus, nus, p)
            r, rt = sinkhorn_solve(mus, c), sinkhorn_solve(nus, c)
            assert abs(r.value - rt.value) <= B.value_stability_bound(L, delta) + 1e-7
            Cq = max(B.bounded_transport_constant(mus, 1), B.bounded_transport_constant(nus, 1))
            x = B.BoundInputs(N=2, p=p, q=1, L=L, C_q=Cq, delta=delta)
            assert coupling_distance(r.optimizer, rt.optimizer, 1) <= B.optimizer_stability_bound("Iq", x) + 1e-7


# ---------------------------------------------------------------------------
# cost stability
# ---------------------------------------------------------------------------


def test_cost_stability_identical_costs_vanish(rng):
    X, prod = grid2()
    c = make_cost(prod, rng.uniform(size=(2, 2)))
    P = M.product_measure([M.uniform(X), M.uniform(X)])
    out = B.cost_stability_bounds(c, c, P, 2, 1, C_q=1.0, C_q_prime=1.0)
    assert out.tv == out.kl_sym == out.wq_Iq == out.wq_Iq_prime == 0.0


def test_cost_stability_p_inf_example():
    X, prod = grid2()
    P = M.product_measure([M.uniform(X), M.uniform(X)])
    out = B.cost_stability_bounds(make_cost(prod, np.zeros((2, 2))), make_cost(prod, np.ones((2, 2))), P, math.inf)
    assert out.a == pytest.approx(1 + math.e**2)
    assert out.gap == 1.0
    assert out.tv == 0.5


@pytest.mark.parametrize("p", [1.0, 2.0, math.inf])
def test_cost_stability_certificates(rng, p):
    X = M.MetricSpace.line(rng.uniform(-1, 1, 3))
    prod = M.ProductSpace((X, X))
    for _ in range(10):
        mus = [M.make_discrete_measure(X, rng.dirichlet(np.ones(3))) for _ in range(2)]
        c = make_cost(prod, rng.uniform(0, 1, (3, 3)))
        ct = make_cost(prod, np.clip(c.values + rng.uniform(-0.3, 0.3, (3, 3)), 0, None))
        r, rt = sinkhorn_solve(mus, c).optimizer, sinkhorn_solve(mus, ct).optimizer
        out = B.cost_stability_bounds(c, ct, M.product_measure(mus), p)
        assert 0.5 * np.sum(np.abs(r.tensor - rt.tensor)) <= out.tv + 1e-9
        sym = kl(r.tensor, rt.tensor) + kl(rt.tensor, r.tensor)
        assert sym <= out.kl_sym + 1e-9
        assert sym <= float(np.sum((c.values - ct.values) * (rt.tensor - r.tensor))) + 1e-9


# ---------------------------------------------------------------------------
# bounded cost and the sharp example
# ---------------------------------------------------------------------------


def test_sharp_ell_is_three():
    inst = sharpness_instance(0.01)
    C1 = B.bounded_transport_constant(list(inst.mus), 1)
    assert C1 == pytest.approx(math.sqrt(2), abs=1e-15)
    assert inst.cost.lipschitz(math.inf) == pytest.approx(1.0, abs=1e-12)
    assert B.lipschitz_ell(2, C1, 1.0) == pytest.approx(3.0, abs=1e-15)
    x = B.BoundInputs(N=2, p=math.inf, q=1, C_q=C1, lip=1.0, delta=0.0)
    assert B.bounded_cost_stability_bound("lipschitz", x) == 0.0
    with pytest.raises(BadOrder):
        B.bounded_cost_stability_bound("lipschitz", B.BoundInputs(p=2, q=1))


@pytest.mark.parametrize("eps,lo,hi", [(0.1, 2.89, 2.91), (0.01, 2.989, 2.991), (0.001, 2.99, 3.0)])
def test_sharpness_ratio(eps, lo, hi):
    inst = sharpness_instance(eps)
    r = sinkhorn_solve(list(inst.mus), inst.cost)
    rt = sinkhorn_solve(list(inst.mus_tilde), inst.cost)
    assert np.max(np.abs(r.optimizer.tensor - inst.pi_star)) < 1e-9
    assert np.max(np.abs(rt.optimizer.tensor - inst.pi_tilde_star)) < 1e-9
    w1 = coupling_distance(r.optimizer, rt.optimizer, 1)
    assert w1 == pytest.approx(sharpness_w1(eps), abs=1e-8)
    delta = marginal_tuple_distance(list(inst.mus), list(inst.mus_tilde), math.inf)
    assert delta == pytest.approx(eps, abs=1e-15)
    assert lo <= w1 / delta <= hi
    assert w1 <= 3 * delta + 1e-7
    assert B.empirical_AL_ratio(inst.cost, r.optimizer, rt.optimizer, math.inf) <= 1.0 + 1e-9
    assert sharpness_alpha(eps) == pytest.approx(math.exp(eps) / (1 + math.exp(eps)))


def test_bounded_modes_dominate_lipschitz_instance(rng):
    inst = sharpness_instance(0.05)
    r = sinkhorn_solve(list(inst.mus), inst.cost).optimizer
    rt = sinkhorn_solve(list(inst.mus_tilde), inst.cost).optimizer
    for p in (1.0, 2.0, math.inf):
        delta = marginal_tuple_distance(list(inst.mus), list(inst.mus_tilde), p)
        x = B.BoundInputs(N=2, p=p, q=1, C_q=math.sqrt(2), a=B.bounded_cost_a(2, inst.cost.sup_norm), lip=inst.cost.lipschitz(p), delta=delta)
        assert coupling_distance(r, rt, 1) <= B.bounded_cost_stability_bound("Iq", x) + 1e-7


# ---------------------------------------------------------------------------
# Sinkhorn constants
# ---------------------------------------------------------------------------


def test_rate_constants_zero_kl():
    X = M.MetricSpace.line([0.0, 1.0])
    u = M.uniform(X)
    rates = B.sinkhorn_rate_constants(2, 1, 0.0, [u, u], L=3.0)
    assert rates.C0 == 0.0
    for n in (1, 10, 200):
        assert rates.delta(n) == 0.0 and rates.value_bound(n) == 0.0 and rates.wq_bound(n) == 0.0


def test_rate_constant_c0_example():
    X = M.MetricSpace.line([0.0, 1.0])
    u = M.uniform(X)
    assert B.sinkhorn_rate_constants(2, 1, 0.5, [u, u]).C0 == pytest.approx(1.0)
    with pytest.raises(ShadowOTError):
        B.sinkhorn_rate_constants(2, 1, -1.0, [u, u])


def test_smallest_rate_constant():
    ns = np.array([1, 4, 16])
    assert B.smallest_rate_constant(ns, 2.0 / np.sqrt(ns), 0.5) == pytest.approx(2.0)
    assert B.smallest_rate_constant([], [], 0.5) == 0.0
