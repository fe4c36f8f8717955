import math

import numpy as np
import pytest

from oracles import cvx_regularized, grid_quadratic_2x2, kl
from shadowot import measures as M
from shadowot.errors import MarginalMismatch, NotConverged, ShadowOTError
from shadowot.instances import random_coupling, sharpness_alpha, sharpness_instance
from shadowot.regularized import (
    entropic_functional,
    f_regularized_solve,
    gibbs_reference,
    make_cost,
    multimarginal_sinkhorn_solve,
    pythagorean_certificate,
    regularized_functional,
    sinkhorn_init,
    sinkhorn_solve,
    sinkhorn_step,
)

S_SYM = -math.log((1 + math.exp(-1)) / 2)


def two_by_two(c=((0.0, 1.0), (1.0, 0.0)), a=(0.5, 0.5), b=(0.5, 0.5)):
    X = M.MetricSpace.line([0.0, 1.0])
    mus = [M.make_discrete_measure(X, a), M.make_discrete_measure(X, b)]
    return mus, make_cost(M.ProductSpace((X, X)), c)


def normalized(w):
    return w / w.sum()


def random_problem(rng, sizes, scale=3.0):
    spaces = [M.MetricSpace.line(rng.uniform(-1, 1, size=n)) for n in sizes]
    mus = [M.make_discrete_measure(X, normalized(rng.dirichlet(np.ones(X.size)) + 0.02)) for X in spaces]
    product = M.ProductSpace(tuple(spaces))
    return mus, make_cost(product, rng.uniform(0, scale, size=product.shape))


# ---------------------------------------------------------------------------
# Gibbs reference
# ---------------------------------------------------------------------------


def test_gibbs_symmetric_example():
    mus, c = two_by_two()
    P, alpha = gibbs_reference(c, mus)
    e = math.exp(-1)
    assert alpha == pytest.approx((2 + 2 * e) / 4, abs=1e-15)
    assert np.allclose(P.tensor, [[0.365529, 0.134471], [0.134471, 0.365529]], atol=1e-6)


def test_gibbs_zero_cost_and_shift(rng):
    mus, _ = random_problem(rng, (3, 2))
    product = M.ProductSpace(tuple(m.space for m in mus))
    zero = make_cost(product, np.zeros(product.shape))
    P, alpha = gibbs_reference(zero, mus)
    assert alpha == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(P.tensor, M.product_measure(mus).tensor, atol=1e-15)
    c = make_cost(product, rng.uniform(size=product.shape))
    P1, a1 = gibbs_reference(c, mus)
    P2, a2 = gibbs_reference(c.shifted(0.7), mus)
    assert np.allclose(P1.tensor, P2.tensor, atol=1e-15)
    assert a2 == pytest.approx(a1 * math.exp(-0.7), rel=1e-13)


# ---------------------------------------------------------------------------
# Sinkhorn steps and solves
# ---------------------------------------------------------------------------


def test_step_is_identity_on_symmetric_instance():
    mus, c = two_by_two()
    s0 = sinkhorn_init(mus, c)
    s1 = sinkhorn_step(s0, mus, c)
    assert s1.n == 1
    assert np.allclose(s1.iterate.tensor, s0.iterate.tensor, atol=1e-15)
    s2 = sinkhorn_step(s1, mus, c)
    assert np.allclose(s2.iterate.tensor, s0.iterate.tensor, atol=1e-15)


def test_zero_cost_one_odd_step_fits():
    mus, c = two_by_two(np.zeros((2, 2)), a=(0.7, 0.3))
    s1 = sinkhorn_step(sinkhorn_init(mus, c), mus, c)
    assert np.allclose(s1.iterate.tensor, np.outer([0.7, 0.3], [0.5, 0.5]), atol=1e-15)


def test_odd_and_even_steps_fit_their_marginal(rng):
    mus, c = random_problem(rng, (3, 4))
    s = sinkhorn_init(mus, c)
    for n in range(1, 7):
        s = sinkhorn_step(s, mus, c)
        k = 0 if n % 2 else 1
        assert np.max(np.abs(s.iterate.marginal(k).weights - mus[k].weights)) < 1e-12
        # duality shape: log pi - log P + c is separable
        logr = np.log(s.iterate.tensor) - np.log(np.outer(mus[0].weights, mus[1].weights)) + c.values
        assert np.allclose(logr, s.potentials[0][:, None] + s.potentials[1][None, :], atol=1e-9)


def test_solve_symmetric_closed_form():
    mus, c = two_by_two()
    rep = sinkhorn_solve(mus, c)
    assert rep.converged
    assert np.allclose(rep.optimizer.tensor, [[0.365529, 0.134471], [0.134471, 0.365529]], atol=1e-6)
    assert rep.value == pytest.approx(S_SYM, abs=1e-12)
    assert rep.value == pytest.approx(0.3798855, abs=1e-7)
    assert rep.kl_star == pytest.approx(0.0, abs=1e-14)
    assert entropic_functional(rep.optimizer, mus, c) == pytest.approx(S_SYM, abs=1e-12)


def test_solve_constant_cost(rng):
    mus, _ = random_problem(rng, (3, 3))
    product = M.ProductSpace(tuple(m.space for m in mus))
    rep = sinkhorn_solve(mus, make_cost(product, np.full(product.shape, 1.3)))
    assert np.allclose(rep.optimizer.tensor, M.product_measure(mus).tensor, atol=1e-12)
    assert rep.value == pytest.approx(1.3, abs=1e-12)


@pytest.mark.parametrize("eps", [0.1, 0.01, 0.001])
def test_solve_sharpness_instance(eps):
    inst = sharpness_instance(eps)
    rep = sinkhorn_solve(list(inst.mus), inst.cost)
    a = sharpness_alpha(eps)
    expected = np.zeros((4, 4))
    expected[0, 0] = expected[3, 3] = a / 2
    expected[0, 3] = expected[3, 0] = (1 - a) / 2
    assert np.max(np.abs(rep.optimizer.tensor - expected)) < 1e-9


def test_value_identity_and_direct_evaluation(rng):
    for _ in range(10):
        mus, c = random_problem(rng, (3, 4))
        rep = sinkhorn_solve(mus, c)
        assert rep.value == pytest.approx(rep.value_direct, abs=1e-9)
        assert rep.value == pytest.approx(entropic_functional(rep.optimizer, mus, c), abs=1e-9)
        P, alpha = gibbs_reference(c, mus)
        assert rep.kl_star == pytest.approx(kl(rep.optimizer.tensor, P.tensor), abs=1e-10)


def test_reformulation_holds_off_the_polytope(rng):
    mus, c = random_problem(rng, (3, 3))
    P, alpha = gibbs_reference(c, mus)
    for _ in range(5):
        pi = M.make_coupling(c.product, rng.dirichlet(np.ones(9)).reshape(3, 3))
        assert entropic_functional(pi, mus, c) == pytest.approx(kl(pi.tensor, P.tensor) - math.log(alpha), abs=1e-12)


def test_functional_infinite_without_absolute_continuity():
    X = M.MetricSpace.line([0.0, 1.0])
    mus = [M.make_discrete_measure(X, [1.0, 0.0]), M.uniform(X)]
    c = make_cost(M.ProductSpace((X, X)), np.zeros((2, 2)))
    pi = M.make_coupling(c.product, [[0.0, 0.0], [0.5, 0.5]])
    assert entropic_functional(pi, mus, c) == math.inf


def test_epsilon_scaling(rng):
    mus, c = random_problem(rng, (3, 4))
    for eps in (0.5, 0.1):
        r_eps = sinkhorn_solve(mus, c, epsilon=eps)
        r_1 = sinkhorn_solve(mus, c.scaled(1 / eps))
        assert np.max(np.abs(r_eps.optimizer.tensor - r_1.optimizer.tensor)) < 1e-9
        assert r_eps.value == pytest.approx(eps * r_1.value, abs=1e-9)


def test_reference_invariance(rng):
    mus, c = random_problem(rng, (3, 4))
    base = sinkhorn_solve(mus, c)
    ref = [rng.dirichlet(np.ones(3)) + 0.05, rng.dirichlet(np.ones(4)) + 0.05]
    other = sinkhorn_solve(mus, c, reference=ref)
    assert np.max(np.abs(base.optimizer.tensor - other.optimizer.tensor)) < 1e-8
    mm = multimarginal_sinkhorn_solve(mus, c, reference=ref)
    assert np.max(np.abs(base.optimizer.tensor - mm.optimizer.tensor)) < 1e-8


def test_history_leger_bound_and_monotone_kl_to_optimizer(rng):
    for _ in range(5):
        mus, c = random_problem(rng, (4, 4), scale=6.0)
        rep = sinkhorn_solve(mus, c, min_iters=200, history_dense=200)
        pi_star = rep.optimizer.tensor
        s = sinkhorn_init(mus, c)
        prev = math.inf
        for n in range(1, 201):
            s = sinkhorn_step(s, mus, c)
            assert max(s.marginal_kl) <= 2 * rep.kl_star / n + 1e-12
            d = kl(pi_star, s.iterate.tensor)
            assert d <= prev + 1e-12
            prev = d
        hist = {h.n: h for h in rep.state.history}
        assert all(n in hist for n in range(0, 201))


def test_zero_mass_atoms_get_minus_inf_potentials():
    X = M.MetricSpace.line([0.0, 1.0, 2.0])
    mus = [M.make_discrete_measure(X, [0.5, 0.0, 0.5]), M.make_discrete_measure(X, [0.2, 0.3, 0.5])]
    c = make_cost(M.ProductSpace((X, X)), np.abs(np.subtract.outer(X.coords[:, 0], X.coords[:, 0])))
    rep = sinkhorn_solve(mus, c)
    assert rep.converged
    assert rep.potentials[0][1] == -math.inf
    assert np.all(rep.optimizer.tensor[1] == 0)
    assert np.allclose(rep.optimizer.marginal(1).weights, mus[1].weights, atol=1e-10)


def test_strict_raises_not_converged():
    mus, c = two_by_two(((0, 5), (5, 0)), a=(0.9, 0.1))
    rep = sinkhorn_solve(mus, c, max_iters=1)
    assert not rep.converged
    with pytest.raises(NotConverged) as info:
        sinkhorn_solve(mus, c, max_iters=1, strict=True)
    assert info.value.args


def test_bad_arguments():
    mus, c = two_by_two()
    with pytest.raises(ShadowOTError):
        sinkhorn_solve(mus, c, tol=0)
    with pytest.raises(ShadowOTError):
        sinkhorn_solve(mus, c, epsilon=0)
    with pytest.raises(ShadowOTError):
        make_cost(c.product, [[0.0, -1.0], [1.0, 0.0]])
    with pytest.raises(ShadowOTError):
        make_cost(c.product, [[0.0, 3.0], [1.0, 0.0]], lip={1: 1.0})


# ---------------------------------------------------------------------------
# multi-marginal and generic f against brute-force oracles
# ---------------------------------------------------------------------------


def test_multimarginal_zero_cost(rng):
    mus, _ = random_problem(rng, (2, 3, 2))
    product = M.ProductSpace(tuple(m.space for m in mus))
    rep = multimarginal_sinkhorn_solve(mus, make_cost(product, np.zeros(product.shape)))
    assert np.allclose(rep.optimizer.tensor, M.product_measure(mus).tensor, atol=1e-14)
    assert rep.value == pytest.approx(0.0, abs=1e-14)


def test_multimarginal_pairwise_cost_factorizes(rng):
    mus, c = random_problem(rng, (2, 2, 2))
    c12 = rng.uniform(0, 3, size=(2, 2))
    c3 = make_cost(c.product, np.broadcast_to(c12[:, :, None], (2, 2, 2)))
    pair = M.ProductSpace(c.product.factors[:2])
    two = sinkhorn_solve(mus[:2], make_cost(pair, c12))
    three = multimarginal_sinkhorn_solve(mus, c3)
    assert np.max(np.abs(three.optimizer.tensor - np.multiply.outer(two.optimizer.tensor, mus[2].weights))) < 1e-10
    assert three.value == pytest.approx(two.value, abs=1e-10)


@pytest.mark.parametrize("sizes", [(2, 2), (3, 3), (2, 2, 2)])
@pytest.mark.parametrize("f", ["kl", "quadratic"])
def test_solvers_match_convex_oracle(rng, sizes, f):
    for _ in range(4):
        mus, c = random_problem(rng, sizes)
        ref, ref_val = cvx_regularized([m.weights for m in mus], c.values, 1.0, f)
        reps = [f_regularized_solve(mus, c, f)]
        if f == "kl":
            reps.append(multimarginal_sinkhorn_solve(mus, c))
            if len(sizes) == 2:
                reps.append(sinkhorn_solve(mus, c))
        for rep in reps:
            assert rep.converged
            assert np.max(np.abs(rep.optimizer.tensor - ref)) < 1e-5
            assert rep.value == pytest.approx(ref_val, abs=1e-6)


def test_generic_kl_agrees_with_sinkhorn(rng):
    mus, c = random_problem(rng, (3, 4))
    a = f_regularized_solve(mus, c, "kl")
    b = sinkhorn_solve(mus, c)
    assert np.max(np.abs(a.optimizer.tensor - b.optimizer.tensor)) < 1e-6


def test_quadratic_symmetric_matches_grid():
    mus, c = two_by_two()
    rep = f_regularized_solve(mus, c, "quadratic")
    grid, val = grid_quadratic_2x2(np.array(c.values))
    assert np.max(np.abs(rep.optimizer.tensor - grid)) < 1e-5
    assert np.allclose(rep.optimizer.tensor, [[0.3125, 0.1875], [0.1875, 0.3125]], atol=1e-12)
    assert rep.value == pytest.approx(0.4375, abs=1e-12)
    assert regularized_functional(rep.optimizer, mus, c, "quadratic") == pytest.approx(0.4375, abs=1e-12)


@pytest.mark.parametrize("f", ["kl", "quadratic"])
def test_zero_cost_any_divergence_gives_product(rng, f):
    mus, _ = random_problem(rng, (3, 2))
    product = M.ProductSpace(tuple(m.space for m in mus))
    rep = f_regularized_solve(mus, make_cost(product, np.zeros(product.shape)), f)
    assert np.allclose(rep.optimizer.tensor, M.product_measure(mus).tensor, atol=1e-12)
    assert rep.value == pytest.approx(0.0, abs=1e-12)


# ---------------------------------------------------------------------------
# the Pythagorean relation
# ---------------------------------------------------------------------------


def test_pythagorean_examples(rng):
    mus, c = random_problem(rng, (3, 4))
    rep = sinkhorn_solve(mus, c)
    at_opt = pythagorean_certificate(rep.optimizer, rep, mus, c)
    assert at_opt.holds and at_opt.lhs == pytest.approx(0, abs=1e-12) and at_opt.rhs == pytest.approx(0, abs=1e-9)
    prod = pythagorean_certificate(M.product_measure(mus), rep, mus, c)
    assert prod.holds and prod.lhs > 0
    for kind in ["sinkhorn", "vertex"] * 25:
        cert = pythagorean_certificate(random_coupling(rng, mus, kind), rep, mus, c)
        assert cert.holds


def test_pythagorean_rejects_other_marginals(rng):
    mus, c = random_problem(rng, (3, 3))
    rep = sinkhorn_solve(mus, c)
    pi = M.make_coupling(c.product, np.full((3, 3), 1 / 9))
    with pytest.raises(MarginalMismatch):
        pythagorean_certificate(pi, rep, mus, c)
