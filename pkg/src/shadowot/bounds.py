"""Stability constants and bounds for regularized transport.

Conventions for p = inf follow the limits a^(1/p) -> 1, a^(1/(p+1)) -> 1 and
p/(p+1) -> 1.  Every formula propagates ``math.inf`` when an input is
infinite.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .certificates import _clean
from .divergences import log_exp_moment, transport_constant
from .errors import BadOrder, MissingFactors, ShadowOTError
from .exact import coupling_distance, solve_transport
from .measures import Coupling, DiscreteMeasure, p_moment
from .regularized import CostSpec

DEFAULT_ALPHAS = tuple(2.0**k for k in range(-6, 7))


@dataclass(frozen=True)
class BoundInputs:
    """Constants entering the stability bounds."""

    N: int = 2
    p: float = 1.0
    q: float = 1.0
    L: float = 0.0
    C_q: float = 0.0
    C_q_prime: float = 0.0
    delta: float = 0.0
    a: float = 0.0
    lip: float = 0.0
    cost_gap: float = 0.0

    def __post_init__(self):
        for name in ("L", "C_q", "C_q_prime", "delta", "a", "lip", "cost_gap"):
            if getattr(self, name) < 0:
                raise ShadowOTError(f"{name} must be nonnegative")

    def to_dict(self):
        return _clean(asdict(self))


def _inv(p):
    return 0.0 if math.isinf(p) else 1.0 / p


def _pow(x, e):
    if x == 0:
        return 0.0 if e > 0 else 1.0
    return x**e


def jensen_factor(N, p, q) -> float:
    """N^(1/q - 1/p)."""
    return float(N) ** (_inv(q) - _inv(p))


def _check_order(p, q):
    if q > p:
        raise BadOrder(f"q = {q} exceeds p = {p}")
    if math.isinf(q):
        raise BadOrder("q must be finite")


# ---------------------------------------------------------------------------
# the cost condition
# ---------------------------------------------------------------------------


def _support_grid(mus):
    return np.ix_(*[m.support for m in mus])


def _norm_bound(h: np.ndarray, mus, cost: CostSpec, p) -> float:
    """Upper bound on ||h||_{L^q(pi)}, q = p/(p-1), uniformly over pi in Pi(mus)."""
    habs = np.abs(h)
    sup = float(habs[_support_grid(mus)].max())
    if p == 1 or math.isinf(p):
        return sup
    q = p / (p - 1.0)
    best = sup
    if len(mus) == 2:
        # exact: the worst coupling solves a transport problem
        s1, s2 = mus[0].support, mus[1].support
        hq = habs[np.ix_(s1, s2)] ** q
        plan = solve_transport(mus[0].weights[s1], mus[1].weights[s2], hq.max() - hq)
        best = min(best, float(np.sum(plan * hq)) ** (1.0 / q))
    # growth bound |h| <= C (1 + d^{p-1}): ||h||_q <= C (1 + (sum_i M_p(mu_i)^p)^{1/q})
    prod = cost.product
    atoms = prod.atoms()
    grid_mask = np.zeros(prod.shape, bool)
    grid_mask[_support_grid(mus)] = True
    sel = grid_mask.reshape(-1)
    vals = habs.reshape(-1)[sel]
    D = prod.distances(atoms, atoms[sel], p)
    C = np.max(vals[None, :] / (1.0 + D ** (p - 1.0)), axis=1)
    moments = np.zeros(len(atoms))
    for i, m in enumerate(mus):
        mp = np.array([p_moment(m, p, anchor_index=k) ** p for k in range(m.space.size)])
        moments += mp[atoms[:, i]]
    growth = C * (1.0 + moments ** (1.0 / q))
    return min(best, float(growth.min()))


def _fold_factors(cost: CostSpec):
    if cost.factors is None or len(cost.factors) < 2:
        raise MissingFactors("the product variant needs a cost with factors")
    f = np.ones(cost.shape)
    for t in cost.factors[:-1]:
        f = f * t
    return f, np.asarray(cost.factors[-1])


def default_power_constant(p) -> float:
    """p * 2^(1 - 1/p): |grad |v|^p| = p |v|^(p-1) and |a + b| <= 2^(1-1/p) (|a|^p + |b|^p)^(1/p)."""
    return p * 2.0 ** (1.0 - 1.0 / p)


def cost_condition_constant(variant, cost: CostSpec, mus, mus_tilde, p, Cp=None, moments=None) -> float:
    """A constant L with |int c d(pi - pi~)| <= L W_p(pi, pi~) for all couplings
    pi of ``mus`` and pi~ of ``mus_tilde``.

    Variants:

    ``"lipschitz"``
        Lip_p(c) over the whole product; valid for any marginals.
    ``"product"``
        c = f * g (more factors are folded from the left):
        ||f||_{L^q(pi)} Lip_p(g) + ||g||_{L^q(pi~)} Lip_p(f), with the norms
        bounded uniformly over the couplings; the better of the two
        arrangements is returned.
    ``"quadratic"``
        c = |x_1 - x_2|^2 with p = 2: sqrt(2) * (M(mu_1) + M(mu~_1) + M(mu_2) + M(mu~_2)).
    ``"power"``
        c = |x_2 - x_1|^p: Cp * (sum of the four M_p)^(p - 1); ``Cp``
        defaults to :func:`default_power_constant`.

    ``moments`` overrides the four second (or p-th) moments for the
    quadratic and power variants.
    """
    p = float(p)
    mus, mus_tilde = list(mus), list(mus_tilde)
    if variant == "lipschitz":
        return cost.lipschitz(p)
    if variant == "product":
        f, g = _fold_factors(cost)
        lf = cost.product.lipschitz(f, p)
        lg = cost.product.lipschitz(g, p)
        one = _norm_bound(f, mus, cost, p) * lg + _norm_bound(g, mus_tilde, cost, p) * lf
        two = _norm_bound(g, mus, cost, p) * lf + _norm_bound(f, mus_tilde, cost, p) * lg
        return float(min(one, two))
    if variant in ("quadratic", "power"):
        if variant == "quadratic" and p != 2:
            raise BadOrder("the quadratic variant needs p = 2")
        if variant == "power" and not 1 < p < math.inf:
            raise BadOrder("the power variant needs 1 < p < inf")
        if moments is None:
            if len(mus) != 2 or any(m.space.kind != "euclidean" for m in mus + mus_tilde):
                raise ShadowOTError(f"the {variant} variant needs two euclidean marginals")
            moments = [p_moment(m, p) for m in (mus[0], mus_tilde[0], mus[1], mus_tilde[1])]
        total = float(sum(moments))
        if variant == "quadratic":
            return math.sqrt(2.0) * total
        Cp = default_power_constant(p) if Cp is None else float(Cp)
        return Cp * total ** (p - 1.0)
    raise ShadowOTError(f"unknown cost-condition variant {variant!r}")


def empirical_AL_ratio(c: CostSpec, pi: Coupling, rho: Coupling, p) -> float:
    """|int c dpi - int c drho| / W_p(pi, rho), 0 when the couplings coincide."""
    num = abs(pi.integrate(c.values) - rho.integrate(c.values))
    if np.array_equal(pi.tensor, rho.tensor) or np.ptp(c.values) == 0:
        return 0.0
    den = coupling_distance(pi, rho, p)
    if den == 0:
        return 0.0
    return num / den


# ---------------------------------------------------------------------------
# marginal stability
# ---------------------------------------------------------------------------


def value_stability_bound(L, delta) -> float:
    """L * Delta."""
    if L < 0 or delta < 0:
        raise ShadowOTError("L and delta must be nonnegative")
    return float(L) * float(delta)


def optimizer_stability_bound(mode, inputs: BoundInputs, half_L=False) -> float:
    """Bound on W_q between the optimizers for two marginal tuples at distance Delta.

    ``"Iq"``: N^(1/q-1/p) Delta + C_q (2 L Delta)^(1/(2q)).
    ``"Iq_prime"``: N^(1/q-1/p) Delta + C_q' [(2 L Delta)^(1/q) + (L Delta)^(1/(2q))].
    ``half_L`` replaces L by L/2 (valid when both tuples satisfy the transport
    inequality with the given constant).
    """
    x = inputs
    _check_order(x.p, x.q)
    L = x.L / 2 if half_L else x.L
    base = jensen_factor(x.N, x.p, x.q) * x.delta
    if mode == "Iq":
        return base + x.C_q * _pow(2 * L * x.delta, 1 / (2 * x.q))
    if mode == "Iq_prime":
        return base + x.C_q_prime * (_pow(2 * L * x.delta, 1 / x.q) + _pow(L * x.delta, 1 / (2 * x.q)))
    raise ShadowOTError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# cost stability
# ---------------------------------------------------------------------------


def lp_norm(values, P: Coupling, p) -> float:
    """||values||_{L^p(P)} (sup over the support of P for p = inf)."""
    v = np.abs(np.asarray(values, dtype=np.float64))
    if math.isinf(p):
        return float(v[P.tensor > 0].max(initial=0.0))
    return float(np.sum(P.tensor * v**p) ** (1.0 / p))


def _holder_exponent(p, q):
    """p / ((p + 1) q), read as 1/q for p = inf."""
    return 1.0 / q if math.isinf(p) else p / ((p + 1.0) * q)


def _a_root(a, p):
    return 1.0 if math.isinf(p) else a ** (1.0 / p)


@dataclass(frozen=True)
class CostStabilityBounds:
    tv: float
    kl_sym: float
    wq_Iq: float
    wq_Iq_prime: float
    a: float
    gap: float

    def to_dict(self):
        return _clean(asdict(self))


def cost_stability_bounds(c: CostSpec, c_tilde: CostSpec, P: Coupling, p, q=1.0, C_q=0.0, C_q_prime=0.0) -> CostStabilityBounds:
    """The TV, symmetric-KL and W_q bounds for two costs with shared marginals.

    ``P`` is the product of the marginals; a = exp(N |c|_inf) + exp(N |c~|_inf)
    and g = ||c - c~||_{L^p(P)}.
    """
    N = P.product.N
    a = math.exp(N * c.sup_norm) + math.exp(N * c_tilde.sup_norm)
    g = lp_norm(c.values - c_tilde.values, P, p)
    if math.isinf(p):
        tv = 0.5 * g
        kl = g**2
    else:
        tv = 0.5 * a ** (1.0 / (p + 1)) * g ** (p / (p + 1))
        kl = a ** (2.0 / (p + 1)) * g ** (2 * p / (p + 1))
    e = _holder_exponent(p, q)
    base = _a_root(a, p) * g
    wq = 2.0 ** (-1.0 / (2 * q)) * C_q * _pow(base, e)
    wq_prime = C_q_prime * (_pow(base, 2 * e) + 2.0 ** (-1.0 / (2 * q)) * _pow(base, e))
    return CostStabilityBounds(float(tv), float(kl), float(wq), float(wq_prime), float(a), float(g))


def bounded_cost_stability_bound(mode, inputs: BoundInputs) -> float:
    """Bound on W_q between optimizers for a bounded Lipschitz cost.

    ``inputs.a`` must be 2 exp(N |c|_inf) (see :func:`bounded_cost_a`) and
    ``inputs.lip`` Lip_p(c).  Mode ``"lipschitz"`` (q = 1, p = inf) returns
    ell * Delta with ell = N + (C_1 / sqrt 2) Lip_inf(c).
    """
    x = inputs
    _check_order(x.p, x.q)
    if mode == "lipschitz":
        if not (x.q == 1 and math.isinf(x.p)):
            raise BadOrder("the Lipschitz mode needs q = 1 and p = inf")
        return lipschitz_ell(x.N, x.C_q, x.lip) * x.delta
    base = jensen_factor(x.N, x.p, x.q) * x.delta
    e = _holder_exponent(x.p, x.q)
    t = _a_root(x.a, x.p) * x.lip * x.delta
    if mode == "Iq":
        return base + 2.0 ** (-1.0 / (2 * x.q)) * x.C_q * _pow(t, e)
    if mode == "Iq_prime":
        return base + 2.0 ** (-1.0 / x.q) * x.C_q_prime * (_pow(t, 2 * e) + 2.0 ** (-1.0 / (2 * x.q)) * _pow(t, e))
    raise ShadowOTError(f"unknown mode {mode!r}")


def bounded_cost_a(N, sup_norm) -> float:
    return 2.0 * math.exp(N * sup_norm)


def lipschitz_ell(N, C1, lip_inf) -> float:
    """ell = N + (C_1 / sqrt 2) Lip_inf(c)."""
    return N + (C1 / math.sqrt(2.0)) * lip_inf


# ---------------------------------------------------------------------------
# transport constants from marginals
# ---------------------------------------------------------------------------


def bounded_transport_constant(mus, q) -> float:
    """C_q = 2^(-1/(2q)) diam_q(X_2 x ... x X_N), diameters over the supports."""
    diams = np.array([m.space.diameter(m.support) for m in mus[1:]])
    diam = float(diams.max()) if math.isinf(q) else float(np.sum(diams**q) ** (1.0 / q))
    if diam == 0:
        return 0.0
    return transport_constant("bounded", q, diam=diam)


def support_anchors(mus):
    return [list(m.support) for m in mus]


# ---------------------------------------------------------------------------
# Sinkhorn rates
# ---------------------------------------------------------------------------


def marginal_exp_constant(mu: DiscreteMeasure, p, anchors=None, alphas=None) -> float:
    """C_mu = 2 min over (anchor, alpha) of ((3/2 + log int exp(alpha d^p) dmu) / alpha)^(1/p).

    This is the constant of the weighted-Pinsker bound
    W_p(nu, mu) <= C_mu [D^(1/p) + (D/2)^(1/(2p))], D = D_KL(nu, mu).
    """
    alphas = DEFAULT_ALPHAS if alphas is None else tuple(alphas)
    anchors = range(mu.space.size) if anchors is None else anchors
    best = math.inf
    for alpha in alphas:
        if alpha <= 0:
            raise ShadowOTError("alpha must be positive")
        lm = min(log_exp_moment(mu, alpha, p, k) for k in anchors)
        best = min(best, 2.0 * ((1.5 + lm) / alpha) ** (1.0 / p))
    return best


@dataclass(frozen=True)
class SinkhornRates:
    """Constants for the Sinkhorn convergence bounds at order p."""

    p: float
    q: float
    kl_star: float
    C0: float
    C_mu: tuple
    L: float
    C_q_prime: float

    def delta(self, n) -> float:
        """Bound on max_i W_p(pi^n_i, mu_i)."""
        n = float(n)
        return self.C0 * max(self.C_mu) * (n ** (-1.0 / self.p) + n ** (-1.0 / (2 * self.p)))

    def marginal_kl(self, n) -> float:
        return 2.0 * self.kl_star / n

    def value_bound(self, n, delta=None) -> float:
        """L Delta(n) + 2 kl_star / n."""
        d = self.delta(n) if delta is None else delta
        return self.L * d + 2.0 * self.kl_star / n

    def wq_bound(self, n, delta=None) -> float:
        d = self.delta(n) if delta is None else delta
        q, p = self.q, self.p
        return (
            2.0 ** (1.0 / q - 1.0 / p) * d
            + self.C_q_prime * (2 * self.L) ** (1.0 / q) * _pow(d, 1.0 / q)
            + self.C_q_prime * self.L ** (1.0 / (2 * q)) * _pow(d, 1.0 / (2 * q))
        )

    def to_dict(self):
        return _clean(asdict(self))


def sinkhorn_rate_constants(p, q, kl_star, mus, L=0.0, C_q_prime=None, anchors=None, alphas=None) -> SinkhornRates:
    """C_0, C_mu_i and the composed Sinkhorn bounds.

    C_0 = max{(2 kl*)^(1/p), (2 kl*)^(1/(2p))}; C_mu_i from
    :func:`marginal_exp_constant`; C_q' defaults to the exponential-moment
    constant of the marginals.
    """
    if kl_star < 0:
        if kl_star < -1e-12:
            raise ShadowOTError("kl_star must be nonnegative")
        kl_star = 0.0
    _check_order(p, q)
    two = 2.0 * kl_star
    C0 = max(_pow(two, 1.0 / p), _pow(two, 1.0 / (2 * p)))
    C_mu = tuple(marginal_exp_constant(m, p, None if anchors is None else anchors[i], alphas) for i, m in enumerate(mus))
    if C_q_prime is None:
        C_q_prime = transport_constant("expq", q, marginals=list(mus), alphas=alphas)
    return SinkhornRates(float(p), float(q), float(kl_star), float(C0), C_mu, float(L), float(C_q_prime))


def smallest_rate_constant(ns, measured, exponent) -> float:
    """Smallest c0 with measured(n) <= c0 n^(-exponent) on the given n."""
    ns = np.asarray(ns, dtype=np.float64)
    m = np.asarray(measured, dtype=np.float64)
    if ns.size == 0:
        return 0.0
    return float(np.max(m * ns**exponent))
