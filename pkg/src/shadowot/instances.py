"""Seeded random instances: marginals, perturbations, costs and couplings."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigInvalid
from .exact import solve_transport
from .measures import (
    Coupling,
    MetricSpace,
    ProductSpace,
    _frozen,
    embed,
    make_discrete_measure,
    product_measure,
    union_space,
)
from .regularized import (
    CostSpec,
    make_cost,
    mcshane_extension,
    multimarginal_sinkhorn_solve,
    sinkhorn_solve,
    sqeuclidean_cost,
)

PERTURBATIONS = ("jitter", "reweight", "translate")


def random_weights(rng, n, floor=0.05):
    """Dirichlet(1) weights mixed with a little uniform mass (no vanishing atoms)."""
    w = rng.dirichlet(np.ones(n))
    return (1.0 - floor) * w + floor / n


@dataclass(frozen=True)
class Perturbation:
    """A perturbation with its random direction drawn once, applied at any magnitude."""

    kind: str
    noise: tuple

    @classmethod
    def draw(cls, rng, kind, point_sets):
        if kind not in PERTURBATIONS:
            raise ConfigInvalid(f"unknown perturbation {kind!r}; expected one of {PERTURBATIONS}")
        if kind == "jitter":
            noise = tuple(rng.uniform(-1.0, 1.0, size=pts.shape) for pts in point_sets)
        elif kind == "translate":
            noise = []
            for pts in point_sets:
                v = rng.normal(size=pts.shape[1])
                noise.append(np.broadcast_to(v / np.linalg.norm(v), pts.shape).copy())
            noise = tuple(noise)
        else:
            noise = tuple(np.zeros_like(pts) for pts in point_sets)
        return cls(kind, noise)

    def apply(self, points, weights, magnitude, i):
        if self.kind == "reweight":
            m = min(max(magnitude, 0.0), 1.0)
            return points, (1.0 - m) * weights + m / len(weights)
        return points + magnitude * self.noise[i], weights


@dataclass(frozen=True, eq=False)
class Instance:
    """Two marginal tuples re-expressed on common (union) factor spaces."""

    mus: tuple
    mus_tilde: tuple
    points: tuple
    weights: tuple
    magnitude: float = 0.0
    kind: str = "none"

    @property
    def N(self):
        return len(self.mus)

    @property
    def product(self) -> ProductSpace:
        return ProductSpace(tuple(m.space for m in self.mus))


def paired_marginals(points, weights, points_t, weights_t) -> tuple:
    mus, mus_t = [], []
    for x, w, y, wt in zip(points, weights, points_t, weights_t):
        X, Y = MetricSpace.euclidean(x), MetricSpace.euclidean(y)
        U, ma, mb = union_space(X, Y)
        mus.append(embed(make_discrete_measure(X, w), U, ma))
        mus_t.append(embed(make_discrete_measure(Y, wt), U, mb))
    return tuple(mus), tuple(mus_t)


def base_marginals(rng, N, sizes, dim):
    sizes = list(sizes)
    pts, ws = [], []
    for _ in range(N):
        n = int(rng.choice(sizes))
        pts.append(rng.uniform(-1.0, 1.0, size=(n, dim)))
        ws.append(random_weights(rng, n))
    return tuple(pts), tuple(ws)


def random_instance(rng, N=2, sizes=(2, 3, 4), dim=1, kind="jitter", magnitude=0.1) -> Instance:
    pts, ws = base_marginals(rng, N, sizes, dim)
    pert = Perturbation.draw(rng, kind, pts)
    return perturbed_instance(pts, ws, pert, magnitude)


def perturbed_instance(pts, ws, pert: Perturbation, magnitude) -> Instance:
    moved = [pert.apply(x, w, magnitude, i) for i, (x, w) in enumerate(zip(pts, ws))]
    mus, mus_t = paired_marginals(pts, ws, [m[0] for m in moved], [m[1] for m in moved])
    return Instance(mus, mus_t, tuple(pts), tuple(ws), float(magnitude), pert.kind)


def single_marginals(rng, N=2, sizes=(2, 3, 4), dim=1) -> tuple:
    pts, ws = base_marginals(rng, N, sizes, dim)
    return tuple(make_discrete_measure(MetricSpace.euclidean(x), w) for x, w in zip(pts, ws))


# ---------------------------------------------------------------------------
# costs defined on the whole ambient space
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LipschitzField:
    """x -> offset + min_k (v_k + K d_{X,p}(x, y_k)) on (R^d)^N.

    The function is K-Lipschitz w.r.t. d_{X,p} on the whole ambient space, so
    it can be evaluated consistently on any finite product of point sets.
    """

    anchors: tuple
    values: np.ndarray
    lip: float
    p: float
    offset: float = 0.0

    @classmethod
    def draw(cls, rng, N, dim, lip=1.0, p=1.0, n_anchors=6, scale=1.0, offset=0.0):
        anchors = tuple(rng.uniform(-1.0, 1.0, size=(n_anchors, dim)) for _ in range(N))
        return cls(anchors, rng.uniform(0.0, scale, size=n_anchors), float(lip), float(p), float(offset))

    def evaluate(self, product: ProductSpace) -> np.ndarray:
        shape = product.shape
        out = np.full(shape, np.inf)
        for k in range(len(self.values)):
            per = []
            for i, f in enumerate(product.factors):
                per.append(np.sqrt(np.sum((f.coords - self.anchors[i][k]) ** 2, axis=1)))
            if math.isinf(self.p):
                d = per[0]
                for v in per[1:]:
                    d = np.maximum.outer(d, v)
            else:
                d = per[0] ** self.p
                for v in per[1:]:
                    d = np.add.outer(d, v**self.p)
                d = d ** (1.0 / self.p)
            out = np.minimum(out, self.values[k] + self.lip * d)
        return out + self.offset


@dataclass(frozen=True)
class CostModel:
    """A recipe producing the same cost function on any product of point sets."""

    kind: str
    fields: tuple = ()
    p: float = 1.0

    @classmethod
    def draw(cls, rng, kind, N, dim, p, lip=1.0):
        if kind == "lipschitz":
            return cls(kind, (LipschitzField.draw(rng, N, dim, lip, p),), p)
        if kind == "product":
            f = LipschitzField.draw(rng, N, dim, lip, p, offset=0.5)
            g = LipschitzField.draw(rng, N, dim, lip, p, offset=0.5)
            return cls(kind, (f, g), p)
        if kind == "sqeuclidean":
            return cls(kind, (), 2.0)
        raise ConfigInvalid(f"unknown cost kind {kind!r}")

    def build(self, product: ProductSpace) -> CostSpec:
        if self.kind == "lipschitz":
            vals = self.fields[0].evaluate(product)
            return make_cost(product, vals, lip={self.p: self.fields[0].lip}, kind="lipschitz")
        if self.kind == "product":
            f, g = (fl.evaluate(product) for fl in self.fields)
            return make_cost(product, f * g, factors=(f, g), kind="product")
        return sqeuclidean_cost(product)


def random_bounded_cost(rng, product: ProductSpace, scale=1.0) -> CostSpec:
    return make_cost(product, rng.uniform(0.0, scale, size=product.shape))


def perturbed_cost(rng, c: CostSpec, magnitude) -> CostSpec:
    vals = np.clip(c.values + rng.uniform(-magnitude, magnitude, size=c.shape), 0.0, None)
    return make_cost(c.product, vals)


# ---------------------------------------------------------------------------
# couplings
# ---------------------------------------------------------------------------


def random_coupling(rng, mus, kind="sinkhorn") -> Coupling:
    """A random element of Pi(mus).

    ``"sinkhorn"``: entropic optimizer for a random cost (full support);
    ``"vertex"``: an exact transport vertex for a random cost between the
    first two marginals, times the remaining marginals (sparse);
    ``"product"``: the product of the marginals.
    """
    mus = list(mus)
    if kind == "product":
        return product_measure(mus)
    product = ProductSpace(tuple(m.space for m in mus))
    if kind == "sinkhorn":
        c = make_cost(product, rng.uniform(0.0, 4.0, size=product.shape))
        if len(mus) == 2:
            return sinkhorn_solve(mus, c, tol=1e-14, max_iters=20000, history=False).optimizer
        return multimarginal_sinkhorn_solve(mus, c, tol=1e-14, max_iters=20000).optimizer
    if kind == "vertex":
        a, b = mus[0], mus[1]
        sa, sb = a.support, b.support
        plan = solve_transport(a.weights[sa], b.weights[sb], rng.uniform(size=(len(sa), len(sb))))
        full = np.zeros((a.space.size, b.space.size))
        full[np.ix_(sa, sb)] = plan
        t = full
        for m in mus[2:]:
            t = np.multiply.outer(t, m.weights)
        return Coupling(product, _frozen(t))
    raise ConfigInvalid(f"unknown coupling kind {kind!r}")


# ---------------------------------------------------------------------------
# the two-point example with a sharp Lipschitz constant
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SharpnessInstance:
    eps: float
    mus: tuple
    mus_tilde: tuple
    cost: CostSpec
    alpha: float
    pi_star: np.ndarray
    pi_tilde_star: np.ndarray
    w1: float


def sharpness_alpha(eps) -> float:
    return math.exp(eps) / (1.0 + math.exp(eps))


def sharpness_w1(eps) -> float:
    a = sharpness_alpha(eps)
    return 4.0 * eps * (1.0 - a) + 2.0 * (2.0 * a - 1.0)


def sharpness_instance(eps) -> SharpnessInstance:
    """Marginals (d_-1 + d_1)/2 and (d_{-1+e} + d_{1-e})/2 on both axes.

    The cost is prescribed on eight points (0 on the 'agreeing' pairs, eps on
    the others) and extended to the 4 x 4 grid by the 1-Lipschitz McShane
    extension for d_{X,inf}; Lip_inf(c) = 1.
    """
    if not 0 < eps < 0.5:
        raise ConfigInvalid("eps must lie in (0, 1/2)")
    xs = np.array([-1.0, -1.0 + eps, 1.0 - eps, 1.0])
    space = MetricSpace.line(xs)
    mu = make_discrete_measure(space, [0.5, 0.0, 0.0, 0.5])
    mu_t = make_discrete_measure(space, [0.0, 0.5, 0.5, 0.0])
    product = ProductSpace((space, space))
    known = np.zeros((4, 4), bool)
    vals = np.zeros((4, 4))
    zero = [(0, 0), (3, 3), (1, 2), (2, 1)]
    eps_pairs = [(3, 0), (0, 3), (1, 1), (2, 2)]
    for i, j in zero:
        known[i, j] = True
    for i, j in eps_pairs:
        known[i, j] = True
        vals[i, j] = eps
    ext = mcshane_extension(product, vals, known, 1.0, math.inf)
    ext[known] = vals[known]
    cost = make_cost(product, ext, lip={math.inf: 1.0}, kind="sharpness", params={"eps": eps})
    a = sharpness_alpha(eps)
    pi = np.zeros((4, 4))
    pi[0, 0] = pi[3, 3] = a / 2
    pi[0, 3] = pi[3, 0] = (1 - a) / 2
    pit = np.zeros((4, 4))
    pit[1, 1] = pit[2, 2] = (1 - a) / 2
    pit[1, 2] = pit[2, 1] = a / 2
    return SharpnessInstance(eps, (mu, mu), (mu_t, mu_t), cost, a, pi, pit, sharpness_w1(eps))


__all__ = [
    "Instance",
    "CostModel",
    "LipschitzField",
    "Perturbation",
    "SharpnessInstance",
    "random_instance",
    "perturbed_instance",
    "single_marginals",
    "random_coupling",
    "random_bounded_cost",
    "perturbed_cost",
    "sharpness_instance",
    "sharpness_alpha",
    "sharpness_w1",
]
