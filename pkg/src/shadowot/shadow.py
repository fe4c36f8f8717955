"""Shadow couplings: gluing a coupling with W_p-optimal plans between marginals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .certificates import Certificate
from .divergences import MarkovKernel, divergence, f_divergence
from .errors import IncompatibleSpaces, LengthMismatch
from .exact import coupling_distance, marginal_tuple_distance, wasserstein
from .measures import Coupling, DiscreteMeasure, ProductSpace, _frozen, embed, product_measure, union_space

EQ_TOL = 1e-7
DIV_TOL = 1e-9


def contract(tensor, matrices, transpose=False):
    """Apply ``matrices[i]`` along axis ``i`` of ``tensor``.

    With ``transpose=False`` this computes sum_x t(x) prod_i M_i(x_i, y_i)
    (pushing a measure forward); with ``transpose=True`` it computes
    sum_y prod_i M_i(x_i, y_i) t(y) (applying kernels to a function).
    """
    out = np.asarray(tensor, dtype=np.float64)
    for i, M in enumerate(matrices):
        if transpose:
            out = np.moveaxis(np.tensordot(M, out, axes=([1], [i])), 0, i)
        else:
            out = np.moveaxis(np.tensordot(out, M, axes=([i], [0])), -1, i)
    return out


def embed_coupling(pi: Coupling, product: ProductSpace, index_maps) -> Coupling:
    """Re-express ``pi`` on a larger product via per-factor index maps."""
    t = pi.tensor
    for i, m in enumerate(index_maps):
        E = np.zeros((pi.product.shape[i], product.shape[i]))
        E[np.arange(len(m)), m] = 1.0
        t = np.moveaxis(np.tensordot(t, E, axes=([i], [0])), -1, i)
    return Coupling(product, _frozen(t))


def common_ground(pi: Coupling, targets):
    """Put ``pi`` and the target marginals on a common product of factor spaces.

    Returns ``(pi, targets)`` re-expressed on the union spaces; when every
    target already lives on the matching factor the inputs come back as is.
    """
    targets = list(targets)
    if len(targets) != pi.product.N:
        raise LengthMismatch(f"{len(targets)} targets for a coupling with {pi.product.N} marginals")
    if all(t.space.same_as(f) for t, f in zip(targets, pi.product.factors)):
        return pi, targets
    spaces, maps_pi, new_targets = [], [], []
    for f, t in zip(pi.product.factors, targets):
        try:
            space, ma, mb = union_space(f, t.space)
        except IncompatibleSpaces as exc:
            raise IncompatibleSpaces(f"target cannot be compared with the coupling's factor: {exc}") from None
        spaces.append(space)
        maps_pi.append(ma)
        new_targets.append(embed(t, space, mb))
    product = ProductSpace(tuple(spaces))
    return embed_coupling(pi, product, maps_pi), new_targets


def kernel_from_plan(plan: np.ndarray, source: DiscreteMeasure, target: DiscreteMeasure) -> MarkovKernel:
    """Disintegrate an optimal plan kappa = mu (x) K.

    Rows at mu-null atoms are set to the target measure, keeping K total.
    """
    a = source.weights
    K = np.empty_like(plan)
    pos = a > 0
    K[pos] = plan[pos] / plan[pos].sum(axis=1, keepdims=True)
    K[~pos] = target.weights
    return MarkovKernel(source.space, target.space, _frozen(K))


@dataclass(frozen=True, eq=False)
class ShadowResult:
    """The shadow of ``source`` onto the target marginals.

    ``source`` is the input coupling, re-expressed on the union factor spaces
    when the targets needed extra atoms.  ``plans`` are the optimal couplings
    kappa_i and ``kernels`` their disintegrations K_i.
    """

    shadow: Coupling
    source: Coupling
    kernels: tuple
    plans: tuple
    distances: tuple
    p: float

    @property
    def delta(self) -> float:
        d = np.array(self.distances)
        if math.isinf(self.p):
            return float(d.max())
        return float(np.sum(d**self.p) ** (1.0 / self.p))


def build_shadow(pi: Coupling, targets, p) -> ShadowResult:
    """Shadow of ``pi`` onto ``targets`` for the order ``p``."""
    pi, targets = common_ground(pi, targets)
    kernels, plans, dists = [], [], []
    for i, target in enumerate(targets):
        mu = pi.marginal(i)
        res = wasserstein(mu, target, p)
        kernels.append(kernel_from_plan(res.plan.tensor, mu, target))
        plans.append(res.plan)
        dists.append(res.value)
    t = contract(pi.tensor, [K.matrix for K in kernels])
    shadow = Coupling(pi.product, _frozen(t))
    return ShadowResult(shadow, pi, tuple(kernels), tuple(plans), tuple(dists), float(p))


@dataclass(frozen=True)
class ShadowCertificate:
    """Both defining relations of a shadow, evaluated independently."""

    w_shadow: float
    delta: float
    div_shadow: float
    div_source: float
    distance_holds: bool
    divergence_holds: bool

    @property
    def holds(self) -> bool:
        return self.distance_holds and self.divergence_holds

    def to_dict(self):
        return Certificate.eq("shadow_distance", self.w_shadow, self.delta, EQ_TOL).to_dict() | {
            "div_shadow": self.div_shadow,
            "div_source": self.div_source,
            "divergence_holds": self.divergence_holds,
        }


def verify_shadow(pi: Coupling, result: ShadowResult, f="kl", p=None, tol_eq=EQ_TOL, tol_div=DIV_TOL) -> ShadowCertificate:
    """Check W_p(pi, shadow) = Delta and D_f(shadow, (x) targets) <= D_f(pi, (x) marginals).

    Every quantity is recomputed from scratch with the exact solvers.
    """
    spec = divergence(f)
    p = result.p if p is None else float(p)
    src = result.source
    targets = result.shadow.marginals()
    w = coupling_distance(src, result.shadow, p)
    delta = marginal_tuple_distance(src.marginals(), targets, p)
    d_shadow = f_divergence(result.shadow, product_measure(targets), spec)
    d_src = f_divergence(src, product_measure(src.marginals()), spec)
    eq_ok = abs(w - delta) <= tol_eq
    div_ok = d_shadow <= d_src + tol_div if math.isfinite(d_src) else True
    return ShadowCertificate(w, delta, d_shadow, d_src, bool(eq_ok), bool(div_ok))


def smoothed_cost_deviation(c, pi: Coupling, kernels, p) -> float:
    """||c - Kc||_{L^p(pi)} with (Kc)(x) = sum_y K(x, y) c(y).

    ``c`` is a CostSpec (or a raw tensor) over the product carrying ``pi``.
    """
    values = np.asarray(getattr(c, "values", c), dtype=np.float64)
    mats = [k.matrix if isinstance(k, MarkovKernel) else np.asarray(k) for k in kernels]
    Kc = contract(values, mats, transpose=True)
    dev = np.abs(values - Kc)
    if math.isinf(p):
        mask = pi.tensor > 0
        return float(dev[mask].max(initial=0.0))
    return float(np.sum(pi.tensor * dev**p) ** (1.0 / p))
