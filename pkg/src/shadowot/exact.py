"""Exact (unregularized) transport: W_p, bottleneck W_inf, total variation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import IncompatibleSpaces, LengthMismatch, SolverFailure
from .measures import Coupling, DiscreteMeasure, ProductSpace, _frozen, align

FEASIBILITY_TOL = 1e-12


@dataclass(frozen=True)
class TransportPlanResult:
    value: float
    plan: Coupling
    p: float
    exact: bool = True


def solve_transport(a, b, cost):
    """Exact vertex solution of min <cost, P> over couplings of a and b."""
    plan, _, status = _kernels.transport_simplex(a, b, cost)
    if status != 0:
        raise SolverFailure("transport simplex hit its iteration cap")
    return plan


def bottleneck(a, b, D):
    """Smallest threshold t among the entries of D admitting a coupling of a, b
    supported on {D <= t}; returns ``(t, plan)``."""
    thresholds = np.unique(D)
    total = float(np.sum(a))
    # rounding can leave the two totals a few ulps apart
    b = b * (total / float(np.sum(b)))

    def feasible(t):
        flow, _ = _kernels.bipartite_maxflow(a, b, D <= t)
        return flow >= total - FEASIBILITY_TOL

    lo, hi = 0, len(thresholds) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if feasible(thresholds[mid]):
            hi = mid
        else:
            lo = mid + 1
    # the max-flow answer is confirmed by an exact LP on the indicator cost;
    # an optimum above rounding level means the flow tolerance let an
    # infeasible t through
    for k in range(lo, len(thresholds)):
        t = thresholds[k]
        far = D > t
        plan = solve_transport(a, b, far.astype(np.float64))
        if float(np.sum(plan[far])) <= FEASIBILITY_TOL:
            plan[far] = 0.0
            return float(t), plan
    raise SolverFailure("bottleneck search failed")  # pragma: no cover


def _embed_plan(plan, rows, cols, shape):
    full = np.zeros(shape)
    full[np.ix_(rows, cols)] = plan
    return full


def wasserstein(mu: DiscreteMeasure, nu: DiscreteMeasure, p, cross_dist=None) -> TransportPlanResult:
    """W_p(mu, nu) with an optimal plan, for p in [1, inf].

    ``mu`` and ``nu`` must live on the same space unless ``cross_dist`` (the
    |mu.space| x |nu.space| matrix of distances) is given.
    """
    if cross_dist is None:
        if not mu.space.same_as(nu.space):
            raise IncompatibleSpaces("measures live on different spaces; pass cross_dist or align them")
        dist = mu.space.dist
    else:
        dist = np.asarray(cross_dist, dtype=np.float64)
        if dist.shape != (mu.space.size, nu.space.size):
            raise IncompatibleSpaces("cross_dist has the wrong shape")
    sa, sb = mu.support, nu.support
    a, b = mu.weights[sa], nu.weights[sb]
    D = dist[np.ix_(sa, sb)]
    if math.isinf(p):
        value, plan = bottleneck(a, b, D)
    else:
        plan = solve_transport(a, b, D**p)
        value = float(np.sum(plan * D**p)) ** (1.0 / p)
    full = _embed_plan(plan, sa, sb, (mu.space.size, nu.space.size))
    product = ProductSpace((mu.space, nu.space))
    return TransportPlanResult(value, Coupling(product, _frozen(full)), float(p))


def total_variation(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    if not mu.space.same_as(nu.space):
        mu, nu = align(mu, nu)
    return 0.5 * float(np.sum(np.abs(mu.weights - nu.weights)))


def marginal_tuple_distance(mus, nus, p, return_components=False):
    """l^p aggregation of the per-coordinate W_p distances (max for p = inf)."""
    mus, nus = list(mus), list(nus)
    if len(mus) != len(nus) or not mus:
        raise LengthMismatch(f"tuples of length {len(mus)} and {len(nus)}")
    comps = np.array([wasserstein(m, n, p).value for m, n in zip(mus, nus)])
    if math.isinf(p):
        total = float(comps.max())
    else:
        total = float(np.sum(comps**p) ** (1.0 / p))
    return (total, comps) if return_components else total


def coupling_transport(pi: Coupling, rho: Coupling, p):
    """Optimal transport between two couplings seen as measures on (X, d_{X,p}).

    Returns ``(value, plan, atoms_pi, atoms_rho)`` where ``plan`` is indexed by
    the positive-mass atoms of each coupling.
    """
    if not pi.product.same_as(rho.product):
        raise IncompatibleSpaces("couplings live on different product spaces")
    idx_a, a = pi.support_atoms()
    idx_b, b = rho.support_atoms()
    if math.isinf(p):
        D = pi.product.distances(idx_a, idx_b, p)
        value, plan = bottleneck(a, b, D)
    else:
        C = pi.product.distances(idx_a, idx_b, p, root=False)
        plan = solve_transport(a, b, C)
        value = float(np.sum(plan * C)) ** (1.0 / p)
    return value, plan, idx_a, idx_b


def coupling_distance(pi: Coupling, rho: Coupling, p) -> float:
    return coupling_transport(pi, rho, p)[0]
