"""Regularized transport: costs, the Gibbs reference, Sinkhorn and a generic-f solver.

All problems are solved for the effective cost ``c / epsilon``; reported
values are rescaled so that they equal ``int c dpi + epsilon * D_f(pi, P)``.
Atoms of zero marginal mass are dropped before solving (their potentials are
``-inf``) and the optimizer is embedded back into the full product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .divergences import KL, DivergenceSpec, divergence, f_divergence_arrays
from .errors import (
    MarginalMismatch,
    MissingFactors,
    NotConverged,
    ShadowOTError,
    SpaceMismatch,
    ZeroMarginal,
)
from .measures import Coupling, ProductSpace, _frozen

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITERS = 100_000
HISTORY_DENSE = 64
LIP_TOL = 1e-9


# ---------------------------------------------------------------------------
# costs
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CostSpec:
    """A nonnegative cost tensor over a product space.

    ``lip`` maps orders p to Lipschitz constants w.r.t. d_{X,p} that were
    declared by the caller and verified against the exact value.  ``factors``
    is an optional tuple of tensors whose product is ``values`` (c = f * g,
    or more factors).
    """

    product: ProductSpace
    values: np.ndarray
    lip: dict = field(default_factory=dict)
    factors: tuple | None = None
    kind: str = "tensor"
    params: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.values.shape

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def lipschitz(self, p) -> float:
        """Exact Lip_p(c) over all pairs of atoms of the product."""
        return self.product.lipschitz(self.values, p)

    def lip_p(self, p) -> float:
        """Declared constant if any, else the exact one."""
        return float(self.lip.get(float(p), self.lipschitz(p)))

    def growth(self, p, anchor=None):
        """Smallest C with |c(x)| <= C (1 + d_{X,p}(x, anchor)^p) on the product.

        ``anchor`` is an atom index tuple; by default every atom is tried and
        the best ``(C, anchor)`` is returned.
        """
        atoms = self.product.atoms()
        cands = atoms if anchor is None else np.atleast_2d(np.asarray(anchor, dtype=np.int64))
        vals = np.abs(self.values).reshape(-1)
        if math.isinf(p):
            return self.sup_norm, tuple(cands[0])
        D = self.product.distances(cands, atoms, p, root=False)
        C = np.max(vals[None, :] / (1.0 + D), axis=1)
        k = int(np.argmin(C))
        return float(C[k]), tuple(int(v) for v in cands[k])

    def scaled(self, s) -> CostSpec:
        lip = {k: v * abs(s) for k, v in self.lip.items()}
        return replace(self, values=_frozen(self.values * s), lip=lip, factors=None)

    def shifted(self, k) -> CostSpec:
        return replace(self, values=_frozen(self.values + k), factors=None)


def make_cost(product: ProductSpace, values, lip=None, factors=None, kind="tensor", params=None, verify=True) -> CostSpec:
    """Validate a cost tensor; declared Lipschitz constants are checked exactly."""
    v = np.asarray(values, dtype=np.float64)
    if v.shape != product.shape:
        raise SpaceMismatch(f"cost shape {v.shape} does not match product {product.shape}")
    if not np.all(np.isfinite(v)):
        raise ShadowOTError("cost values must be finite")
    if np.any(v < -1e-12):
        raise ShadowOTError("cost values must be nonnegative")
    v = np.clip(v, 0.0, None)
    lip = {float(k): float(L) for k, L in (lip or {}).items()}
    if verify:
        for p, L in lip.items():
            exact = product.lipschitz(v, p)
            if exact > L * (1 + LIP_TOL) + LIP_TOL:
                raise ShadowOTError(f"declared Lip_{p} = {L} but the cost has {exact}")
    if factors is not None:
        factors = tuple(_frozen(np.asarray(f, dtype=np.float64)) for f in factors)
        prod = np.ones(product.shape)
        for f in factors:
            if f.shape != product.shape:
                raise SpaceMismatch("cost factors must live on the cost's product")
            prod = prod * f
        if not np.allclose(prod, v, rtol=1e-12, atol=1e-12):
            raise ShadowOTError("the product of the factors differs from the cost")
    return CostSpec(product, _frozen(v), lip, factors, kind, dict(params or {}))


def _pair_norms(product: ProductSpace):
    """|x_1 - x_2| on a two-factor euclidean product."""
    if product.N != 2 or any(f.kind != "euclidean" for f in product.factors):
        raise ShadowOTError("this cost needs two euclidean factors")
    x, y = (f.coords for f in product.factors)
    if x.shape[1] != y.shape[1]:
        raise ShadowOTError("factors of different dimension")
    return np.sqrt(np.sum((x[:, None, :] - y[None, :, :]) ** 2, axis=-1))


def sqeuclidean_cost(product: ProductSpace) -> CostSpec:
    """c(x_1, x_2) = |x_1 - x_2|^2, stored with factors f = g = |x_1 - x_2|."""
    r = _pair_norms(product)
    return make_cost(product, r**2, factors=(r, r), kind="sqeuclidean")


def power_cost(product: ProductSpace, p) -> CostSpec:
    """c(x_1, x_2) = |x_2 - x_1|^p."""
    r = _pair_norms(product)
    return make_cost(product, r**p, kind="power", params={"p": float(p)})


def product_cost(product: ProductSpace, *factors) -> CostSpec:
    if len(factors) < 2:
        raise MissingFactors("a product cost needs at least two factors")
    vals = np.ones(product.shape)
    for f in factors:
        vals = vals * np.asarray(f, dtype=np.float64)
    return make_cost(product, vals, factors=factors, kind="product")


def mcshane_extension(product: ProductSpace, values, known, lip, p) -> np.ndarray:
    """min over known atoms y of v(y) + lip * d_{X,p}(x, y), for every atom x.

    ``known`` is a boolean tensor marking the atoms where ``values`` is given.
    The result is lip-Lipschitz and agrees with ``values`` on ``known`` when
    those values are themselves lip-Lipschitz.
    """
    atoms = product.atoms()
    k = np.asarray(known, dtype=bool).reshape(-1)
    vals = np.asarray(values, dtype=np.float64).reshape(-1)
    D = product.distances(atoms, atoms[k], p)
    return np.min(vals[k][None, :] + lip * D, axis=1).reshape(product.shape)


def random_lipschitz_cost(product: ProductSpace, rng, lip=1.0, p=1.0, scale=1.0) -> CostSpec:
    """Random values in [0, scale] regularized into a lip-Lipschitz cost."""
    raw = rng.uniform(0.0, scale, size=product.shape)
    vals = mcshane_extension(product, raw, np.ones(product.shape, bool), lip, p)
    return make_cost(product, vals, lip={p: lip}, kind="lipschitz")


# ---------------------------------------------------------------------------
# shared problem setup
# ---------------------------------------------------------------------------


def _check_marginals(mus, c: CostSpec):
    mus = list(mus)
    if len(mus) != c.product.N:
        raise SpaceMismatch(f"{len(mus)} marginals for a cost on {c.product.N} factors")
    for m, f in zip(mus, c.product.factors):
        if not m.space.same_as(f):
            raise SpaceMismatch("marginal space differs from the cost's factor space")
    return mus


@dataclass(frozen=True, eq=False)
class _Restricted:
    """The problem restricted to atoms of positive marginal mass."""

    product: ProductSpace
    supports: tuple
    weights: tuple
    ref_logs: tuple
    cost: np.ndarray
    neg_c: np.ndarray
    log_alpha: float

    def log_ref(self):
        out = self.ref_logs[0]
        for r in self.ref_logs[1:]:
            out = np.add.outer(out, r)
        return out

    def embed(self, tensor):
        full = np.zeros(self.product.shape)
        full[np.ix_(*self.supports)] = tensor
        return full

    def embed_potentials(self, phis):
        out = []
        for supp, phi, f in zip(self.supports, phis, self.product.factors):
            full = np.full(f.size, -np.inf)
            full[supp] = phi
            out.append(full)
        return tuple(out)


def _restrict(mus, c: CostSpec, epsilon, reference=None) -> _Restricted:
    if not epsilon > 0:
        raise ShadowOTError("epsilon must be positive")
    supports = tuple(m.support for m in mus)
    weights = tuple(m.weights[s] for m, s in zip(mus, supports))
    cost = c.values[np.ix_(*supports)] / epsilon
    if reference is None:
        ref_logs = tuple(np.log(w) for w in weights)
    else:
        ref_logs = []
        for r, s in zip(reference, supports):
            r = np.asarray(getattr(r, "weights", r), dtype=np.float64)[s]
            if np.any(r <= 0):
                raise ShadowOTError("the reference must charge every atom of the marginals")
            ref_logs.append(np.log(r / r.sum()))
        ref_logs = tuple(ref_logs)
    r = _Restricted(c.product, supports, weights, ref_logs, cost, -cost, 0.0)
    log_alpha = float(logsumexp(r.log_ref() - cost))
    return replace(r, log_alpha=log_alpha)


def gibbs_reference(c: CostSpec, mus, epsilon=1.0) -> tuple:
    """``(P_c, alpha)``: P_c proportional to exp(-c/epsilon) times the product of the marginals."""
    mus = _check_marginals(mus, c)
    r = _restrict(mus, c, epsilon)
    log_pc = r.log_ref() - r.cost - r.log_alpha
    return Coupling(c.product, _frozen(r.embed(np.exp(log_pc)))), math.exp(r.log_alpha)


def _kl_logs(log_p, log_q):
    """KL between two positive tensors given by their logs."""
    p = np.exp(log_p)
    return float(np.sum(p * (log_p - log_q)))


def _tv_errors(pi, weights):
    N = pi.ndim
    errs = []
    for i in range(N):
        m = pi.sum(axis=tuple(k for k in range(N) if k != i))
        errs.append(0.5 * float(np.sum(np.abs(m - weights[i]))))
    return errs


def _marginal_kls(pi, weights):
    N = pi.ndim
    out = []
    for i in range(N):
        m = pi.sum(axis=tuple(k for k in range(N) if k != i))
        out.append(f_divergence_arrays(m, weights[i], KL))
    return out


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HistoryEntry:
    """Diagnostics of the iterate pi^n (effective cost c / epsilon)."""

    n: int
    F: float
    kl_gibbs: float
    marginal_kl: tuple
    marginal_tv: tuple


@dataclass(frozen=True, eq=False)
class SinkhornState:
    """Iterate pi^n together with its log-domain potentials.

    log pi^n = log P + (-c/epsilon) + phi_1 (+) phi_2, where P is the reference
    product; zero-mass atoms carry potential ``-inf``.
    """

    iterate: Coupling
    potentials: tuple
    n: int
    marginal_errors: tuple
    marginal_kl: tuple
    history: tuple = ()
    epsilon: float = 1.0


@dataclass(frozen=True, eq=False)
class SolveReport:
    """Outcome of a regularized solve.

    ``value`` is int c dpi* + epsilon * D_f(pi*, P).  For KL it is computed as
    epsilon * (D_KL(pi*, P_c) - log alpha) and ``value_direct`` holds the
    direct evaluation as a cross-check.  ``kl_star`` is D_KL(pi*, P_c) for the
    effective cost (NaN for other divergences).
    """

    optimizer: Coupling
    value: float
    iterations: int
    converged: bool
    gibbs_mass: float
    divergence: str = "kl"
    epsilon: float = 1.0
    value_direct: float = math.nan
    kl_star: float = math.nan
    marginal_error: float = math.nan
    potentials: tuple = ()
    state: SinkhornState | None = None

    def to_dict(self):
        return {
            "value": self.value,
            "value_direct": self.value_direct,
            "iterations": self.iterations,
            "converged": self.converged,
            "gibbs_mass": self.gibbs_mass,
            "divergence": self.divergence,
            "epsilon": self.epsilon,
            "kl_star": self.kl_star,
            "marginal_error": self.marginal_error,
            "optimizer": self.optimizer.tensor.tolist(),
        }


def _finish(report: SolveReport, strict: bool) -> SolveReport:
    if strict and not report.converged:
        raise NotConverged(f"no convergence after {report.iterations} iterations (error {report.marginal_error:.3g})", report)
    return report


# ---------------------------------------------------------------------------
# two-marginal Sinkhorn
# ---------------------------------------------------------------------------


def _sinkhorn_logpi(r: _Restricted, phi1, phi2):
    return r.log_ref() + r.neg_c + phi1[:, None] + phi2[None, :]


def _sinkhorn_neg_c(r: _Restricted):
    # the kernel multiplies by the marginals; fold a different reference into the cost
    extra = [ref - np.log(w) for ref, w in zip(r.ref_logs, r.weights)]
    return r.neg_c + extra[0][:, None] + extra[1][None, :]


def _history_entry(r: _Restricted, n, phi1, phi2) -> HistoryEntry:
    log_pi = _sinkhorn_logpi(r, phi1, phi2)
    pi = np.exp(log_pi)
    log_ref = r.log_ref()
    F = float(np.sum(pi * r.cost)) + _kl_logs(log_pi, log_ref)
    kl_g = _kl_logs(log_pi, log_ref + r.neg_c - r.log_alpha)
    return HistoryEntry(n, F, kl_g, tuple(_marginal_kls(pi, r.weights)), tuple(_tv_errors(pi, r.weights)))


def _state(r: _Restricted, phi1, phi2, n, history, epsilon) -> SinkhornState:
    pi = np.exp(_sinkhorn_logpi(r, phi1, phi2))
    tensor = r.embed(pi)
    return SinkhornState(
        Coupling(r.product, _frozen(tensor)),
        r.embed_potentials((phi1, phi2)),
        int(n),
        tuple(_tv_errors(pi, r.weights)),
        tuple(_marginal_kls(pi, r.weights)),
        tuple(history),
        float(epsilon),
    )


def sinkhorn_init(mus, c: CostSpec, epsilon=1.0, reference=None) -> SinkhornState:
    """The state pi^0 = P_c."""
    mus = _check_marginals(mus, c)
    r = _restrict(mus, c, epsilon, reference)
    phi1 = np.full(len(r.weights[0]), -r.log_alpha)
    phi2 = np.zeros(len(r.weights[1]))
    return _state(r, phi1, phi2, 0, [_history_entry(r, 0, phi1, phi2)], epsilon)


def sinkhorn_step(state: SinkhornState, mus, c: CostSpec, reference=None) -> SinkhornState:
    """One marginal fit: odd steps fit marginal 1, even steps marginal 2."""
    mus = _check_marginals(mus, c)
    if c.product.N != 2:
        raise ShadowOTError("sinkhorn_step needs two marginals")
    r = _restrict(mus, c, state.epsilon, reference)
    phi1 = state.potentials[0][r.supports[0]]
    phi2 = state.potentials[1][r.supports[1]]
    phi1, phi2, n, _, _ = _kernels.sinkhorn_log(_sinkhorn_neg_c(r), r.weights[0], r.weights[1], phi1, phi2, state.n, -1.0, state.n + 1)
    if not (np.all(np.isfinite(phi1)) and np.all(np.isfinite(phi2))):
        raise ZeroMarginal("an iterate marginal vanished on a charged atom")
    hist = state.history + (_history_entry(r, n, phi1, phi2),)
    return _state(r, phi1, phi2, n, hist, state.epsilon)


def sinkhorn_solve(
    mus,
    c: CostSpec,
    tol=DEFAULT_TOL,
    max_iters=DEFAULT_MAX_ITERS,
    epsilon=1.0,
    history=True,
    history_dense=HISTORY_DENSE,
    min_iters=0,
    reference=None,
    strict=False,
) -> SolveReport:
    """Entropic transport between two marginals by log-domain Sinkhorn.

    Iterates from P_c until both marginal TV errors are below ``tol`` (and at
    least ``min_iters`` steps were made) or ``max_iters`` is reached.  With
    ``history`` on, diagnostics are kept for every n <= ``history_dense`` and
    for powers of two beyond.
    """
    mus = _check_marginals(mus, c)
    if c.product.N != 2:
        raise ShadowOTError("sinkhorn_solve needs two marginals; use multimarginal_sinkhorn_solve")
    if not tol > 0:
        raise ShadowOTError("tol must be positive")
    r = _restrict(mus, c, epsilon, reference)
    neg_c = _sinkhorn_neg_c(r)
    a, b = r.weights
    phi1 = np.full(len(a), -r.log_alpha)
    phi2 = np.zeros(len(b))
    n = 0
    hist = [_history_entry(r, 0, phi1, phi2)] if history else []
    err = max(hist[0].marginal_tv) if history else math.inf

    def run(phi1, phi2, n, stop, tol_k):
        p1, p2, n2, e1, e2 = _kernels.sinkhorn_log(neg_c, a, b, phi1, phi2, n, tol_k, stop)
        return p1, p2, n2, max(e1, e2)

    if not history:
        if min_iters > 0:
            phi1, phi2, n, err = run(phi1, phi2, n, min(min_iters, max_iters), -1.0)
        phi1, phi2, n, err = run(phi1, phi2, n, max_iters, tol)
    else:
        while n < max_iters and (err >= tol or n < min_iters):
            if n < history_dense:
                stop, tol_k = n + 1, -1.0
            else:
                # run to the next power of two, stopping early on convergence
                stop, tol_k = 1 << int(n).bit_length(), tol
                if n < min_iters:
                    stop, tol_k = min(stop, min_iters), -1.0
            phi1, phi2, n, err = run(phi1, phi2, n, min(stop, max_iters), tol_k)
            hist.append(_history_entry(r, n, phi1, phi2))
    if not (np.all(np.isfinite(phi1)) and np.all(np.isfinite(phi2))):
        raise ZeroMarginal("an iterate marginal vanished on a charged atom")

    state = _state(r, phi1, phi2, n, hist, epsilon)
    log_pi = _sinkhorn_logpi(r, phi1, phi2)
    log_ref = r.log_ref()
    kl_star = _kl_logs(log_pi, log_ref + r.neg_c - r.log_alpha)
    pi = np.exp(log_pi)
    value = epsilon * (kl_star - r.log_alpha)
    direct = float(np.sum(pi * r.cost)) * epsilon + epsilon * _kl_logs(log_pi, log_ref)
    err = max(state.marginal_errors)
    report = SolveReport(
        optimizer=state.iterate,
        value=float(value),
        iterations=int(n),
        converged=bool(err < tol),
        gibbs_mass=math.exp(r.log_alpha),
        divergence="kl",
        epsilon=float(epsilon),
        value_direct=float(direct),
        kl_star=float(kl_star),
        marginal_error=float(err),
        potentials=state.potentials,
        state=state,
    )
    return _finish(report, strict)


# ---------------------------------------------------------------------------
# multi-marginal Sinkhorn
# ---------------------------------------------------------------------------


def _outer_sum(vectors):
    out = vectors[0]
    for v in vectors[1:]:
        out = np.add.outer(out, v)
    return out


def multimarginal_sinkhorn_solve(
    mus, c: CostSpec, tol=DEFAULT_TOL, max_iters=DEFAULT_MAX_ITERS, epsilon=1.0, reference=None, strict=False
) -> SolveReport:
    """Entropic transport with N >= 2 marginals by cyclic exact block updates.

    Step n fits marginal ((n - 1) mod N) + 1; the update is
    phi_i = -log sum_{x_j, j != i} exp(-c/epsilon + sum_{j != i} (log P_j + phi_j)).
    """
    mus = _check_marginals(mus, c)
    if c.product.N < 2:
        raise ShadowOTError("need at least two marginals")
    if not tol > 0:
        raise ShadowOTError("tol must be positive")
    r = _restrict(mus, c, epsilon, reference)
    N = c.product.N
    logs = r.ref_logs
    phis = [np.zeros(len(w)) for w in r.weights]
    phis[0] = phis[0] - r.log_alpha
    log_w = [np.log(w) for w in r.weights]

    def log_pi():
        return r.neg_c + _outer_sum([l + p for l, p in zip(logs, phis)])

    lp = log_pi()
    err = max(_tv_errors(np.exp(lp), r.weights))
    n = 0
    while err >= tol and n < max_iters:
        i = n % N
        n += 1
        others = tuple(k for k in range(N) if k != i)
        lp_wo = lp - np.expand_dims(phis[i] + logs[i], others)
        # fit marginal i exactly: exp(log P_i + phi_i) * sum_others = mu_i
        phis[i] = log_w[i] - logs[i] - logsumexp(lp_wo, axis=others)
        if not np.all(np.isfinite(phis[i])):
            raise ZeroMarginal("an iterate marginal vanished on a charged atom")
        lp = log_pi()
        err = max(_tv_errors(np.exp(lp), r.weights))

    log_ref = _outer_sum(list(logs))
    kl_star = _kl_logs(lp, log_ref + r.neg_c - r.log_alpha)
    pi = np.exp(lp)
    direct = epsilon * (float(np.sum(pi * r.cost)) + _kl_logs(lp, log_ref))
    report = SolveReport(
        optimizer=Coupling(r.product, _frozen(r.embed(pi))),
        value=float(epsilon * (kl_star - r.log_alpha)),
        iterations=n,
        converged=bool(err < tol),
        gibbs_mass=math.exp(r.log_alpha),
        divergence="kl",
        epsilon=float(epsilon),
        value_direct=float(direct),
        kl_star=float(kl_star),
        marginal_error=float(err),
        potentials=r.embed_potentials(phis),
    )
    return _finish(report, strict)


# ---------------------------------------------------------------------------
# generic f
# ---------------------------------------------------------------------------


def _solve_blocks(s, w, spec: DivergenceSpec, y1, iters=200):
    """Per row a of ``s``, the t with sum_r w_r x*(t + s_ar) = 1 (x* nondecreasing)."""
    lo = y1 - s.max(axis=1)
    hi = y1 - s.min(axis=1)
    t = 0.5 * (lo + hi)
    for _ in range(iters):
        y = t[:, None] + s
        val = spec.density_from_dual(y) @ w - 1.0
        lo = np.where(val < 0, t, lo)
        hi = np.where(val > 0, t, hi)
        if np.all(np.abs(val) <= 1e-15) or np.all(hi - lo <= 4e-16 * (1.0 + np.abs(t))):
            break
        der = spec.density_deriv(y) @ w
        with np.errstate(divide="ignore", invalid="ignore"):
            tn = t - val / der
        ok = (der > 0) & (tn > lo) & (tn < hi)
        t = np.where(ok, tn, 0.5 * (lo + hi))
    return t


def f_regularized_solve(
    mus, c: CostSpec, f="kl", tol=DEFAULT_TOL, max_iters=DEFAULT_MAX_ITERS, epsilon=1.0, strict=False
) -> SolveReport:
    """min over couplings of int c dpi + epsilon * D_f(pi, (x) mu_i).

    KL goes to Sinkhorn.  Other generators use exact block-coordinate ascent on
    the dual: the optimizer has density x*(sum_i phi_i - c/epsilon) with
    respect to the product of the marginals, where x* inverts f', and each
    block update fits one marginal exactly by a monotone 1-D root search per
    atom.
    """
    spec = divergence(f)
    mus = _check_marginals(mus, c)
    if spec is KL or spec.name == "kl":
        if c.product.N == 2:
            return sinkhorn_solve(mus, c, tol, max_iters, epsilon, history=False, strict=strict)
        return multimarginal_sinkhorn_solve(mus, c, tol, max_iters, epsilon, strict=strict)
    if not tol > 0:
        raise ShadowOTError("tol must be positive")
    r = _restrict(mus, c, epsilon)
    N = c.product.N
    P = np.exp(r.log_ref())
    phis = [np.zeros(len(w)) for w in r.weights]
    y1 = float(spec.derivative(np.array(1.0)))

    def tensor():
        return P * spec.density_from_dual(_outer_sum(phis) - r.cost)

    pi = tensor()
    err = max(_tv_errors(pi, r.weights))
    n = 0
    while err >= tol and n < max_iters:
        i = n % N
        n += 1
        others = [phis[k] if k != i else np.zeros_like(phis[k]) for k in range(N)]
        s = np.moveaxis(_outer_sum(others) - r.cost, i, 0).reshape(len(phis[i]), -1)
        w = np.moveaxis(np.exp(_outer_sum([r.ref_logs[k] if k != i else np.zeros_like(phis[k]) for k in range(N)])), i, 0)
        w = w.reshape(len(phis[i]), -1)[0]
        phis[i] = _solve_blocks(s, w, spec, y1)
        pi = tensor()
        err = max(_tv_errors(pi, r.weights))

    div = f_divergence_arrays(pi, P, spec)
    value = epsilon * (float(np.sum(pi * r.cost)) + div)
    report = SolveReport(
        optimizer=Coupling(r.product, _frozen(r.embed(pi))),
        value=float(value),
        iterations=n,
        converged=bool(err < tol),
        gibbs_mass=math.exp(r.log_alpha),
        divergence=spec.name,
        epsilon=float(epsilon),
        value_direct=float(value),
        marginal_error=float(err),
        potentials=r.embed_potentials(phis),
    )
    return _finish(report, strict)


def regularized_solve(mus, c: CostSpec, f="kl", **kw) -> SolveReport:
    """Dispatch to the right solver for the divergence and the number of marginals."""
    return f_regularized_solve(mus, c, f, **kw)


# ---------------------------------------------------------------------------
# functionals and certificates
# ---------------------------------------------------------------------------


def _reference_tensor(mus):
    t = mus[0].weights
    for m in mus[1:]:
        t = np.multiply.outer(t, m.weights)
    return t


def regularized_functional(pi: Coupling, mus, c: CostSpec, f="kl", epsilon=1.0) -> float:
    """int c dpi + epsilon * D_f(pi, (x) mu_i); +inf when pi is not absolutely continuous."""
    mus = _check_marginals(mus, c)
    if not pi.product.same_as(c.product):
        raise SpaceMismatch("coupling and cost live on different products")
    div = f_divergence_arrays(pi.tensor, _reference_tensor(mus), divergence(f))
    if math.isinf(div):
        return math.inf
    return float(np.sum(pi.tensor * c.values)) + epsilon * div


def entropic_functional(pi: Coupling, mus, c: CostSpec, epsilon=1.0) -> float:
    """F(pi) = int c dpi + epsilon * D_KL(pi, (x) mu_i)."""
    return regularized_functional(pi, mus, c, KL, epsilon)


@dataclass(frozen=True)
class PythagoreanCertificate:
    lhs: float
    rhs: float
    holds: bool
    tol: float = 1e-7

    def to_dict(self):
        return {"name": "pythagorean", "lhs": self.lhs, "rhs": self.rhs, "holds": self.holds, "tol": self.tol}


def pythagorean_certificate(pi: Coupling, report: SolveReport, mus, c: CostSpec, tol=1e-7, marginal_tol=1e-9) -> PythagoreanCertificate:
    """D_KL(pi, pi*) <= (F(pi) - F(pi*)) / epsilon for pi with the solve's marginals."""
    mus = _check_marginals(mus, c)
    for i, m in enumerate(mus):
        got = pi.marginal(i).weights
        if np.max(np.abs(got - m.weights)) > marginal_tol:
            raise MarginalMismatch(f"marginal {i} of the coupling differs from the solve's marginal")
    eps = report.epsilon
    lhs = f_divergence_arrays(pi.tensor, report.optimizer.tensor, KL)
    rhs = (entropic_functional(pi, mus, c, eps) - entropic_functional(report.optimizer, mus, c, eps)) / eps
    holds = True if math.isinf(rhs) else bool(lhs <= rhs + tol)
    return PythagoreanCertificate(float(lhs), float(rhs), holds, tol)
