"""Seeded experiment suites that certify the stability inequalities on random instances.

Each suite draws one independent generator per trial from the master seed
(``SeedSequence(seed).spawn(trials)``), so results do not depend on the order
or parallelism of execution.  A report has status ``"ok"`` iff every
certificate holds; wall-clock numbers live in the ``timing`` field, which is
excluded from :meth:`ExperimentReport.to_json` unless asked for.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy import stats

from . import bounds as B
from .certificates import StabilityCertificate, _clean
from .divergences import KL, check_data_processing, f_divergence_arrays, make_kernel
from .errors import ConfigInvalid, DegenerateData, ShadowOTError, SolverFailure, UnknownExperiment
from .exact import coupling_distance, marginal_tuple_distance, wasserstein
from .instances import (
    CostModel,
    Perturbation,
    base_marginals,
    perturbed_cost,
    perturbed_instance,
    random_bounded_cost,
    random_coupling,
    random_instance,
    sharpness_instance,
    single_marginals,
)
from .measures import MetricSpace, ProductSpace, make_discrete_measure, product_measure
from .regularized import (
    entropic_functional,
    f_regularized_solve,
    pythagorean_certificate,
    sinkhorn_init,
    sinkhorn_solve,
    sinkhorn_step,
)
from .shadow import build_shadow, verify_shadow

EXPERIMENTS = (
    "shadow_validation",
    "value_stability",
    "optimizer_stability",
    "cost_stability",
    "bounded_cost_sharpness",
    "sinkhorn_rates",
    "gamma_recovery",
    "pythagorean",
    "data_processing",
)

DEFAULT_TRIALS = {
    "shadow_validation": 200,
    "value_stability": 200,
    "optimizer_stability": 200,
    "cost_stability": 200,
    "bounded_cost_sharpness": 40,
    "sinkhorn_rates": 50,
    "gamma_recovery": 40,
    "pythagorean": 1000,
    "data_processing": 1000,
}

INF = math.inf


def _order(x):
    if isinstance(x, str) and x.lower() in ("inf", "infinity"):
        return INF
    return float(x)


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of a suite; ``trials=None`` picks the suite's default."""

    name: str
    seed: int = 0
    trials: int | None = None
    sizes: tuple = (2, 3, 4)
    N: tuple = (2, 3)
    p: tuple = (1.0, 2.0, INF)
    q: tuple = (1.0, 2.0)
    epsilon: float = 1.0
    divergence: tuple = ("kl", "quadratic")
    dims: tuple = (1, 2)
    perturbation: str = "jitter"
    magnitudes: tuple = (0.2, 0.1, 0.05, 0.025, 0.0125)
    eps_grid: tuple = (0.1, 0.01, 0.001)
    tol: float = 1e-10
    max_iters: int = 100_000
    cert_tol: float = 1e-7
    power_cost_Cp: float | None = None
    projection_samples: int = 5
    rate_horizon: int = 200
    out: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigInvalid(f"unknown config keys: {sorted(extra)}")
        if "name" not in d:
            raise ConfigInvalid("config needs a name")
        kw = dict(d)
        for key in ("sizes", "N", "dims"):
            if key in kw:
                kw[key] = tuple(int(v) for v in _listify(kw[key]))
        for key in ("p", "q", "magnitudes", "eps_grid"):
            if key in kw:
                kw[key] = tuple(_order(v) for v in _listify(kw[key]))
        if "divergence" in kw:
            kw["divergence"] = tuple(_listify(kw["divergence"]))
        return cls(**kw).validated()

    def resolved(self) -> ExperimentConfig:
        if self.trials is None:
            return replace(self, trials=DEFAULT_TRIALS[self.name])
        return self

    def validated(self) -> ExperimentConfig:
        if self.name not in EXPERIMENTS:
            raise UnknownExperiment(f"unknown experiment {self.name!r}; known: {', '.join(EXPERIMENTS)}")
        for key in ("sizes", "N", "p", "q", "divergence", "dims", "magnitudes", "eps_grid"):
            if len(getattr(self, key)) == 0:
                raise ConfigInvalid(f"{key} must be non-empty")
        checks = [
            (self.trials is None or self.trials >= 1, "trials must be >= 1"),
            (all(1 <= s <= 6 for s in self.sizes), "support sizes must lie in 1..6"),
            (all(2 <= n <= 3 for n in self.N), "N must be 2 or 3"),
            (all(v >= 1 for v in self.p), "p must be >= 1"),
            (all(1 <= v < INF for v in self.q), "q must lie in [1, inf)"),
            (self.epsilon > 0, "epsilon must be positive"),
            (all(d in ("kl", "quadratic") for d in self.divergence), "divergence must be kl or quadratic"),
            (all(d in (1, 2) for d in self.dims), "dims must be 1 or 2"),
            (self.perturbation in ("jitter", "reweight", "translate"), "unknown perturbation kind"),
            (all(m > 0 for m in self.magnitudes), "magnitudes must be positive"),
            (all(0 < e < 0.5 for e in self.eps_grid), "eps_grid values must lie in (0, 1/2)"),
            (self.tol > 0 and self.max_iters >= 1, "tol must be positive and max_iters >= 1"),
            (self.power_cost_Cp is None or self.power_cost_Cp > 0, "power_cost_Cp must be positive"),
            (self.rate_horizon >= 2, "rate_horizon must be >= 2"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigInvalid(msg)
        return self

    def to_dict(self):
        d = asdict(self)
        d.pop("out")
        return _clean(d)


def _listify(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


@dataclass
class ExperimentReport:
    config: dict
    status: str
    records: list
    summary: dict
    fits: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)

    def to_dict(self, include_timing=True):
        d = {
            "config": self.config,
            "status": self.status,
            "summary": self.summary,
            "fits": self.fits,
            "violations": self.violations,
            "records": self.records,
        }
        if include_timing:
            d["timing"] = self.timing
        return _clean(d)

    def to_json(self, include_timing=False) -> str:
        return json.dumps(self.to_dict(include_timing), sort_keys=True, indent=1, allow_nan=False)

    def rows(self) -> list:
        """One flat row per certificate (the CSV table)."""
        out = []
        for rec in self.records:
            for cert in rec["certificates"]:
                row = {"trial": rec["trial"], **{f"param_{k}": v for k, v in sorted(rec.get("params", {}).items())}}
                row.update({k: cert[k] for k in ("theorem", "bound", "measured", "holds", "looseness")})
                out.append(row)
        return out

    def to_csv(self) -> str:
        rows = self.rows()
        cols = []
        for r in rows:
            for k in r:
                if k not in cols:
                    cols.append(k)
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _csv_value(r.get(k, "")) for k in cols})
        return buf.getvalue()

    def write(self, out_dir) -> tuple:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        name = self.config["name"]
        jp, cp = out / f"{name}.json", out / f"{name}.csv"
        jp.write_text(json.dumps(self.to_dict(True), sort_keys=True, indent=1, allow_nan=False) + "\n")
        cp.write_text(self.to_csv())
        return jp, cp


def _csv_value(v):
    if isinstance(v, float):
        return repr(v)
    return v


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _cert(theorem, bound, measured, constants=None, tol=1e-7):
    return StabilityCertificate.check(theorem, bound, measured, constants, tol).to_dict()


def _eq_cert(theorem, target, measured, tol, constants=None):
    c = StabilityCertificate(theorem, float(target), float(measured), bool(abs(measured - target) <= tol), dict(constants or {}), tol)
    return c.to_dict()


def _pick(seq, k):
    return seq[k % len(seq)]


def _solve(mus, c, f, cfg: ExperimentConfig):
    rep = f_regularized_solve(mus, c, f, tol=cfg.tol, max_iters=cfg.max_iters, epsilon=cfg.epsilon)
    if not rep.converged:
        raise SolverFailure(f"{f} solver did not converge (marginal error {rep.marginal_error:.3g})")
    return rep


def fit_rate_exponent(pairs):
    """Least-squares slope of log y on log x; returns (exponent, intercept, r2)."""
    fit = fit_rate(pairs)
    return fit["exponent"], fit["intercept"], fit["r2"]


def fit_rate(pairs, level=0.95) -> dict:
    """:func:`fit_rate_exponent` plus a confidence interval for the slope."""
    pairs = list(pairs)
    if len(pairs) < 3:
        raise DegenerateData("need at least three (x, y) pairs")
    x = np.array([float(a) for a, _ in pairs])
    y = np.array([float(b) for _, b in pairs])
    if np.any(x <= 0) or np.any(y <= 0):
        raise DegenerateData("all values must be positive")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(lx) == 0:
        raise DegenerateData("x values are all equal")
    res = stats.linregress(lx, ly)
    n = len(x)
    r2 = float(res.rvalue**2) if np.ptp(ly) > 0 else 1.0
    if n > 2:
        half = float(stats.t.ppf(0.5 + level / 2, n - 2) * res.stderr)
    else:  # pragma: no cover
        half = math.inf
    return {
        "exponent": float(res.slope),
        "intercept": float(res.intercept),
        "r2": r2,
        "ci_low": float(res.slope - half),
        "ci_high": float(res.slope + half),
        "n": n,
    }


def _try_fit(pairs):
    pairs = [(a, b) for a, b in pairs if a > 0 and b > 0]
    try:
        return fit_rate(pairs)
    except DegenerateData as exc:
        return {"error": str(exc)}


def _pq_pairs(cfg, finite_only=False):
    out = []
    for p in cfg.p:
        if finite_only and math.isinf(p):
            continue
        for q in cfg.q:
            if q <= p:
                out.append((p, q))
    if not out:
        raise ConfigInvalid("no (p, q) pair with q <= p in the config")
    return out


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------


def _shadow_trial(cfg, rng, t):
    N = _pick(cfg.N, t)
    p = _pick(cfg.p, t // len(cfg.N))
    dim = _pick(cfg.dims, t // 7)
    sizes = [s for s in cfg.sizes if s <= 5] or [min(cfg.sizes)]
    inst = random_instance(rng, N, sizes, dim, cfg.perturbation, float(rng.choice(cfg.magnitudes)))
    kind = ("sinkhorn", "vertex", "product")[t % 3]
    pi = random_coupling(rng, inst.mus, kind)
    res = build_shadow(pi, inst.mus_tilde, p)
    certs = []
    for f in cfg.divergence:
        sc = verify_shadow(pi, res, f, p)
        if not certs:
            certs.append(_eq_cert("shadow_distance_equality", sc.delta, sc.w_shadow, 1e-7, {"p": p, "N": N}))
        certs.append(_cert(f"shadow_divergence_{f}", sc.div_source, sc.div_shadow, {"p": p, "N": N}, 1e-9))
    for _ in range(cfg.projection_samples):
        rho = random_coupling(rng, res.shadow.marginals(), "sinkhorn" if rng.random() < 0.5 else "vertex")
        certs.append(_cert("shadow_projection", coupling_distance(res.source, rho, p), res.delta, {"p": p}))
    params = {"N": N, "p": p, "dim": dim, "coupling": kind, "magnitude": inst.magnitude}
    return {"params": params, "delta": res.delta, "certificates": certs}


def _value_trial(cfg, rng, t):
    f = _pick(cfg.divergence, t)
    quadratic = t % 4 == 3
    if quadratic:
        N, p, dim = 2, 2.0, _pick(cfg.dims, t // 4)
    else:
        N = _pick(cfg.N, t // 2)
        p = _pick(cfg.p, t // (2 * len(cfg.N)))
        dim = _pick(cfg.dims, t // 5)
    inst = random_instance(rng, N, cfg.sizes, dim, cfg.perturbation, float(rng.choice(cfg.magnitudes)))
    model = CostModel.draw(rng, "sqeuclidean" if quadratic else "product", N, dim, p)
    c = model.build(inst.product)
    L = B.cost_condition_constant("quadratic" if quadratic else "product", c, inst.mus, inst.mus_tilde, p)
    delta = marginal_tuple_distance(inst.mus, inst.mus_tilde, p)
    S = _solve(list(inst.mus), c, f, cfg).value
    St = _solve(list(inst.mus_tilde), c, f, cfg).value
    bound = B.value_stability_bound(L, delta)
    consts = {"L": L, "delta": delta, "p": p, "N": N, "divergence": f, "cost": model.kind}
    params = {"N": N, "p": p, "dim": dim, "divergence": f, "cost": model.kind}
    return {"params": params, "delta": delta, "values": [S, St], "certificates": [_cert("value_stability", bound, abs(S - St), consts, cfg.cert_tol)]}


def _optimizer_certs(cfg, inst, c, p, q, mus_cq_both=True):
    """Solve both problems (KL) and certify every applicable optimizer bound."""
    N = inst.N
    rep = _solve(list(inst.mus), c, "kl", cfg)
    rep_t = _solve(list(inst.mus_tilde), c, "kl", cfg)
    wq = coupling_distance(rep.optimizer, rep_t.optimizer, q)
    delta = marginal_tuple_distance(inst.mus, inst.mus_tilde, p)
    variant = "product" if c.factors is not None else "lipschitz"
    L = B.cost_condition_constant(variant, c, inst.mus, inst.mus_tilde, p) / cfg.epsilon
    Cq = B.bounded_transport_constant(inst.mus, q)
    Cqp = B.transport_constant("expq", q, marginals=list(inst.mus))
    inp = B.BoundInputs(N=N, p=p, q=q, L=L, C_q=Cq, C_q_prime=Cqp, delta=delta)
    certs = [
        _cert("optimizer_stability_Iq", B.optimizer_stability_bound("Iq", inp), wq, inp.to_dict(), cfg.cert_tol),
        _cert("optimizer_stability_Iq_prime", B.optimizer_stability_bound("Iq_prime", inp), wq, inp.to_dict(), cfg.cert_tol),
    ]
    if mus_cq_both:
        Cq2 = max(Cq, B.bounded_transport_constant(inst.mus_tilde, q))
        inp2 = replace(inp, C_q=Cq2)
        certs.append(_cert("optimizer_stability_Iq_halfL", B.optimizer_stability_bound("Iq", inp2, half_L=True), wq, inp2.to_dict(), cfg.cert_tol))
    return certs, wq, delta


def _optimizer_trial(cfg, rng, t):
    pairs = _pq_pairs(cfg)
    p, q = _pick(pairs, t)
    N = _pick(cfg.N, t // len(pairs))
    dim = _pick(cfg.dims, t // 5)
    kind = ("product", "lipschitz")[t % 2]
    inst = random_instance(rng, N, cfg.sizes, dim, cfg.perturbation, float(rng.choice(cfg.magnitudes)))
    c = CostModel.draw(rng, kind, N, dim, p).build(inst.product)
    certs, wq, delta = _optimizer_certs(cfg, inst, c, p, q)
    return {"params": {"N": N, "p": p, "q": q, "dim": dim, "cost": kind}, "delta": delta, "measured": wq, "certificates": certs}


def _optimizer_sweep(cfg, rng):
    """Delta vs W_q on one instance family (diagnostic exponent)."""
    p, q = _pq_pairs(cfg)[0]
    pts, ws = base_marginals(rng, 2, cfg.sizes, 1)
    pert = Perturbation.draw(rng, cfg.perturbation, pts)
    model = CostModel.draw(rng, "lipschitz", 2, 1, p)
    pairs = []
    for m in cfg.magnitudes:
        inst = perturbed_instance(pts, ws, pert, m)
        c = model.build(inst.product)
        r1 = sinkhorn_solve(list(inst.mus), c, tol=cfg.tol, history=False)
        r2 = sinkhorn_solve(list(inst.mus_tilde), c, tol=cfg.tol, history=False)
        pairs.append((marginal_tuple_distance(inst.mus, inst.mus_tilde, p), coupling_distance(r1.optimizer, r2.optimizer, q)))
    fit = _try_fit(pairs)
    fit["reference_exponent"] = 1.0 / (2 * p) if not math.isinf(p) else 0.0
    fit["p"], fit["q"] = p, q
    return fit


def _cost_trial(cfg, rng, t):
    p = _pick(cfg.p, t)
    q = _pick(cfg.q, t // len(cfg.p))
    N = _pick(cfg.N, t // (len(cfg.p) * len(cfg.q)))
    dim = _pick(cfg.dims, t // 7)
    mus = single_marginals(rng, N, cfg.sizes, dim)
    product = ProductSpace(tuple(m.space for m in mus))
    c = random_bounded_cost(rng, product, 1.0)
    ct = perturbed_cost(rng, c, float(rng.choice(cfg.magnitudes)))
    c, ct = c.scaled(1.0 / cfg.epsilon), ct.scaled(1.0 / cfg.epsilon)
    pi = sinkhorn_or_mm(mus, c, cfg)
    pit = sinkhorn_or_mm(mus, ct, cfg)
    P = product_measure(mus)
    Cq = B.bounded_transport_constant(mus, q)
    Cqp = B.transport_constant("expq", q, marginals=list(mus))
    bd = B.cost_stability_bounds(c, ct, P, p, q, Cq, Cqp)
    tv = 0.5 * float(np.sum(np.abs(pi.tensor - pit.tensor)))
    kl_sym = f_divergence_arrays(pi.tensor, pit.tensor, KL) + f_divergence_arrays(pit.tensor, pi.tensor, KL)
    wq = coupling_distance(pi, pit, q)
    cool = float(np.sum((c.values - ct.values) * (pit.tensor - pi.tensor)))
    consts = {"a": bd.a, "gap": bd.gap, "p": p, "q": q, "N": N, "C_q": Cq, "C_q_prime": Cqp}
    certs = [
        _cert("cost_stability_tv", bd.tv, tv, consts, cfg.cert_tol),
        _cert("cost_stability_kl_sym", bd.kl_sym, kl_sym, consts, cfg.cert_tol),
        _cert("cost_stability_wq_Iq", bd.wq_Iq, wq, consts, cfg.cert_tol),
        _cert("cost_stability_wq_Iq_prime", bd.wq_Iq_prime, wq, consts, cfg.cert_tol),
        _cert("cost_kl_sym_identity", cool, kl_sym, consts, cfg.cert_tol),
    ]
    return {"params": {"N": N, "p": p, "q": q, "dim": dim}, "gap": bd.gap, "certificates": certs}


def sinkhorn_or_mm(mus, c, cfg):
    return _solve(list(mus), c, "kl", replace(cfg, epsilon=1.0)).optimizer


def _sharpness_records(cfg):
    records, pairs = [], []
    for k, eps in enumerate(cfg.eps_grid):
        inst = sharpness_instance(eps)
        rep = sinkhorn_solve(list(inst.mus), inst.cost, tol=cfg.tol, history=False)
        rep_t = sinkhorn_solve(list(inst.mus_tilde), inst.cost, tol=cfg.tol, history=False)
        w1 = coupling_distance(rep.optimizer, rep_t.optimizer, 1)
        delta = marginal_tuple_distance(inst.mus, inst.mus_tilde, INF)
        C1 = B.transport_constant("bounded", 1, diam=inst.mus[1].space.diameter())
        ell = B.lipschitz_ell(2, C1, inst.cost.lip_p(INF))
        err_pi = float(np.max(np.abs(rep.optimizer.tensor - inst.pi_star)))
        err_pit = float(np.max(np.abs(rep_t.optimizer.tensor - inst.pi_tilde_star)))
        consts = {"eps": eps, "alpha": inst.alpha, "C_1": C1, "ell": ell, "delta": delta}
        inp = B.BoundInputs(N=2, p=INF, q=1.0, C_q=C1, delta=delta, lip=inst.cost.lip_p(INF))
        certs = [
            _eq_cert("sharpness_pi_star", 0.0, err_pi, 1e-9, consts),
            _eq_cert("sharpness_pi_tilde_star", 0.0, err_pit, 1e-9, consts),
            _eq_cert("sharpness_w1_closed_form", inst.w1, w1, 1e-8, consts),
            _eq_cert("sharpness_delta", eps, delta, 1e-12, consts),
            _eq_cert("sharpness_ell", 3.0, ell, 0.0, consts),
            _cert("bounded_cost_lipschitz", B.bounded_cost_stability_bound("lipschitz", inp), w1, consts, cfg.cert_tol),
        ]
        if eps <= 1e-3:
            certs.append(_eq_cert("sharpness_ratio_limit", 3.0, w1 / delta, 1e-2, consts))
        records.append({"trial": f"sharpness_{k}", "params": {"eps": eps}, "ratio": w1 / delta, "w1": w1, "certificates": certs})
        pairs.append((eps, w1))
    return records, pairs


def _bounded_trial(cfg, rng, t):
    """Random instances for the bounded-cost theorem (all three modes)."""
    N = _pick(cfg.N, t)
    dim = _pick(cfg.dims, t // 3)
    p = _pick(cfg.p, t // len(cfg.N))
    q = 1.0
    inst = random_instance(rng, N, cfg.sizes, dim, cfg.perturbation, float(rng.choice(cfg.magnitudes)))
    c = CostModel.draw(rng, "lipschitz", N, dim, p).build(inst.product)
    c = c.scaled(1.0 / cfg.epsilon) if cfg.epsilon != 1.0 else c
    rep = _solve(list(inst.mus), c, "kl", replace(cfg, epsilon=1.0))
    rep_t = _solve(list(inst.mus_tilde), c, "kl", replace(cfg, epsilon=1.0))
    w1 = coupling_distance(rep.optimizer, rep_t.optimizer, q)
    Cq = max(B.bounded_transport_constant(inst.mus, q), B.bounded_transport_constant(inst.mus_tilde, q))
    Cqp = max(
        B.transport_constant("expq", q, marginals=list(inst.mus)),
        B.transport_constant("expq", q, marginals=list(inst.mus_tilde)),
    )
    a = B.bounded_cost_a(N, c.sup_norm)
    certs = []
    delta_p = marginal_tuple_distance(inst.mus, inst.mus_tilde, p)
    inp = B.BoundInputs(N=N, p=p, q=q, C_q=Cq, C_q_prime=Cqp, delta=delta_p, a=a, lip=c.lipschitz(p))
    certs.append(_cert("bounded_cost_Iq", B.bounded_cost_stability_bound("Iq", inp), w1, inp.to_dict(), cfg.cert_tol))
    certs.append(_cert("bounded_cost_Iq_prime", B.bounded_cost_stability_bound("Iq_prime", inp), w1, inp.to_dict(), cfg.cert_tol))
    delta_inf = marginal_tuple_distance(inst.mus, inst.mus_tilde, INF)
    inp_l = B.BoundInputs(N=N, p=INF, q=1.0, C_q=Cq, delta=delta_inf, lip=c.lipschitz(INF))
    certs.append(_cert("bounded_cost_lipschitz", B.bounded_cost_stability_bound("lipschitz", inp_l), w1, inp_l.to_dict(), cfg.cert_tol))
    return {"params": {"N": N, "p": p, "dim": dim}, "measured": w1, "certificates": certs}


def _worst(theorem, items, tol, extra):
    """Aggregate a family of (n, bound, measured) checks into its tightest certificate."""
    holds = all(m <= b + tol for _, b, m in items)
    # report the tightest member: largest measured / bound, then largest excess
    n, b, m = max(items, key=lambda it: (it[2] > it[1] + tol, it[2] / it[1] if it[1] > 0 else 0.0, it[0]))
    consts = dict(extra, n=n, checked=len(items), all_hold=holds)
    c = StabilityCertificate(theorem, b, m, holds, consts, tol)
    return c.to_dict()


def _sinkhorn_trial(cfg, rng, t):
    pairs = _pq_pairs(cfg, finite_only=True)
    p, q = _pick(pairs, t)
    dim = _pick(cfg.dims, t // len(pairs))
    mus = list(single_marginals(rng, 2, cfg.sizes, dim))
    product = ProductSpace(tuple(m.space for m in mus))
    c = CostModel.draw(rng, "product", 2, dim, p).build(product)
    c = c.scaled(1.0 / cfg.epsilon) if cfg.epsilon != 1.0 else c
    H = cfg.rate_horizon
    rep = sinkhorn_solve(mus, c, tol=cfg.tol, max_iters=cfg.max_iters, history=True, history_dense=H, min_iters=H)
    if not rep.converged:
        raise SolverFailure("Sinkhorn did not converge")
    L = B.cost_condition_constant("lipschitz", c, mus, mus, p)
    rates = B.sinkhorn_rate_constants(p, q, rep.kl_star, mus, L=L)
    F_star = rep.value
    hist = [h for h in rep.state.history if 1 <= h.n <= H]
    states = _replay_iterates(mus, c, H)
    leger, value, value_meas, wq_fam, mono = [], [], [], [], []
    kl_to = [f_divergence_arrays(rep.optimizer.tensor, s.tensor, KL) for s in states]
    gibbs = [rep.state.history[0].kl_gibbs] + [h.kl_gibbs for h in hist]
    c0_val, c0_wq = 0.0, 0.0
    for h in hist:
        n = h.n
        leger.append((n, rates.marginal_kl(n), max(h.marginal_kl)))
        it = states[n]
        d_meas = max(wasserstein(it.marginal(i), mus[i], p).value for i in range(2))
        gap = abs(F_star - h.F)
        value.append((n, rates.value_bound(n), gap))
        value_meas.append((n, rates.value_bound(n, delta=d_meas), gap))
        w = coupling_distance(rep.optimizer, it, q)
        wq_fam.append((n, rates.wq_bound(n), w))
        mono.append((n, kl_to[n - 1], kl_to[n]))
        if n >= 2:
            c0_val = max(c0_val, gap * n ** (1.0 / (2 * p)))
            c0_wq = max(c0_wq, w * n ** (1.0 / (4 * p * q)))
    steps = np.diff(gibbs)
    extra = {"p": p, "q": q, "kl_star": rates.kl_star, "C0": rates.C0, "C_mu": list(rates.C_mu), "L": L, "C_q_prime": rates.C_q_prime}
    certs = [
        _worst("sinkhorn_leger", leger, 1e-12, extra),
        _worst("sinkhorn_value", value, cfg.cert_tol, extra),
        _worst("sinkhorn_value_measured_delta", value_meas, cfg.cert_tol, extra),
        _worst("sinkhorn_wq", wq_fam, cfg.cert_tol, extra),
        _worst("sinkhorn_kl_to_optimizer_monotone", mono, 1e-12, extra),
    ]
    gaps = [(n, m) for n, _, m in value if n >= 2]
    return {
        "params": {"p": p, "q": q, "dim": dim},
        "c0_value": c0_val,
        "c0_wq": c0_wq,
        "value_gap_fit": _try_fit(gaps),
        "iterations": rep.iterations,
        "kl_gibbs_steps": {"up": int(np.sum(steps > 1e-12)), "down": int(np.sum(steps < -1e-12))},
        "certificates": certs,
    }


def _replay_iterates(mus, c, H):
    """Iterates pi^0 .. pi^H by single Sinkhorn steps."""
    st = sinkhorn_init(mus, c)
    out = [st.iterate]
    for _ in range(H):
        st = sinkhorn_step(replace(st, history=()), mus, c)
        out.append(st.iterate)
    return out


def _gamma_trial(cfg, rng, t):
    N = _pick(cfg.N, t)
    p = _pick(cfg.p, t // len(cfg.N))
    dim = _pick(cfg.dims, t // 5)
    pts, ws = base_marginals(rng, N, cfg.sizes, dim)
    pert = Perturbation.draw(rng, cfg.perturbation, pts)
    model = CostModel.draw(rng, "lipschitz", N, dim, p)
    mus0 = [make_discrete_measure(MetricSpace.euclidean(x), w) for x, w in zip(pts, ws)]
    c0 = model.build(ProductSpace(tuple(m.space for m in mus0)))
    pi = _solve(mus0, c0, "kl", cfg).optimizer
    F = entropic_functional(pi, mus0, c0, cfg.epsilon)
    certs = []
    for m in sorted(cfg.magnitudes, reverse=True):
        inst = perturbed_instance(pts, ws, pert, m)
        targets = [mt for mt in inst.mus_tilde]
        res = build_shadow(pi, targets, p)
        cn = model.build(res.source.product)
        Fn = entropic_functional(res.shadow, res.shadow.marginals(), cn, cfg.epsilon)
        L = cn.lipschitz(p)
        consts = {"L": L, "delta": res.delta, "magnitude": m, "p": p}
        certs.append(_cert("gamma_recovery", L * res.delta, Fn - F, consts, cfg.cert_tol))
    return {"params": {"N": N, "p": p, "dim": dim}, "certificates": certs}


def _pythagorean_trial(cfg, rng, t):
    N = _pick(cfg.N, t)
    dim = _pick(cfg.dims, t // 3)
    sizes = [s for s in cfg.sizes if s <= 4] or [min(cfg.sizes)]
    mus = list(single_marginals(rng, N, sizes, dim))
    product = ProductSpace(tuple(m.space for m in mus))
    c = random_bounded_cost(rng, product, 2.0)
    rep = f_regularized_solve(mus, c, "kl", tol=1e-13, max_iters=cfg.max_iters, epsilon=cfg.epsilon)
    kind = ("sinkhorn", "vertex", "product")[t % 3]
    pi = random_coupling(rng, mus, kind)
    cert = pythagorean_certificate(pi, rep, mus, c)
    return {"params": {"N": N, "coupling": kind}, "certificates": [_cert("pythagorean", cert.rhs, cert.lhs, {"N": N}, cert.tol)]}


def _data_processing_trial(cfg, rng, t):
    n = int(rng.integers(2, 7))
    m = int(rng.integers(2, 7))
    f = _pick(cfg.divergence, t)
    src, dst = MetricSpace.discrete(n), MetricSpace.discrete(m)
    w1, w2 = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
    if t % 10 == 9:
        w1[0] = 0.0
        w1 = w1 / w1.sum()
    mu, nu = make_discrete_measure(src, w1), make_discrete_measure(src, w2)
    K = rng.dirichlet(np.ones(m), size=n)
    cert = check_data_processing(mu, nu, make_kernel(src, dst, K), f)
    return {"params": {"n": n, "m": m, "divergence": f}, "certificates": [_cert("data_processing", cert.rhs, cert.lhs, {"divergence": f}, 1e-10)]}


_TRIALS = {
    "shadow_validation": _shadow_trial,
    "value_stability": _value_trial,
    "optimizer_stability": _optimizer_trial,
    "cost_stability": _cost_trial,
    "bounded_cost_sharpness": _bounded_trial,
    "sinkhorn_rates": _sinkhorn_trial,
    "gamma_recovery": _gamma_trial,
    "pythagorean": _pythagorean_trial,
    "data_processing": _data_processing_trial,
}


def list_experiments():
    return list(EXPERIMENTS)


def _run_trial(cfg, seq, t):
    rng = np.random.default_rng(seq)
    t0 = time.perf_counter()
    try:
        rec = _TRIALS[cfg.name](cfg, rng, t)
    except SolverFailure as exc:
        raise SolverFailure(str(exc), trial=t) from exc
    except ShadowOTError as exc:
        raise SolverFailure(f"{type(exc).__name__}: {exc}", trial=t) from exc
    return {"trial": t, **rec}, time.perf_counter() - t0


def run_experiment(config: ExperimentConfig, progress=None, workers=1) -> ExperimentReport:
    """Run a suite and aggregate its certificates; writes files when ``config.out`` is set.

    Trial ``t`` draws from the ``t``-th child of ``SeedSequence(seed)``, so the
    report does not depend on ``workers``.
    """
    if isinstance(config, dict):
        config = ExperimentConfig.from_dict(config)
    cfg = config.validated().resolved()
    seqs = np.random.SeedSequence(cfg.seed).spawn(cfg.trials + 1)
    t_start = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_run_trial, [cfg] * cfg.trials, seqs[:-1], range(cfg.trials)))
    else:
        done = []
        for t in range(cfg.trials):
            done.append(_run_trial(cfg, seqs[t], t))
            if progress is not None:
                progress(t, done[-1][0])
    records = [rec for rec, _ in done]
    durations = [d for _, d in done]
    fits = {}
    extra_rng = np.random.default_rng(seqs[-1])
    if cfg.name == "bounded_cost_sharpness":
        sharp, pairs = _sharpness_records(cfg)
        records = sharp + records
        fits["w1_vs_eps"] = _try_fit(pairs)
    elif cfg.name == "optimizer_stability":
        fits["optimizer_sweep"] = _optimizer_sweep(cfg, extra_rng)
    elif cfg.name == "sinkhorn_rates":
        fits["value_gap_exponents"] = [r["value_gap_fit"].get("exponent") for r in records]
        fits["c0_value_max"] = max(r["c0_value"] for r in records)
        fits["c0_wq_max"] = max(r["c0_wq"] for r in records)
    records = [_clean(r) for r in records]
    n_cert = sum(len(r["certificates"]) for r in records)
    bad = [r for r in records if not all(c["holds"] for c in r["certificates"])]
    by_theorem = {}
    for r in records:
        for c in r["certificates"]:
            s = by_theorem.setdefault(c["theorem"], {"total": 0, "holds": 0, "max_ratio": 0.0})
            s["total"] += 1
            s["holds"] += int(c["holds"])
            b, m = c["bound"], c["measured"]
            if isinstance(b, float) and b > 0 and isinstance(m, float):
                s["max_ratio"] = max(s["max_ratio"], m / b)
    summary = {"trials": cfg.trials, "certificates": n_cert, "holds": n_cert - sum(1 for r in bad for c in r["certificates"] if not c["holds"]), "by_theorem": by_theorem}
    total = time.perf_counter() - t_start
    timing = {
        "total_seconds": total,
        "mean_trial_seconds": float(np.mean(durations)) if durations else 0.0,
        "max_trial_seconds": float(np.max(durations)) if durations else 0.0,
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    report = ExperimentReport(
        config=cfg.to_dict(),
        status="ok" if not bad else "violation",
        records=records,
        summary=summary,
        fits=_clean(fits),
        violations=bad,
        timing=timing,
    )
    if cfg.out:
        report.write(cfg.out)
    return report
