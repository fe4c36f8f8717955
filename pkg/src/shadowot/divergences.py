"""f-divergences, Markov kernels and transport-inequality constants."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp, xlogy

from .certificates import Certificate
from .errors import EmptyGrid, InvalidDivergence, NonpositiveAlpha, ShadowOTError, SpaceMismatch
from .measures import Coupling, DiscreteMeasure, MetricSpace, _frozen, align

DEFAULT_ALPHAS = tuple(2.0**k for k in range(-6, 7))


def _kl_f(x):
    return xlogy(x, x)


def _kl_df(x):
    return np.log(x) + 1.0


def _kl_xstar(y):
    return np.exp(y - 1.0)


def _quad_f(x):
    return (x - 1.0) ** 2


def _quad_df(x):
    return 2.0 * (x - 1.0)


def _quad_xstar(y):
    return np.maximum(0.0, 1.0 + 0.5 * y)


def _quad_xstar_deriv(y):
    return np.where(1.0 + 0.5 * y > 0, 0.5, 0.0)


@dataclass(frozen=True)
class DivergenceSpec:
    """Generator f of an f-divergence.

    ``xstar(y)`` is the maximizer over x >= 0 of ``x*y - f(x)``, i.e. the
    inverse of f' clipped at zero; solvers use it to map dual potentials to
    densities.  For custom generators it is obtained numerically from ``df``.
    """

    name: str
    f: Callable
    df: Callable | None = None
    xstar: Callable | None = None
    xstar_deriv: Callable | None = None

    def __call__(self, x):
        return self.f(np.asarray(x, dtype=np.float64))

    @property
    def f0(self) -> float:
        return float(self.f(np.array(0.0)))

    def density_from_dual(self, y):
        y = np.asarray(y, dtype=np.float64)
        if self.xstar is not None:
            return self.xstar(y)
        return _numeric_xstar(self, y)

    def density_deriv(self, y):
        y = np.asarray(y, dtype=np.float64)
        if self.xstar_deriv is not None:
            return self.xstar_deriv(y)
        h = 1e-6 * (1.0 + np.abs(y))
        return (self.density_from_dual(y + h) - self.density_from_dual(y - h)) / (2 * h)

    def derivative(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.df is not None:
            return self.df(x)
        h = 1e-6 * np.maximum(1.0, x)
        lo = np.maximum(x - h, 0.0)
        return (self.f(x + h) - self.f(lo)) / (x + h - lo)


def _numeric_xstar(spec, y, iters=200):
    # solve f'(x) = y on x >= 0 by bisection; x = 0 when f'(0+) >= y
    y = np.atleast_1d(y)
    lo = np.zeros_like(y)
    hi = np.ones_like(y)
    for _ in range(200):
        grow = spec.derivative(hi) < y
        if not np.any(grow):
            break
        hi = np.where(grow, 2 * hi, hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = spec.derivative(mid) < y
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    out = 0.5 * (lo + hi)
    out = np.where(spec.derivative(np.full_like(y, 1e-300)) >= y, 0.0, out)
    return out


KL = DivergenceSpec("kl", _kl_f, _kl_df, _kl_xstar, _kl_xstar)
QUADRATIC = DivergenceSpec("quadratic", _quad_f, _quad_df, _quad_xstar, _quad_xstar_deriv)


def divergence(name) -> DivergenceSpec:
    if isinstance(name, DivergenceSpec):
        return name
    try:
        return {"kl": KL, "quadratic": QUADRATIC}[name]
    except KeyError:
        raise InvalidDivergence(f"unknown divergence {name!r}; use 'kl', 'quadratic' or a custom DivergenceSpec") from None


def custom_divergence(f, df=None, name="custom", validate=True) -> DivergenceSpec:
    spec = DivergenceSpec(name, f, df)
    if validate:
        validate_divergence(spec)
    return spec


def validate_divergence(spec: DivergenceSpec):
    """Check f(1) = 0, strict convexity and superlinearity on sample grids."""
    if abs(float(spec.f(np.array(1.0)))) > 1e-12:
        raise InvalidDivergence("f(1) must be 0")
    x = np.linspace(0.0, 20.0, 2001)
    fx = spec.f(x)
    if not np.all(np.isfinite(fx)) or fx.min() < -1e12:
        raise InvalidDivergence("f must be finite and lower bounded on [0, inf)")
    second = fx[2:] - 2 * fx[1:-1] + fx[:-2]
    if np.any(second <= 0):
        raise InvalidDivergence("f is not strictly convex on the sample grid")
    big = np.geomspace(10.0, 1e4, 50)
    ratio = spec.f(big) / big
    if np.any(np.diff(ratio) <= 0):
        raise InvalidDivergence("f(x)/x is not increasing for large x")
    return spec


def _weights(m):
    if isinstance(m, Coupling):
        return m.tensor
    if isinstance(m, DiscreteMeasure):
        return m.weights
    return np.asarray(m, dtype=np.float64)


def f_divergence_arrays(p, q, f: DivergenceSpec) -> float:
    """sum_{q>0} f(p/q) q, or inf when p is not absolutely continuous w.r.t. q."""
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    pos = q > 0
    if np.any(p[~pos] > 0):
        return math.inf
    ratio = p[pos] / q[pos]
    return float(np.sum(f(ratio) * q[pos]))


def f_divergence(mu, nu, f="kl") -> float:
    """D_f(mu, nu) for two measures (or two couplings) on the same space."""
    spec = divergence(f)
    if isinstance(mu, DiscreteMeasure) and isinstance(nu, DiscreteMeasure) and not mu.space.same_as(nu.space):
        mu, nu = align(mu, nu)
    if isinstance(mu, Coupling) and isinstance(nu, Coupling) and not mu.product.same_as(nu.product):
        raise SpaceMismatch("couplings on different product spaces")
    return f_divergence_arrays(_weights(mu), _weights(nu), spec)


def kl_divergence(mu, nu) -> float:
    return f_divergence(mu, nu, KL)


@dataclass(frozen=True, eq=False)
class MarkovKernel:
    source: MetricSpace
    target: MetricSpace
    matrix: np.ndarray


def make_kernel(source: MetricSpace, target: MetricSpace, matrix) -> MarkovKernel:
    K = np.asarray(matrix, dtype=np.float64)
    if K.shape != (source.size, target.size):
        raise SpaceMismatch(f"kernel shape {K.shape} does not match spaces ({source.size}, {target.size})")
    if np.any(K < -1e-12):
        raise ShadowOTError("kernel entries must be nonnegative")
    K = np.clip(K, 0.0, None)
    rows = K.sum(axis=1)
    if np.any(np.abs(rows - 1.0) > 1e-9):
        raise ShadowOTError("kernel rows must sum to 1")
    return MarkovKernel(source, target, _frozen(K / rows[:, None]))


def push_kernel(mu: DiscreteMeasure, K: MarkovKernel) -> DiscreteMeasure:
    """The second marginal of mu (x) K."""
    if not mu.space.same_as(K.source):
        raise SpaceMismatch("kernel source space differs from the measure's space")
    return DiscreteMeasure(K.target, _frozen(mu.weights @ K.matrix))


def check_data_processing(mu, nu, K: MarkovKernel, f="kl", tol=1e-10) -> Certificate:
    spec = divergence(f)
    if not nu.space.same_as(mu.space):
        raise SpaceMismatch("mu and nu must share a space")
    lhs = f_divergence(push_kernel(mu, K), push_kernel(nu, K), spec)
    rhs = f_divergence(mu, nu, spec)
    if math.isinf(rhs):
        return Certificate("data_processing", lhs, rhs, True, tol)
    return Certificate.le("data_processing", lhs, rhs, tol)


def log_exp_moment(mu: DiscreteMeasure, alpha, power, anchor_index):
    """log int exp(alpha * d(anchor, x)^power) mu(dx)."""
    supp = mu.support
    d = mu.space.dist[anchor_index, supp]
    return float(logsumexp(alpha * d**power, b=mu.weights[supp]))


def _min_log_moments(mu, alpha, power, anchors):
    return min(log_exp_moment(mu, alpha, power, a) for a in anchors)


def _grid(marginals, anchors, alphas):
    alphas = DEFAULT_ALPHAS if alphas is None else tuple(float(a) for a in alphas)
    if not alphas:
        raise EmptyGrid("empty alpha grid")
    if any(a <= 0 for a in alphas):
        raise NonpositiveAlpha("alpha must be positive")
    if anchors is None:
        anchors = [range(m.space.size) for m in marginals]
    anchors = [list(a) for a in anchors]
    if len(anchors) != len(marginals) or any(len(a) == 0 for a in anchors):
        raise EmptyGrid("every marginal needs at least one anchor")
    return anchors, alphas


def transport_constant(mode, q, diam=None, marginals=None, anchors=None, alphas=None) -> float:
    """Constant for the transport inequalities between couplings.

    mode ``"bounded"``: 2^(-1/(2q)) * diam where ``diam`` is diam_q of
    X_2 x ... x X_N.  Modes ``"exp2q"`` (constant C_q) and ``"expq"``
    (constant C_q') minimize the exponential-moment formulas over a finite
    grid of anchors and alphas; any grid point gives a valid constant.
    Anchors are per factor (the formula separates over coordinates for a
    fixed alpha), defaulting to every point of each factor space.
    """
    q = float(q)
    if mode == "bounded":
        if diam is None or diam <= 0:
            raise ShadowOTError("bounded mode needs diam > 0")
        return 2.0 ** (-1.0 / (2 * q)) * float(diam)
    if marginals is None or len(marginals) == 0:
        raise EmptyGrid("exponential-moment modes need marginals")
    anchors, alphas = _grid(marginals, anchors, alphas)
    N = len(marginals)
    best = math.inf
    for alpha in alphas:
        if mode == "exp2q":
            s = sum(1.0 + _min_log_moments(m, alpha, 2 * q, a) for m, a in zip(marginals, anchors))
            val = 2.0 * (N / (2 * alpha) * s) ** (1.0 / (2 * q))
        elif mode == "expq":
            s = sum(1.5 + _min_log_moments(m, alpha, q, a) for m, a in zip(marginals, anchors))
            val = 2.0 * (s / alpha) ** (1.0 / q)
        else:
            raise ShadowOTError(f"unknown transport-constant mode {mode!r}")
        best = min(best, val)
    return best
