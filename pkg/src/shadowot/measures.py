"""Finite metric spaces, discrete probability measures, product spaces and couplings."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import BadAxis, BadMass, IncompatibleSpaces, NegativeWeight, ShadowOTError

MASS_TOL = 1e-6
NEG_TOL = 1e-12
_FULL_TRIANGLE_CHECK = 64


def _frozen(arr, dtype=np.float64):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _check_metric(dist, tol=1e-9):
    n = dist.shape[0]
    if dist.shape != (n, n):
        raise ShadowOTError(f"distance matrix must be square, got {dist.shape}")
    if np.any(dist < 0):
        raise ShadowOTError("distances must be nonnegative")
    if np.any(np.abs(np.diag(dist)) > 0):
        raise ShadowOTError("dist(x, x) must be 0")
    if not np.allclose(dist, dist.T, rtol=0, atol=tol):
        raise ShadowOTError("distance matrix must be symmetric")
    scale = tol * (1.0 + float(dist.max(initial=0.0)))
    if n <= _FULL_TRIANGLE_CHECK:
        # d(i,k) <= d(i,j) + d(j,k) for all triples
        viol = dist[:, None, :] - dist[:, :, None] - dist[None, :, :]
        if np.any(viol > scale):
            raise ShadowOTError("triangle inequality violated")
    else:
        rng = np.random.default_rng(0)
        i, j, k = rng.integers(0, n, size=(3, 20000))
        if np.any(dist[i, k] - dist[i, j] - dist[j, k] > scale):
            raise ShadowOTError("triangle inequality violated (sampled)")


@dataclass(frozen=True, eq=False)
class MetricSpace:
    """A finite metric space.

    ``kind`` is ``"euclidean"`` (points are coordinate vectors, ``coords`` has
    shape (n, d)) or ``"explicit"`` (only the distance matrix is known).
    """

    dist: np.ndarray
    labels: tuple
    kind: str = "explicit"
    coords: np.ndarray | None = None

    @classmethod
    def euclidean(cls, points, labels=None) -> MetricSpace:
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.sqrt(np.sum(diff**2, axis=-1))
        if labels is None:
            labels = tuple(range(len(pts)))
        return cls(_frozen(dist), tuple(labels), "euclidean", _frozen(pts))

    @classmethod
    def line(cls, xs) -> MetricSpace:
        """Points on the real line."""
        return cls.euclidean(np.asarray(xs, dtype=np.float64)[:, None])

    @classmethod
    def explicit(cls, dist, labels=None, check=True) -> MetricSpace:
        dist = np.asarray(dist, dtype=np.float64)
        if check:
            _check_metric(dist)
        if labels is None:
            labels = tuple(range(dist.shape[0]))
        if len(labels) != dist.shape[0]:
            raise ShadowOTError("labels and distance matrix disagree in size")
        return cls(_frozen(dist), tuple(labels), "explicit", None)

    @classmethod
    def discrete(cls, labels) -> MetricSpace:
        """The 0/1 metric; W_1 under it is total variation."""
        if isinstance(labels, int):
            labels = tuple(range(labels))
        n = len(labels)
        return cls(_frozen(1.0 - np.eye(n)), tuple(labels), "explicit", None)

    @property
    def size(self) -> int:
        return self.dist.shape[0]

    def __len__(self):
        return self.size

    def diameter(self, subset=None) -> float:
        d = self.dist if subset is None else self.dist[np.ix_(subset, subset)]
        return float(d.max(initial=0.0))

    def distances_to(self, anchor=None, anchor_index=None) -> np.ndarray:
        """Distances from every point to an anchor.

        The anchor is either a point of the space (``anchor_index``) or, for
        Euclidean spaces, arbitrary coordinates (``anchor``; the origin when
        both are omitted).
        """
        if anchor_index is not None:
            return np.array(self.dist[anchor_index])
        if self.kind != "euclidean":
            raise ShadowOTError("coordinate anchors need a euclidean space; pass anchor_index")
        x0 = np.zeros(self.coords.shape[1]) if anchor is None else np.broadcast_to(np.asarray(anchor, float), (self.coords.shape[1],))
        return np.sqrt(np.sum((self.coords - x0) ** 2, axis=1))

    def same_as(self, other: MetricSpace) -> bool:
        if self is other:
            return True
        if self.kind != other.kind or self.dist.shape != other.dist.shape or self.labels != other.labels:
            return False
        # isometric point sets at different positions are different spaces
        if self.kind == "euclidean" and not np.array_equal(self.coords, other.coords):
            return False
        return np.array_equal(self.dist, other.dist)

    def subspace(self, indices) -> MetricSpace:
        indices = np.asarray(indices, dtype=np.int64)
        labels = tuple(self.labels[i] for i in indices)
        coords = None if self.coords is None else _frozen(self.coords[indices])
        return MetricSpace(_frozen(self.dist[np.ix_(indices, indices)]), labels, self.kind, coords)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    space: MetricSpace
    weights: np.ndarray

    @property
    def support(self) -> np.ndarray:
        return np.nonzero(self.weights > 0)[0]

    def __len__(self):
        return self.space.size

    def allclose(self, other: DiscreteMeasure, atol=1e-12) -> bool:
        return self.space.same_as(other.space) and np.allclose(self.weights, other.weights, rtol=0, atol=atol)


def make_discrete_measure(space: MetricSpace, weights) -> DiscreteMeasure:
    """Validate and renormalize weights.

    Zero-weight atoms stay in the space.  Raises :class:`NegativeWeight` for
    weights below ``-1e-12`` and :class:`BadMass` when the total mass is off by
    more than ``1e-6``.
    """
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape[0] != space.size:
        raise ShadowOTError(f"{w.shape[0]} weights for a space of {space.size} points")
    if np.any(w < -NEG_TOL):
        raise NegativeWeight(f"negative weight {w.min():.3g}")
    w = np.clip(w, 0.0, None)
    total = w.sum()
    if not abs(total - 1.0) <= MASS_TOL:
        raise BadMass(f"weights sum to {total!r}, expected 1")
    return DiscreteMeasure(space, _frozen(w / total))


def dirac(space: MetricSpace, index: int) -> DiscreteMeasure:
    w = np.zeros(space.size)
    w[index] = 1.0
    return make_discrete_measure(space, w)


def uniform(space: MetricSpace, indices=None) -> DiscreteMeasure:
    w = np.zeros(space.size)
    if indices is None:
        w[:] = 1.0
    else:
        w[list(indices)] = 1.0
    return make_discrete_measure(space, w / w.sum())


def compactify(mu: DiscreteMeasure) -> DiscreteMeasure:
    """Restrict a measure to its support (the only place atoms are pruned)."""
    supp = mu.support
    return make_discrete_measure(mu.space.subspace(supp), mu.weights[supp])


def union_space(a: MetricSpace, b: MetricSpace):
    """Smallest space containing both; returns ``(space, index_map_a, index_map_b)``.

    Euclidean spaces are merged by coordinates; explicit spaces must coincide.
    """
    if a.same_as(b):
        ident_a = np.arange(a.size)
        return a, ident_a, np.arange(b.size)
    if a.kind != "euclidean" or b.kind != "euclidean":
        raise IncompatibleSpaces("explicit metric spaces can only be combined when identical")
    if a.coords.shape[1] != b.coords.shape[1]:
        raise IncompatibleSpaces("euclidean spaces of different dimension")
    pts = [tuple(p) for p in a.coords]
    lookup = {p: i for i, p in enumerate(pts)}
    map_b = []
    for p in map(tuple, b.coords):
        if p not in lookup:
            lookup[p] = len(pts)
            pts.append(p)
        map_b.append(lookup[p])
    space = MetricSpace.euclidean(np.array(pts))
    return space, np.arange(a.size), np.array(map_b, dtype=np.int64)


def embed(mu: DiscreteMeasure, space: MetricSpace, index_map) -> DiscreteMeasure:
    w = np.zeros(space.size)
    np.add.at(w, np.asarray(index_map), mu.weights)
    return DiscreteMeasure(space, _frozen(w))


def align(mu: DiscreteMeasure, nu: DiscreteMeasure):
    """Re-express two measures on a common space."""
    space, ma, mb = union_space(mu.space, nu.space)
    return embed(mu, space, ma), embed(nu, space, mb)


@dataclass(frozen=True, eq=False)
class ProductSpace:
    """Product X_1 x ... x X_N; the order p of d_{X,p} is passed per call."""

    factors: tuple
    _dists: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        factors = tuple(self.factors)
        object.__setattr__(self, "factors", factors)
        nmax = max(f.size for f in factors)
        stack = np.zeros((len(factors), nmax, nmax))
        for k, f in enumerate(factors):
            stack[k, : f.size, : f.size] = f.dist
        object.__setattr__(self, "_dists", _frozen(stack))

    @property
    def N(self) -> int:
        return len(self.factors)

    @property
    def shape(self) -> tuple:
        return tuple(f.size for f in self.factors)

    def atoms(self) -> np.ndarray:
        """All atoms as an (M, N) index array in C order of the tensor."""
        grids = np.indices(self.shape).reshape(self.N, -1).T
        return np.ascontiguousarray(grids, dtype=np.int64)

    def distance(self, x, y, p) -> float:
        return float(self.distances(np.atleast_2d(x), np.atleast_2d(y), p)[0, 0])

    def distances(self, idx_a, idx_b, p, root=True) -> np.ndarray:
        """Matrix of d_{X,p} between atom lists (or sum of p-th powers if ``root`` is False)."""
        return _kernels.product_distances(self._dists, idx_a, idx_b, p, root)

    def diameter(self, q, axes=None) -> float:
        """diam_q of the sub-product over ``axes`` (all factors by default)."""
        axes = range(self.N) if axes is None else axes
        diams = np.array([self.factors[i].diameter() for i in axes])
        if diams.size == 0:
            return 0.0
        if math.isinf(q):
            return float(diams.max())
        return float(np.sum(diams**q) ** (1.0 / q))

    def lipschitz(self, values, p) -> float:
        """Lipschitz constant of a function on the full product w.r.t. d_{X,p}."""
        vals = np.asarray(values, dtype=np.float64).reshape(-1)
        return _kernels.lipschitz(vals, self._dists, self.atoms(), p)

    def same_as(self, other: ProductSpace) -> bool:
        return self.N == other.N and all(a.same_as(b) for a, b in zip(self.factors, other.factors))


@dataclass(frozen=True, eq=False)
class Coupling:
    """A probability tensor over a product space."""

    product: ProductSpace
    tensor: np.ndarray

    def marginal(self, axis: int) -> DiscreteMeasure:
        return marginal(self, axis)

    def marginals(self) -> list:
        return [marginal(self, i) for i in range(self.product.N)]

    def integrate(self, values) -> float:
        return float(np.sum(self.tensor * np.asarray(values)))

    def support_atoms(self):
        """Positive-mass atoms as (index array, weights)."""
        flat = self.tensor.reshape(-1)
        pos = np.nonzero(flat > 0)[0]
        idx = np.stack(np.unravel_index(pos, self.product.shape), axis=1)
        return np.ascontiguousarray(idx, dtype=np.int64), flat[pos]


def make_coupling(product: ProductSpace, tensor) -> Coupling:
    t = np.asarray(tensor, dtype=np.float64)
    if t.shape != product.shape:
        raise ShadowOTError(f"tensor shape {t.shape} does not match product {product.shape}")
    if np.any(t < -NEG_TOL):
        raise NegativeWeight(f"negative coupling mass {t.min():.3g}")
    t = np.clip(t, 0.0, None)
    total = t.sum()
    if not abs(total - 1.0) <= MASS_TOL:
        raise BadMass(f"coupling mass {total!r}, expected 1")
    return Coupling(product, _frozen(t / total))


def product_measure(measures) -> Coupling:
    measures = list(measures)
    if len(measures) < 2:
        raise ShadowOTError("a product needs at least two factors")
    product = ProductSpace(tuple(m.space for m in measures))
    t = measures[0].weights
    for m in measures[1:]:
        t = np.multiply.outer(t, m.weights)
    return Coupling(product, _frozen(t))


def marginal(pi: Coupling, axis: int) -> DiscreteMeasure:
    N = pi.product.N
    if not isinstance(axis, (int, np.integer)) or not -N <= axis < N:
        raise BadAxis(f"axis {axis!r} invalid for {N} factors")
    axis = int(axis) % N
    others = tuple(k for k in range(N) if k != axis)
    w = pi.tensor.sum(axis=others)
    return DiscreteMeasure(pi.product.factors[axis], _frozen(w))


def product_distance(x, y, p, product: ProductSpace | None = None) -> float:
    """d_{X,p}(x, y).

    With ``product`` given, ``x`` and ``y`` are atom index tuples; otherwise
    they are tuples of per-factor Euclidean coordinates (scalars or vectors).
    """
    if product is not None:
        return product.distance(np.asarray(x), np.asarray(y), p)
    if len(x) != len(y):
        raise ShadowOTError("points live in products of different length")
    d = np.array([float(np.linalg.norm(np.atleast_1d(np.asarray(a, float) - np.asarray(b, float)))) for a, b in zip(x, y)])
    if math.isinf(p):
        return float(d.max(initial=0.0))
    return float(np.sum(d**p) ** (1.0 / p))


def p_moment(mu: DiscreteMeasure, p, anchor=None, anchor_index=None) -> float:
    """(sum_x w(x) d(x, anchor)^p)^(1/p); the anchor defaults to the origin."""
    if not 1 <= p < math.inf:
        raise ShadowOTError("p_moment needs p in [1, inf)")
    d = mu.space.distances_to(anchor, anchor_index)
    return float(np.sum(mu.weights * d**p) ** (1.0 / p))


def iter_atoms(shape):
    return itertools.product(*(range(n) for n in shape))
