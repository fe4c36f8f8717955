"""JSON file formats for measures, costs and couplings.

Measure::

    {"metric": "euclidean", "points": [[x, y], ...], "weights": [...]}
    {"metric": "explicit", "points": ["a", "b", ...], "dist": [[...]], "weights": [...]}

Cost::

    {"kind": "tensor", "values": [[...]], "epsilon": 1.0}
    {"kind": "sqeuclidean"}  or  {"kind": "power", "p": 1.5}

Coupling::

    {"spaces": [<measure without weights>, ...], "tensor": [[...]]}

Infinite orders are written as the string ``"inf"``.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .certificates import _clean
from .errors import ConfigInvalid, ShadowOTError
from .measures import Coupling, DiscreteMeasure, MetricSpace, ProductSpace, make_coupling, make_discrete_measure
from .regularized import CostSpec, make_cost, power_cost, sqeuclidean_cost

COST_KINDS = ("tensor", "sqeuclidean", "power")


def _load(src):
    if isinstance(src, dict):
        return src
    try:
        return json.loads(Path(src).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{src}: not valid JSON ({exc})") from None


def parse_order(x) -> float:
    if isinstance(x, str):
        if x.strip().lower() in ("inf", "infinity"):
            return math.inf
        try:
            x = float(x)
        except ValueError:
            raise ConfigInvalid(f"not an order: {x!r}") from None
    x = float(x)
    if not x >= 1:
        raise ConfigInvalid(f"orders must be >= 1, got {x}")
    return x


def space_from_dict(d: dict) -> MetricSpace:
    metric = d.get("metric", "euclidean")
    if "points" not in d:
        raise ConfigInvalid("a space needs 'points'")
    if metric == "euclidean":
        return MetricSpace.euclidean(d["points"])
    if metric == "explicit":
        if "dist" not in d:
            raise ConfigInvalid("an explicit metric needs 'dist'")
        return MetricSpace.explicit(d["dist"], labels=d["points"])
    raise ConfigInvalid(f"unknown metric {metric!r}")


def space_to_dict(space: MetricSpace) -> dict:
    if space.kind == "euclidean":
        return {"metric": "euclidean", "points": space.coords.tolist()}
    return {"metric": "explicit", "points": list(space.labels), "dist": space.dist.tolist()}


def measure_from_dict(d: dict) -> DiscreteMeasure:
    if "weights" not in d:
        raise ConfigInvalid("a measure needs 'weights'")
    return make_discrete_measure(space_from_dict(d), d["weights"])


def measure_to_dict(mu: DiscreteMeasure) -> dict:
    return {**space_to_dict(mu.space), "weights": mu.weights.tolist()}


def load_measure(src) -> DiscreteMeasure:
    return measure_from_dict(_load(src))


def cost_from_dict(d: dict, product: ProductSpace) -> tuple[CostSpec, float]:
    """Build the cost on ``product``; returns ``(cost, epsilon)``."""
    kind = d.get("kind", "tensor")
    eps = float(d.get("epsilon", 1.0))
    if not eps > 0:
        raise ConfigInvalid("epsilon must be positive")
    if kind == "tensor":
        if "values" not in d:
            raise ConfigInvalid("a tensor cost needs 'values'")
        return make_cost(product, np.asarray(d["values"], dtype=np.float64)), eps
    if kind == "sqeuclidean":
        return sqeuclidean_cost(product), eps
    if kind == "power":
        if "p" not in d:
            raise ConfigInvalid("a power cost needs 'p'")
        return power_cost(product, parse_order(d["p"])), eps
    raise ConfigInvalid(f"unknown cost kind {kind!r}; expected one of {COST_KINDS}")


def load_cost(src, product: ProductSpace) -> tuple[CostSpec, float]:
    return cost_from_dict(_load(src), product)


def coupling_to_dict(pi: Coupling) -> dict:
    return {"spaces": [space_to_dict(f) for f in pi.product.factors], "tensor": pi.tensor.tolist()}


def coupling_from_dict(d: dict) -> Coupling:
    if "coupling" in d:  # a solve report
        d = d["coupling"]
    if "spaces" not in d or "tensor" not in d:
        raise ConfigInvalid("a coupling needs 'spaces' and 'tensor'")
    product = ProductSpace(tuple(space_from_dict(s) for s in d["spaces"]))
    return make_coupling(product, np.asarray(d["tensor"], dtype=np.float64))


def load_coupling(src) -> Coupling:
    return coupling_from_dict(_load(src))


def dumps(obj) -> str:
    """Deterministic JSON (sorted keys, ``"inf"`` for infinities)."""
    return json.dumps(_clean(obj), sort_keys=True, indent=1, allow_nan=False)


def write_json(path, obj):
    Path(path).write_text(dumps(obj) + "\n")


__all__ = [
    "ShadowOTError",
    "load_measure",
    "measure_from_dict",
    "measure_to_dict",
    "load_cost",
    "cost_from_dict",
    "load_coupling",
    "coupling_from_dict",
    "coupling_to_dict",
    "parse_order",
    "dumps",
]
