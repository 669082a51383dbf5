"""
Exact finite probability distributions.

A FiniteDist is a probability vector over a domain indexed 0..size-1.
Multi-coordinate domains keep their per-coordinate sizes in `shape` and
flatten row-major (last coordinate fastest); that ordering is the one
every file format in the package relies on.
"""

import logging
from dataclasses import dataclass
from functools import reduce
from typing import Sequence, Tuple, Union

import numpy as np

from equilearn.config import get_settings
from equilearn.exceptions import DistributionError

logger = logging.getLogger(__name__)

Element = Union[int, Tuple[int, ...]]


def _readonly(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FiniteDist:
    probs: np.ndarray
    shape: Tuple[int, ...] = ()

    def __post_init__(self):
        probs = _readonly(np.ravel(self.probs))
        shape = tuple(int(s) for s in self.shape) or (probs.size,)
        if probs.size < 1:
            raise DistributionError("Distribution domain must have at least one element")
        if int(np.prod(shape)) != probs.size:
            raise DistributionError(f"Shape {shape} does not match {probs.size} probabilities")
        if not np.all(np.isfinite(probs)):
            raise DistributionError("Probabilities must be finite")
        if np.any(probs < 0):
            raise DistributionError(f"Negative probability at index {int(np.argmin(probs))}")
        total = float(probs.sum())
        if abs(total - 1.0) > get_settings().normalization_tol:
            raise DistributionError(f"Probabilities sum to {total!r}, expected 1")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "shape", shape)

    # -------------------------
    # Constructors
    # -------------------------
    @classmethod
    def normalize(cls, weights, shape: Tuple[int, ...] = ()) -> "FiniteDist":
        """Explicit renormalization of non-negative weights."""
        w = np.asarray(weights, dtype=np.float64)
        total = w.sum()
        if not total > 0:
            raise DistributionError("Cannot normalize weights with zero total mass")
        return cls(w / total, shape or w.shape)

    @classmethod
    def uniform(cls, shape: Union[int, Tuple[int, ...]]) -> "FiniteDist":
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        size = int(np.prod(shape))
        return cls(np.full(size, 1.0 / size), shape)

    @classmethod
    def point_mass(cls, element: Element, shape: Union[int, Tuple[int, ...]]) -> "FiniteDist":
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        probs = np.zeros(int(np.prod(shape)))
        probs[np.ravel_multi_index(np.atleast_1d(element), shape)] = 1.0
        return cls(probs, shape)

    @classmethod
    def from_joint(cls, table) -> "FiniteDist":
        table = np.asarray(table, dtype=np.float64)
        return cls(table.ravel(), table.shape)

    # -------------------------
    # Accessors
    # -------------------------
    @property
    def size(self) -> int:
        return self.probs.size

    @property
    def ndim(self) -> int:
        return len(self.shape)

    def table(self) -> np.ndarray:
        """Probabilities reshaped to the per-coordinate domain."""
        return self.probs.reshape(self.shape)

    def prob(self, element: Element) -> float:
        return float(self.table()[tuple(np.atleast_1d(element))])

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs > 0)

    def __repr__(self) -> str:
        return f"FiniteDist(shape={self.shape}, probs={self.probs.tolist()})"


@dataclass(frozen=True, eq=False)
class ProductDist:
    factors: Tuple[FiniteDist, ...]

    def __post_init__(self):
        factors = tuple(self.factors)
        if not factors:
            raise DistributionError("A product distribution needs at least one factor")
        if any(f.ndim != 1 for f in factors):
            raise DistributionError("Product factors must be one-dimensional distributions")
        object.__setattr__(self, "factors", factors)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(f.size for f in self.factors)

    def prob(self, element: Sequence[int]) -> float:
        if len(element) != len(self.factors):
            raise DistributionError(f"Expected a {len(self.factors)}-tuple, got {element!r}")
        return float(np.prod([f.probs[x] for f, x in zip(self.factors, element)]))

    def joint_table(self) -> np.ndarray:
        return reduce(np.multiply.outer, (f.probs for f in self.factors))

    def joint(self) -> FiniteDist:
        return FiniteDist.from_joint(self.joint_table())


@dataclass(frozen=True, eq=False)
class MixtureOfProducts:
    """Uniform mixture of T product distributions over a common product domain."""
    components: Tuple[ProductDist, ...]

    def __post_init__(self):
        components = tuple(self.components)
        if not components:
            raise DistributionError("A mixture needs at least one component (T >= 1)")
        shapes = {c.shape for c in components}
        if len(shapes) != 1:
            raise DistributionError(f"Mixture components disagree on domain sizes: {sorted(shapes)}")
        object.__setattr__(self, "components", components)

    @property
    def rank(self) -> int:
        return len(self.components)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.components[0].shape

    def prob(self, element: Sequence[int]) -> float:
        return sum(c.prob(element) for c in self.components) / self.rank

    def joint_table(self) -> np.ndarray:
        return sum(c.joint_table() for c in self.components) / self.rank

    def joint(self) -> FiniteDist:
        return FiniteDist.from_joint(self.joint_table())


# -------------------------
# Operations
# -------------------------
def tv_distance(p: FiniteDist, q: FiniteDist) -> float:
    if p.size != q.size:
        raise DistributionError(f"Domain size mismatch: {p.size} vs {q.size}")
    return 0.5 * float(np.abs(p.probs - q.probs).sum())


def marginal(joint: FiniteDist, axis: Union[int, Sequence[int]]) -> FiniteDist:
    """Keep the given coordinate(s) and sum out every other one."""
    keep = (axis,) if isinstance(axis, int) else tuple(axis)
    for a in keep:
        if not 0 <= a < joint.ndim:
            raise DistributionError(f"Axis {a} out of range for a {joint.ndim}-coordinate domain")
    drop = tuple(a for a in range(joint.ndim) if a not in keep)
    table = joint.table().sum(axis=drop) if drop else joint.table()
    # sum() returns the kept axes in ascending order
    order = [sorted(keep).index(a) for a in keep]
    return FiniteDist.from_joint(np.transpose(table, order))


def condition(joint: FiniteDist, x: int, axis: int = 0) -> FiniteDist:
    """p(. | x) over the remaining coordinates, where x indexes coordinate `axis`."""
    if not 0 <= axis < joint.ndim:
        raise DistributionError(f"Axis {axis} out of range for a {joint.ndim}-coordinate domain")
    if not 0 <= x < joint.shape[axis]:
        raise DistributionError(f"Coordinate value {x} out of range on axis {axis}")
    row = np.take(joint.table(), x, axis=axis)
    mass = float(row.sum())
    if mass <= 0.0:
        raise DistributionError(f"Cannot condition on axis {axis} = {x}: marginal probability is zero")
    row = row / mass
    return FiniteDist(row.ravel(), row.shape if row.ndim else (1,))


def sample(d: FiniteDist, rng_state: np.random.Generator) -> Element:
    """Draw one element; multi-coordinate domains return a tuple."""
    cdf = np.cumsum(d.probs)
    u = rng_state.random() * cdf[-1]
    index = min(int(np.searchsorted(cdf, u, side="right")), d.size - 1)
    if d.ndim == 1:
        return index
    return tuple(int(c) for c in np.unravel_index(index, d.shape))


def sample_many(d: FiniteDist, rng_state: np.random.Generator, count: int) -> np.ndarray:
    """Draw `count` flat indices at once (same inversion rule as `sample`)."""
    cdf = np.cumsum(d.probs)
    u = rng_state.random(count) * cdf[-1]
    return np.minimum(np.searchsorted(cdf, u, side="right"), d.size - 1)


def sample_rows(tables: np.ndarray, rng_state: np.random.Generator) -> np.ndarray:
    """One draw per row of a (count, size) array of probability rows."""
    cdf = np.cumsum(tables, axis=1)
    u = rng_state.random(tables.shape[0]) * cdf[:, -1]
    return np.minimum((cdf <= u[:, None]).sum(axis=1), tables.shape[1] - 1)


def behaviorize(mixed: FiniteDist) -> ProductDist:
    """Product of the per-coordinate marginals of a distribution over tuples."""
    return ProductDist(tuple(marginal(mixed, a) for a in range(mixed.ndim)))
