"""TSP instances, closed-tour lengths and the route-distance diagnostics."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from offline_tsp.errors import DegenerateSampleError, InvalidArgumentError, InvalidRouteError


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """A set of cities in the unit square.

    ``cities`` is an ``(n, 2)`` float64 array; it is made read-only on
    construction so instances can be shared between workers.
    """

    id: int
    cities: np.ndarray = field(repr=False)

    def __post_init__(self):
        cities = np.array(self.cities, dtype=np.float64)
        if cities.ndim != 2 or cities.shape[1] != 2:
            raise InvalidArgumentError(f"cities must have shape (n, 2), got {cities.shape}")
        if cities.shape[0] < 2:
            raise InvalidArgumentError("an instance needs at least 2 cities")
        if not np.all(np.isfinite(cities)) or cities.min() < 0.0 or cities.max() > 1.0:
            raise InvalidArgumentError("city coordinates must lie in [0, 1]")
        cities.setflags(write=False)
        object.__setattr__(self, "cities", cities)

    @property
    def n(self) -> int:
        return self.cities.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ProblemInstance):
            return NotImplemented
        return self.id == other.id and np.array_equal(self.cities, other.cities)

    def __hash__(self):
        return hash((self.id, self.cities.tobytes()))


@dataclass(frozen=True)
class LipschitzEstimate:
    k_hat: float
    sample_pairs: int


def sample_instance(n: int, rng: np.random.Generator, id: int = 0) -> ProblemInstance:
    if n < 2:
        raise InvalidArgumentError(f"n must be >= 2, got {n}")
    return ProblemInstance(id, rng.random((n, 2)))


def check_route(route, n: int) -> np.ndarray:
    """Return ``route`` as an int array, raising if it is not a permutation of ``range(n)``."""
    order = np.asarray(route)
    if order.ndim != 1 or order.shape[0] != n:
        raise InvalidRouteError(f"route must visit exactly {n} cities, got shape {order.shape}")
    if order.dtype.kind not in "iu":
        if order.size and not np.all(np.equal(np.mod(order, 1), 0)):
            raise InvalidRouteError("route indices must be integers")
        order = order.astype(np.int64)
    if n and (order.min() < 0 or order.max() >= n):
        raise InvalidRouteError(f"route index out of range [0, {n})")
    if np.unique(order).shape[0] != n:
        raise InvalidRouteError("route contains duplicate indices")
    return order


def _closed_length(cities: np.ndarray, order: np.ndarray) -> float:
    pts = cities[order]
    steps = np.roll(pts, -1, axis=0) - pts
    return float(np.sqrt((steps * steps).sum(axis=1)).sum())


def tour_length(instance: ProblemInstance, route) -> float:
    """Euclidean length of the closed tour, including the edge back to the start."""
    order = check_route(route, instance.n)
    return _closed_length(instance.cities, order)


def route_distance(r1, r2) -> float:
    """Fraction of positions at which two routes disagree."""
    a, b = np.asarray(r1), np.asarray(r2)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidArgumentError(f"route shapes differ: {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    return float(np.count_nonzero(a != b)) / a.size


def _max_ratio(lengths: np.ndarray, routes: np.ndarray, pairs) -> tuple[float, int]:
    k_hat, used = 0.0, 0
    for i, j in pairs:
        d = route_distance(routes[i], routes[j])
        if d == 0.0:
            continue
        used += 1
        k_hat = max(k_hat, abs(lengths[i] - lengths[j]) / d)
    return k_hat, used


def estimate_lipschitz(
    instance: ProblemInstance, samples: int, rng: np.random.Generator
) -> LipschitzEstimate:
    """Largest observed ``|length(r1) - length(r2)| / route_distance(r1, r2)`` over random pairs."""
    if samples < 1:
        raise InvalidArgumentError(f"samples must be >= 1, got {samples}")
    n = instance.n
    routes = np.array([rng.permutation(n) for _ in range(2 * samples)])
    lengths = np.array([_closed_length(instance.cities, r) for r in routes])
    k_hat, used = _max_ratio(lengths, routes, ((2 * s, 2 * s + 1) for s in range(samples)))
    if used == 0:
        raise DegenerateSampleError("every sampled route pair was identical")
    return LipschitzEstimate(k_hat, used)


def exhaustive_lipschitz(instance: ProblemInstance) -> LipschitzEstimate:
    """Exact maximum over all pairs of distinct permutations. Only feasible for tiny n."""
    n = instance.n
    if n > 6:
        raise InvalidArgumentError("exhaustive enumeration is limited to n <= 6")
    routes = np.array(list(itertools.permutations(range(n))))
    lengths = np.array([_closed_length(instance.cities, r) for r in routes])
    dist = (routes[:, None, :] != routes[None, :, :]).mean(axis=2)
    iu = np.triu_indices(len(routes), k=1)
    d = dist[iu]
    keep = d > 0
    if not keep.any():
        raise DegenerateSampleError("instance has a single route")
    gaps = np.abs(lengths[:, None] - lengths[None, :])[iu]
    return LipschitzEstimate(float((gaps[keep] / d[keep]).max()), int(keep.sum()))
