"""Bounded test functionals ``h(x_1..x_n, y)`` for the identity checks.

Each functional evaluates pointwise via ``__call__(anchors, rest)`` and
provides a vectorised ``sum_over(points)`` for the left-hand sums over
ordered tuples of distinct events.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import as_points, pairwise_distances


def _pts(y) -> np.ndarray:
    return y.points if hasattr(y, "points") else (as_points(y) if np.size(y) else np.empty((0, 2)))


class Functional:
    order: int = 1

    def __call__(self, anchors, rest) -> float:
        raise NotImplementedError

    def sum_over(self, points) -> float:
        """``sum over ordered distinct n-tuples of h(tuple, points minus tuple)``."""
        pts = _pts(points)
        total = 0.0
        for idx in itertools.permutations(range(len(pts)), self.order):
            mask = np.ones(len(pts), bool)
            mask[list(idx)] = False
            total += self(pts[list(idx)], pts[mask])
        return total

    def at_many(self, anchors, config) -> np.ndarray:
        """First-order functional evaluated at many anchors against one configuration."""
        a = as_points(anchors)
        cfg = _pts(config)
        return np.array([self(p[None, :], cfg) for p in a])

    def evaluate_many(self, tuples, config) -> np.ndarray:
        """``h`` at each anchor tuple of an ``(m, order, 2)`` array against one configuration."""
        t = np.asarray(tuples, dtype=float)
        if self.order == 1:
            return self.at_many(t[:, 0], config)
        cfg = _pts(config)
        return np.array([self(a, cfg) for a in t])


@dataclass(frozen=True)
class Constant(Functional):
    value: float = 1.0
    order: int = 1

    def __call__(self, anchors, rest):
        return self.value

    def sum_over(self, points):
        n = len(_pts(points))
        count = n if self.order == 1 else n * (n - 1)
        return self.value * count

    def at_many(self, anchors, config):
        return np.full(len(as_points(anchors)), self.value)

    def evaluate_many(self, tuples, config):
        return np.full(len(tuples), float(self.value))


def _neighbour_counts(anchors: np.ndarray, cfg: np.ndarray, radius: float) -> np.ndarray:
    if len(cfg) == 0 or len(anchors) == 0:
        return np.zeros(len(anchors), dtype=np.int64)
    d2 = np.sum((anchors[:, None, :] - cfg[None, :, :]) ** 2, axis=-1)
    return np.count_nonzero(d2 <= radius * radius, axis=1)


def _self_counts(pts: np.ndarray, radius: float) -> np.ndarray:
    """Neighbours within ``radius`` of each point, itself excluded."""
    return _neighbour_counts(pts, pts, radius) - 1 if len(pts) else np.zeros(0, dtype=np.int64)


@dataclass(frozen=True)
class NeighbourCount(Functional):
    """``min(#(y in b(x, radius)), cap)``."""

    radius: float
    cap: int = 50
    order: int = 1

    def __call__(self, anchors, rest):
        return float(min(_neighbour_counts(as_points(anchors)[:1], _pts(rest), self.radius)[0], self.cap))

    def sum_over(self, points):
        return float(np.minimum(_self_counts(_pts(points), self.radius), self.cap).sum())

    def at_many(self, anchors, config):
        return np.minimum(_neighbour_counts(as_points(anchors), _pts(config), self.radius), self.cap).astype(float)


@dataclass(frozen=True)
class HasNeighbour(Functional):
    """``1(y meets b(x, radius))``."""

    radius: float
    order: int = 1

    def __call__(self, anchors, rest):
        return float(_neighbour_counts(as_points(anchors)[:1], _pts(rest), self.radius)[0] > 0)

    def sum_over(self, points):
        return float(np.count_nonzero(_self_counts(_pts(points), self.radius) > 0))

    def at_many(self, anchors, config):
        return (_neighbour_counts(as_points(anchors), _pts(config), self.radius) > 0).astype(float)


@dataclass(frozen=True)
class NoNeighbour(Functional):
    """``1(y misses b(x, radius))``."""

    radius: float
    order: int = 1

    def __call__(self, anchors, rest):
        return float(_neighbour_counts(as_points(anchors)[:1], _pts(rest), self.radius)[0] == 0)

    def sum_over(self, points):
        return float(np.count_nonzero(_self_counts(_pts(points), self.radius) == 0))

    def at_many(self, anchors, config):
        return (_neighbour_counts(as_points(anchors), _pts(config), self.radius) == 0).astype(float)


@dataclass(frozen=True)
class IsEmpty(Functional):
    """``1(y is empty)``."""

    order: int = 1

    def __call__(self, anchors, rest):
        return float(len(_pts(rest)) == 0)

    def sum_over(self, points):
        n = len(_pts(points))
        return float(n == self.order)

    def at_many(self, anchors, config):
        return np.full(len(as_points(anchors)), float(len(_pts(config)) == 0))


@dataclass(frozen=True)
class InDisk(Functional):
    """``1(|x - center| <= radius)``; ignores the rest of the pattern."""

    center: tuple[float, float]
    radius: float
    order: int = 1

    def __call__(self, anchors, rest):
        return float(np.sum((as_points(anchors)[0] - self.center) ** 2) <= self.radius ** 2)

    def sum_over(self, points):
        return float(np.count_nonzero(self.at_many(_pts(points), None)))

    def at_many(self, anchors, config):
        a = as_points(anchors)
        return (np.sum((a - np.asarray(self.center)) ** 2, axis=1) <= self.radius ** 2).astype(float)


@dataclass(frozen=True)
class PairWithin(Functional):
    """``1(|x1 - x2| <= distance)``."""

    distance: float
    order: int = 2

    def __call__(self, anchors, rest):
        a = as_points(anchors)
        return float(np.sum((a[0] - a[1]) ** 2) <= self.distance ** 2)

    def sum_over(self, points):
        pts = _pts(points)
        if len(pts) < 2:
            return 0.0
        return float(_self_counts(pts, self.distance).sum())

    def evaluate_many(self, tuples, config):
        t = np.asarray(tuples, dtype=float)
        return (np.sum((t[:, 0] - t[:, 1]) ** 2, axis=1) <= self.distance ** 2).astype(float)


@dataclass(frozen=True)
class PairIsolated(Functional):
    """``1(|x1 - x2| <= distance) * 1(y misses b(x1, radius))``."""

    distance: float
    radius: float
    order: int = 2

    def __call__(self, anchors, rest):
        a = as_points(anchors)
        close = np.sum((a[0] - a[1]) ** 2) <= self.distance ** 2
        return float(close and _neighbour_counts(a[:1], _pts(rest), self.radius)[0] == 0)

    def sum_over(self, points):
        pts = _pts(points)
        if len(pts) < 2:
            return 0.0
        d = pairwise_distances(pts)
        np.fill_diagonal(d, np.inf)
        counts = np.count_nonzero(d <= self.radius, axis=1)
        others = counts[:, None] - (d <= self.radius)
        return float(np.count_nonzero((d <= self.distance) & (others == 0)))

    def evaluate_many(self, tuples, config):
        t = np.asarray(tuples, dtype=float)
        close = np.sum((t[:, 0] - t[:, 1]) ** 2, axis=1) <= self.distance ** 2
        return (close & (_neighbour_counts(t[:, 0], _pts(config), self.radius) == 0)).astype(float)


@dataclass(frozen=True)
class PairNeighbourCount(Functional):
    """``min(#(y in b(x1, radius)), cap)`` for an ordered pair ``(x1, x2)``; ``x2`` is ignored."""

    radius: float
    cap: int = 50
    order: int = 2

    def __call__(self, anchors, rest):
        a = as_points(anchors)
        return float(min(_neighbour_counts(a[:1], _pts(rest), self.radius)[0], self.cap))

    def sum_over(self, points):
        pts = _pts(points)
        n = len(pts)
        if n < 2:
            return 0.0
        c = _self_counts(pts, self.radius)
        # partners outside the ball leave c_i neighbours, partners inside leave c_i - 1
        far = (n - 1 - c) * np.minimum(c, self.cap)
        near = c * np.minimum(np.maximum(c - 1, 0), self.cap)
        return float(np.sum(far + near))

    def evaluate_many(self, tuples, config):
        t = np.asarray(tuples, dtype=float)
        return np.minimum(_neighbour_counts(t[:, 0], _pts(config), self.radius), self.cap).astype(float)
