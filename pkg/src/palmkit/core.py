"""Geometric primitives: points, rectangular windows and point patterns."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

DIM = 2


class GeometryError(ValueError):
    """Raised when a window or pattern would violate its invariants."""


def as_points(points, dim: int = DIM) -> np.ndarray:
    """Coerce ``points`` to a float array of shape (n, dim)."""
    arr = np.asarray(points, dtype=float)
    if arr.size == 0:
        return np.empty((0, dim))
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise GeometryError(f"expected points of shape (n, {dim}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError("point coordinates must be finite")
    return arr


def distance(p, q) -> float:
    """Euclidean distance between two points of equal dimension."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise GeometryError(f"dimension mismatch: {p.shape} vs {q.shape}")
    return float(np.sqrt(np.sum((p - q) ** 2)))


def pairwise_distances(a, b=None) -> np.ndarray:
    """Matrix of Euclidean distances between rows of ``a`` and ``b``."""
    a = as_points(a)
    b = a if b is None else as_points(b)
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


@dataclass(frozen=True)
class Window:
    """Axis-aligned closed box ``[lower, upper]``."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi):
            raise GeometryError("lower and upper corners differ in dimension")
        if not all(np.isfinite(lo + hi)):
            raise GeometryError("window corners must be finite")
        if not all(a < b for a, b in zip(lo, hi)):
            raise GeometryError(f"degenerate window: lower={lo} upper={hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, dim: int = DIM) -> "Window":
        return cls((0.0,) * dim, (1.0,) * dim)

    @classmethod
    def from_bounds(cls, bounds: Sequence[float]) -> "Window":
        """Build from ``(x0, y0, x1, y1)``."""
        bounds = [float(b) for b in bounds]
        if len(bounds) % 2:
            raise GeometryError("bounds need an even number of values")
        d = len(bounds) // 2
        return cls(tuple(bounds[:d]), tuple(bounds[d:]))

    @classmethod
    def parse(cls, text: str) -> "Window":
        """Parse ``"x0,y0,x1,y1"``."""
        try:
            values = [float(v) for v in text.split(",")]
        except ValueError as exc:
            raise GeometryError(f"cannot parse window {text!r}") from exc
        if len(values) != 2 * DIM:
            raise GeometryError(f"window needs {2 * DIM} numbers, got {text!r}")
        return cls.from_bounds(values)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def sides(self) -> np.ndarray:
        return np.subtract(self.upper, self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.lower) + np.asarray(self.upper)) / 2

    @property
    def bounds(self) -> tuple[float, ...]:
        return self.lower + self.upper

    def contains(self, points) -> np.ndarray:
        """Closed-box membership mask for an (n, d) array."""
        pts = as_points(points, self.dim)
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)

    def boundary_distance(self, points) -> np.ndarray:
        """Distance from each (inside) point to the window boundary."""
        pts = as_points(points, self.dim)
        return np.minimum(pts - self.lower, np.subtract(self.upper, pts)).min(axis=1)

    def erode(self, r: float) -> "Window":
        """``{u : b(u, r) inside the window}``, which for a box is a shrunken box."""
        if r < 0:
            raise GeometryError("erosion radius must be nonnegative")
        if not np.all(2 * r < self.sides):
            raise GeometryError(f"erosion by {r} empties the window {self.bounds}")
        return Window(tuple(a + r for a in self.lower), tuple(b - r for b in self.upper))

    def expand(self, r: float) -> "Window":
        if r < 0:
            raise GeometryError("expansion radius must be nonnegative")
        return Window(tuple(a - r for a in self.lower), tuple(b + r for b in self.upper))

    def translate(self, shift) -> "Window":
        shift = np.asarray(shift, dtype=float)
        return Window(tuple(np.add(self.lower, shift)), tuple(np.add(self.upper, shift)))

    def scale(self, s: float) -> "Window":
        return Window(tuple(s * a for a in self.lower), tuple(s * b for b in self.upper))

    def intersects(self, other: "Window") -> bool:
        return all(a <= d and c <= b for a, b, c, d in
                   zip(self.lower, self.upper, other.lower, other.upper))

    def uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.asarray(self.lower) + rng.random((n, self.dim)) * self.sides

    def grid(self, n: int | Sequence[int]) -> tuple[np.ndarray, float]:
        """Midpoint-rule nodes (row-major, x fastest) and the common cell area."""
        shape = (n,) * self.dim if np.isscalar(n) else tuple(n)
        axes = [lo + (np.arange(k) + 0.5) * (hi - lo) / k
                for lo, hi, k in zip(self.lower, self.upper, shape)]
        mesh = np.meshgrid(*axes, indexing="xy")
        nodes = np.column_stack([m.ravel() for m in mesh])
        return nodes, self.volume / float(np.prod(shape))

    def __str__(self) -> str:
        return ",".join(repr(v) for v in self.bounds)


class PointPattern:
    """Finite set of distinct points observed in a window.

    Points are stored as a read-only (n, d) float array in insertion order.
    """

    __slots__ = ("_points", "_window")

    def __init__(self, points, window: Window, *, check: bool = True):
        pts = as_points(points, window.dim).copy()
        if check:
            if len(pts) and not np.all(window.contains(pts)):
                bad = int(np.flatnonzero(~window.contains(pts))[0])
                raise GeometryError(f"point {tuple(pts[bad])} lies outside window {window.bounds}")
            if len(pts) > 1 and len(np.unique(pts, axis=0)) != len(pts):
                raise GeometryError("point pattern contains duplicate points")
        pts.setflags(write=False)
        self._points = pts
        self._window = window

    @classmethod
    def empty(cls, window: Window) -> "PointPattern":
        return cls(np.empty((0, window.dim)), window, check=False)

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def window(self) -> Window:
        return self._window

    def __len__(self) -> int:
        return len(self._points)

    def __iter__(self):
        return iter(self._points)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointPattern):
            return NotImplemented
        return self._window == other._window and np.array_equal(self._points, other._points)

    def __repr__(self) -> str:
        return f"PointPattern(n={len(self)}, window={self._window.bounds})"

    @property
    def intensity(self) -> float:
        """Plug-in estimate N/|W|."""
        return len(self) / self._window.volume

    def translate(self, shift) -> "PointPattern":
        shift = np.asarray(shift, dtype=float)
        return PointPattern(self._points + shift, self._window.translate(shift), check=False)

    def scale(self, s: float) -> "PointPattern":
        return PointPattern(self._points * s, self._window.scale(s), check=False)

    def union(self, other) -> "PointPattern":
        pts = other.points if isinstance(other, PointPattern) else as_points(other)
        return PointPattern(np.vstack([self._points, pts]), self._window)


def restrict(x: PointPattern, window: Window) -> PointPattern:
    """Keep the points of ``x`` inside ``window`` and adopt it as the new window."""
    if not x.window.intersects(window):
        raise GeometryError("restriction window does not meet the pattern window")
    if len(x) == 0:
        return PointPattern.empty(window)
    return PointPattern(x.points[window.contains(x.points)], window, check=False)


def erode(window: Window, r: float) -> Window:
    return window.erode(r)


def pattern_from_points(points: Iterable, window: Window) -> PointPattern:
    return PointPattern(np.asarray(list(points), dtype=float), window)
