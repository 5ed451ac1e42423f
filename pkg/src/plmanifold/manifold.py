"""Geometry for the supported smoothing domains.

Points are stored in ambient coordinates: circle points as (cos a, sin a),
sphere points as unit vectors in R^3, cylinder points as (cos a, sin a, s)
with s the height coordinate.  Coordinates are validated, never silently
projected; projection of raw data happens only in the CLI ingestion layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidPointError

ON_MANIFOLD_TOL = 1e-9

EUCLIDEAN = "euclidean"
CIRCLE = "circle"
SPHERE = "sphere"
CYLINDER = "cylinder"

_KINDS = (EUCLIDEAN, CIRCLE, SPHERE, CYLINDER)


@dataclass(frozen=True)
class Manifold:
    """One of the supported smoothing domains.

    ``dim`` is the intrinsic dimension, ``ambient_dim`` the length of the
    coordinate vectors.  The cylinder has unit radius and a finite height
    interval; the sphere is the unit 2-sphere.
    """

    kind: str
    dim: int
    ambient_dim: int
    height_interval: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown manifold kind {self.kind!r}")
        if self.dim < 1 or self.ambient_dim < self.dim:
            raise ValueError("need dim >= 1 and ambient_dim >= dim")

    @classmethod
    def euclidean(cls, dim: int) -> "Manifold":
        if dim < 1:
            raise ValueError("euclidean dimension must be >= 1")
        return cls(EUCLIDEAN, dim, dim)

    @classmethod
    def circle(cls) -> "Manifold":
        return cls(CIRCLE, 1, 2)

    @classmethod
    def sphere(cls) -> "Manifold":
        return cls(SPHERE, 2, 3)

    @classmethod
    def cylinder(cls, height_interval: tuple[float, float] = (0.0, 1.0)) -> "Manifold":
        lo, hi = float(height_interval[0]), float(height_interval[1])
        if not hi > lo:
            raise ValueError("cylinder height interval must have positive length")
        return cls(CYLINDER, 2, 3, (lo, hi))


@dataclass(frozen=True)
class ManifoldPoint:
    """A point given by its ambient coordinate vector."""

    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=float))


def as_coords(point) -> np.ndarray:
    """Coordinate array of a ManifoldPoint or array-like."""
    if isinstance(point, ManifoldPoint):
        return point.coords
    return np.asarray(point, dtype=float)


def injectivity_radius(manifold: Manifold) -> float:
    """Largest radius with unique minimizing geodesics; caps the bandwidth."""
    if manifold.kind == EUCLIDEAN:
        return math.inf
    return math.pi


def diameter(manifold: Manifold) -> float:
    if manifold.kind == EUCLIDEAN:
        return math.inf
    if manifold.kind == CYLINDER:
        lo, hi = manifold.height_interval
        return math.hypot(math.pi, hi - lo)
    return math.pi


def validate_coords(manifold: Manifold, points, name: str = "point") -> np.ndarray:
    """Check point invariants and return a float array of shape (n, ambient_dim).

    Accepts a single coordinate vector, a batch, a ManifoldPoint or a
    sequence of ManifoldPoints.  Raises InvalidPointError naming the violated
    constraint.
    """
    if isinstance(points, ManifoldPoint):
        arr = points.coords[None, :]
    elif isinstance(points, (list, tuple)) and points and isinstance(points[0], ManifoldPoint):
        arr = np.asarray([p.coords for p in points], dtype=float)
    else:
        arr = np.asarray(points, dtype=float)
        if arr.ndim == 1:
            arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != manifold.ambient_dim:
        raise InvalidPointError(
            f"{name}: expected {manifold.ambient_dim} ambient coordinates, "
            f"got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise InvalidPointError(f"{name}: coordinates must be finite")

    if manifold.kind in (CIRCLE, SPHERE):
        norms = np.linalg.norm(arr, axis=1)
        bad = np.abs(norms - 1.0) > ON_MANIFOLD_TOL
        if np.any(bad):
            i = int(np.argmax(bad))
            raise InvalidPointError(
                f"{name} {i}: {manifold.kind} points must have unit norm; "
                f"|‖coords‖-1| = {abs(norms[i] - 1.0):.3e} exceeds {ON_MANIFOLD_TOL}"
            )
    elif manifold.kind == CYLINDER:
        norms = np.linalg.norm(arr[:, :2], axis=1)
        bad = np.abs(norms - 1.0) > ON_MANIFOLD_TOL
        if np.any(bad):
            i = int(np.argmax(bad))
            raise InvalidPointError(
                f"{name} {i}: cylinder points need unit-norm angular part; "
                f"|‖(c1,c2)‖-1| = {abs(norms[i] - 1.0):.3e} exceeds {ON_MANIFOLD_TOL}"
            )
        lo, hi = manifold.height_interval
        h = arr[:, 2]
        bad = (h < lo - ON_MANIFOLD_TOL) | (h > hi + ON_MANIFOLD_TOL)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise InvalidPointError(
                f"{name} {i}: height coordinate {h[i]!r} outside the cylinder "
                f"height interval ({lo}, {hi})"
            )
    return arr


def _circle_arc(a, b):
    # a, b: (..., 2) broadcastable unit vectors; arc length in [0, pi]
    dot = a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1]
    cross = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return np.abs(np.arctan2(cross, dot))


def cross_distances(manifold: Manifold, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Geodesic distance matrix between two validated coordinate batches.

    Shapes (na, ambient) x (nb, ambient) -> (na, nb).  Assumes coordinates
    were already validated.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if manifold.kind == EUCLIDEAN:
        return np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
    if manifold.kind == CIRCLE:
        return _circle_arc(a[:, None, :], b[None, :, :])
    if manifold.kind == SPHERE:
        dot = a @ b.T
        cx = a[:, None, 1] * b[None, :, 2] - a[:, None, 2] * b[None, :, 1]
        cy = a[:, None, 2] * b[None, :, 0] - a[:, None, 0] * b[None, :, 2]
        cz = a[:, None, 0] * b[None, :, 1] - a[:, None, 1] * b[None, :, 0]
        cross = np.sqrt(cx * cx + cy * cy + cz * cz)
        return np.arctan2(cross, dot)
    arc = _circle_arc(a[:, None, :2], b[None, :, :2])
    dh = a[:, None, 2] - b[None, :, 2]
    return np.hypot(arc, dh)


def pairwise_distances(manifold: Manifold, points: np.ndarray) -> np.ndarray:
    return cross_distances(manifold, points, points)


def geodesic_distance(manifold: Manifold, p, q) -> float:
    """Geodesic distance between two points (validates both)."""
    a = validate_coords(manifold, as_coords(p), name="p")
    b = validate_coords(manifold, as_coords(q), name="q")
    return float(cross_distances(manifold, a, b)[0, 0])


def volume_density_from_distance(manifold: Manifold, r):
    """Volume density as a function of geodesic separation.

    Identically 1 on the flat kinds; sin(r)/r on the sphere (1 at r = 0 by
    continuity).  Vectorized; meaningful only for r inside the injectivity
    radius.
    """
    r = np.asarray(r, dtype=float)
    if manifold.kind != SPHERE:
        return np.ones_like(r)
    out = np.ones_like(r)
    pos = r > 0
    out[pos] = np.sin(r[pos]) / r[pos]
    return out


def volume_density(manifold: Manifold, p, q) -> float:
    """Volume density at q relative to p; requires d(p, q) < injectivity radius."""
    a = validate_coords(manifold, as_coords(p), name="p")
    b = validate_coords(manifold, as_coords(q), name="q")
    r = float(cross_distances(manifold, a, b)[0, 0])
    inj = injectivity_radius(manifold)
    if r >= inj:
        raise DomainError(
            f"separation {r:.6g} is not inside the injectivity radius {inj:.6g}"
        )
    return float(volume_density_from_distance(manifold, np.asarray(r)))


def circle_coords(angles) -> np.ndarray:
    """Embed angles (radians) on the unit circle as (cos, sin) rows."""
    angles = np.asarray(angles, dtype=float)
    return np.column_stack([np.cos(angles), np.sin(angles)])


def cylinder_coords(angles, heights) -> np.ndarray:
    """Embed (angle, height) pairs as (cos, sin, height) rows."""
    angles = np.asarray(angles, dtype=float)
    heights = np.asarray(heights, dtype=float)
    return np.column_stack([np.cos(angles), np.sin(angles), heights])
