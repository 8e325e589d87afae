"""Local terrain-plane estimation and the contact / plan frames built on it."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .rotations import cross, frame_from_z_and_x

MAX_CONDITION = 1e8


class DegeneratePlaneError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TerrainPlane:
    normal: np.ndarray
    point: np.ndarray
    timestamp: float = 0.0
    stale: bool = False

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("plane normal must be a unit vector")
        if n[2] <= 0:
            raise ValueError("plane normal must face upwards")

    @classmethod
    def flat(cls, height=0.0, timestamp=0.0):
        return cls(np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, height]), timestamp)

    @classmethod
    def from_normal(cls, normal, point, timestamp=0.0):
        n = np.asarray(normal, dtype=float)
        return cls(n / np.linalg.norm(n), np.asarray(point, dtype=float), timestamp)

    def signed_distance(self, p):
        return (np.asarray(p) - self.point) @ self.normal

    def project(self, p, direction=None):
        """Project ``p`` onto the plane along ``direction`` (default: the normal)."""
        p = np.asarray(p, dtype=float)
        d = self.normal if direction is None else np.asarray(direction, dtype=float)
        return p - (self.signed_distance(p) / (d @ self.normal)) * d


@dataclass(frozen=True, eq=False)
class ContactFrameInfo:
    origin: np.ndarray
    rotation: np.ndarray     # columns: c_x (rolling direction), c_y, n

    @property
    def rolling_direction(self):
        return self.rotation[:, 0]

    @property
    def lateral(self):
        return self.rotation[:, 1]

    @property
    def normal(self):
        return self.rotation[:, 2]


@dataclass(frozen=True, eq=False)
class PlanFrame:
    origin: np.ndarray
    rotation: np.ndarray     # R_IP

    def to_world(self, p):
        return self.origin + self.rotation @ np.asarray(p)

    def to_local(self, p):
        return self.rotation.T @ (np.asarray(p) - self.origin)

    def vec_to_world(self, v):
        return self.rotation @ np.asarray(v)

    def vec_to_local(self, v):
        return self.rotation.T @ np.asarray(v)


def _wheel_shift(normal, axle, wheel_radius):
    # pi_{W_xz}(-n) r0 / |pi_{W_xz}(-n)|
    a = np.asarray(axle, dtype=float)
    proj = -normal + (normal @ a) * a
    nrm = np.linalg.norm(proj)
    if nrm < 1e-9:
        raise DegeneratePlaneError("wheel axle parallel to the terrain normal")
    return wheel_radius * proj / nrm


def fit_normal(points) -> np.ndarray:
    """Least-squares plane ``z = a x + b y + c`` through ``points``; returns the unit normal."""
    P = np.asarray(points, dtype=float)
    if P.shape[0] < 3:
        raise DegeneratePlaneError("need at least three points")
    A = np.column_stack([P[:, 0], P[:, 1], np.ones(len(P))])
    N = A.T @ A
    if np.linalg.cond(N) > MAX_CONDITION:
        raise DegeneratePlaneError("points are collinear or coincident")
    a, b, _ = np.linalg.solve(N, A.T @ P[:, 2])
    n = np.array([-a, -b, 1.0])
    return n / np.linalg.norm(n)


def estimate_plane(wheel_centers, wheel_axles, wheel_radius, timestamp=0.0, previous=None) -> TerrainPlane:
    """Fit a plane through wheel-centre positions and shift it down to the rim contact points.

    Degenerate input returns ``previous`` flagged stale, or raises if there is none.
    """
    centers = np.asarray(wheel_centers, dtype=float)
    try:
        n = fit_normal(centers)
        shifted = np.array([c + _wheel_shift(n, a, wheel_radius) for c, a in zip(centers, wheel_axles)])
    except DegeneratePlaneError:
        if previous is None:
            raise
        return TerrainPlane(previous.normal, previous.point, previous.timestamp, stale=True)
    return TerrainPlane(n, shifted.mean(axis=0), timestamp)


def contact_frame(plane: TerrainPlane, wheel_axle, wheel_center, wheel_radius) -> ContactFrameInfo:
    n = plane.normal
    w_y = np.asarray(wheel_axle, dtype=float)
    c_x = cross(w_y, n)
    nc = np.linalg.norm(c_x)
    if nc < 1e-6:
        raise ValueError("wheel axle is parallel to the terrain normal")
    c_x = c_x / nc
    c_y = cross(n, c_x)
    d = n - (n @ w_y) * w_y
    rim = np.asarray(wheel_center, dtype=float) - wheel_radius * d / np.linalg.norm(d)
    return ContactFrameInfo(plane.project(rim), np.column_stack([c_x, c_y, n]))


def plan_frame(plane: TerrainPlane, footholds, heading) -> PlanFrame:
    """Plan frame P: origin at the foothold centroid projected on the plane, x along the heading."""
    F = np.atleast_2d(np.asarray(footholds, dtype=float))
    if len(F) < 1:
        raise ValueError("need at least one foothold")
    h = np.asarray(heading, dtype=float)
    if h.ndim == 0:
        h = np.array([np.cos(h), np.sin(h), 0.0])
    R = frame_from_z_and_x(plane.normal, h)
    return PlanFrame(plane.project(F.mean(axis=0)), R)


@dataclass
class TerrainEstimator:
    """Keeps the latest wheel contacts of each leg and emits smoothed plane estimates."""
    wheel_radius: float
    smoothing: float = 0.2
    points_per_leg: int = 1
    plane: TerrainPlane | None = None
    _history: dict = field(default_factory=dict)

    def record(self, leg: int, wheel_center, wheel_axle):
        buf = self._history.setdefault(leg, deque(maxlen=self.points_per_leg))
        buf.append((np.array(wheel_center, dtype=float), np.array(wheel_axle, dtype=float)))

    def update(self, timestamp: float) -> TerrainPlane:
        entries = [e for buf in self._history.values() for e in buf]
        if len(entries) < 3:
            if self.plane is None:
                raise DegeneratePlaneError("not enough contacts recorded")
            return self.plane
        centers = np.array([e[0] for e in entries])
        axles = np.array([e[1] for e in entries])
        raw = estimate_plane(centers, axles, self.wheel_radius, timestamp, previous=self.plane)
        if self.plane is None or raw.stale:
            self.plane = raw
            return raw
        n = (1.0 - self.smoothing) * self.plane.normal + self.smoothing * raw.normal
        n /= np.linalg.norm(n)
        shifted = np.array([c + _wheel_shift(n, a, self.wheel_radius) for c, a in zip(centers, axles)])
        self.plane = TerrainPlane(n, shifted.mean(axis=0), timestamp)
        return self.plane
