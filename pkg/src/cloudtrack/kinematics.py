"""Frenet-frame vehicle states, discrete double-integrator dynamics, and
reference-path geometry.

States live in path coordinates (s, l): s is arc length along a reference
path, l the signed lateral offset (positive to the left of travel).  The
transition model is the exact zero-order-hold double integrator, so rollouts
are linear in both state and input and replay bit-identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "FrenetState",
    "ControlAction",
    "Trajectory",
    "ReferencePath",
    "ConflictPoint",
    "InvalidStateError",
    "PathRangeError",
    "dynamics_matrices",
    "step",
    "rollout",
    "crossing_time",
    "frenet_to_cartesian",
    "cartesian_to_frenet",
    "straight_path",
    "arc_path",
    "conflict_point",
]


class InvalidStateError(ValueError):
    """A state or action contains non-finite entries."""


class PathRangeError(ValueError):
    """An arc-length coordinate falls outside the path's range."""


@dataclass(frozen=True)
class FrenetState:
    """Single-actor state [s, s_dot, l, l_dot] plus a time stamp.

    ``clamped`` flags that the longitudinal speed was saturated by the plant
    on the step that produced this state; it is excluded from equality.
    """

    s: float
    s_dot: float
    l: float
    l_dot: float
    t: float = 0.0
    clamped: bool = field(default=False, compare=False)

    def as_vector(self) -> np.ndarray:
        return np.array([self.s, self.s_dot, self.l, self.l_dot], dtype=float)

    def is_finite(self) -> bool:
        return all(
            math.isfinite(v) for v in (self.s, self.s_dot, self.l, self.l_dot, self.t)
        )


@dataclass(frozen=True)
class ControlAction:
    """Longitudinal and lateral acceleration command."""

    s_ddot: float
    l_ddot: float

    def as_vector(self) -> np.ndarray:
        return np.array([self.s_ddot, self.l_ddot], dtype=float)

    def is_finite(self) -> bool:
        return math.isfinite(self.s_ddot) and math.isfinite(self.l_ddot)


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered state sequence with a fixed sample interval."""

    states: tuple[FrenetState, ...]
    dt: float

    def __init__(self, states: Sequence[FrenetState], dt: float):
        if len(states) == 0:
            raise ValueError("trajectory must contain at least one state")
        if dt <= 0:
            raise ValueError("dt must be positive")
        for a, b in zip(states, states[1:]):
            if abs((b.t - a.t) - dt) > 1e-6:
                raise ValueError(
                    f"time stamps must advance by dt={dt}: got {a.t} -> {b.t}"
                )
        object.__setattr__(self, "states", tuple(states))
        object.__setattr__(self, "dt", float(dt))

    def __len__(self) -> int:
        return len(self.states)

    @property
    def t0(self) -> float:
        return self.states[0].t

    def state_at(self, k: int) -> FrenetState:
        return self.states[k]

    def as_array(self) -> np.ndarray:
        """(K, 5) array of rows [s, s_dot, l, l_dot, t]."""
        return np.array(
            [[x.s, x.s_dot, x.l, x.l_dot, x.t] for x in self.states], dtype=float
        )


@dataclass(frozen=True)
class ConflictPoint:
    """Geometric crossing of two reference paths.

    ``s_on_path_a`` / ``s_on_path_b`` are the arc-length coordinates of the
    crossing on each path.
    """

    position: tuple[float, float]
    s_on_path_a: float
    s_on_path_b: float


def dynamics_matrices(dt: float) -> tuple[np.ndarray, np.ndarray]:
    """State transition (A) and input (B) matrices of the discrete model."""
    A = np.array(
        [
            [1.0, dt, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, dt],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    B = np.array(
        [
            [0.5 * dt * dt, 0.0],
            [dt, 0.0],
            [0.0, 0.5 * dt * dt],
            [0.0, dt],
        ]
    )
    return A, B


def step(
    x: FrenetState, a: ControlAction, dt: float, v_max: float = math.inf
) -> FrenetState:
    """Advance one sample: x' = A x + B a, with plant-side speed saturation.

    The longitudinal speed of the result is clamped to [0, v_max]; when the
    clamp engages, the returned state carries ``clamped=True``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not x.is_finite() or not a.is_finite():
        raise InvalidStateError(f"non-finite state or action: {x}, {a}")
    A, B = dynamics_matrices(dt)
    nxt = A @ x.as_vector() + B @ a.as_vector()
    s_dot = float(nxt[1])
    clamped = False
    if s_dot < 0.0:
        s_dot, clamped = 0.0, True
    elif s_dot > v_max:
        s_dot, clamped = v_max, True
    return FrenetState(float(nxt[0]), s_dot, float(nxt[2]), float(nxt[3]), x.t + dt, clamped)


def rollout(
    x0: FrenetState,
    actions: Sequence[ControlAction],
    dt: float,
    v_max: float = math.inf,
) -> Trajectory:
    """Fold ``step`` over an action sequence; |actions|+1 states."""
    if len(actions) == 0:
        raise ValueError("action sequence must be non-empty")
    states = [x0]
    for a in actions:
        states.append(step(states[-1], a, dt, v_max))
    return Trajectory(states, dt)


def crossing_time(traj: Trajectory, s_cp: float) -> float | None:
    """First time at which s(t) >= s_cp, linearly interpolated.

    Returns None when the trajectory never reaches s_cp (no-crossing: the
    caller treats this as "no conflict", not as an error).  Assumes s is
    monotone non-decreasing along the trajectory.
    """
    states = traj.states
    if states[0].s >= s_cp:
        return states[0].t
    for prev, cur in zip(states, states[1:]):
        if cur.s >= s_cp:
            ds = cur.s - prev.s
            if ds <= 0.0:
                return cur.t
            frac = (s_cp - prev.s) / ds
            return prev.t + frac * (cur.t - prev.t)
    return None


@dataclass(frozen=True)
class ReferencePath:
    """Piecewise-linear reference path with a per-waypoint arc-length table.

    Arc lengths may be supplied explicitly (e.g. analytic arc lengths for
    sampled circular arcs); by default they are accumulated chord lengths.
    """

    waypoints: np.ndarray  # (K, 2)
    lane_width: float
    name: str = ""
    arc_lengths: np.ndarray = None  # (K,), cumulative, strictly increasing

    def __post_init__(self):
        pts = np.asarray(self.waypoints, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
            raise ValueError("waypoints must be an (K>=2, 2) array")
        object.__setattr__(self, "waypoints", pts)
        if self.arc_lengths is None:
            seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
            arc = np.concatenate([[0.0], np.cumsum(seg)])
        else:
            arc = np.asarray(self.arc_lengths, dtype=float)
        if arc.shape != (pts.shape[0],) or np.any(np.diff(arc) <= 0):
            raise ValueError("arc lengths must be strictly increasing, one per waypoint")
        object.__setattr__(self, "arc_lengths", arc)

    @property
    def length(self) -> float:
        return float(self.arc_lengths[-1])

    def _vertex_headings(self) -> np.ndarray:
        """Per-waypoint headings: unwrapped segment headings averaged at joints.

        Interpolating these along s makes the (s, l) -> plane map injective for
        offsets smaller than the local turning radius, so projection back onto
        the path is well defined even on the concave side of a curve.
        """
        cached = getattr(self, "_headings_cache", None)
        if cached is not None:
            return cached
        d = np.diff(self.waypoints, axis=0)
        seg_headings = np.unwrap(np.arctan2(d[:, 1], d[:, 0]))
        vertex = np.empty(len(self.waypoints))
        vertex[0] = seg_headings[0]
        vertex[-1] = seg_headings[-1]
        vertex[1:-1] = 0.5 * (seg_headings[:-1] + seg_headings[1:])
        object.__setattr__(self, "_headings_cache", vertex)
        return vertex

    def _segment(self, s: float) -> tuple[int, float]:
        """Segment index and interpolation fraction for arc coordinate s."""
        if s < self.arc_lengths[0] - 1e-9 or s > self.arc_lengths[-1] + 1e-9:
            raise PathRangeError(
                f"s={s} outside path '{self.name}' range "
                f"[{self.arc_lengths[0]}, {self.arc_lengths[-1]}]"
            )
        i = int(np.searchsorted(self.arc_lengths, s, side="right")) - 1
        i = min(max(i, 0), len(self.arc_lengths) - 2)
        span = self.arc_lengths[i + 1] - self.arc_lengths[i]
        frac = (s - self.arc_lengths[i]) / span
        return i, float(min(max(frac, 0.0), 1.0))

    def point_at(self, s: float) -> np.ndarray:
        i, frac = self._segment(s)
        return self.waypoints[i] + frac * (self.waypoints[i + 1] - self.waypoints[i])

    def heading_at(self, s: float) -> float:
        i, frac = self._segment(s)
        vh = self._vertex_headings()
        return float(vh[i] + frac * (vh[i + 1] - vh[i]))


def frenet_to_cartesian(
    path: ReferencePath, x: FrenetState
) -> tuple[tuple[float, float], float]:
    """Project a Frenet state into the plane: ((x, y), heading).

    The position is the path point at arc length s offset by l along the
    left normal; the heading is the local path tangent.
    """
    base = path.point_at(x.s)
    heading = path.heading_at(x.s)
    normal = np.array([-math.sin(heading), math.cos(heading)])
    pos = base + x.l * normal
    return (float(pos[0]), float(pos[1])), heading


def cartesian_to_frenet(
    path: ReferencePath, point: Sequence[float]
) -> tuple[float, float]:
    """Project a planar point onto the path: (s, l), l positive to the left.

    Inverts ``frenet_to_cartesian`` by solving (p - c(s)) . tangent(s) = 0 via
    bisection over the arc parameter, which stays well posed on curved paths
    for offsets below the local turning radius.
    """
    p = np.asarray(point, dtype=float)
    arc = path.arc_lengths

    def residual(s: float) -> float:
        base = path.point_at(s)
        heading = path.heading_at(s)
        return float(
            (p[0] - base[0]) * math.cos(heading) + (p[1] - base[1]) * math.sin(heading)
        )

    g = np.array([residual(s) for s in arc])
    if g[0] <= 0.0:
        s_star = float(arc[0])
    elif g[-1] >= 0.0:
        s_star = float(arc[-1])
    else:
        i = int(np.flatnonzero((g[:-1] >= 0.0) & (g[1:] < 0.0))[0])
        lo, hi = float(arc[i]), float(arc[i + 1])
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if residual(mid) >= 0.0:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-12 * (1.0 + path.length):
                break
        s_star = 0.5 * (lo + hi)

    base = path.point_at(s_star)
    heading = path.heading_at(s_star)
    l = float(
        -(p[0] - base[0]) * math.sin(heading) + (p[1] - base[1]) * math.cos(heading)
    )
    return s_star, l


def straight_path(
    start: Sequence[float],
    heading: float,
    length: float,
    lane_width: float = 3.5,
    name: str = "",
    n_points: int = 2,
) -> ReferencePath:
    """Straight segment of given heading and length."""
    start = np.asarray(start, dtype=float)
    direction = np.array([math.cos(heading), math.sin(heading)])
    ss = np.linspace(0.0, length, max(n_points, 2))
    pts = start[None, :] + ss[:, None] * direction[None, :]
    return ReferencePath(pts, lane_width, name, arc_lengths=ss)


def arc_path(
    center: Sequence[float],
    radius: float,
    theta_start: float,
    theta_end: float,
    lane_width: float = 3.5,
    name: str = "",
    n_points: int = 64,
) -> ReferencePath:
    """Circular arc sampled as a polyline carrying analytic arc lengths.

    Waypoints lie exactly on the circle and arc lengths are radius * dtheta,
    so path endpoints land on their closed-form positions.
    """
    center = np.asarray(center, dtype=float)
    thetas = np.linspace(theta_start, theta_end, max(n_points, 2))
    pts = center[None, :] + radius * np.stack(
        [np.cos(thetas), np.sin(thetas)], axis=1
    )
    arc = radius * np.abs(thetas - thetas[0])
    return ReferencePath(pts, lane_width, name, arc_lengths=arc)


def concat_paths(parts: Sequence[ReferencePath], lane_width: float, name: str = "") -> ReferencePath:
    """Join consecutive path pieces (endpoints assumed to coincide)."""
    pts = [parts[0].waypoints]
    arcs = [parts[0].arc_lengths]
    for part in parts[1:]:
        offset = arcs[-1][-1]
        pts.append(part.waypoints[1:])
        arcs.append(part.arc_lengths[1:] + offset)
    return ReferencePath(
        np.concatenate(pts, axis=0), lane_width, name, arc_lengths=np.concatenate(arcs)
    )


def _segment_intersection(p1, p2, q1, q2) -> tuple[float, float] | None:
    """Parametric fractions (ta, tb) of the crossing of two segments, if any."""
    d1 = p2 - p1
    d2 = q2 - q1
    denom = d1[0] * d2[1] - d1[1] * d2[0]
    if abs(denom) < 1e-14:
        return None
    r = q1 - p1
    ta = (r[0] * d2[1] - r[1] * d2[0]) / denom
    tb = (r[0] * d1[1] - r[1] * d1[0]) / denom
    if -1e-12 <= ta <= 1 + 1e-12 and -1e-12 <= tb <= 1 + 1e-12:
        return float(np.clip(ta, 0.0, 1.0)), float(np.clip(tb, 0.0, 1.0))
    return None


def conflict_point(path_a: ReferencePath, path_b: ReferencePath) -> ConflictPoint | None:
    """First geometric crossing of two paths (smallest s on path A), or None."""
    pa, pb = path_a.waypoints, path_b.waypoints
    best = None
    for i in range(len(pa) - 1):
        for j in range(len(pb) - 1):
            hit = _segment_intersection(pa[i], pa[i + 1], pb[j], pb[j + 1])
            if hit is None:
                continue
            ta, tb = hit
            s_a = path_a.arc_lengths[i] + ta * (
                path_a.arc_lengths[i + 1] - path_a.arc_lengths[i]
            )
            s_b = path_b.arc_lengths[j] + tb * (
                path_b.arc_lengths[j + 1] - path_b.arc_lengths[j]
            )
            if best is None or s_a < best[0]:
                pos = pa[i] + ta * (pa[i + 1] - pa[i])
                best = (s_a, s_b, (float(pos[0]), float(pos[1])))
    if best is None:
        return None
    return ConflictPoint(best[2], float(best[0]), float(best[1]))
