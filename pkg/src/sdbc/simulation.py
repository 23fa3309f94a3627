"""Deterministic fixed-timestep 2D kinematics for differential-drive robots.

All state updates are pure array transforms over a batch axis so that many
trials advance in lockstep; the scalar entry points wrap the batched code
with singleton arrays, which keeps the two paths identical by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(a: np.ndarray | float) -> np.ndarray | float:
    """Wrap angles into [-pi, pi)."""
    return (a + math.pi) % TWO_PI - math.pi


@dataclass(frozen=True)
class RobotBody:
    """Pose plus wheel commands of one differential-drive robot."""

    x: float
    y: float
    heading: float
    radius: float
    left: float = 0.0
    right: float = 0.0


@dataclass(frozen=True)
class Arena:
    """Wall segments (x1, y1, x2, y2) and the enclosing bounding box."""

    walls: tuple[tuple[float, float, float, float], ...]
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax

    def wall_array(self) -> np.ndarray:
        if not self.walls:
            return np.empty((0, 4))
        return np.asarray(self.walls, dtype=float)

    @property
    def diagonal(self) -> float:
        xmin, ymin, xmax, ymax = self.bounds
        return math.hypot(xmax - xmin, ymax - ymin)


def step_kinematics_arrays(
    x: np.ndarray,
    y: np.ndarray,
    heading: np.ndarray,
    left: np.ndarray,
    right: np.ndarray,
    dt: float,
    v_max: float,
    axle: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One differential-drive step for arrays of robots.

    Linear speed is v_max*(l+r)/2 and angular speed v_max*(r-l)/axle; the
    translation uses the mid-step heading, which is exact for constant
    commands along an arc.
    """
    lin = v_max * (left + right) * 0.5
    ang = v_max * (right - left) / axle
    mid = heading + 0.5 * ang * dt
    nx = x + lin * dt * np.cos(mid)
    ny = y + lin * dt * np.sin(mid)
    return nx, ny, normalize_angle(heading + ang * dt)


def step_kinematics(body: RobotBody, dt: float, v_max: float, axle: float) -> RobotBody:
    """Scalar wrapper over the array kinematics update."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x, y, h = step_kinematics_arrays(
        np.array([body.x]),
        np.array([body.y]),
        np.array([body.heading]),
        np.array([body.left]),
        np.array([body.right]),
        dt,
        v_max,
        axle,
    )
    return replace(body, x=float(x[0]), y=float(y[0]), heading=float(h[0]))


def _segment_closest_points(pos: np.ndarray, walls: np.ndarray) -> np.ndarray:
    """Closest point on each wall for each robot: (..., W, 2)."""
    a = walls[:, 0:2]
    d = walls[:, 2:4] - a
    seg_sq = np.maximum((d * d).sum(axis=1), 1e-30)
    rel = pos[..., None, :] - a
    t = np.clip((rel * d).sum(axis=-1) / seg_sq, 0.0, 1.0)
    return a + t[..., None] * d


def resolve_collisions_arrays(
    pos: np.ndarray,
    radius: float,
    active: np.ndarray,
    walls: np.ndarray,
    max_passes: int = 32,
    tol: float = 1e-9,
) -> np.ndarray:
    """Separate overlapping robot pairs and push robots out of walls.

    `pos` is (B, N, 2); inactive robots are ignored.  Pairs split the
    correction evenly; a pair at identical centres separates along +x/-x
    by index order so the outcome is deterministic.  Returns `pos` itself
    when nothing overlaps, a corrected copy otherwise.
    """
    n = pos.shape[1]
    pair_ok = active[:, None, :] & active[:, :, None]
    copied = False
    for _ in range(max_passes):
        dx = pos[..., :, None, 0] - pos[..., None, :, 0]
        dy = pos[..., :, None, 1] - pos[..., None, :, 1]
        pair_d = np.sqrt(dx * dx + dy * dy)
        np.einsum("bii->bi", pair_d)[:] = np.inf
        pair_hit = pair_ok & (pair_d < 2.0 * radius - tol)

        wall_hit = None
        closest = None
        if walls.shape[0] > 0:
            closest = _segment_closest_points(pos, walls)  # (B, N, W, 2)
            delta = pos[:, :, None, :] - closest
            wall_d = np.sqrt((delta * delta).sum(axis=-1))
            wall_hit = active[:, :, None] & (wall_d < radius - tol)

        if not pair_hit.any() and (wall_hit is None or not wall_hit.any()):
            break
        if not copied:
            pos = pos.copy()
            copied = True

        if pair_hit.any():
            upper = np.triu(pair_hit, k=1)
            for i, j in zip(*np.nonzero(upper.any(axis=0))):
                delta = pos[:, j] - pos[:, i]
                dist = np.sqrt((delta * delta).sum(axis=1))
                overlap = pair_ok[:, i, j] & (dist < 2.0 * radius - tol)
                if not overlap.any():
                    continue
                degenerate = overlap & (dist < 1e-12)
                safe = np.where(dist > 1e-12, dist, 1.0)
                unit = delta / safe[:, None]
                unit[degenerate] = (1.0, 0.0)
                push = np.where(overlap, (2.0 * radius - dist) * 0.5, 0.0)
                pos[:, i] -= unit * push[:, None]
                pos[:, j] += unit * push[:, None]

        if wall_hit is not None and wall_hit.any():
            # walls are processed in order; later pushes see earlier ones
            for w in np.nonzero(wall_hit.any(axis=(0, 1)))[0]:
                cw = _segment_closest_points(pos, walls[w : w + 1])[:, :, 0, :]
                dw = pos - cw
                distw = np.sqrt((dw * dw).sum(axis=-1))
                hw = active & (distw < radius - tol)
                if not hw.any():
                    continue
                seg = walls[w]
                normal = np.array([-(seg[3] - seg[1]), seg[2] - seg[0]])
                nrm = math.hypot(normal[0], normal[1])
                normal = normal / (nrm if nrm > 0 else 1.0)
                safe = np.where(distw > 1e-12, distw, 1.0)
                unit = dw / safe[..., None]
                unit = np.where((distw > 1e-12)[..., None], unit, normal)
                pos = np.where(hw[..., None], cw + unit * radius, pos)
    return pos


def resolve_collisions(bodies: list[RobotBody], arena: Arena) -> list[RobotBody]:
    """Scalar wrapper: resolve one set of robots against an arena."""
    if not bodies:
        return []
    pos = np.array([[(b.x, b.y) for b in bodies]], dtype=float)
    active = np.ones((1, len(bodies)), dtype=bool)
    out = resolve_collisions_arrays(pos, bodies[0].radius, active, arena.wall_array())
    return [
        replace(b, x=float(out[0, i, 0]), y=float(out[0, i, 1]))
        for i, b in enumerate(bodies)
    ]


def range_bearing_arrays(
    ox: np.ndarray,
    oy: np.ndarray,
    heading: np.ndarray,
    tx: np.ndarray,
    ty: np.ndarray,
    max_range: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Normalised range, relative bearing, and a sensed mask for arrays."""
    dx = tx - ox
    dy = ty - oy
    dist = np.sqrt(dx * dx + dy * dy)
    sensed = dist <= max_range
    bearing = normalize_angle(np.arctan2(dy, dx) - heading)
    return dist / max_range, bearing, sensed


def sense_range_bearing(
    observer: RobotBody, target: tuple[float, float], max_range: float
) -> tuple[float, float] | None:
    """Normalised range in [0, 1] and bearing in [-pi, pi), or None if out
    of range."""
    if max_range <= 0:
        raise ValueError("max_range must be positive")
    r, b, sensed = range_bearing_arrays(
        np.array([observer.x]),
        np.array([observer.y]),
        np.array([observer.heading]),
        np.array([target[0]]),
        np.array([target[1]]),
        max_range,
    )
    if not sensed[0]:
        return None
    return float(r[0]), float(b[0])


def square_arena(size: float) -> Arena:
    """A closed square arena with corners at (0, 0) and (size, size)."""
    s = size
    return Arena(
        walls=((0, 0, s, 0), (s, 0, s, s), (s, s, 0, s), (0, s, 0, 0)),
        bounds=(0.0, 0.0, s, s),
    )
