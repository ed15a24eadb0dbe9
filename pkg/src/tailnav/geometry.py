"""Differential-drive kinematics and clearance geometry.

All functions here are pure and shared by the simulator, the planner
rollouts, and the safety filter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Below this angular rate the arc update degenerates to a straight line.
OMEGA_EPS = 1e-6

# Returned clearance when there is nothing to collide with.  A finite
# sentinel keeps downstream arithmetic (risk terms, filter scores) finite.
EMPTY_CLEARANCE = 100.0


def normalize_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float  # radians, kept in (-pi, pi]

    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class VelocityCommand:
    v: float      # m/s
    omega: float  # rad/s

    def clamped(self, v_max: float, omega_max: float) -> "VelocityCommand":
        return VelocityCommand(
            min(max(self.v, -v_max), v_max),
            min(max(self.omega, -omega_max), omega_max),
        )


@dataclass(frozen=True)
class Disc:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValueError(f"disc radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class WallSegment:
    a: tuple[float, float]
    b: tuple[float, float]

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError("wall endpoints must be distinct")


def step_unicycle(pose: Pose, cmd: VelocityCommand, dt: float) -> Pose:
    """Advance a unicycle pose by one exact constant-twist step.

    Uses the closed-form circular arc when |omega| >= OMEGA_EPS and the
    straight-line limit otherwise.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    v, w = cmd.v, cmd.omega
    th = pose.heading
    if abs(w) < OMEGA_EPS:
        x = pose.x + v * dt * math.cos(th)
        y = pose.y + v * dt * math.sin(th)
        th_new = th + w * dt
    else:
        r = v / w
        th_new = th + w * dt
        x = pose.x + r * (math.sin(th_new) - math.sin(th))
        y = pose.y - r * (math.cos(th_new) - math.cos(th))
    return Pose(x, y, normalize_angle(th_new))


def point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance from point p to segment ab."""
    ab = b - a
    denom = float(ab @ ab)
    t = float((p - a) @ ab) / denom
    t = min(max(t, 0.0), 1.0)
    closest = a + t * ab
    return float(np.hypot(*(p - closest)))


def clearance(
    robot: Disc,
    obstacles: Sequence[Disc] = (),
    walls: Sequence[WallSegment] = (),
) -> float:
    """Signed minimum clearance of a robot disc against discs and walls.

    Negative iff the robot overlaps something.  Empty scenes return the
    EMPTY_CLEARANCE sentinel.
    """
    c = EMPTY_CLEARANCE
    rc = np.asarray(robot.center, dtype=float)
    for ob in obstacles:
        d = float(np.hypot(rc[0] - ob.center[0], rc[1] - ob.center[1]))
        c = min(c, d - robot.radius - ob.radius)
    for w in walls:
        d = point_segment_distance(rc, np.asarray(w.a, dtype=float),
                                   np.asarray(w.b, dtype=float))
        c = min(c, d - robot.radius)
    return c


def clearance_points(
    robot_xy: np.ndarray,
    robot_radius: float,
    obstacle_xy: np.ndarray,
    obstacle_radii: np.ndarray,
    wall_a: np.ndarray,
    wall_b: np.ndarray,
) -> np.ndarray:
    """Vectorized signed clearance for batches of robot positions.

    robot_xy: (..., 2) robot centers.
    obstacle_xy: (..., n_obs, 2) obstacle centers, broadcastable against
        robot_xy's batch shape.
    obstacle_radii: (n_obs,).
    wall_a, wall_b: (n_walls, 2) segment endpoints.

    Returns signed clearance with batch shape of robot_xy[..., 0].
    """
    batch = np.broadcast_shapes(robot_xy.shape[:-1], obstacle_xy.shape[:-2])
    c = np.full(batch, EMPTY_CLEARANCE)
    if obstacle_xy.shape[-2] > 0:
        diff = robot_xy[..., None, :] - obstacle_xy
        d = np.sqrt(np.sum(diff * diff, axis=-1)) - obstacle_radii - robot_radius
        c = np.minimum(c, d.min(axis=-1))
    if wall_a.shape[0] > 0:
        ab = wall_b - wall_a                        # (W, 2)
        denom = np.sum(ab * ab, axis=-1)            # (W,)
        ap = robot_xy[..., None, :] - wall_a        # (..., W, 2)
        t = np.clip(np.sum(ap * ab, axis=-1) / denom, 0.0, 1.0)
        closest = wall_a + t[..., None] * ab
        dw = np.sqrt(np.sum((robot_xy[..., None, :] - closest) ** 2, axis=-1))
        c = np.minimum(c, dw.min(axis=-1) - robot_radius)
    return c


def goal_distance(pose: Pose, goal: tuple[float, float]) -> float:
    """Euclidean distance from the pose's position to the goal point."""
    return math.hypot(pose.x - goal[0], pose.y - goal[1])
