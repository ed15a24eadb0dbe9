"""Fixed discrete barrier-style execution filter.

The filter sees only the current observation, the tracked obstacle
velocity means, and the static map: it never touches the conjecture
posterior, scenario batches, or CVaR values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .beliefs import ObstacleBelief
from .geometry import Pose, VelocityCommand, clearance_points, goal_distance
from .planner import CommandLattice, tie_break_key
from .scenarios import robot_rollout_poses, walls_as_arrays
from .world import Observation, StaticMap


@dataclass(frozen=True)
class FilterParams:
    c_hard: float = 0.15        # hard clearance margin, m
    kappa: float = 0.5          # barrier gain on margin erosion
    horizon: int = 10           # filter rollout steps
    w_progress: float = 1.0
    w_clearance: float = 2.0
    w_deviation: float = 0.5
    infeasible_penalty: float = 1e3
    dt: float = 0.1
    robot_radius: float = 0.3
    v_max: float = 1.0
    omega_max: float = 1.5

    def __post_init__(self):
        if min(self.c_hard, self.kappa, self.horizon, self.w_progress,
               self.w_clearance, self.w_deviation, self.infeasible_penalty) <= 0:
            raise ValueError("filter parameters must be positive")


def filter_rollout(
    u: VelocityCommand,
    obs: Observation,
    beliefs: Mapping[int, ObstacleBelief],
    static_map: StaticMap,
    horizon: int,
    dt: float,
    robot_radius: float,
    goal: tuple[float, float],
) -> tuple[float, float]:
    """Short local rollout: constant command, obstacles extrapolated
    linearly at their tracked velocity means.

    Returns (minimum predicted clearance over the rollout, including the
    current pose, and goal-distance reduction over the rollout).
    """
    start = obs.robot
    poses, xy = robot_rollout_poses(u, start, horizon, dt)
    xy = np.vstack([[start.x, start.y], xy])

    n = len(obs.obstacles)
    wall_a, wall_b = walls_as_arrays(static_map)
    if n > 0:
        pos0 = np.array([p for _, p, _ in obs.obstacles])  # (n, 2)
        radii = np.array([r for _, _, r in obs.obstacles])
        vels = np.array([
            beliefs[oid].vel_mean if oid in beliefs else np.zeros(2)
            for oid, _, _ in obs.obstacles
        ])
        ks = np.arange(horizon + 1)[:, None, None]
        traj = pos0[None, :, :] + ks * dt * vels[None, :, :]  # (H+1, n, 2)
    else:
        radii = np.zeros(0)
        traj = np.zeros((horizon + 1, 0, 2))
    clear = clearance_points(xy, robot_radius, traj, radii, wall_a, wall_b)
    c_min = float(np.min(clear))
    progress = goal_distance(start, goal) - goal_distance(poses[-1], goal)
    return c_min, progress


def is_feasible(u: VelocityCommand, c_t: float, c_min: float,
                params: FilterParams) -> bool:
    """Barrier conditions: margin kept, and margin erosion bounded."""
    return (c_min >= params.c_hard
            and (c_min - params.c_hard) + params.kappa * (c_t - params.c_hard) >= 0.0)


def command_deviation(u: VelocityCommand, u_nom: VelocityCommand,
                      params: FilterParams) -> float:
    """Euclidean distance in (v, omega) with omega rescaled to speed units."""
    scale = params.v_max / params.omega_max
    return math.hypot(u.v - u_nom.v, scale * (u.omega - u_nom.omega))


def apply_filter(
    u_nom: VelocityCommand,
    obs: Observation,
    beliefs: Mapping[int, ObstacleBelief],
    lattice: CommandLattice,
    goal: tuple[float, float],
    static_map: StaticMap,
    params: FilterParams,
) -> VelocityCommand:
    """Select the executed command from {u_nom} union the lattice.

    Feasible candidates are scored by progress, predicted clearance, and
    closeness to u_nom; infeasible ones carry a large penalty.  If every
    candidate is infeasible the filter falls back to the candidate with
    the highest predicted clearance.
    """
    candidates = [u_nom] + list(lattice.commands)

    # Current clearance from the observation alone.
    wall_a, wall_b = walls_as_arrays(static_map)
    rxy = np.array([obs.robot.x, obs.robot.y])
    if obs.obstacles:
        pos0 = np.array([p for _, p, _ in obs.obstacles])
        radii = np.array([r for _, _, r in obs.obstacles])
    else:
        pos0 = np.zeros((0, 2))
        radii = np.zeros(0)
    c_t = float(clearance_points(rxy, params.robot_radius, pos0, radii,
                                 wall_a, wall_b))

    best_key = None
    best_cmd = None
    fallback_key = None
    fallback_cmd = None
    any_feasible = False
    for idx, u in enumerate(candidates):
        c_min, progress = filter_rollout(
            u, obs, beliefs, static_map, params.horizon, params.dt,
            params.robot_radius, goal)
        feasible = is_feasible(u, c_t, c_min, params)
        score = (params.w_progress * progress
                 + params.w_clearance * c_min
                 - params.w_deviation * command_deviation(u, u_nom, params))
        if not feasible:
            score -= params.infeasible_penalty
        key = tie_break_key(score, u, params.v_max, idx)
        if feasible and (not any_feasible or key < best_key):
            any_feasible = True
            best_key, best_cmd = key, u
        fkey = tie_break_key(c_min, u, params.v_max, idx)
        if fallback_key is None or fkey < fallback_key:
            fallback_key, fallback_cmd = fkey, u
    return best_cmd if any_feasible else fallback_cmd
