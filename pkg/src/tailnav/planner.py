"""Tail-risk command scoring over a finite velocity lattice.

Implements the empirical CVaR tail term in both the sorted-tail and the
threshold-minimization forms, plus mean and worst-case objective variants,
and deterministic argmax selection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import Pose, VelocityCommand, clearance_points
from .scenarios import (
    InformationState,
    ScenarioBatch,
    reactive_trajectories,
    robot_rollout_poses,
    walls_as_arrays,
)
from .world import StaticMap

OBJECTIVES = ("cvar", "mean", "worst")


@dataclass(frozen=True)
class CommandLattice:
    commands: tuple[VelocityCommand, ...]

    def __post_init__(self):
        if not self.commands:
            raise ValueError("lattice must be nonempty")
        if not any(c.v == 0.0 and c.omega == 0.0 for c in self.commands):
            raise ValueError("lattice must contain the stop command")

    @property
    def v_max(self) -> float:
        return max(abs(c.v) for c in self.commands)

    @staticmethod
    def default(v_max: float, omega_max: float) -> "CommandLattice":
        cmds = tuple(
            VelocityCommand(fv * v_max, fo * omega_max)
            for fv in (0.0, 0.25, 0.5, 0.75, 1.0)
            for fo in (-1.0, -0.5, 0.0, 0.5, 1.0)
        )
        return CommandLattice(cmds)


@dataclass(frozen=True)
class PlannerParams:
    N: int = 64
    H: int = 20
    alpha: float = 0.1
    risk_weight: float = 2.0
    objective: str = "cvar"
    top_k: int = 6
    c_safe: float = 0.5
    fractional_tail: bool = True

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError("alpha must lie in (0, 1]")
        if self.risk_weight < 0:
            raise ValueError("risk weight must be nonnegative")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")


@dataclass(frozen=True)
class CommandScore:
    command: VelocityCommand
    mean_reward: float
    tail_risk: float
    objective: float             # mean_reward - risk_weight * tail_risk
    rewards: np.ndarray = field(repr=False)  # (N,) per-scenario progress
    risks: np.ndarray = field(repr=False)    # (N,) per-scenario risk


def empirical_cvar(risks: Sequence[float], alpha: float,
                   fractional: bool = True) -> float:
    """Average of the largest-risk alpha fraction of the samples.

    The fractional convention weights the boundary sample so the result
    exactly matches the quantile-integral tail average; with
    fractional=False the plain mean of the top ceil(alpha*N) samples is
    returned instead.
    """
    x = np.asarray(risks, dtype=float)
    if x.size == 0:
        raise ValueError("risks must be nonempty")
    if not (0.0 < alpha <= 1.0):
        raise ValueError("alpha must lie in (0, 1]")
    x = np.sort(x)[::-1]
    m = alpha * x.size
    if m <= 1.0:
        return float(x[0])
    if not fractional:
        k = min(int(np.ceil(m)), x.size)
        return float(x[:k].mean())
    k = int(np.floor(m))
    if k >= x.size:
        return float(x.mean())
    total = float(x[:k].sum())
    if m > k:
        total += (m - k) * float(x[k])
    return total / m


def cvar_via_threshold(risks: Sequence[float], alpha: float) -> float:
    """CVaR via the threshold-minimization form.

    Minimizes eta + mean((x - eta)_+) / alpha over the empirical
    distribution; the minimum over the sample values attains the infimum.
    """
    x = np.asarray(risks, dtype=float)
    if x.size == 0:
        raise ValueError("risks must be nonempty")
    if not (0.0 < alpha <= 1.0):
        raise ValueError("alpha must lie in (0, 1]")
    etas = np.unique(x)
    excess = np.clip(x[None, :] - etas[:, None], 0.0, None).mean(axis=1)
    return float(np.min(etas + excess / alpha))


def score_command(
    u: VelocityCommand,
    batch: ScenarioBatch,
    start: Pose,
    goal: tuple[float, float],
    static_map: StaticMap,
    params: PlannerParams,
) -> CommandScore:
    """Roll one command against every scenario in the batch and score it."""
    H, dt = batch.horizon, batch.dt
    _poses, xy = robot_rollout_poses(u, start, H, dt)
    wall_a, wall_b = walls_as_arrays(static_map)

    from .geometry import goal_distance
    reward = goal_distance(start, goal) - goal_distance(
        Pose(xy[-1, 0], xy[-1, 1], 0.0), goal)

    scen = batch.scenarios
    N = len(scen)
    risks = np.empty(N)

    # Non-reactive scenarios share one stacked clearance evaluation;
    # reactive ones are re-propagated in one stack per conjecture.
    nonreactive = [i for i, s in enumerate(scen) if not s.reactive]
    groups: dict[int, list[int]] = {}
    for i, s in enumerate(scen):
        if s.reactive:
            groups.setdefault(s.conjecture.id, []).append(i)
    if nonreactive:
        trajs = np.stack([scen[i].trajectory for i in nonreactive])  # (M,H,n,2)
        radii = scen[nonreactive[0]].radii
        c = clearance_points(xy, batch.robot_radius, trajs, radii,
                             wall_a, wall_b)                          # (M,H)
        g = np.clip((params.c_safe - c) / params.c_safe, 0.0, 1.0)
        risks[nonreactive] = g.max(axis=-1)
    for idxs in groups.values():
        trajs = reactive_trajectories([scen[i] for i in idxs], start, xy, dt)
        c = clearance_points(xy, batch.robot_radius, trajs,
                             scen[idxs[0]].radii, wall_a, wall_b)
        g = np.clip((params.c_safe - c) / params.c_safe, 0.0, 1.0)
        risks[idxs] = g.max(axis=-1)

    rewards = np.full(N, reward)
    if params.objective == "cvar":
        tail = empirical_cvar(risks, params.alpha, params.fractional_tail)
    elif params.objective == "mean":
        tail = float(risks.mean())
    else:
        tail = float(risks.max())
    score = reward - params.risk_weight * tail
    return CommandScore(command=u, mean_reward=reward, tail_risk=tail,
                        objective=score, rewards=rewards, risks=risks)


def tie_break_key(score: float, cmd: VelocityCommand, v_max: float,
                  index: int) -> tuple:
    """Deterministic preference: higher score, then smaller |omega|, then
    speed closest to v_max/2, then lattice order."""
    return (-score, abs(cmd.omega), abs(cmd.v - v_max / 2.0), index)


def select_command(
    info: InformationState,
    lattice: CommandLattice,
    batch: ScenarioBatch,
    params: PlannerParams,
) -> tuple[VelocityCommand, list[CommandScore]]:
    """Score every lattice command and return the deterministic argmax."""
    scores = [
        score_command(u, batch, info.robot, info.goal, info.static_map, params)
        for u in lattice.commands
    ]
    v_max = lattice.v_max
    best = min(
        range(len(scores)),
        key=lambda i: tie_break_key(scores[i].objective, scores[i].command,
                                    v_max, i),
    )
    return scores[best].command, scores
