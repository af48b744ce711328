"""Motion models: goal sampling, time-to-go heuristic, and the linear model.

A motion model answers "given the history, a concrete goal point, and a
step budget, what trajectory comes next?". The intention-aware linear
model (ILM) answers with the straight line from the current position to
the goal. ``predict_with_intention`` composes goal sampling inside the
hypothesized region, the time-to-go heuristic, and the model itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from intentraj.core import GoalRegion, Position, Trajectory, average_step_length, region_contains

__all__ = [
    "MotionModel",
    "LinearMotionModel",
    "PredictionRequest",
    "sample_goal_position",
    "time_to_go",
    "ilm_predict",
    "predict_with_intention",
    "EPS_SPEED",
    "T_MAX",
]

# Floor on the average speed and cap on the predicted horizon; both guard
# stationary pedestrians where distance / speed blows up.
EPS_SPEED = 1e-6
T_MAX = 1000


@runtime_checkable
class MotionModel(Protocol):
    """Behavioral contract: produce exactly ``steps`` future positions."""

    def predict(self, history: Trajectory, goal: Position, steps: int) -> Trajectory: ...


@dataclass(frozen=True)
class PredictionRequest:
    """A fully resolved prediction task: history, region, sampled goal, horizon."""

    history: Trajectory
    region: GoalRegion
    sampled_goal: Position
    steps: int

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not region_contains(self.region, self.sampled_goal):
            raise ValueError("sampled_goal must lie inside the region")


def sample_goal_position(region: GoalRegion, rng: np.random.Generator) -> Position:
    """Uniform sample over the region's square (degenerate width gives the center)."""
    offsets = rng.uniform(-region.half_width, region.half_width, size=2)
    return Position(region.center.x + offsets[0], region.center.y + offsets[1])


def time_to_go(
    history: Trajectory,
    goal: Position,
    eps_speed: float = EPS_SPEED,
    t_max: int = T_MAX,
) -> int:
    """Heuristic remaining step count: distance to goal over average step length.

    The ratio is rounded up so the agent can cover the distance at its
    average speed, then clamped into [1, t_max]. A 1e-12 relative slack
    inside the ceiling keeps exactly-uniform trajectories (ratio an integer
    up to float rounding) from being bumped one step long.
    """
    speed = max(average_step_length(history), eps_speed)
    dist = math.hypot(goal.x - history[-1][0], goal.y - history[-1][1])
    steps = math.ceil((dist / speed) * (1.0 - 1e-12))
    return int(min(max(steps, 1), t_max))


def ilm_predict(history: Trajectory, goal: Position, steps: int) -> Trajectory:
    """Straight line from the current position to ``goal`` in ``steps`` equal moves.

    The k-th predicted position is ``x_t + (k / steps) * (g - x_t)``, so the
    final position equals the goal exactly.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x_t = history.points[-1]
    g = goal.as_array()
    fractions = np.arange(1, steps + 1, dtype=float)[:, None] / steps
    return Trajectory(x_t + fractions * (g - x_t), history.frame_interval)


def _ilm_batch(x_t: np.ndarray, goals: np.ndarray, steps: np.ndarray, upto: int | None = None) -> np.ndarray:
    """Straight lines from ``x_t`` to each goal, padded by holding the endpoint.

    Returns an ``(n, T, 2)`` array where ``T = max(steps)`` (or ``upto``),
    with row i following its own ``steps[i]``-step line and repeating the
    goal beyond it. Used to vectorize per-particle linear predictions.
    """
    horizon = int(steps.max()) if upto is None else int(upto)
    k = np.arange(1, horizon + 1, dtype=float)
    fractions = np.minimum(k[None, :] / steps[:, None], 1.0)  # (n, T)
    return x_t[None, None, :] + fractions[:, :, None] * (goals - x_t)[:, None, :]


class LinearMotionModel:
    """Intention-aware linear model: the straight line to the goal."""

    def predict(self, history: Trajectory, goal: Position, steps: int) -> Trajectory:
        return ilm_predict(history, goal, steps)

    def predict_batch(
        self, history: Trajectory, goals: np.ndarray, steps: np.ndarray, upto: int | None = None
    ) -> np.ndarray:
        """Vectorized predictions for many goals; see :func:`_ilm_batch`."""
        return _ilm_batch(history.points[-1], np.asarray(goals, dtype=float), np.asarray(steps), upto)


def predict_with_intention(
    model: MotionModel,
    history: Trajectory,
    region: GoalRegion,
    rng: np.random.Generator,
    eps_speed: float = EPS_SPEED,
    t_max: int = T_MAX,
) -> Trajectory:
    """Sample a goal in the region, compute its horizon, and run the model.

    The goal is drawn fresh on every call, which is what makes repeated
    predictions from the same region hypothesis multi-modal.
    """
    goal = sample_goal_position(region, rng)
    steps = time_to_go(history, goal, eps_speed=eps_speed, t_max=t_max)
    return model.predict(history, goal, steps)
