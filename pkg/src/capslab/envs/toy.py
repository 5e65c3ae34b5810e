"""One-dimensional goal tracking.

The agent observes the gap ``s = g - c`` between goal and current position
and moves the position directly: ``c' = c + a``. The ideal action is ``a = s``.
The original write-up states the update as ``s' = c + a``; read literally that
mixes a position with a gap, so the position form is used here, which is the
reading under which ``a = s`` is optimal.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .base import GoalSchedule, check_action


@dataclass(frozen=True)
class ToyParams:
    action_max: float = 2.0
    horizon: int = 500
    goal_interval: int = 50
    goal_range: float = 1.0


@dataclass(frozen=True)
class ToyTrackState:
    position: float
    goal: float
    step: int
    schedule: GoalSchedule

    @property
    def observation(self) -> np.ndarray:
        return np.array([self.goal - self.position])


def toy_reset(seed: int, params: ToyParams = ToyParams(), schedule: GoalSchedule | None = None) -> ToyTrackState:
    if schedule is None:
        schedule = GoalSchedule.random_steps(
            seed, params.horizon, params.goal_interval, -params.goal_range, params.goal_range
        )
    return ToyTrackState(0.0, float(schedule.value_at(0)[0]), 0, schedule)


def toy_step(state: ToyTrackState, action, params: ToyParams = ToyParams()):
    """Returns ``(next_state, reward, done)``; reward is ``-|s'|``."""
    a = float(np.clip(check_action(action, 1)[0], -params.action_max, params.action_max))
    step = state.step + 1
    position = state.position + a
    goal = float(state.schedule.value_at(step)[0])
    nxt = replace(state, position=position, goal=goal, step=step)
    reward = -abs(goal - position)
    return nxt, reward, step >= params.horizon


class ToyTrack:
    obs_dim = 1
    action_dim = 1

    def __init__(self, params: ToyParams = ToyParams(), schedule: GoalSchedule | None = None):
        self.params = params
        self.schedule = schedule
        self.action_bound = params.action_max
        self.control_rate = 1.0
        self.horizon = params.horizon
        self.state: ToyTrackState | None = None

    def reset(self, seed: int) -> np.ndarray:
        self.state = toy_reset(seed, self.params, self.schedule)
        return self.state.observation

    def step(self, action):
        self.state, reward, done = toy_step(self.state, action, self.params)
        return self.state.observation, reward, False, done

    def tracking_error(self) -> float:
        return abs(self.state.goal - self.state.position)
