"""Torque-limited pendulum swing-up (angle 0 is upright).

Constants and reward follow the widely used gym ``Pendulum`` task:
g=10, m=1, l=1, dt=0.05, |velocity| <= 8, |torque| <= 2, 200 steps. The
update is semi-implicit Euler. The observation is
``(cos angle, sin angle, velocity / 8)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import check_action


@dataclass(frozen=True)
class PendulumParams:
    g: float = 10.0
    m: float = 1.0
    l: float = 1.0
    dt: float = 0.05
    max_speed: float = 8.0
    max_torque: float = 2.0
    horizon: int = 200


@dataclass(frozen=True)
class PendulumState:
    angle: float
    velocity: float
    step: int = 0

    @property
    def observation(self) -> np.ndarray:
        return np.array([np.cos(self.angle), np.sin(self.angle), self.velocity / 8.0])


def wrap_angle(x: float) -> float:
    return ((x + np.pi) % (2 * np.pi)) - np.pi


def pendulum_reset(seed: int) -> PendulumState:
    rng = np.random.default_rng(seed)
    return PendulumState(float(rng.uniform(-np.pi, np.pi)), float(rng.uniform(-1.0, 1.0)))


def pendulum_step(state: PendulumState, torque, params: PendulumParams = PendulumParams()):
    """Returns ``(next_state, reward, done)``; the cost uses the pre-step state."""
    u = float(np.clip(check_action(torque, 1)[0], -params.max_torque, params.max_torque))
    th, thdot = state.angle, state.velocity
    reward = -(wrap_angle(th) ** 2 + 0.1 * thdot**2 + 0.001 * u**2)
    acc = 3.0 * params.g / (2.0 * params.l) * np.sin(th) + 3.0 / (params.m * params.l**2) * u
    new_thdot = float(np.clip(thdot + acc * params.dt, -params.max_speed, params.max_speed))
    new_th = wrap_angle(th + new_thdot * params.dt)
    step = state.step + 1
    return PendulumState(float(new_th), new_thdot, step), float(reward), step >= params.horizon


def mechanical_energy(state: PendulumState, params: PendulumParams = PendulumParams()) -> float:
    """Energy of a uniform rod pivoted at one end (zero at the pivot height)."""
    inertia = params.m * params.l**2 / 3.0
    return 0.5 * inertia * state.velocity**2 + params.m * params.g * params.l / 2.0 * np.cos(state.angle)


class Pendulum:
    obs_dim = 3
    action_dim = 1

    def __init__(self, params: PendulumParams = PendulumParams()):
        self.params = params
        self.action_bound = params.max_torque
        self.control_rate = 1.0 / params.dt
        self.horizon = params.horizon
        self.state: PendulumState | None = None

    def reset(self, seed: int) -> np.ndarray:
        self.state = pendulum_reset(seed)
        return self.state.observation

    def step(self, action):
        self.state, reward, done = pendulum_step(self.state, action, self.params)
        return self.state.observation, reward, False, done

    def tracking_error(self) -> None:
        return None
