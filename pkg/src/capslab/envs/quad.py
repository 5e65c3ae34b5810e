"""Simplified quadrotor body-rate tracking at 1 kHz.

Only the rotational dynamics are simulated: four motors with first-order lag
feed a fixed X-configuration mixer producing roll/pitch/yaw torques, and the
body rates follow ``I w' = tau - w x I w`` with diagonal inertia. There is no
translation and no aerodynamics; the task is to follow a piecewise-constant
rate setpoint. Actions in [-1, 1] map affinely to normalised motor commands
in [0, 1]; thrust is linear in the normalised motor speed.

Observation: ``(setpoint - rates, rates, previous action)`` (10 values).
Reward: ``-reward_scale * ||setpoint - rates||_1``. If any rate exceeds
``max_rate`` the episode ends and the step reward is multiplied by
``divergence_penalty_steps`` (roughly the discounted cost of staying there).
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .base import GoalSchedule, check_action

# rows: roll, pitch, yaw; columns: motors (rear-right, front-right, rear-left, front-left)
MIXER_SIGNS = np.array(
    [
        [-1.0, -1.0, 1.0, 1.0],
        [1.0, -1.0, 1.0, -1.0],
        [-1.0, 1.0, 1.0, -1.0],
    ]
)


@dataclass(frozen=True)
class QuadParams:
    dt: float = 0.001
    motor_tau: float = 0.02
    inertia: tuple[float, float, float] = (1.5e-3, 1.5e-3, 2.5e-3)
    arm_torque: float = 0.2  # N*m per unit normalised thrust, roll and pitch
    yaw_torque: float = 0.02
    horizon: int = 10_000
    setpoint_interval: int = 500
    setpoint_range: float = 2.0  # rad/s, uniform per axis
    max_rate: float = 50.0
    reward_scale: float = 0.1
    divergence_penalty_steps: float = 100.0

    @property
    def mixer(self) -> np.ndarray:
        scale = np.array([self.arm_torque, self.arm_torque, self.yaw_torque])
        return MIXER_SIGNS * scale[:, None]


@dataclass(frozen=True)
class DomainShift:
    """Evaluation-time perturbation standing in for the sim-to-real gap."""

    inertia_range: float = 0.2  # each axis scaled by U(1 - r, 1 + r)
    motor_tau_range: float = 0.5
    obs_noise: float = 0.1  # rad/s, added to the rate components of the observation

    def sample(self, params: QuadParams, rng: np.random.Generator) -> QuadParams:
        inertia = np.array(params.inertia) * rng.uniform(1 - self.inertia_range, 1 + self.inertia_range, size=3)
        tau = params.motor_tau * rng.uniform(1 - self.motor_tau_range, 1 + self.motor_tau_range)
        return replace(params, inertia=tuple(float(v) for v in inertia), motor_tau=float(tau))


@dataclass(frozen=True)
class QuadRateState:
    rates: np.ndarray  # rad/s, body frame
    motors: np.ndarray  # normalised speeds in [0, 1]
    setpoint: np.ndarray
    prev_action: np.ndarray
    step: int
    schedule: GoalSchedule
    diverged: bool = False

    @property
    def observation(self) -> np.ndarray:
        return np.concatenate([self.setpoint - self.rates, self.rates, self.prev_action])


def quad_reset(seed: int, params: QuadParams = QuadParams(), schedule: GoalSchedule | None = None) -> QuadRateState:
    if schedule is None:
        schedule = GoalSchedule.random_steps(
            seed, params.horizon, params.setpoint_interval, -params.setpoint_range, params.setpoint_range, dim=3
        )
    return QuadRateState(
        rates=np.zeros(3),
        motors=np.full(4, 0.5),
        setpoint=schedule.value_at(0),
        prev_action=np.zeros(4),
        step=0,
        schedule=schedule,
    )


def motor_torque(motors: np.ndarray, params: QuadParams = QuadParams()) -> np.ndarray:
    return params.mixer @ motors


def quad_step(state: QuadRateState, motor_cmd, params: QuadParams = QuadParams()):
    """Returns ``(next_state, reward, done)``."""
    a = np.clip(check_action(motor_cmd, 4), -1.0, 1.0)
    cmd = 0.5 * (a + 1.0)
    # zero-order-hold solution of the first-order lag
    decay = np.exp(-params.dt / params.motor_tau)
    motors = cmd + (state.motors - cmd) * decay
    tau = params.mixer @ motors
    w = state.rates
    inertia = np.asarray(params.inertia)
    iw = inertia * w
    gyro = np.array([w[1] * iw[2] - w[2] * iw[1], w[2] * iw[0] - w[0] * iw[2], w[0] * iw[1] - w[1] * iw[0]])
    rates = w + params.dt * (tau - gyro) / inertia
    step = state.step + 1
    setpoint = state.schedule.value_at(step)
    error = float(np.abs(setpoint - rates).sum())
    reward = -params.reward_scale * error
    diverged = bool(np.any(np.abs(rates) > params.max_rate))
    if diverged:
        reward *= params.divergence_penalty_steps
    nxt = QuadRateState(rates, motors, setpoint, a, step, state.schedule, diverged)
    return nxt, reward, diverged or step >= params.horizon


class QuadRate:
    obs_dim = 10
    action_dim = 4
    action_bound = 1.0

    def __init__(
        self,
        params: QuadParams = QuadParams(),
        shift: DomainShift | None = None,
        schedule: GoalSchedule | None = None,
    ):
        self.nominal = params
        self.params = params
        self.shift = shift
        self.schedule = schedule
        self.control_rate = 1.0 / params.dt
        self.horizon = params.horizon
        self.state: QuadRateState | None = None
        self._noise_rng: np.random.Generator | None = None

    def _observe(self) -> np.ndarray:
        obs = self.state.observation
        if self.shift is not None and self.shift.obs_noise > 0:
            noise = self.shift.obs_noise * self._noise_rng.standard_normal(3)
            # noisy gyro reading enters both the error and the rate components
            obs = obs.copy()
            obs[0:3] -= noise
            obs[3:6] += noise
        return obs

    def reset(self, seed: int) -> np.ndarray:
        self.params = self.nominal
        if self.shift is not None:
            rng = np.random.default_rng([seed, 7919])
            self.params = self.shift.sample(self.nominal, rng)
            self._noise_rng = rng
        self.state = quad_reset(seed, self.params, self.schedule)
        return self._observe()

    def step(self, action):
        self.state, reward, done = quad_step(self.state, action, self.params)
        terminated = self.state.diverged
        return self._observe(), reward, terminated, done and not terminated

    def tracking_error(self) -> float:
        """Mean absolute rate error over the three axes, in deg/s."""
        return float(np.degrees(np.abs(self.state.setpoint - self.state.rates).mean()))
