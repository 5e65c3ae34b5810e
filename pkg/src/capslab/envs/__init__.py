from ..errors import ConfigError
from .base import Env, GoalSchedule, Trajectory, Transition, read_action_log, rollout
from .pendulum import Pendulum, PendulumParams, PendulumState, pendulum_reset, pendulum_step
from .quad import DomainShift, QuadParams, QuadRate, QuadRateState, quad_reset, quad_step
from .toy import ToyParams, ToyTrack, ToyTrackState, toy_reset, toy_step

ENV_KINDS = ("toy", "pendulum", "quad")


def make_env(kind: str, params: dict | None = None, shift: dict | None = None) -> Env:
    """Build an environment by name with optional parameter overrides."""
    params = dict(params or {})
    if kind == "toy":
        return ToyTrack(ToyParams(**params))
    if kind == "pendulum":
        return Pendulum(PendulumParams(**params))
    if kind == "quad":
        if "inertia" in params:
            params["inertia"] = tuple(params["inertia"])
        return QuadRate(QuadParams(**params), DomainShift(**shift) if shift is not None else None)
    raise ConfigError(f"unknown environment kind {kind!r}")


__all__ = [
    "ENV_KINDS",
    "DomainShift",
    "Env",
    "GoalSchedule",
    "Pendulum",
    "PendulumParams",
    "PendulumState",
    "QuadParams",
    "QuadRate",
    "QuadRateState",
    "ToyParams",
    "ToyTrack",
    "ToyTrackState",
    "Trajectory",
    "Transition",
    "make_env",
    "pendulum_reset",
    "pendulum_step",
    "quad_reset",
    "quad_step",
    "read_action_log",
    "rollout",
    "toy_reset",
    "toy_step",
]
