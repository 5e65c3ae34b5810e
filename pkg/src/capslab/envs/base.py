"""Transitions, trajectories, setpoint schedules and their text formats."""
from __future__ import annotations

import bisect
import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from ..errors import ConfigError, EnvironmentFault, ParseError


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool
    # true termination (as opposed to hitting the time limit)
    terminal: bool = False


@dataclass
class Trajectory:
    transitions: list[Transition] = field(default_factory=list)
    gamma: float = 0.99

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("discount must lie in [0, 1)")

    def __len__(self) -> int:
        return len(self.transitions)

    def append(self, tr: Transition) -> None:
        self.transitions.append(tr)

    def discounted_return(self) -> float:
        total = 0.0
        for tr in reversed(self.transitions):
            total = tr.reward + self.gamma * total
        return total

    def total_reward(self) -> float:
        return float(sum(tr.reward for tr in self.transitions))

    def is_chained(self) -> bool:
        return all(
            np.array_equal(a.next_state, b.state)
            for a, b in zip(self.transitions[:-1], self.transitions[1:])
        )

    def actions(self) -> np.ndarray:
        return np.array([tr.action for tr in self.transitions])

    def states(self) -> np.ndarray:
        return np.array([tr.state for tr in self.transitions])

    def to_csv(self) -> str:
        """CSV with columns step, state_*, action_*, reward."""
        if not self.transitions:
            return "step,reward\n"
        ns = self.transitions[0].state.size
        na = self.transitions[0].action.size
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step"] + [f"state_{i}" for i in range(ns)] + [f"action_{i}" for i in range(na)] + ["reward"])
        for k, tr in enumerate(self.transitions):
            w.writerow([k] + [repr(float(v)) for v in tr.state] + [repr(float(v)) for v in tr.action] + [repr(float(tr.reward))])
        return buf.getvalue()


def read_action_log(path) -> np.ndarray:
    """Action columns of a trajectory CSV as an array ``(steps, channels)``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ParseError("empty log", line=1)
    header = rows[0]
    cols = [i for i, name in enumerate(header) if name.startswith("action_")]
    if not cols:
        raise ParseError("no action_* columns in header", line=1)
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
        try:
            values = [float(row[i]) for i in cols]
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from exc
        if not all(np.isfinite(values)):
            raise ParseError("non-finite action value", line=lineno)
        data.append(values)
    if not data:
        raise ParseError("log has a header but no samples", line=2)
    return np.array(data)


@dataclass(frozen=True)
class GoalSchedule:
    """Piecewise-constant setpoint: ``changes`` is a sorted list of (step, value)."""

    changes: tuple[tuple[int, tuple[float, ...]], ...]

    def __post_init__(self):
        if not self.changes or self.changes[0][0] != 0:
            raise ConfigError("schedule must define a value at step 0")
        steps = [s for s, _ in self.changes]
        if steps != sorted(set(steps)):
            raise ConfigError("schedule steps must be strictly increasing")
        object.__setattr__(self, "_steps", steps)
        object.__setattr__(self, "_values", [np.array(v, dtype=np.float64) for _, v in self.changes])

    @property
    def dim(self) -> int:
        return len(self.changes[0][1])

    def value_at(self, step: int) -> np.ndarray:
        i = bisect.bisect_right(self._steps, step) - 1
        return self._values[i]

    @classmethod
    def constant(cls, value) -> "GoalSchedule":
        return cls(((0, tuple(float(v) for v in np.atleast_1d(value))),))

    @classmethod
    def random_steps(cls, seed: int, horizon: int, interval: int, low: float, high: float, dim: int = 1) -> "GoalSchedule":
        if interval <= 0:
            raise ConfigError("schedule interval must be positive")
        rng = np.random.default_rng(seed)
        changes = []
        for step in range(0, max(horizon, 1), interval):
            changes.append((step, tuple(float(v) for v in rng.uniform(low, high, size=dim))))
        return cls(tuple(changes))

    def to_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step"] + [f"setpoint_{i}" for i in range(self.dim)])
        for step, value in self.changes:
            w.writerow([step] + [repr(v) for v in value])
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "GoalSchedule":
        rows = [r for r in csv.reader(io.StringIO(text))]
        if not rows or not rows[0] or rows[0][0] != "step":
            raise ParseError("schedule header must start with 'step'", line=1)
        width = len(rows[0])
        changes = []
        for lineno, row in enumerate(rows[1:], start=2):
            if not row:
                continue
            if len(row) != width:
                raise ParseError(f"expected {width} fields, got {len(row)}", line=lineno)
            try:
                changes.append((int(row[0]), tuple(float(v) for v in row[1:])))
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from exc
        try:
            return cls(tuple(changes))
        except ConfigError as exc:
            raise ParseError(str(exc)) from exc


def check_action(action, dim: int) -> np.ndarray:
    a = np.asarray(action, dtype=np.float64).reshape(-1)
    if a.size != dim:
        raise EnvironmentFault(f"expected action of size {dim}, got {a.size}")
    if not np.all(np.isfinite(a)):
        raise EnvironmentFault(f"non-finite action {a}")
    return a


class Env(Protocol):
    """Step interface shared by all environments."""

    obs_dim: int
    action_dim: int
    action_bound: float
    control_rate: float
    horizon: int

    def reset(self, seed: int) -> np.ndarray: ...

    def step(self, action) -> tuple[np.ndarray, float, bool, bool]:
        """Returns ``(obs, reward, terminated, truncated)``."""
        ...

    def tracking_error(self) -> float | None: ...


def rollout(env: Env, policy, seed: int, gamma: float = 0.99, horizon: int | None = None) -> Trajectory:
    """Run ``policy(obs) -> action`` for one episode; actions are recorded as clamped."""
    obs = env.reset(seed)
    traj = Trajectory(gamma=gamma)
    limit = horizon if horizon is not None else env.horizon
    for _ in range(limit):
        a = np.clip(np.asarray(policy(obs), dtype=np.float64).reshape(-1), -env.action_bound, env.action_bound)
        nxt, r, term, trunc = env.step(a)
        traj.append(Transition(obs, a, r, nxt, term or trunc, term))
        obs = nxt
        if term or trunc:
            break
    return traj
