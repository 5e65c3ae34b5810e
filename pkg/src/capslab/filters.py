"""Causal output filters and the closed-loop filter-interference experiment.

Filters start from rest (all past inputs and outputs zero), so the linear
ones are plain LTI systems and superposition holds exactly on recorded
streams. The EMA parameter ``alpha`` is the weight kept on the previous
output: ``y_t = alpha * y_{t-1} + (1 - alpha) * x_t``, so a larger alpha
smooths harder and ``alpha = 0`` passes the input through.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .envs import GoalSchedule, ToyParams, ToyTrack
from .errors import ConfigError, UsageError

FILTER_KINDS = ("identity", "ema", "median", "fir")
SETTLE_BAND = 0.05


class _Filter:
    channels: int | None = None

    def _check(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.ndim != 1:
            raise UsageError("filters take one action vector per call")
        if self.channels is None:
            self.channels = x.size
            self._start(x.size)
        elif x.size != self.channels:
            raise UsageError(f"filter holds {self.channels} channels, got {x.size}")
        return x

    def _start(self, channels: int) -> None:
        pass

    def reset(self) -> None:
        self.channels = None

    def __call__(self, x) -> np.ndarray:
        return filter_apply(self, x)


@dataclass(eq=False)
class IdentityFilter(_Filter):
    def step(self, x: np.ndarray) -> np.ndarray:
        return x.copy()

    def config(self) -> dict:
        return {"type": "identity"}


@dataclass(eq=False)
class EmaFilter(_Filter):
    alpha: float
    _y: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError("EMA alpha must be in [0, 1)")

    def _start(self, channels: int) -> None:
        self._y = np.zeros(channels)

    def step(self, x: np.ndarray) -> np.ndarray:
        self._y = self.alpha * self._y + (1.0 - self.alpha) * x
        return self._y.copy()

    def config(self) -> dict:
        return {"type": "ema", "alpha": self.alpha}


@dataclass(eq=False)
class MedianFilter(_Filter):
    window: int
    _hist: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.window < 1:
            raise ConfigError("median window must be at least 1")

    def _start(self, channels: int) -> None:
        self._hist = np.zeros((self.window, channels))

    def step(self, x: np.ndarray) -> np.ndarray:
        self._hist = np.roll(self._hist, -1, axis=0)
        self._hist[-1] = x
        return np.median(self._hist, axis=0)

    def config(self) -> dict:
        return {"type": "median", "window": self.window}


@dataclass(eq=False)
class FirFilter(_Filter):
    """``y_t = sum_k taps[k] * x_{t-k}``. Non-unity DC gain only warns."""

    taps: tuple[float, ...]
    _hist: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.taps = tuple(float(t) for t in self.taps)
        if not self.taps or not np.all(np.isfinite(self.taps)):
            raise ConfigError("FIR taps must be a non-empty list of finite numbers")
        if abs(self.taps_sum - 1.0) > 1e-9:
            warnings.warn(f"FIR taps sum to {self.taps_sum:.6g}, not 1; DC gain is not unity", stacklevel=2)

    @property
    def taps_sum(self) -> float:
        return float(np.sum(self.taps))

    def _start(self, channels: int) -> None:
        self._hist = np.zeros((len(self.taps), channels))

    def step(self, x: np.ndarray) -> np.ndarray:
        self._hist = np.roll(self._hist, 1, axis=0)
        self._hist[0] = x
        return np.asarray(self.taps) @ self._hist

    def config(self) -> dict:
        return {"type": "fir", "taps": list(self.taps)}


Filter = IdentityFilter | EmaFilter | MedianFilter | FirFilter


def filter_apply(filt: Filter, x) -> np.ndarray:
    """Filter one action vector, advancing the filter state."""
    return filt.step(filt._check(x))


def filter_signal(filt: Filter, signal) -> np.ndarray:
    """Run a fresh copy of ``filt`` over a (T,) or (T, channels) stream."""
    fresh = make_filter(filt.config())
    arr = np.asarray(signal, dtype=float)
    flat = arr.ndim == 1
    rows = arr[:, None] if flat else arr
    out = np.array([filter_apply(fresh, row) for row in rows])
    return out[:, 0] if flat else out


def moving_average_taps(length: int) -> tuple[float, ...]:
    if length < 1:
        raise ConfigError("moving average length must be at least 1")
    return (1.0 / length,) * length


def make_filter(block: dict | None) -> Filter:
    """Build a filter from a config block ``{type, alpha | window | taps}``."""
    if block is None:
        return IdentityFilter()
    kind = block.get("type")
    try:
        if kind == "identity":
            return IdentityFilter()
        if kind == "ema":
            return EmaFilter(float(block["alpha"]))
        if kind == "median":
            return MedianFilter(int(block["window"]))
        if kind == "fir":
            if "taps" in block:
                return FirFilter(tuple(block["taps"]))
            return FirFilter(moving_average_taps(int(block["length"])))
    except KeyError as exc:
        raise ConfigError(f"filter block {block!r} is missing {exc}") from exc
    raise ConfigError(f"unknown filter type {kind!r}; expected one of {FILTER_KINDS}")


class FilteredPolicy:
    """Policy whose actions pass through a filter before reaching the plant.

    The wrapped policy still sees the true observation; nothing about the
    filter history is fed back to it.
    """

    def __init__(self, policy, filt: Filter):
        self.policy = policy
        self.filter = filt

    def reset(self) -> None:
        self.filter.reset()

    def __call__(self, obs) -> np.ndarray:
        return filter_apply(self.filter, self.policy(obs))


def wrap_policy(policy, filt: Filter | dict | None) -> FilteredPolicy:
    if filt is None or isinstance(filt, dict):
        filt = make_filter(filt)
    return FilteredPolicy(policy, filt)


def p_controller(gain: float = 1.0):
    """Proportional controller on the toy gap; gain 1 is deadbeat."""
    return lambda obs: gain * np.asarray(obs, dtype=float)


@dataclass
class LoopMetrics:
    steady_state_error: float
    settling_time: float
    overshoot: float


def _segments(schedule: GoalSchedule, horizon: int):
    starts = [s for s, _ in schedule.changes if s < horizon]
    ends = starts[1:] + [horizon]
    return list(zip(starts, ends))


def closed_loop_metrics(
    policy,
    seeds=(0,),
    params: ToyParams = ToyParams(),
    tail: float = 0.5,
) -> LoopMetrics:
    """Tracking quality of ``policy`` on the toy step schedule.

    Per goal segment: steady-state error is the mean |g - c| over the last
    ``tail`` fraction of the segment; settling time is the number of steps
    until |g - c| stays below 0.05 for the rest of the segment (the segment
    length if it never does); overshoot is how far the position passes the
    new goal, relative to the step size. Results are averaged over segments
    and seeds.
    """
    sse, settle, over = [], [], []
    env = ToyTrack(params)
    for seed in seeds:
        obs = env.reset(seed)
        if hasattr(policy, "reset"):
            policy.reset()
        schedule = env.state.schedule
        positions = [env.state.position]
        goals = [env.state.goal]
        for _ in range(params.horizon):
            a = np.clip(policy(obs), -env.action_bound, env.action_bound)
            obs, _, _, _ = env.step(a)
            positions.append(env.state.position)
            goals.append(env.state.goal)
        positions, goals = np.array(positions), np.array(goals)
        err = np.abs(goals - positions)
        for start, end in _segments(schedule, params.horizon + 1):
            # err[start] is the jump itself; the controller answers from start + 1
            seg = err[start:end]
            if seg.size == 0:
                continue
            k = max(1, int(round(seg.size * tail)))
            sse.append(float(seg[-k:].mean()))
            outside = np.nonzero(seg >= SETTLE_BAND)[0]
            settle.append(float(outside[-1] + 1) if outside.size else 0.0)
            before = positions[start]
            goal = goals[start]
            size = goal - before
            if abs(size) > 1e-12:
                path = (positions[start + 1:end] - goal) * np.sign(size)
                over.append(float(max(path.max(initial=0.0), 0.0) / abs(size)))
    return LoopMetrics(
        float(np.mean(sse)), float(np.mean(settle)), float(np.mean(over)) if over else 0.0
    )


def step_response(policy, steps: int = 60, goal: float = 1.0, params: ToyParams = ToyParams()) -> np.ndarray:
    """Positions after each step when tracking a single constant goal from rest."""
    env = ToyTrack(params, GoalSchedule.constant([goal]))
    obs = env.reset(0)
    if hasattr(policy, "reset"):
        policy.reset()
    out = []
    for _ in range(steps):
        obs, _, _, _ = env.step(np.clip(policy(obs), -env.action_bound, env.action_bound))
        out.append(env.state.position)
    return np.array(out)


def step_overshoot(policy, steps: int = 60) -> float:
    pos = step_response(policy, steps)
    return float(max(pos.max() - 1.0, 0.0))


@dataclass
class TunedFilter:
    config: dict
    overshoot: float
    settling_time: int
    flagged: bool

    def to_dict(self) -> dict:
        return {"config": self.config, "overshoot": self.overshoot,
                "settling_time": self.settling_time, "flagged": self.flagged}


# candidates ordered from weakest to strongest smoothing; the pass-through
# setting of each family is left out since it would tune to "no filter"
DEFAULT_GRIDS = {
    "ema": [{"type": "ema", "alpha": round(float(a), 2)} for a in np.arange(0.05, 1.0, 0.05)],
    "fir": [{"type": "fir", "length": n} for n in range(2, 17)],
    "median": [{"type": "median", "window": w} for w in range(3, 16, 2)],
}


def _settling(pos: np.ndarray, goal: float = 1.0) -> int:
    outside = np.nonzero(np.abs(pos - goal) >= SETTLE_BAND)[0]
    return int(outside[-1] + 1) if outside.size else 0


def tune_filters_on_pid(
    overshoot_bound: float = 0.05,
    gain: float = 1.0,
    steps: int = 60,
    grids: dict | None = None,
) -> dict[str, TunedFilter]:
    """Pick, per family, the strongest filter the reference P loop tolerates.

    Each candidate wraps a P controller of ``gain`` on the toy plant and is
    scored on a unit step from rest. The strongest candidate whose overshoot
    stays within ``overshoot_bound`` wins. If none does, the least-overshoot
    candidate is returned with ``flagged`` set.
    """
    out = {}
    for family, grid in (grids or DEFAULT_GRIDS).items():
        scored = []
        for block in grid:
            pos = step_response(wrap_policy(p_controller(gain), block), steps)
            scored.append((block, float(max(pos.max() - 1.0, 0.0)), _settling(pos)))
        ok = [s for s in scored if s[1] <= overshoot_bound]
        if ok:
            block, ov, st = ok[-1]
            out[family] = TunedFilter(dict(block), ov, st, False)
        else:
            block, ov, st = min(scored, key=lambda s: s[1])
            out[family] = TunedFilter(dict(block), ov, st, True)
    return out
