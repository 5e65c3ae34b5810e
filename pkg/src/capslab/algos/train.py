"""Training loops and deterministic evaluation for both learners."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .. import nn
from ..caps import CapsConfig, smoothness
from ..envs import Trajectory, Transition, make_env
from ..errors import ConfigError, TrainingError
from .ppo import EnvRunner, PpoConfig, make_ppo, ppo_collect, ppo_update
from .replay import ReplayBuffer
from .td3 import Td3Config, make_td3, td3_select_action, td3_update

log = logging.getLogger(__name__)

ALGO_KINDS = ("td3", "ppo")
# evaluation episodes use fixed seeds so that runs with different training seeds are paired
EVAL_SEED_BASE = 1_000_000


@dataclass
class EvalSummary:
    reward_mean: float
    reward_std: float
    sm_mean: float
    sm_std: float
    mae: float | None
    episodes: int
    f_s: float


@dataclass
class CurvePoint:
    step: int
    eval_reward: float
    eval_sm: float


@dataclass
class TrainOutcome:
    algo: str
    env: str
    seed: int
    steps: int
    policy: nn.Mlp
    action_bound: float
    curve: list[CurvePoint] = field(default_factory=list)
    final: EvalSummary | None = None
    action_log: Trajectory | None = None
    failed: bool = False
    error: str | None = None

    def act(self, obs) -> np.ndarray:
        return self.action_bound * self.policy(obs)


def run_episode(env, policy, seed: int, horizon: int | None = None):
    """Deterministic episode; returns (trajectory, mean tracking error or None).

    A policy with a ``reset`` method (a filtered policy, say) is reset first.
    """
    obs = env.reset(seed)
    if hasattr(policy, "reset"):
        policy.reset()
    traj = Trajectory()
    errors = []
    limit = env.horizon if horizon is None else horizon
    bound = env.action_bound
    for _ in range(limit):
        a = np.clip(policy(obs), -bound, bound)
        nxt, r, term, trunc = env.step(a)
        traj.append(Transition(obs, a, r, nxt, term or trunc, term))
        err = env.tracking_error()
        if err is not None:
            errors.append(err)
        obs = nxt
        if term or trunc:
            break
    return traj, (float(np.mean(errors)) if errors else None)


def evaluate(env, policy, episodes: int, horizon: int | None = None, seed_base: int = EVAL_SEED_BASE):
    """Mean/std of episode reward and action smoothness over fixed-seed episodes.

    Returns ``(summary, first_trajectory)``.
    """
    rewards, sms, maes = [], [], []
    first = None
    for k in range(episodes):
        traj, mae = run_episode(env, policy, seed_base + k, horizon)
        if first is None:
            first = traj
        rewards.append(traj.total_reward())
        actions = traj.actions()
        sms.append(smoothness(actions, env.control_rate).sm if len(actions) >= 2 else 0.0)
        if mae is not None:
            maes.append(mae)
    summary = EvalSummary(
        float(np.mean(rewards)), float(np.std(rewards)),
        float(np.mean(sms)), float(np.std(sms)),
        float(np.mean(maes)) if maes else None,
        episodes, float(env.control_rate),
    )
    return summary, first


def _config(cls, params: dict | None):
    params = dict(params or {})
    if "hidden" in params:
        params["hidden"] = tuple(params["hidden"])
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigError(f"bad {cls.__name__} parameters: {exc}") from exc


def train(
    algo: str,
    env_kind: str,
    caps: CapsConfig | None,
    steps: int,
    seed: int,
    algo_params: dict | None = None,
    env_params: dict | None = None,
    eval_interval: int | None = None,
    eval_episodes: int = 10,
    curve_episodes: int = 2,
    eval_horizon: int | None = None,
    eval_shift: dict | None = None,
) -> TrainOutcome:
    """Train one agent and evaluate it.

    A curve point (deterministic policy, ``curve_episodes`` episodes) is
    recorded every ``eval_interval`` environment steps; the final evaluation
    uses ``eval_episodes``. Non-finite values abort the run and mark it
    failed rather than raising.
    """
    if algo not in ALGO_KINDS:
        raise ConfigError(f"unknown algorithm {algo!r}")
    if steps < 0:
        raise ConfigError("steps must be non-negative")
    caps = caps or CapsConfig()
    env = make_env(env_kind, env_params)
    eval_env = make_env(env_kind, env_params, eval_shift)
    rng = np.random.default_rng(seed)
    if algo == "td3":
        agent = make_td3(env.obs_dim, env.action_dim, env.action_bound, _config(Td3Config, algo_params), caps, seed)
    else:
        agent = make_ppo(env.obs_dim, env.action_dim, env.action_bound, _config(PpoConfig, algo_params), caps, seed)
    outcome = TrainOutcome(algo, env_kind, seed, steps, agent.actor, env.action_bound)
    interval = eval_interval or max(steps // 10, 1)

    def record(step: int) -> None:
        summary, _ = evaluate(eval_env, agent.policy, curve_episodes, eval_horizon)
        outcome.curve.append(CurvePoint(step, summary.reward_mean, summary.sm_mean))
        log.debug("%s/%s seed %d step %d reward %.3f sm %.5f", algo, env_kind, seed, step, summary.reward_mean, summary.sm_mean)

    try:
        with np.errstate(over="raise", invalid="raise"):
            if algo == "td3":
                _train_td3(agent, env, steps, rng, interval, record)
            else:
                _train_ppo(agent, env, steps, rng, interval, record)
            outcome.final, outcome.action_log = evaluate(eval_env, agent.policy, eval_episodes, eval_horizon)
    except (TrainingError, FloatingPointError) as exc:
        outcome.failed = True
        outcome.error = f"{type(exc).__name__}: {exc}"
        log.warning("run %s/%s seed %d failed: %s", algo, env_kind, seed, exc)
    return outcome


def _train_td3(agent, env, steps, rng, interval, record) -> None:
    cfg = agent.cfg
    buffer = ReplayBuffer(env.obs_dim, env.action_dim, cfg.buffer_size)
    episode_seeds = np.random.default_rng(rng.integers(2**31))
    obs = env.reset(int(episode_seeds.integers(2**31)))
    for t in range(steps):
        if t < cfg.start_steps:
            a = rng.uniform(-env.action_bound, env.action_bound, size=env.action_dim)
        else:
            a = td3_select_action(agent, obs, True, rng)
        nxt, r, term, trunc = env.step(a)
        buffer.add(obs, a, r, nxt, term)
        obs = env.reset(int(episode_seeds.integers(2**31))) if (term or trunc) else nxt
        if t + 1 >= cfg.update_after:
            td3_update(agent, buffer, cfg.batch_size, rng)
        if (t + 1) % interval == 0:
            record(t + 1)


def _train_ppo(agent, env, steps, rng, interval, record) -> None:
    runner = EnvRunner(env, int(rng.integers(2**31)))
    done = 0
    while done < steps:
        horizon = min(agent.cfg.rollout_steps, steps - done)
        rollout = ppo_collect(agent, runner, horizon, rng)
        ppo_update(agent, rollout, rng)
        before, done = done, done + horizon
        if done // interval > before // interval:
            record(done)
