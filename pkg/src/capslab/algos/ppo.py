"""Clipped-surrogate learner (PPO-style) with smoothness terms.

The policy is Gaussian with a ``tanh`` mean network in normalised action
units and a state-independent log-std vector. The smoothness distances are
computed on the mean action (the action a deployed policy takes), pairing
``mean(s_t)`` with ``mean(s_{t+1})`` from stored consecutive states. The
value network is a separate regression model with its own optimiser.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import nn
from ..caps import CapsConfig, caps_penalty, perturb_state
from ..errors import TrainingError

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass
class PpoConfig:
    hidden: tuple[int, ...] = (64, 64)
    hidden_activation: str = "tanh"
    lr: float = 3e-4
    value_lr: float = 1e-3
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    epochs: int = 10
    minibatch_size: int = 64
    rollout_steps: int = 2048
    init_log_std: float = -0.5
    max_grad_norm: float | None = 10.0


@dataclass(eq=False)
class PpoAgent:
    obs_dim: int
    action_dim: int
    action_bound: float
    cfg: PpoConfig
    caps: CapsConfig
    actor: nn.Mlp
    log_std: np.ndarray
    value: nn.Mlp
    actor_opt: nn.AdamState
    log_std_opt: nn.AdamState
    value_opt: nn.AdamState
    caps_rng: np.random.Generator = field(repr=False, default=None)

    def policy(self, obs) -> np.ndarray:
        return self.action_bound * self.actor(obs)


def make_ppo(obs_dim: int, action_dim: int, action_bound: float, cfg: PpoConfig, caps: CapsConfig, seed: int) -> PpoAgent:
    seeds = np.random.SeedSequence(seed).spawn(3)
    sizes = list(cfg.hidden)
    actor = nn.init([obs_dim] + sizes + [action_dim], cfg.hidden_activation, "tanh", np.random.default_rng(seeds[0]))
    # small final layer keeps the initial mean near zero
    actor.weights[-1] *= 0.01
    value = nn.init([obs_dim] + sizes + [1], cfg.hidden_activation, "identity", np.random.default_rng(seeds[1]))
    log_std = np.full(action_dim, float(cfg.init_log_std))
    return PpoAgent(
        obs_dim, action_dim, float(action_bound), cfg, caps,
        actor, log_std, value,
        nn.adam_for(actor, cfg.lr), nn.AdamState.for_params([log_std], lr=cfg.lr), nn.adam_for(value, cfg.value_lr),
        np.random.default_rng(seeds[2]),
    )


def gaussian_log_prob(u: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    z = (u - mean) / np.exp(log_std)
    return np.sum(-0.5 * z * z - log_std - _HALF_LOG_2PI, axis=-1)


@dataclass
class RolloutBuffer:
    obs: np.ndarray
    actions: np.ndarray  # unclipped samples in normalised units
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    next_obs: np.ndarray
    terminals: np.ndarray
    episode_ends: np.ndarray
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None
    norm_advantages: np.ndarray | None = None
    episode_returns: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rewards)

    def finalize(self, next_values: np.ndarray, gamma: float, lam: float) -> "RolloutBuffer":
        """Lambda-returns and GAE advantages; ``next_values`` is V(next_obs).

        Terminal steps do not bootstrap. Time-limit ends and the final
        (cut-off) step bootstrap from V(next_obs) without continuing the
        lambda chain.
        """
        n = len(self.rewards)
        returns = np.zeros(n)
        carry = 0.0
        for t in range(n - 1, -1, -1):
            boot = 0.0 if self.terminals[t] else next_values[t]
            if self.episode_ends[t] or t == n - 1:
                returns[t] = self.rewards[t] + gamma * boot
            else:
                returns[t] = self.rewards[t] + gamma * ((1.0 - lam) * boot + lam * carry)
            carry = returns[t]
        self.returns = returns
        self.advantages = returns - self.values
        std = self.advantages.std()
        self.norm_advantages = (self.advantages - self.advantages.mean()) / (std + 1e-8)
        return self


class EnvRunner:
    """Keeps an environment episode alive across rollout boundaries."""

    def __init__(self, env, seed: int):
        self.env = env
        self._seeds = np.random.default_rng(seed)
        self.obs = env.reset(self._next_seed())
        self.episode_return = 0.0

    def _next_seed(self) -> int:
        return int(self._seeds.integers(2**31))

    def step(self, action):
        nxt, r, term, trunc = self.env.step(action)
        self.episode_return += r
        return nxt, r, term, trunc

    def new_episode(self) -> float:
        finished = self.episode_return
        self.obs = self.env.reset(self._next_seed())
        self.episode_return = 0.0
        return finished


def ppo_collect(agent: PpoAgent, env, horizon: int, rng: np.random.Generator) -> RolloutBuffer:
    """Run the stochastic policy for ``horizon`` steps and compute advantages."""
    runner = env if isinstance(env, EnvRunner) else EnvRunner(env, int(rng.integers(2**31)))
    d, k = agent.obs_dim, agent.action_dim
    obs = np.zeros((horizon, d))
    acts = np.zeros((horizon, k))
    nxt_obs = np.zeros((horizon, d))
    rewards = np.zeros(horizon)
    terminals = np.zeros(horizon, dtype=bool)
    ends = np.zeros(horizon, dtype=bool)
    std = np.exp(agent.log_std)
    finished = []
    for t in range(horizon):
        o = runner.obs
        u = agent.actor(o) + std * rng.standard_normal(k)
        nxt, r, term, trunc = runner.step(np.clip(u, -1.0, 1.0) * agent.action_bound)
        obs[t], acts[t], nxt_obs[t], rewards[t] = o, u, nxt, r
        terminals[t], ends[t] = term, term or trunc
        if term or trunc:
            finished.append(runner.new_episode())
        else:
            runner.obs = nxt
    mean = agent.actor(obs)
    buf = RolloutBuffer(
        obs, acts, gaussian_log_prob(acts, mean, agent.log_std), rewards,
        agent.value(obs)[:, 0], nxt_obs, terminals, ends, episode_returns=finished,
    )
    return buf.finalize(agent.value(nxt_obs)[:, 0], agent.cfg.gamma, agent.cfg.gae_lambda)


def surrogate_loss_and_grads(agent: PpoAgent, obs, actions, old_log_probs, advantages, next_obs, perturbed=None):
    """Clipped surrogate plus smoothness penalties, to minimise.

    Returns ``(loss, actor_grads, log_std_grad, parts)``. Where the clipped and
    unclipped terms tie, gradient flows only if the ratio lies strictly inside
    the clip interval, so a clip of 0 blocks the surrogate gradient at ratio 1.
    """
    caps = agent.caps
    batch = obs.shape[0]
    use_t = caps.lambda_t > 0
    use_s = caps.lambda_s > 0
    blocks = [obs]
    if use_t:
        blocks.append(next_obs)
    if use_s:
        if perturbed is None:
            perturbed = perturb_state(np.repeat(obs, caps.perturbations_per_state, axis=0), caps.sigma, agent.caps_rng)
        blocks.append(perturbed)
    stacked = np.concatenate(blocks, axis=0) if len(blocks) > 1 else obs
    out, tape = nn.forward(agent.actor, stacked)
    mean = out[:batch]
    log_std = agent.log_std
    std = np.exp(log_std)
    z = (actions - mean) / std
    logp = np.sum(-0.5 * z * z - log_std - _HALF_LOG_2PI, axis=1)
    ratio = np.exp(logp - old_log_probs)
    eps = agent.cfg.clip
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps)
    unclipped_obj = ratio * advantages
    clipped_obj = clipped * advantages
    surr = np.minimum(unclipped_obj, clipped_obj)
    loss_pi = -float(np.mean(surr))
    flows = (unclipped_obj < clipped_obj) | ((ratio > 1.0 - eps) & (ratio < 1.0 + eps))
    dlogp = np.where(flows, -advantages * ratio / batch, 0.0)
    grad_mean = dlogp[:, None] * z / std
    grad_log_std = np.sum(dlogp[:, None] * (z * z - 1.0), axis=0)

    offset = batch
    a_next = a_bar = None
    if use_t:
        a_next = out[offset:offset + batch]
        offset += batch
    if use_s:
        a_bar = out[offset:]
    pen = caps_penalty(mean, a_next, a_bar, caps)
    grad_blocks = [grad_mean + pen.grad_s]
    if use_t:
        grad_blocks.append(pen.grad_next)
    if use_s:
        grad_blocks.append(pen.grad_bar)
    g_out = np.concatenate(grad_blocks, axis=0) if len(grad_blocks) > 1 else grad_blocks[0]
    grads, _ = nn.backward(agent.actor, tape, g_out)
    parts = {
        "surrogate": loss_pi,
        "l_t": pen.l_t,
        "l_s": pen.l_s,
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > eps)),
    }
    return loss_pi + pen.value(caps), grads, grad_log_std, parts


def value_loss_and_grads(value: nn.Mlp, obs, returns):
    v, tape = nn.forward(value, obs)
    err = v[:, 0] - returns
    grads, _ = nn.backward(value, tape, (err / len(returns))[:, None])
    return 0.5 * float(np.mean(err * err)), grads


def ppo_update(agent: PpoAgent, rollout: RolloutBuffer, rng: np.random.Generator) -> dict:
    cfg = agent.cfg
    n = len(rollout)
    mb = min(cfg.minibatch_size, n)
    stats = {"policy_loss": 0.0, "value_loss": 0.0, "l_t": 0.0, "l_s": 0.0, "clip_fraction": 0.0}
    count = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n - mb + 1, mb):
            idx = order[start:start + mb]
            loss, grads, g_log_std, parts = surrogate_loss_and_grads(
                agent, rollout.obs[idx], rollout.actions[idx], rollout.log_probs[idx],
                rollout.norm_advantages[idx], rollout.next_obs[idx],
            )
            v_loss, v_grads = value_loss_and_grads(agent.value, rollout.obs[idx], rollout.returns[idx])
            if not (np.isfinite(loss) and np.isfinite(v_loss)):
                raise TrainingError("PPO loss is not finite")
            nn.adam_step(agent.actor, agent.actor_opt, grads, cfg.max_grad_norm)
            nn.check_finite([g_log_std])
            agent.log_std_opt.apply([agent.log_std], [g_log_std])
            np.clip(agent.log_std, LOG_STD_MIN, LOG_STD_MAX, out=agent.log_std)
            nn.adam_step(agent.value, agent.value_opt, v_grads, cfg.max_grad_norm)
            stats["policy_loss"] += loss
            stats["value_loss"] += v_loss
            stats["l_t"] += parts["l_t"]
            stats["l_s"] += parts["l_s"]
            stats["clip_fraction"] += parts["clip_fraction"]
            count += 1
    return {k: v / max(count, 1) for k, v in stats.items()}
