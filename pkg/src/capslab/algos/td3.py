"""Deterministic actor with twin critics (TD3-style) plus smoothness terms.

The actor emits ``tanh`` outputs in [-1, 1] which are scaled by the action
bound; critics and the smoothness distances work on these normalised actions.
Actor loss on a minibatch::

    -mean Q1(s, pi(s)) + lambda_t * mean ||pi(s) - pi(s')|| + lambda_s * mean ||pi(s) - pi(s_bar)||

with ``s'`` the stored successor and ``s_bar`` a Gaussian perturbation of ``s``.
The critics are trained exactly as without regularisation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import nn
from ..caps import CapsConfig, caps_penalty, perturb_state
from ..errors import TrainingError
from .replay import Batch, ReplayBuffer


@dataclass
class Td3Config:
    hidden: tuple[int, ...] = (64, 64)
    hidden_activation: str = "relu"
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    gamma: float = 0.99
    rho: float = 0.995
    policy_delay: int = 2
    batch_size: int = 128
    explore_noise: float = 0.1  # fraction of the action bound
    target_noise: float = 0.2
    noise_clip: float = 0.5
    buffer_size: int = 100_000
    start_steps: int = 1000
    update_after: int = 1000
    max_grad_norm: float | None = 10.0


@dataclass(eq=False)
class Td3Agent:
    obs_dim: int
    action_dim: int
    action_bound: float
    cfg: Td3Config
    caps: CapsConfig
    actor: nn.Mlp
    critic1: nn.Mlp
    critic2: nn.Mlp
    actor_target: nn.Mlp
    critic1_target: nn.Mlp
    critic2_target: nn.Mlp
    actor_opt: nn.AdamState
    critic1_opt: nn.AdamState
    critic2_opt: nn.AdamState
    # perturbation draws use their own stream so lambda_s = 0 leaves the main rng untouched
    caps_rng: np.random.Generator = field(repr=False, default=None)
    updates: int = 0

    def policy(self, obs) -> np.ndarray:
        return self.action_bound * self.actor(obs)


def make_td3(obs_dim: int, action_dim: int, action_bound: float, cfg: Td3Config, caps: CapsConfig, seed: int) -> Td3Agent:
    seeds = np.random.SeedSequence(seed).spawn(4)
    sizes = list(cfg.hidden)
    actor = nn.init([obs_dim] + sizes + [action_dim], cfg.hidden_activation, "tanh", np.random.default_rng(seeds[0]))
    c1 = nn.init([obs_dim + action_dim] + sizes + [1], cfg.hidden_activation, "identity", np.random.default_rng(seeds[1]))
    c2 = nn.init([obs_dim + action_dim] + sizes + [1], cfg.hidden_activation, "identity", np.random.default_rng(seeds[2]))
    return Td3Agent(
        obs_dim, action_dim, float(action_bound), cfg, caps,
        actor, c1, c2, actor.copy(), c1.copy(), c2.copy(),
        nn.adam_for(actor, cfg.actor_lr), nn.adam_for(c1, cfg.critic_lr), nn.adam_for(c2, cfg.critic_lr),
        np.random.default_rng(seeds[3]),
    )


def td3_select_action(agent: Td3Agent, s, explore: bool, rng: np.random.Generator) -> np.ndarray:
    a = agent.actor(s)
    if explore and agent.cfg.explore_noise > 0:
        a = a + agent.cfg.explore_noise * rng.standard_normal(a.shape)
    return agent.action_bound * np.clip(a, -1.0, 1.0)


def _q_input(obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
    return np.concatenate([obs, actions], axis=1)


def critic_targets(agent: Td3Agent, batch: Batch, rng: np.random.Generator) -> np.ndarray:
    cfg = agent.cfg
    a2 = agent.actor_target(batch.next_obs)
    noise = np.clip(cfg.target_noise * rng.standard_normal(a2.shape), -cfg.noise_clip, cfg.noise_clip)
    a2 = np.clip(a2 + noise, -1.0, 1.0)
    x2 = _q_input(batch.next_obs, a2)
    q_next = np.minimum(agent.critic1_target(x2)[:, 0], agent.critic2_target(x2)[:, 0])
    return batch.rewards + cfg.gamma * (1.0 - batch.terminals) * q_next


def critic_loss_and_grads(critic: nn.Mlp, x: np.ndarray, y: np.ndarray):
    """Mean squared error to fixed targets and its parameter gradients."""
    q, tape = nn.forward(critic, x)
    err = q[:, 0] - y
    grads, _ = nn.backward(critic, tape, (2.0 / len(y)) * err[:, None])
    return float(np.mean(err * err)), grads


def actor_loss_and_grads(agent: Td3Agent, obs: np.ndarray, next_obs: np.ndarray, perturbed: np.ndarray | None = None):
    """Regularised actor loss (to minimise) and actor parameter gradients.

    ``perturbed`` supplies the perturbed states explicitly; when None they are
    drawn from ``agent.caps_rng`` (only if the spatial weight is positive).
    """
    caps = agent.caps
    batch = obs.shape[0]
    blocks = [obs]
    use_t = caps.lambda_t > 0
    use_s = caps.lambda_s > 0
    if use_t:
        blocks.append(next_obs)
    if use_s:
        if perturbed is None:
            perturbed = perturb_state(np.repeat(obs, caps.perturbations_per_state, axis=0), caps.sigma, agent.caps_rng)
        blocks.append(perturbed)
    stacked = np.concatenate(blocks, axis=0) if len(blocks) > 1 else obs
    out, tape = nn.forward(agent.actor, stacked)
    a = out[:batch]
    q, qtape = nn.forward(agent.critic1, _q_input(obs, a))
    q_loss = -float(np.mean(q))
    _, dx = nn.backward(agent.critic1, qtape, np.full((batch, 1), -1.0 / batch))
    grad_a = dx[:, agent.obs_dim:]
    offset = batch
    a_next = a_bar = None
    if use_t:
        a_next = out[offset:offset + batch]
        offset += batch
    if use_s:
        a_bar = out[offset:]
    pen = caps_penalty(a, a_next, a_bar, caps)
    grad_blocks = [grad_a + pen.grad_s]
    if use_t:
        grad_blocks.append(pen.grad_next)
    if use_s:
        grad_blocks.append(pen.grad_bar)
    g_out = np.concatenate(grad_blocks, axis=0) if len(grad_blocks) > 1 else grad_blocks[0]
    grads, _ = nn.backward(agent.actor, tape, g_out)
    loss = q_loss + pen.value(caps)
    return loss, grads, {"q_loss": q_loss, "l_t": pen.l_t, "l_s": pen.l_s}


def td3_update(agent: Td3Agent, buffer: ReplayBuffer, batch_size: int, rng: np.random.Generator) -> dict:
    """One critic step and, every ``policy_delay`` calls, an actor step plus target blend."""
    if len(buffer) < batch_size:
        return {"skipped": True}
    cfg = agent.cfg
    batch = buffer.sample(batch_size, rng)
    y = critic_targets(agent, batch, rng)
    x = _q_input(batch.obs, batch.actions / agent.action_bound)
    info: dict = {"skipped": False}
    for name, critic, opt in (("critic1", agent.critic1, agent.critic1_opt), ("critic2", agent.critic2, agent.critic2_opt)):
        loss, grads = critic_loss_and_grads(critic, x, y)
        if not np.isfinite(loss):
            raise TrainingError(f"{name} loss is not finite")
        nn.adam_step(critic, opt, grads, cfg.max_grad_norm)
        info[f"{name}_loss"] = loss
    agent.updates += 1
    if agent.updates % cfg.policy_delay == 0:
        loss, grads, parts = actor_loss_and_grads(agent, batch.obs, batch.next_obs)
        if not np.isfinite(loss):
            raise TrainingError("actor loss is not finite")
        nn.adam_step(agent.actor, agent.actor_opt, grads, cfg.max_grad_norm)
        for target, live in (
            (agent.actor_target, agent.actor),
            (agent.critic1_target, agent.critic1),
            (agent.critic2_target, agent.critic2),
        ):
            nn.soft_update(target, live, cfg.rho)
        info["actor_loss"] = loss
        info.update(parts)
    return info
