import numpy as np
import pytest
from fd import fd_grads, max_rel_error
from plain import plain_ppo_surrogate, plain_td3_actor

from capslab import nn
from capslab.algos import (
    PpoConfig,
    ReplayBuffer,
    RolloutBuffer,
    Td3Config,
    actor_loss_and_grads,
    critic_loss_and_grads,
    critic_targets,
    make_ppo,
    make_td3,
    ppo_collect,
    surrogate_loss_and_grads,
    td3_select_action,
    td3_update,
    train,
    value_loss_and_grads,
)
from capslab.algos import ppo as ppo_mod
from capslab.algos import td3 as td3_mod
from capslab.caps import CapsConfig
from capslab.envs import ToyTrack
from capslab.errors import ConfigError, UsageError

SMALL = {"hidden": (8, 8), "hidden_activation": "tanh"}


# replay


def test_replay_ring_overwrites_oldest():
    buf = ReplayBuffer(1, 1, 3)
    for k in range(5):
        buf.add([k], [0.0], float(k), [k + 1], False)
    assert len(buf) == 3
    assert sorted(buf.rewards.tolist()) == [2.0, 3.0, 4.0]


def test_replay_rejects_oversized_sample():
    buf = ReplayBuffer(1, 1, 10)
    buf.add([0], [0], 0.0, [0], False)
    with pytest.raises(UsageError):
        buf.sample(2, np.random.default_rng(0))


def test_replay_sampling_is_uniform():
    n, draws, batch = 20, 4000, 5
    buf = ReplayBuffer(1, 1, n)
    for k in range(n):
        buf.add([k], [0], 0.0, [0], False)
    rng = np.random.default_rng(0)
    counts = np.zeros(n)
    for _ in range(draws):
        idx = buf.sample_indices(batch, rng)
        assert len(set(idx.tolist())) == batch
        counts[idx] += 1
    expected = draws * batch / n
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    # 19 degrees of freedom; 43.8 is the 0.999 quantile
    assert chi2 < 43.8


# TD3


def td3_agent(caps=None, seed=0, obs_dim=3, action_dim=2, **cfg):
    return make_td3(obs_dim, action_dim, 2.0, Td3Config(**{**SMALL, **cfg}), caps or CapsConfig(), seed)


def test_td3_critic_gradient_matches_finite_differences():
    agent = td3_agent()
    rng = np.random.default_rng(1)
    x = rng.normal(size=(16, 5))
    y = rng.normal(size=16)
    _, grads = critic_loss_and_grads(agent.critic1, x, y)
    numeric = fd_grads(lambda: critic_loss_and_grads(agent.critic1, x, y)[0], agent.critic1.params())
    assert max_rel_error(grads, numeric) < 1e-3


@pytest.mark.parametrize("caps", [CapsConfig(), CapsConfig(0.7, 0.0, 0.1), CapsConfig(0.5, 1.3, 0.2, 2)])
def test_td3_actor_gradient_matches_finite_differences(caps):
    agent = td3_agent(caps)
    rng = np.random.default_rng(2)
    obs = rng.normal(size=(12, 3))
    nxt = obs + 0.3 * rng.normal(size=obs.shape)
    pert = np.repeat(obs, caps.perturbations_per_state, axis=0) + 0.2 * rng.normal(size=(12 * caps.perturbations_per_state, 3))
    _, grads, _ = actor_loss_and_grads(agent, obs, nxt, pert)
    numeric = fd_grads(lambda: actor_loss_and_grads(agent, obs, nxt, pert)[0], agent.actor.params())
    assert max_rel_error(grads, numeric) < 1e-3


def test_td3_vanilla_actor_loss_is_negative_q():
    agent = td3_agent()
    obs = np.random.default_rng(3).normal(size=(6, 3))
    loss, _, parts = actor_loss_and_grads(agent, obs, obs + 1.0)
    q = agent.critic1(np.concatenate([obs, agent.actor(obs)], axis=1))
    assert loss == pytest.approx(-q.mean(), abs=1e-14)
    assert parts["l_t"] == 0.0 and parts["l_s"] == 0.0


def test_td3_critic_targets_by_hand():
    agent = td3_agent(target_noise=0.0)
    buf = ReplayBuffer(3, 2, 10)
    rng = np.random.default_rng(4)
    for k in range(4):
        buf.add(rng.normal(size=3), rng.uniform(-2, 2, 2), float(k), rng.normal(size=3), k == 2)
    batch = buf.sample(4, rng)
    y = critic_targets(agent, batch, rng)
    for i in range(4):
        s2 = batch.next_obs[i]
        a2 = agent.actor_target(s2)
        x2 = np.concatenate([s2, a2])
        q = min(agent.critic1_target(x2)[0], agent.critic2_target(x2)[0])
        expected = batch.rewards[i] + 0.99 * (1 - batch.terminals[i]) * q
        assert y[i] == pytest.approx(expected, abs=1e-12)


def test_td3_select_action_respects_bounds():
    agent = td3_agent()
    rng = np.random.default_rng(0)
    for _ in range(50):
        a = td3_select_action(agent, rng.normal(scale=10, size=3), True, rng)
        assert np.all(np.abs(a) <= 2.0)
    s = np.ones(3)
    np.testing.assert_array_equal(td3_select_action(agent, s, False, rng), agent.policy(s))


def test_td3_policy_delay_and_target_blend():
    agent = td3_agent(policy_delay=2, rho=0.9)
    buf = ReplayBuffer(3, 2, 100)
    rng = np.random.default_rng(5)
    for _ in range(50):
        buf.add(rng.normal(size=3), rng.uniform(-2, 2, 2), rng.normal(), rng.normal(size=3), False)
    actor_before = [p.copy() for p in agent.actor.params()]
    target_before = [p.copy() for p in agent.actor_target.params()]
    info = td3_update(agent, buf, 16, rng)
    assert "actor_loss" not in info
    for a, b in zip(actor_before, agent.actor.params()):
        np.testing.assert_array_equal(a, b)
    info = td3_update(agent, buf, 16, rng)
    assert "actor_loss" in info
    for t_old, t_new, live in zip(target_before, agent.actor_target.params(), agent.actor.params()):
        np.testing.assert_array_equal(t_new, t_old * 0.9 + (1 - 0.9) * live)
    assert td3_update(agent, ReplayBuffer(3, 2, 5), 16, rng) == {"skipped": True}


def _curve_bytes(outcome):
    return [(p.eval_reward, p.eval_sm) for p in outcome.curve], [p.tobytes() for p in outcome.policy.params()]


@pytest.mark.parametrize("algo", ["td3", "ppo"])
def test_zero_weights_match_unregularised_code_path(algo, monkeypatch):
    params = {"hidden": [16, 16], "start_steps": 100, "update_after": 100, "batch_size": 32} if algo == "td3" else {
        "hidden": [16, 16], "rollout_steps": 250, "minibatch_size": 50, "epochs": 2}
    kwargs = dict(steps=500, seed=3, algo_params=params, env_params={"horizon": 100}, eval_interval=250, eval_episodes=1, curve_episodes=1)
    caps_run = train(algo, "toy", CapsConfig(0.0, 0.0, 0.3, 2), **kwargs)
    if algo == "td3":
        monkeypatch.setattr(td3_mod, "actor_loss_and_grads", plain_td3_actor)
    else:
        monkeypatch.setattr(ppo_mod, "surrogate_loss_and_grads", plain_ppo_surrogate)
    plain_run = train(algo, "toy", None, **kwargs)
    assert _curve_bytes(caps_run) == _curve_bytes(plain_run)


# PPO


def ppo_agent(caps=None, seed=0, **cfg):
    return make_ppo(3, 2, 1.0, PpoConfig(**{"hidden": (8, 8), **cfg}), caps or CapsConfig(), seed)


@pytest.mark.parametrize("caps", [CapsConfig(), CapsConfig(0.8, 0.6, 0.1, 2)])
def test_ppo_surrogate_gradient_matches_finite_differences(caps):
    agent = ppo_agent(caps)
    agent.actor.weights[-1] *= 50  # undo the small init so gradients are not tiny
    rng = np.random.default_rng(6)
    obs = rng.normal(size=(10, 3))
    nxt = obs + 0.3 * rng.normal(size=obs.shape)
    actions = agent.actor(obs) + 0.5 * rng.normal(size=(10, 2))
    old = ppo_mod.gaussian_log_prob(actions, agent.actor(obs), agent.log_std)
    # spread ratios away from the clip boundaries where the loss has kinks
    old = old + rng.choice([-0.5, -0.05, 0.05, 0.5], size=10)
    adv = rng.normal(size=10)
    pert = np.repeat(obs, caps.perturbations_per_state, axis=0) + 0.2 * rng.normal(size=(10 * caps.perturbations_per_state, 3))

    def loss():
        return surrogate_loss_and_grads(agent, obs, actions, old, adv, nxt, pert)[0]

    _, grads, g_log_std, _ = surrogate_loss_and_grads(agent, obs, actions, old, adv, nxt, pert)
    numeric = fd_grads(loss, agent.actor.params() + [agent.log_std])
    assert max_rel_error(grads + [g_log_std], numeric) < 1e-3


def test_ppo_value_gradient_matches_finite_differences():
    agent = ppo_agent()
    rng = np.random.default_rng(7)
    obs, ret = rng.normal(size=(10, 3)), rng.normal(size=10)
    _, grads = value_loss_and_grads(agent.value, obs, ret)
    numeric = fd_grads(lambda: value_loss_and_grads(agent.value, obs, ret)[0], agent.value.params())
    assert max_rel_error(grads, numeric) < 1e-3


def test_ppo_zero_clip_blocks_surrogate_gradient():
    agent = make_ppo(1, 1, 2.0, PpoConfig(hidden=(8, 8), clip=0.0), CapsConfig(), 0)
    rollout = ppo_collect(agent, ToyTrack(), 64, np.random.default_rng(0))
    args = (rollout.obs, rollout.actions, rollout.log_probs, rollout.norm_advantages, rollout.next_obs)
    _, grads, g_log_std, _ = surrogate_loss_and_grads(agent, *args)
    assert all(not np.any(g) for g in grads) and not np.any(g_log_std)
    # smoothness terms still move the actor
    agent.caps = CapsConfig(1.0, 0.0, 0.0)
    _, grads, _, _ = surrogate_loss_and_grads(agent, *args)
    assert any(np.any(g) for g in grads)


def _buffer(rewards, values, next_values, terminals=None, ends=None):
    n = len(rewards)
    z = np.zeros((n, 1))
    buf = RolloutBuffer(z, z, np.zeros(n), np.array(rewards, float), np.array(values, float), z,
                        np.array(terminals or [False] * n), np.array(ends or [False] * n))
    return buf.finalize(np.array(next_values, float), 0.9, 0.8)


def test_gae_matches_delta_recursion():
    rewards = [1.0, -0.5, 2.0, 0.25]
    values = [0.3, 0.1, -0.2, 0.5]
    nv = values[1:] + [0.7]
    buf = _buffer(rewards, values, nv)
    # textbook form: A_t = delta_t + gamma*lambda*A_{t+1}
    adv, running = [], 0.0
    for t in reversed(range(4)):
        delta = rewards[t] + 0.9 * nv[t] - values[t]
        running = delta + 0.9 * 0.8 * running
        adv.insert(0, running)
    np.testing.assert_allclose(buf.advantages, adv, atol=1e-12)
    np.testing.assert_allclose(buf.returns, np.array(adv) + values, atol=1e-12)


def test_gae_terminal_and_time_limit():
    buf = _buffer([1.0, 2.0, 3.0], [0.0, 0.0, 0.0], [5.0, 5.0, 5.0], terminals=[True, False, False], ends=[True, True, False])
    # terminal: no bootstrap; time limit: bootstrap but do not chain
    np.testing.assert_allclose(buf.returns, [1.0, 2.0 + 0.9 * 5.0, 3.0 + 0.9 * 5.0])


def test_gae_zero_discount_is_one_step_advantage():
    n = 5
    rng = np.random.default_rng(0)
    r, v, nv = rng.normal(size=n), rng.normal(size=n), rng.normal(size=n)
    z = np.zeros((n, 1))
    buf = RolloutBuffer(z, z, np.zeros(n), r, v, z, np.zeros(n, bool), np.zeros(n, bool)).finalize(nv, 0.0, 0.95)
    np.testing.assert_allclose(buf.advantages, r - v, atol=1e-15)


# training loop


@pytest.mark.parametrize("algo", ["td3", "ppo"])
def test_training_is_deterministic(algo):
    params = {"hidden": [8, 8], "start_steps": 50, "update_after": 50, "batch_size": 16} if algo == "td3" else {
        "hidden": [8, 8], "rollout_steps": 100, "minibatch_size": 25, "epochs": 2}
    kwargs = dict(steps=300, seed=11, algo_params=params, env_params={"horizon": 50}, eval_interval=100, eval_episodes=2, curve_episodes=1)
    a = train(algo, "toy", CapsConfig(1.0, 1.0, 0.05), **kwargs)
    b = train(algo, "toy", CapsConfig(1.0, 1.0, 0.05), **kwargs)
    assert len(a.curve) == 3
    assert _curve_bytes(a) == _curve_bytes(b)
    assert a.final == b.final


def test_divergent_run_is_flagged_not_raised():
    out = train("td3", "toy", None, 200, 0, algo_params={"hidden": [4], "start_steps": 10, "update_after": 10,
                                                      "batch_size": 8, "critic_lr": 1e300, "max_grad_norm": None})
    assert out.failed and out.error and out.final is None


def test_train_rejects_bad_config():
    with pytest.raises(ConfigError):
        train("sac", "toy", None, 10, 0)
    with pytest.raises(ConfigError):
        train("td3", "toy", None, 10, 0, algo_params={"no_such_field": 1})
