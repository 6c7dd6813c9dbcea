import math

import numpy as np
import pytest

from prballoc.agents import (GNN_REINFORCE, MLP_REINFORCE, ORACLE, RANDOM, STATIC,
                             EpisodeTrace, TrainConfig, compute_returns, init_policy,
                             mlp_backward, mlp_forward, oracle_action, reinforce_update,
                             run_episode, select_action, train)
from prballoc.env import EnvConfig, PrbEnv, TrafficPattern, default_traffic_b
from prballoc.exceptions import ContractError
from prballoc.graph import build_state_graph, gcn_forward
from prballoc.nncore import Rng, finite_diff_check, softmax


def small_cfg(**kw):
    defaults = dict(episodes=5, seed=0)
    defaults.update(kw)
    return TrainConfig(**defaults)


class TestComputeReturns:
    def test_myopic(self):
        np.testing.assert_array_equal(compute_returns([0.2, 0.7, 0.1], 0.0),
                                      [0.2, 0.7, 0.1])

    def test_three_term_recursion(self):
        np.testing.assert_allclose(compute_returns([1.0, 1.0, 1.0], 0.5),
                                   [1.75, 1.5, 1.0])

    def test_empty(self):
        assert compute_returns([], 0.9).size == 0


class TestSelectAction:
    def test_fresh_policy_uniform(self):
        env_cfg = EnvConfig()
        policy = init_policy(GNN_REINFORCE, 4, env_cfg, small_cfg())
        g = build_state_graph([np.array([0.2, 0.0, 0.0, 0.0])], env_cfg.window_size)
        _, _, probs = select_action(policy, g, Rng(0))
        np.testing.assert_allclose(probs, np.full(11, 1 / 11), atol=1e-15)

    def test_greedy_argmax(self):
        env_cfg = EnvConfig(num_chunks=3, chunk_size=5, prb_total=50)
        policy = init_policy(MLP_REINFORCE, 4, env_cfg, small_cfg())
        policy.net.b_head[:] = np.log([0.1, 0.7, 0.2])
        action, _, probs = select_action(policy, np.zeros(4), Rng(0), mode="greedy")
        assert action == 1
        np.testing.assert_allclose(probs, [0.1, 0.7, 0.2], atol=1e-12)

    def test_sample_frequency(self):
        env_cfg = EnvConfig(num_chunks=2, chunk_size=5)
        policy = init_policy(MLP_REINFORCE, 4, env_cfg, small_cfg())
        rng = Rng(3)
        x = np.zeros(4)
        hits = sum(select_action(policy, x, rng)[0] == 0 for _ in range(10_000))
        assert 0.47 <= hits / 10_000 <= 0.53

    def test_log_prob_matches_probs(self):
        env_cfg = EnvConfig()
        policy = init_policy(GNN_REINFORCE, 4, env_cfg, small_cfg())
        policy.net.b_head[:] = np.linspace(-1, 1, 11)
        g = build_state_graph([np.full(4, 0.3)] * 3, 8)
        action, log_prob, probs = select_action(policy, g, Rng(1))
        assert log_prob == pytest.approx(math.log(probs[action]), abs=1e-12)


class TestBaselineAgents:
    def test_oracle_nearest_chunk(self):
        assert oracle_action(12, 5, 11) == 2
        assert oracle_action(13, 5, 11) == 3
        assert oracle_action(0, 5, 11) == 0
        assert oracle_action(50, 5, 11) == 10

    def test_oracle_tie_breaks_low(self):
        # required 2.5 chunks away from both neighbours -> lowest index
        assert oracle_action(5, 2, 11) == 2  # |5-4|=1 unique; use exact tie:
        assert oracle_action(3, 2, 11) == 1  # |3-2|=|3-4|=1 -> action 1

    def test_static_reward(self):
        cfg = EnvConfig()
        env = PrbEnv(cfg, default_traffic_b())
        policy = init_policy(STATIC, 4, cfg, small_cfg(static_action=0))
        env.reset(seed=0)
        required = env.required_now
        res = env.step(select_action(policy, None, Rng(0))[0])
        assert required > 0
        assert res.reward == pytest.approx(1.0 - required / cfg.prb_total)

    def test_random_uniform_probs(self):
        cfg = EnvConfig()
        policy = init_policy(RANDOM, 4, cfg, small_cfg())
        _, _, probs = select_action(policy, None, Rng(0))
        np.testing.assert_allclose(probs, np.full(cfg.num_chunks, 1 / cfg.num_chunks))


class TestMlpGradients:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        cfg = EnvConfig()
        policy = init_policy(MLP_REINFORCE, 4, cfg, small_cfg())
        net = policy.net
        net.w_head[:] = rng.normal(0, 0.5, net.w_head.shape)
        net.b1[:] = rng.normal(0, 0.3, net.b1.shape)
        net.b2[:] = rng.normal(0, 0.3, net.b2.shape)
        x = rng.uniform(0, 1, 4)
        action, adv = 4, -1.3

        def loss_fn(plist):
            logits, _ = mlp_forward(x, net)
            return -adv * math.log(softmax(logits)[action])

        def grad_fn(plist):
            logits, cache = mlp_forward(x, net)
            p = softmax(logits)
            d = adv * p
            d[action] -= adv
            return mlp_backward(cache, net, d).arrays()

        err = finite_diff_check(loss_fn, grad_fn, net.arrays())
        assert err < 1e-4


class TestReinforceUpdate:
    def _trace(self, policy, env_cfg, pattern, seed=0):
        env = PrbEnv(env_cfg, pattern)
        return run_episode(policy, env, seed, 0)

    def test_zero_advantage_no_change(self):
        env_cfg = EnvConfig()
        policy = init_policy(MLP_REINFORCE, 4, env_cfg, small_cfg())
        trace = EpisodeTrace(inputs=[np.zeros(4)] * 3, actions=[0, 1, 2],
                             log_probs=[0.0] * 3, rewards=[1.0, 1.0, 1.0])
        cfg = small_cfg(discount=0.0, baseline_decay=0.0)
        before = [a.copy() for a in policy.net.arrays()]
        # one priming update sets the EMA baseline to exactly mean(G) = 1
        _, baseline, _ = reinforce_update(policy, trace, 0.0, cfg)
        policy2 = init_policy(MLP_REINFORCE, 4, env_cfg, small_cfg())
        _, _, loss = reinforce_update(policy2, trace, baseline, cfg)
        for a, b in zip(before, policy2.net.arrays()):
            np.testing.assert_array_equal(a, b)
        assert loss == 0.0

    def test_single_step_gradient_matches_finite_differences(self):
        env_cfg = EnvConfig()
        pattern = default_traffic_b()
        policy = init_policy(GNN_REINFORCE, 4, env_cfg, small_cfg())
        rng = np.random.default_rng(1)
        policy.net.w_head[:] = rng.normal(0, 0.5, policy.net.w_head.shape)
        trace = self._trace(policy, env_cfg, pattern)
        g, action = trace.inputs[0], trace.actions[0]
        adv = 0.83

        def loss_fn(plist):
            logits, _ = gcn_forward(g, policy.net)
            return -adv * math.log(softmax(logits)[action])

        def grad_fn(plist):
            from prballoc.graph import gcn_backward
            logits, cache = gcn_forward(g, policy.net)
            p = softmax(logits)
            d = adv * p
            d[action] -= adv
            return gcn_backward(cache, d)[0].arrays()

        err = finite_diff_check(loss_fn, grad_fn, policy.net.arrays())
        assert err < 1e-4

    def test_update_linear_in_learning_rate(self):
        env_cfg = EnvConfig()
        pattern = default_traffic_b()
        deltas = []
        for lr in (0.004, 0.002):
            policy = init_policy(GNN_REINFORCE, 4, env_cfg, small_cfg())
            init = [a.copy() for a in policy.net.arrays()]
            trace = self._trace(policy, env_cfg, pattern)
            cfg = small_cfg(learning_rate=lr)
            reinforce_update(policy, trace, 0.0, cfg)
            deltas.append([a - b for a, b in zip(policy.net.arrays(), init)])
        for d_full, d_half in zip(*deltas):
            np.testing.assert_allclose(d_full, 2.0 * d_half, atol=1e-9)

    def test_empty_trace_rejected(self):
        env_cfg = EnvConfig()
        policy = init_policy(MLP_REINFORCE, 4, env_cfg, small_cfg())
        with pytest.raises(ContractError):
            reinforce_update(policy, EpisodeTrace(), 0.0, small_cfg())


class TestTrain:
    def test_zero_episodes_noop(self):
        env_cfg = EnvConfig()
        res = train(GNN_REINFORCE, env_cfg, default_traffic_b(), small_cfg(episodes=0))
        fresh = init_policy(GNN_REINFORCE, 4, env_cfg, small_cfg(episodes=0))
        assert res.history == []
        for a, b in zip(res.policy.net.arrays(), fresh.net.arrays()):
            np.testing.assert_array_equal(a, b)

    def test_deterministic_histories(self):
        env_cfg = EnvConfig(episode_steps=40)
        h1 = train(GNN_REINFORCE, env_cfg, default_traffic_b(), small_cfg(episodes=8)).history
        h2 = train(GNN_REINFORCE, env_cfg, default_traffic_b(), small_cfg(episodes=8)).history
        assert h1 == h2

    def test_log_prob_consistency(self):
        env_cfg = EnvConfig(episode_steps=30)
        policy = init_policy(GNN_REINFORCE, 4, env_cfg, small_cfg())
        rng = np.random.default_rng(2)
        policy.net.w_head[:] = rng.normal(0, 0.4, policy.net.w_head.shape)
        env = PrbEnv(env_cfg, default_traffic_b())
        trace = run_episode(policy, env, seed=0, episode=0)
        for inp, action, stored in zip(trace.inputs, trace.actions, trace.log_probs):
            logits, _ = gcn_forward(inp, policy.net)
            recomputed = math.log(softmax(logits)[action])
            assert stored == pytest.approx(recomputed, abs=1e-9)

    def test_checkpoint_marks(self):
        env_cfg = EnvConfig(episode_steps=20)
        res = train(GNN_REINFORCE, env_cfg, default_traffic_b(),
                    small_cfg(episodes=10), checkpoint_marks=(0.0, 0.5, 1.0))
        labels = [(lab, ep) for lab, ep, _ in res.checkpoints]
        assert labels == [("early", 0), ("mid", 5), ("final", 10)]
        fresh = init_policy(GNN_REINFORCE, 4, env_cfg, small_cfg(episodes=10))
        early = res.checkpoints[0][2]
        for a, b in zip(early.net.arrays(), fresh.net.arrays()):
            np.testing.assert_array_equal(a, b)

    def test_random_policy_matches_closed_form_expectation(self):
        # uniform allocation: E[reward] = 1 - mean_a |required - 5a| / 50,
        # computable directly from the demand series.
        env_cfg = EnvConfig(episode_steps=100)
        pattern = default_traffic_b()
        res = train(RANDOM, env_cfg, pattern, small_cfg(episodes=40))
        env = PrbEnv(env_cfg, pattern)
        env.reset(seed=0)
        allocs = np.arange(env_cfg.num_chunks) * env_cfg.chunk_size
        expected = sum(
            1.0 - np.abs(int(r) - allocs).mean() / env_cfg.prb_total
            for r in env._required
        )
        observed = np.mean(res.history)
        sigma = np.std(res.history) / math.sqrt(len(res.history))
        assert abs(observed - expected) < 4 * sigma + 1e-9


class TestBanditSanity:
    def test_two_armed_bandit(self):
        # fixed rewards r(a0)=1, r(a1)=0, gamma=0, no baseline: the best arm
        # must dominate after 200 single-step updates.
        env_cfg = EnvConfig(num_chunks=2, chunk_size=5)
        cfg = TrainConfig(episodes=200, discount=0.0, learning_rate=0.1,
                          use_baseline=False, seed=0)
        policy = init_policy(MLP_REINFORCE, 4, env_cfg, cfg)
        x = np.array([0.5, 0.0, 0.0, 0.0])
        rng = Rng(42)
        baseline = 0.0
        for _ in range(200):
            action, _, _ = select_action(policy, x, rng)
            trace = EpisodeTrace(inputs=[x], actions=[action],
                                 log_probs=[0.0], rewards=[1.0 if action == 0 else 0.0])
            _, baseline, _ = reinforce_update(policy, trace, baseline, cfg)
        assert baseline == 0.0
        _, _, probs = select_action(policy, x, Rng(1))
        assert probs[0] > 0.9
