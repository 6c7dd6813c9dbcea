import numpy as np
import pytest

from prballoc.env import (EnvConfig, PrbEnv, TrafficPattern, default_traffic_a,
                          default_traffic_b, gen_traffic, required_prbs)
from prballoc.exceptions import ContractError
from prballoc.nncore import Rng


def periodic(period_ms=10.0, packet_bits=100, schedule=((0, 1.0),)):
    return TrafficPattern(kind="periodic", period_ms=period_ms,
                          packet_bits=packet_bits, rate_schedule=schedule)


def poisson(rate_pps=100.0, packet_bits=100, schedule=((0, 1.0),)):
    return TrafficPattern(kind="poisson", rate_pps=rate_pps,
                          packet_bits=packet_bits, rate_schedule=schedule)


class TestGenTraffic:
    def test_periodic_exact_count(self):
        demand = gen_traffic(periodic(period_ms=10.0, packet_bits=1), Rng(0), 5, 100.0)
        np.testing.assert_array_equal(demand, [10, 10, 10, 10, 10])

    def test_periodic_non_divisible_period_is_periodic(self):
        # 30 ms packets in 100 ms steps: counts cycle 4,3,3 without drift.
        demand = gen_traffic(periodic(period_ms=30.0, packet_bits=1), Rng(0), 9000, 100.0)
        np.testing.assert_array_equal(demand[:6], [4, 3, 3, 4, 3, 3])
        np.testing.assert_array_equal(demand[:8997], np.tile([4, 3, 3], 2999))

    def test_zero_multiplier_silences(self):
        for pattern in (periodic(schedule=((0, 0.0),)), poisson(schedule=((0, 0.0),))):
            demand = gen_traffic(pattern, Rng(0), 10, 100.0)
            np.testing.assert_array_equal(demand, 0)

    def test_schedule_scales_periodic(self):
        pattern = periodic(period_ms=10.0, packet_bits=1,
                           schedule=((0, 1.0), (2, 2.0)))
        demand = gen_traffic(pattern, Rng(0), 4, 100.0)
        np.testing.assert_array_equal(demand, [10, 10, 20, 20])

    def test_poisson_mean_three_sigma(self):
        # rate 100 pps, 100 ms steps -> Poisson(10) per step.
        demand = gen_traffic(poisson(rate_pps=100.0, packet_bits=1), Rng(7), 10_000, 100.0)
        mean = demand.mean()
        assert 9.7 <= mean <= 10.3

    def test_poisson_dispersion(self):
        demand = gen_traffic(poisson(rate_pps=100.0, packet_bits=1), Rng(11), 100_000, 100.0)
        dispersion = demand.var() / demand.mean()
        assert 0.9 <= dispersion <= 1.1

    def test_deterministic_given_rng(self):
        a = gen_traffic(poisson(), Rng(3), 100, 100.0)
        b = gen_traffic(poisson(), Rng(3), 100, 100.0)
        np.testing.assert_array_equal(a, b)

    def test_bad_horizon(self):
        with pytest.raises(ContractError):
            gen_traffic(periodic(), Rng(0), 0, 100.0)


class TestTrafficPatternValidation:
    def test_schedule_must_start_at_zero(self):
        with pytest.raises(ContractError):
            periodic(schedule=((5, 1.0),))

    def test_schedule_strictly_increasing(self):
        with pytest.raises(ContractError):
            periodic(schedule=((0, 1.0), (5, 2.0), (5, 3.0)))

    def test_negative_multiplier_rejected(self):
        with pytest.raises(ContractError):
            periodic(schedule=((0, -1.0),))

    def test_kind_specific_rate_required(self):
        with pytest.raises(ContractError):
            TrafficPattern(kind="poisson", packet_bits=10)


class TestRequiredPrbs:
    def test_zero_demand(self):
        assert required_prbs(0, EnvConfig()) == 0

    def test_exact_multiple(self):
        cfg = EnvConfig()
        assert required_prbs(3 * cfg.prb_capacity_bits, cfg) == 3

    def test_ceiling_then_clip(self):
        cfg = EnvConfig(prb_total=2, chunk_size=1, num_chunks=3)
        assert required_prbs(int(3.2 * cfg.prb_capacity_bits), cfg) == 2


class TestEnvLoop:
    def test_reset_deterministic(self):
        env = PrbEnv(EnvConfig(), default_traffic_a())
        obs1 = env.reset(seed=4, episode=0)
        series1 = env._required.copy()
        obs2 = env.reset(seed=4, episode=0)
        np.testing.assert_array_equal(obs1.features, obs2.features)
        np.testing.assert_array_equal(series1, env._required)

    def test_initial_observation_contents(self):
        cfg = EnvConfig()
        env = PrbEnv(cfg, periodic(period_ms=10.0, packet_bits=120_000))
        obs = env.reset(seed=0)
        # 10 packets * 120 kbit = 1.2 Mbit -> 12 PRBs at 100 kbit per PRB
        assert obs.features[0] == pytest.approx(12 / cfg.prb_total)
        assert obs.features[1] == 0.0 and obs.features[2] == 0.0 and obs.features[3] == 0.0

    def test_zero_rate_initial_demand(self):
        env = PrbEnv(EnvConfig(), periodic(schedule=((0, 0.0),)))
        obs = env.reset(seed=0)
        assert obs.features[0] == 0.0

    def test_perfect_allocation(self):
        cfg = EnvConfig()
        env = PrbEnv(cfg, periodic(period_ms=10.0, packet_bits=100_000))
        env.reset(seed=0)           # required 10 = action 2 * chunk 5
        res = env.step(2)
        assert res.gap == 0 and res.reward == 1.0

    def test_underallocation_reward(self):
        cfg = EnvConfig(chunk_size=4, num_chunks=13)
        env = PrbEnv(cfg, periodic(period_ms=10.0, packet_bits=120_000))
        env.reset(seed=0)           # required 12, action 2 -> allocated 8
        res = env.step(2)
        assert res.required_prbs == 12 and res.allocated_prbs == 8
        assert res.gap == 4 and res.reward == pytest.approx(0.92)

    def test_overallocation_symmetric(self):
        env = PrbEnv(EnvConfig(), periodic(schedule=((0, 0.0),)))
        env.reset(seed=0)           # required 0, action 2 -> allocated 10
        res = env.step(2)
        assert res.gap == -10 and res.reward == pytest.approx(0.8)

    def test_reward_bounds_and_symmetry(self):
        cfg = EnvConfig()
        env = PrbEnv(cfg, default_traffic_a())
        env.reset(seed=1)
        rng = Rng(0)
        rewards = []
        while not env.done:
            res = env.step(rng.next_u64() % cfg.num_chunks)
            rewards.append(res.reward)
            assert 0.0 <= res.reward <= 1.0
            assert (res.reward == 1.0) == (res.gap == 0)
        assert len(rewards) == cfg.episode_steps

    def test_identical_seeds_identical_trajectories(self):
        cfg = EnvConfig()
        actions = [Rng(5).next_u64() % cfg.num_chunks for _ in range(cfg.episode_steps)]
        outs = []
        for _ in range(2):
            env = PrbEnv(cfg, default_traffic_a())
            env.reset(seed=9, episode=3)
            outs.append([env.step(a).reward for a in actions])
        assert outs[0] == outs[1]

    def test_action_range_checked(self):
        env = PrbEnv(EnvConfig(), default_traffic_b())
        env.reset(seed=0)
        with pytest.raises(ContractError):
            env.step(11)

    def test_step_after_done_rejected(self):
        cfg = EnvConfig(episode_steps=2)
        env = PrbEnv(cfg, default_traffic_b())
        env.reset(seed=0)
        env.step(0)
        res = env.step(0)
        assert res.done
        with pytest.raises(ContractError):
            env.step(0)

    def test_gap_feature_range(self):
        cfg = EnvConfig()
        env = PrbEnv(cfg, default_traffic_a())
        env.reset(seed=2)
        while not env.done:
            res = env.step(0)
            f = res.observation.features
            assert 0.0 <= f[0] <= 1.0 and 0.0 <= f[1] <= 1.0
            assert -1.0 <= f[2] <= 1.0 and 0.0 <= f[3] <= 1.0


class TestEnvConfigValidation:
    def test_chunk_budget(self):
        with pytest.raises(ContractError):
            EnvConfig(prb_total=10, chunk_size=5, num_chunks=4)

    def test_needs_two_actions(self):
        with pytest.raises(ContractError):
            EnvConfig(num_chunks=1, chunk_size=1)


def test_default_patterns_validate():
    assert default_traffic_a().kind == "poisson"
    assert default_traffic_b().kind == "periodic"
