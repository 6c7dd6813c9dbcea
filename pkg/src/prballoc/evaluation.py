"""Quantitative analyses: gap CDF, allocation accuracy, agent comparison and
the Gaussian-noise robustness sweep.

A step counts as accurate when |gap| < chunk_size, i.e. the agent picked the
best achievable chunk (exact-zero gap is impossible whenever the required
count is not a chunk multiple).  Observation noise, when enabled, perturbs
every feature before graph construction and the features are clipped back
to their invariant ranges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .agents import PolicyParams, policy_input, select_action, train
from .env import STREAM_AGENT, STREAM_NOISE, EnvConfig, PrbEnv, TrafficPattern
from .exceptions import ContractError
from .graph import StateGraph, build_state_graph
from .nncore import Rng

NOISE_LEVELS = 20
NOISE_MAX = 0.1

_FEATURE_LOW = np.array([0.0, 0.0, -1.0, 0.0])
_FEATURE_HIGH = np.array([1.0, 1.0, 1.0, 1.0])


@dataclass
class GapCdf:
    """Empirical distribution of absolute allocation gaps."""

    values: np.ndarray       # sorted unique |gap| values
    fractions: np.ndarray    # cumulative fraction at each value

    def at(self, gap_value: float) -> float:
        """CDF evaluated at gap_value (fraction of gaps <= it)."""
        idx = np.searchsorted(self.values, gap_value, side="right") - 1
        return 0.0 if idx < 0 else float(self.fractions[idx])


@dataclass
class RobustnessCurve:
    noise_levels: np.ndarray
    mean_reward: np.ndarray
    std_reward: np.ndarray


@dataclass
class EvalResult:
    gaps: list
    episode_rewards: list
    accuracy: float


def evaluate_policy(policy: PolicyParams, env_cfg: EnvConfig, pattern: TrafficPattern,
                    episodes: int, seed: int, noise_std: float = 0.0) -> EvalResult:
    """Greedy rollout over several episodes, optionally under observation noise.

    With noise_std > 0, i.i.d. zero-mean Gaussian noise of that standard
    deviation lands on every observation feature before the feature enters
    the window; the oracle/static/random agents never read observations, so
    their results are noise-invariant by construction.
    """
    if episodes < 1:
        raise ContractError("need at least one evaluation episode")
    if noise_std < 0.0:
        raise ContractError("noise_std must be >= 0")
    env = PrbEnv(env_cfg, pattern)
    w = env_cfg.window_size
    gaps, episode_rewards = [], []
    accurate = 0
    total = 0
    for episode in range(episodes):
        rng = Rng(seed).derive(STREAM_AGENT, episode)
        noise_rng = Rng(seed).derive(STREAM_NOISE, episode)
        obs = env.reset(seed, episode)
        window = [_noisy(obs.features, noise_std, noise_rng)]
        ep_reward = 0.0
        while not env.done:
            inp = policy_input(policy, window[-1], window, env, w)
            action, _, _ = select_action(policy, inp, rng, mode="greedy")
            result = env.step(action)
            ep_reward += result.reward
            gaps.append(result.gap)
            total += 1
            if abs(result.gap) < env_cfg.chunk_size:
                accurate += 1
            if not result.done:
                window.append(_noisy(result.observation.features, noise_std, noise_rng))
                if len(window) > w:
                    window.pop(0)
        episode_rewards.append(ep_reward)
    return EvalResult(gaps=gaps, episode_rewards=episode_rewards,
                      accuracy=accurate / total)


def _noisy(features: np.ndarray, noise_std: float, rng: Rng) -> np.ndarray:
    if noise_std == 0.0:
        return features
    noise = np.array([rng.gauss() for _ in range(features.size)])
    return np.clip(features + noise_std * noise, _FEATURE_LOW, _FEATURE_HIGH)


def gap_cdf(gaps) -> GapCdf:
    """Empirical CDF over |gap|; monotone with terminal value 1."""
    if len(gaps) == 0:
        raise ContractError("cannot build a CDF from an empty gap list")
    magnitudes = np.abs(np.asarray(gaps, dtype=np.int64))
    values, counts = np.unique(magnitudes, return_counts=True)
    fractions = np.cumsum(counts) / magnitudes.size
    return GapCdf(values=values, fractions=fractions)


def accuracy_from_cdf(cdf: GapCdf, chunk_size: int) -> float:
    """CDF mass strictly below one chunk - identical to the accuracy metric."""
    below = cdf.values < chunk_size
    return float(cdf.fractions[below][-1]) if below.any() else 0.0


def noise_levels() -> np.ndarray:
    """The 20 evenly spaced noise standard deviations from 0 to 0.1."""
    return np.linspace(0.0, NOISE_MAX, NOISE_LEVELS)


def _mean_reward_cell(args) -> float:
    policy, env_cfg, pattern, episodes, seed, level = args
    res = evaluate_policy(policy, env_cfg, pattern, episodes, seed, noise_std=level)
    return float(np.mean(res.episode_rewards))


def _run_cells(fn, cells, jobs: int):
    """Evaluate independent cells, optionally across processes.

    Results come back in cell order either way, so the merge is
    deterministic regardless of completion order.
    """
    if jobs <= 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, cells))


def robustness_sweep(policy: PolicyParams, env_cfg: EnvConfig, pattern: TrafficPattern,
                     seeds, episodes: int = 20, jobs: int = 1) -> RobustnessCurve:
    """Mean/std episode reward per noise level, averaged over seeds.

    Level 0 reuses the exact noiseless code path, so it matches a plain
    evaluation bit for bit.
    """
    seeds = list(seeds)
    if not seeds:
        raise ContractError("need at least one seed")
    levels = noise_levels()
    cells = [(policy, env_cfg, pattern, episodes, seed, float(level))
             for level in levels for seed in seeds]
    values = _run_cells(_mean_reward_cell, cells, jobs)
    means = np.zeros_like(levels)
    stds = np.zeros_like(levels)
    for i in range(levels.size):
        per_seed = values[i * len(seeds):(i + 1) * len(seeds)]
        means[i] = np.mean(per_seed)
        stds[i] = np.std(per_seed)
    return RobustnessCurve(noise_levels=levels, mean_reward=means, std_reward=stds)


def smooth_trailing(series, window: int) -> np.ndarray:
    """Trailing-window moving average (window shrinks at the start)."""
    out = np.zeros(len(series))
    acc = 0.0
    for i, v in enumerate(series):
        acc += v
        if i >= window:
            acc -= series[i - window]
        out[i] = acc / min(i + 1, window)
    return out


def _train_cell(args):
    kind, env_cfg, pattern, cfg = args
    return train(kind, env_cfg, pattern, cfg)


def compare_agents(agent_kinds, env_cfg: EnvConfig, pattern: TrafficPattern,
                   train_cfg, seeds, smoothing_window: int = 25, jobs: int = 1):
    """Train every agent on identical per-seed traffic; seed-mean reward curves.

    Returns (rows, results): rows are (agent, episode, mean_reward, smoothed)
    sorted by agent then episode; results maps (agent, seed) -> TrainResult
    so callers can reuse the trained policies.
    """
    from dataclasses import replace

    seeds = list(seeds)
    if not seeds:
        raise ContractError("need at least one seed")
    keys = [(kind, seed) for kind in agent_kinds for seed in seeds]
    cells = [(kind, env_cfg, pattern, replace(train_cfg, seed=seed))
             for kind, seed in keys]
    trained = _run_cells(_train_cell, cells, jobs)
    results = dict(zip(keys, trained))
    rows = []
    for kind in agent_kinds:
        histories = np.array([results[(kind, s)].history for s in seeds])
        if histories.size == 0:
            continue
        mean_curve = histories.mean(axis=0)
        smoothed = smooth_trailing(mean_curve, smoothing_window)
        for episode, (m, sm) in enumerate(zip(mean_curve, smoothed)):
            rows.append((kind, episode, float(m), float(sm)))
    return rows, results


PROBE_SPAN = 3  # a 2-layer GCN sees 2 hops, so 3 chained states cover it


def probe_graphs(policy: PolicyParams, env_cfg: EnvConfig, pattern: TrafficPattern,
                 seed: int, count: int, span: int = PROBE_SPAN):
    """Deterministic probe states for the explainer.

    Rolls the policy greedily and snapshots `span`-state windows spread
    evenly over the rollout.  The span defaults to the GCN's receptive
    field: edges farther than two hops from the target node provably cannot
    change the logits, so a longer probe would only carry inert edges.
    """
    if count < 1:
        raise ContractError("need at least one probe")
    env = PrbEnv(env_cfg, pattern)
    w = env_cfg.window_size
    windows = []
    episode = 0
    while len(windows) < max(count, env_cfg.episode_steps - span):
        rng = Rng(seed).derive(STREAM_AGENT, episode)
        obs = env.reset(seed, episode)
        window = [obs.features]
        while not env.done:
            if len(window) >= span:
                windows.append(list(window[-span:]))
            inp = policy_input(policy, window[-1], window, env, w)
            action, _, _ = select_action(policy, inp, rng, mode="greedy")
            result = env.step(action)
            if not result.done:
                window.append(result.observation.features)
                if len(window) > w:
                    window.pop(0)
        episode += 1
    idx = np.linspace(0, len(windows) - 1, count).round().astype(int)
    return [build_state_graph(windows[i], span) for i in idx]
