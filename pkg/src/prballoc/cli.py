"""Command-line entry point.

Subcommands: train, evaluate, explain, robustness, compare, traffic-preview.
Every command takes --config (strict JSON), dotted --section.key overrides,
and writes CSV artifacts plus rendered figures into --out.  Exit codes:
0 success, 2 config/user error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import glob
import os
import re
import sys

import numpy as np

from . import outputs, plots
from .agents import GNN_REINFORCE, train
from .config import RunConfig, load_config
from .env import FEATURE_DIM, STREAM_TRAFFIC, gen_traffic, required_prbs
from .evaluation import (compare_agents, evaluate_policy, gap_cdf,
                         probe_graphs, robustness_sweep, smooth_trailing)
from .exceptions import ConfigError, ContractError, NumericError, PrbAllocError, ShapeError
from .explainer import active_edge_count, explain_timeline
from .nncore import Rng
from .policy_io import load_policy, save_policy


def _parse_args(argv):
    parser = argparse.ArgumentParser(
        prog="prballoc",
        description="PRB-allocation simulator, GNN-REINFORCE trainer and explainer",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", help="output directory (default from config)")
        p.add_argument("--seed", type=int, help="single seed override")
        p.add_argument("--jobs", type=int, default=1, help="parallel sweep cells")

    p_train = sub.add_parser("train", help="train one agent, save policy + history")
    common(p_train)
    p_train.add_argument("--agent", help="agent kind (default from config)")
    p_train.add_argument("--episodes", type=int, help="episode count override")

    p_eval = sub.add_parser("evaluate", help="greedy evaluation: gap CDF + accuracy")
    common(p_eval)
    p_eval.add_argument("--policy", required=True, help="trained policy file")
    p_eval.add_argument("--noise", type=float, default=0.0,
                        help="observation noise standard deviation")

    p_explain = sub.add_parser("explain", help="edge-importance masks per checkpoint")
    common(p_explain)
    p_explain.add_argument("--policy", help="single policy file")
    p_explain.add_argument("--checkpoints", help="directory with checkpoint_*.txt files")

    p_rob = sub.add_parser("robustness", help="20-level Gaussian-noise sweep")
    common(p_rob)
    p_rob.add_argument("--policy", required=True, help="trained policy file")

    p_cmp = sub.add_parser("compare", help="train all configured agents, compare rewards")
    common(p_cmp)

    p_traffic = sub.add_parser("traffic-preview", help="export the demand series")
    common(p_traffic)

    args, extra = parser.parse_known_args(argv)
    args.overrides = _parse_overrides(extra)
    return args


def _parse_overrides(extra):
    """Turn leftover `--section.key value` pairs into override tuples."""
    overrides = []
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not (tok.startswith("--") and "." in tok):
            raise ConfigError(f"unrecognized argument {tok!r} "
                              "(overrides look like --section.key value)")
        if "=" in tok:
            dotted, raw = tok[2:].split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"override {tok!r} is missing a value")
            dotted, raw = tok[2:], extra[i + 1]
            i += 2
        overrides.append((dotted, raw))
    return overrides


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config, args.overrides)
    if args.seed is not None:
        from dataclasses import replace
        cfg.train = replace(cfg.train, seed=args.seed)
        cfg.seeds = (args.seed,)
    if args.out is not None:
        cfg.out_dir = args.out
    return cfg


def _check_policy_dims(policy, cfg: RunConfig) -> None:
    if policy.num_chunks != cfg.env.num_chunks:
        raise ConfigError(
            f"policy has {policy.num_chunks} actions, config env has {cfg.env.num_chunks}"
        )
    if policy.net is not None and policy.net.w1.shape[0] != FEATURE_DIM:
        raise ConfigError(
            f"policy feature dim {policy.net.w1.shape[0]}, environment has {FEATURE_DIM}"
        )


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    agent = args.agent or cfg.agent
    if args.episodes is not None:
        from dataclasses import replace
        cfg.train = replace(cfg.train, episodes=args.episodes)
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    result = train(agent, cfg.env, cfg.traffic, cfg.train,
                   checkpoint_marks=cfg.checkpoint_marks)
    save_policy(os.path.join(out, "policy.txt"), result.policy)
    for label, episode, policy in result.checkpoints:
        save_policy(os.path.join(out, f"checkpoint_{label}_ep{episode}.txt"), policy)
    outputs.write_history_csv(os.path.join(out, "history.csv"),
                              result.history, result.losses, result.baselines)
    smoothed = smooth_trailing(result.history, 25) if result.history else []
    plots.render_history(result.history, smoothed, os.path.join(out, "history.png"))
    final = result.history[-50:]
    final_mean = float(np.mean(final)) if final else 0.0
    outputs.update_summary(os.path.join(out, "summary.json"), {
        "agent": agent,
        "train_seed": cfg.train.seed,
        "episodes": cfg.train.episodes,
        "final_mean_reward_50": final_mean,
    })
    print(f"trained {agent} for {cfg.train.episodes} episodes; "
          f"final 50-episode mean reward {final_mean:.3f}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_run_config(args)
    policy = load_policy(args.policy)
    _check_policy_dims(policy, cfg)
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    seed = cfg.seeds[0]
    res = evaluate_policy(policy, cfg.env, cfg.traffic, cfg.eval.episodes, seed,
                          noise_std=args.noise)
    cdf = gap_cdf(res.gaps)
    outputs.write_gap_cdf_csv(os.path.join(out, "gap_cdf.csv"), cdf)
    plots.render_gap_cdf(cdf, os.path.join(out, "gap_cdf.png"))
    outputs.update_summary(os.path.join(out, "summary.json"), {
        "accuracy": res.accuracy,
        "mean_episode_reward": float(np.mean(res.episode_rewards)),
        "eval_episodes": cfg.eval.episodes,
        "noise_std": args.noise,
        "eval_seed": seed,
    })
    print(f"accuracy {res.accuracy!r}")
    return 0


def _find_checkpoints(args, cfg: RunConfig):
    """(label, episode, policy) list from a directory or a single file."""
    if args.checkpoints:
        pattern = os.path.join(args.checkpoints, "checkpoint_*_ep*.txt")
        found = []
        for path in glob.glob(pattern):
            m = re.match(r"checkpoint_(.+)_ep(\d+)\.txt$", os.path.basename(path))
            if m:
                found.append((int(m.group(2)), m.group(1), path))
        if not found:
            raise ConfigError(f"no checkpoint_*_ep*.txt files in {args.checkpoints}")
        found.sort()
        out = []
        for episode, label, path in found:
            policy = load_policy(path)
            _check_policy_dims(policy, cfg)
            out.append((label, episode, policy))
        return out
    if args.policy:
        policy = load_policy(args.policy)
        _check_policy_dims(policy, cfg)
        return [("final", -1, policy)]
    raise ConfigError("explain needs --policy or --checkpoints")


def cmd_explain(args) -> int:
    cfg = _load_run_config(args)
    checkpoints = _find_checkpoints(args, cfg)
    for _, _, policy in checkpoints:
        if policy.kind != GNN_REINFORCE:
            raise ConfigError(f"cannot explain agent kind {policy.kind!r}; "
                              "the explainer needs a graph policy")
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    final_policy = checkpoints[-1][2]
    probe = probe_graphs(final_policy, cfg.env, cfg.traffic, cfg.seeds[0], count=1)[0]
    timeline = explain_timeline(checkpoints, probe, cfg.explain)
    for label, _episode, mask in timeline:
        outputs.write_explain_csv(os.path.join(out, f"explain_{label}.csv"),
                                  label, mask, cfg.explain.zero_threshold)
    outputs.write_explain_timeline_csv(os.path.join(out, "explain_timeline.csv"),
                                       timeline, cfg.explain.zero_threshold)
    plots.render_edge_importance(timeline, os.path.join(out, "explain.png"))
    final_mask = timeline[-1][2]
    n_active = active_edge_count(final_mask, cfg.explain.zero_threshold)
    outputs.update_summary(os.path.join(out, "summary.json"), {
        "active_edge_count": n_active,
        "explain_stages": [label for label, _, _ in timeline],
    })
    print(f"explained {len(timeline)} checkpoint(s); "
          f"final active non-self-loop edges: {n_active}")
    return 0


def cmd_robustness(args) -> int:
    cfg = _load_run_config(args)
    policy = load_policy(args.policy)
    _check_policy_dims(policy, cfg)
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    curve = robustness_sweep(policy, cfg.env, cfg.traffic, cfg.seeds,
                             episodes=cfg.eval.episodes, jobs=args.jobs)
    outputs.write_robustness_csv(os.path.join(out, "robustness.csv"), curve)
    plots.render_robustness(curve, os.path.join(out, "robustness.png"))
    outputs.update_summary(os.path.join(out, "summary.json"), {
        "robustness_level0_mean": float(curve.mean_reward[0]),
        "robustness_level_max_mean": float(curve.mean_reward[-1]),
    })
    print(f"robustness sweep done; reward at max noise "
          f"{curve.mean_reward[-1]:.3f} vs noiseless {curve.mean_reward[0]:.3f}")
    return 0


def cmd_compare(args) -> int:
    cfg = _load_run_config(args)
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    rows, _ = compare_agents(cfg.agents, cfg.env, cfg.traffic, cfg.train,
                             cfg.seeds, smoothing_window=cfg.eval.smoothing_window,
                             jobs=args.jobs)
    outputs.write_compare_csv(os.path.join(out, "compare.csv"), rows)
    plots.render_compare(rows, os.path.join(out, "compare.png"))
    print(f"compared {len(cfg.agents)} agents over {len(cfg.seeds)} seed(s)")
    return 0


def cmd_traffic_preview(args) -> int:
    cfg = _load_run_config(args)
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    rng = Rng(cfg.seeds[0]).derive(STREAM_TRAFFIC, 0)
    demand = gen_traffic(cfg.traffic, rng, cfg.env.episode_steps, cfg.env.step_ms)
    required = [required_prbs(d, cfg.env) for d in demand]
    outputs.write_traffic_csv(os.path.join(out, "traffic.csv"), demand, required)
    plots.render_traffic(demand, required, os.path.join(out, "traffic.png"))
    print(f"traffic preview written for {cfg.traffic.kind} pattern "
          f"({cfg.env.episode_steps} steps)")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "explain": cmd_explain,
    "robustness": cmd_robustness,
    "compare": cmd_compare,
    "traffic-preview": cmd_traffic_preview,
}


def run(argv) -> int:
    try:
        args = _parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, ShapeError, ContractError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except PrbAllocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
