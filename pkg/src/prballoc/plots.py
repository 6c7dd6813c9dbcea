"""Figure rendering for every report artifact.

Each CLI command writes its CSV data and a matching PNG next to it.  The
CSVs stay the canonical data contract; these figures are for eyeballing
runs without extra tooling.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path: str) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_history(history, smoothed, path: str) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(history, alpha=0.35, label="episode reward")
    ax.plot(smoothed, lw=2, label="smoothed")
    ax.set_xlabel("episode")
    ax.set_ylabel("total reward")
    ax.set_title("Training reward")
    ax.grid(alpha=0.3)
    ax.legend()
    _save(fig, path)


def render_traffic(demand_bits, required, path: str) -> None:
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    ax1.step(range(len(demand_bits)), demand_bits, where="post")
    ax1.set_ylabel("demand (bits/step)")
    ax1.grid(alpha=0.3)
    ax2.step(range(len(required)), required, where="post", color="tab:orange")
    ax2.set_ylabel("required PRBs")
    ax2.set_xlabel("step")
    ax2.grid(alpha=0.3)
    fig.suptitle("Traffic preview")
    _save(fig, path)


def render_gap_cdf(cdf, path: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    values = np.concatenate(([cdf.values[0]], cdf.values))
    fractions = np.concatenate(([0.0], cdf.fractions))
    ax.step(values, fractions, where="post")
    ax.set_xlabel("|allocation gap| (PRBs)")
    ax.set_ylabel("cumulative fraction")
    ax.set_ylim(0.0, 1.05)
    ax.set_title("Allocation-gap CDF")
    ax.grid(alpha=0.3)
    _save(fig, path)


def render_robustness(curve, path: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(curve.noise_levels, curve.mean_reward, yerr=curve.std_reward,
                marker="o", capsize=3)
    ax.set_xlabel("noise standard deviation")
    ax.set_ylabel("mean episode reward")
    ax.set_title("Robustness to observation noise")
    ax.grid(alpha=0.3)
    _save(fig, path)


def render_compare(rows, path: str) -> None:
    by_agent = {}
    for agent, episode, mean_reward, smoothed in rows:
        by_agent.setdefault(agent, []).append(smoothed)
    fig, ax = plt.subplots(figsize=(7, 4))
    for agent, series in by_agent.items():
        ax.plot(series, label=agent)
    ax.set_xlabel("episode")
    ax.set_ylabel("seed-mean total reward (smoothed)")
    ax.set_title("Agent comparison")
    ax.grid(alpha=0.3)
    ax.legend()
    _save(fig, path)


def render_edge_importance(timeline, path: str) -> None:
    """One panel per checkpoint: bar chart of per-edge importance."""
    n = len(timeline)
    fig, axes = plt.subplots(1, n, figsize=(4 * n, 3.5), squeeze=False)
    for ax, (label, episode, mask) in zip(axes[0], timeline):
        labels = [f"{s}-{d}" for s, d in mask.edges]
        ax.bar(range(len(labels)), mask.importance)
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=90, fontsize=7)
        ax.set_ylim(0.0, 1.05)
        ax.set_title(f"{label} (episode {episode})")
        ax.set_ylabel("edge importance")
    _save(fig, path)
