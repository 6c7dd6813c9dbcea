"""CSV/JSON artifact writers.

All files are written atomically (temp + rename).  Floats go through repr()
so identical runs produce byte-identical files; the timestamp field in
summary.json is the one deliberately non-deterministic value.
"""

from __future__ import annotations

import json
import os
import time

from .policy_io import write_text_atomic


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: str, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    write_text_atomic(path, "\n".join(lines) + "\n")


def update_summary(path: str, fields: dict) -> None:
    """Merge fields into summary.json, refreshing the timestamp."""
    data = {}
    if os.path.exists(path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError):
            data = {}
    data.update(fields)
    data["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    write_text_atomic(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_history_csv(path: str, history, losses, baselines) -> None:
    rows = [(e, float(r), float(l), float(b))
            for e, (r, l, b) in enumerate(zip(history, losses, baselines))]
    write_csv(path, ("episode", "total_reward", "loss", "baseline"), rows)


def write_traffic_csv(path: str, demand_bits, required) -> None:
    rows = [(step, int(d), int(r)) for step, (d, r) in enumerate(zip(demand_bits, required))]
    write_csv(path, ("step", "demand_bits", "required_prbs"), rows)


def write_gap_cdf_csv(path: str, cdf) -> None:
    rows = [(int(v), float(f)) for v, f in zip(cdf.values, cdf.fractions)]
    write_csv(path, ("abs_gap", "cum_fraction"), rows)


def write_robustness_csv(path: str, curve) -> None:
    rows = [(float(n), float(m), float(s))
            for n, m, s in zip(curve.noise_levels, curve.mean_reward, curve.std_reward)]
    write_csv(path, ("noise_std", "mean_reward", "std_reward"), rows)


def write_compare_csv(path: str, rows) -> None:
    write_csv(path, ("agent", "episode", "mean_reward", "smoothed"), rows)


def write_explain_csv(path: str, checkpoint_label: str, mask, zero_threshold: float) -> None:
    rows = []
    for (src, dst), imp in zip(mask.edges, mask.importance):
        rounded = round(float(imp), 4)
        rows.append((checkpoint_label, src, dst, rounded,
                     int(rounded >= zero_threshold)))
    write_csv(path, ("checkpoint", "src", "dst", "importance", "is_active"), rows)


def write_explain_timeline_csv(path: str, timeline, zero_threshold: float) -> None:
    rows = []
    for label, _episode, mask in timeline:
        for (src, dst), imp in zip(mask.edges, mask.importance):
            rounded = round(float(imp), 4)
            rows.append((label, src, dst, rounded, int(rounded >= zero_threshold)))
    write_csv(path, ("checkpoint", "src", "dst", "importance", "is_active"), rows)
