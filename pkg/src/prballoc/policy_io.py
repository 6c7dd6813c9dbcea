"""Trained-policy persistence: versioned flat text, bit-exact round trips.

Every float is written with repr(), i.e. the shortest decimal string that
parses back to the identical 64-bit value (17 significant digits at most).
"""

from __future__ import annotations

import os
import tempfile

import numpy as np

from .agents import ALL_AGENTS, LEARNABLE, PolicyParams
from .exceptions import ConfigError
from .graph import GcnParams

FORMAT_HEADER = "prballoc-policy v1"
_MATRIX_ORDER = ("w1", "b1", "w2", "b2", "w_head", "b_head")


def write_text_atomic(path: str, text: str) -> None:
    """Write via a temp file + rename so interrupted runs never truncate."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_policy(path: str, policy: PolicyParams) -> None:
    lines = [FORMAT_HEADER,
             f"agent {policy.kind}",
             f"actions num_chunks={policy.num_chunks} chunk_size={policy.chunk_size} "
             f"static_action={policy.static_action}"]
    if policy.net is not None:
        for name in _MATRIX_ORDER:
            arr = np.atleast_2d(getattr(policy.net, name))
            lines.append(f"matrix {name} {arr.shape[0]} {arr.shape[1]}")
            for row in arr:
                lines.append(" ".join(repr(float(v)) for v in row))
    lines.append("end")
    write_text_atomic(path, "\n".join(lines) + "\n")


def load_policy(path: str) -> PolicyParams:
    try:
        with open(path) as fh:
            lines = [ln.rstrip("\n") for ln in fh]
    except OSError as exc:
        raise ConfigError(f"cannot read policy file {path}: {exc}") from exc
    if not lines or lines[0] != FORMAT_HEADER:
        raise ConfigError(f"{path} is not a {FORMAT_HEADER!r} file")
    try:
        kind = lines[1].split(" ", 1)[1]
        fields = dict(part.split("=") for part in lines[2].split(" ")[1:])
        policy = PolicyParams(kind=kind,
                              num_chunks=int(fields["num_chunks"]),
                              chunk_size=int(fields["chunk_size"]),
                              static_action=int(fields["static_action"]))
        if kind not in ALL_AGENTS:
            raise ConfigError(f"{path}: unknown agent kind {kind!r}")
        idx = 3
        matrices = {}
        while idx < len(lines) and lines[idx] != "end":
            tag, name, rows, cols = lines[idx].split(" ")
            if tag != "matrix":
                raise ConfigError(f"{path}: expected a matrix header on line {idx + 1}")
            rows, cols = int(rows), int(cols)
            data = [[float(v) for v in lines[idx + 1 + r].split(" ")] for r in range(rows)]
            arr = np.array(data)
            if arr.shape != (rows, cols):
                raise ConfigError(f"{path}: matrix {name} shape mismatch")
            matrices[name] = arr
            idx += 1 + rows
        if idx >= len(lines):
            raise ConfigError(f"{path}: truncated policy file (missing end marker)")
    except (IndexError, KeyError, ValueError) as exc:
        raise ConfigError(f"corrupt policy file {path}: {exc}") from exc
    if kind in LEARNABLE:
        missing = [n for n in _MATRIX_ORDER if n not in matrices]
        if missing:
            raise ConfigError(f"{path}: missing matrices {missing}")
        policy.net = GcnParams(
            w1=matrices["w1"], b1=matrices["b1"][0],
            w2=matrices["w2"], b2=matrices["b2"][0],
            w_head=matrices["w_head"], b_head=matrices["b_head"][0],
        )
    return policy
