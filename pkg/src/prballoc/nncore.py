"""Minimal dense numerical kernel.

Matrices are plain 2-D float64 numpy arrays in row-major order; vectors are
1-D float64 arrays.  Everything downstream (graph convolution, policy nets,
explainer) builds on the handful of operations here, and every hand-derived
backward pass is validated against `finite_diff_check`.
"""

from __future__ import annotations

import math

import numpy as np

from .exceptions import ContractError, NumericError, ShapeError

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    """splitmix64 output scrambler (Steele, Lea & Flood 2014)."""
    z = (z + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Rng:
    """xoshiro256** generator (Blackman & Vigna 2018), seeded via splitmix64.

    Implemented in-repo with pure integer arithmetic so identical seeds give
    identical draw sequences on every platform.  Gaussians use Box-Muller
    with the second variate cached; exponentials use inversion.
    """

    __slots__ = ("seed", "_s", "_gauss_spare")

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        z = self.seed
        s = []
        for _ in range(4):
            z = (z + _GOLDEN) & _MASK64
            s.append(_mix64(z))
        self._s = s
        self._gauss_spare = None

    def derive(self, *keys: int) -> "Rng":
        """Child generator for an independent, reproducible stream.

        Derivation depends only on the constructor seed and the key path,
        never on how many draws this generator has produced.
        """
        z = self.seed
        for k in keys:
            z = _mix64((z ^ ((k + 1) * _GOLDEN)) & _MASK64)
        return Rng(z)

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def uniform(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def exponential(self, mean: float) -> float:
        """Exponential variate with the given mean (inversion method)."""
        # uniform() < 1 strictly, so the log argument is never zero.
        return -mean * math.log(1.0 - self.uniform())

    def gauss(self) -> float:
        """Standard normal via Box-Muller; second variate cached."""
        if self._gauss_spare is not None:
            z = self._gauss_spare
            self._gauss_spare = None
            return z
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._gauss_spare = r * math.sin(theta)
        return r * math.cos(theta)

    def normal(self, loc: float, scale: float) -> float:
        return loc + scale * self.gauss()

    def uniform_array(self, shape, low: float, high: float) -> np.ndarray:
        flat = np.array([self.uniform() for _ in range(int(np.prod(shape)))])
        return (low + (high - low) * flat).reshape(shape)


def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dense affine map: out[i, j] = sum_k x[i, k] w[k, j] + b[j]."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"linear_forward: x has shape {x.shape}, w has shape {w.shape}")
    if b.shape != (w.shape[1],):
        raise ShapeError(f"linear_forward: bias has shape {b.shape}, expected ({w.shape[1]},)")
    with np.errstate(over="ignore", invalid="ignore"):
        out = x @ w + b
    if not np.all(np.isfinite(out)):
        raise NumericError("linear_forward produced non-finite values")
    return out


def softmax(z: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over a 1-D logit vector."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.size == 0:
        raise ContractError(f"softmax expects a nonempty 1-D vector, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise NumericError("softmax input contains non-finite entries")
    e = np.exp(z - z.max())
    return e / e.sum()


def greedy_index(v: np.ndarray) -> int:
    """Argmax with the lowest index winning ties."""
    return int(np.argmax(v))


def sample_categorical(p: np.ndarray, rng: Rng) -> int:
    """Inverse-CDF draw from a probability vector."""
    p = np.asarray(p, dtype=np.float64)
    total = p.sum()
    if abs(total - 1.0) > 1e-9:
        raise ContractError(f"probabilities sum to {total!r}, not 1 within 1e-9")
    if np.any(p < 0.0):
        raise ContractError("probabilities must be non-negative")
    u = rng.uniform()
    acc = 0.0
    for i, pi in enumerate(p):
        acc += pi
        if u < acc:
            return i
    return int(len(p) - 1)


def finite_diff_check(loss_fn, grad_fn, params, epsilon: float = 1e-5) -> float:
    """Compare an analytic gradient against central differences.

    `params` is a single float64 array or a list of them; `loss_fn(params)`
    returns a scalar and `grad_fn(params)` arrays of matching shapes.
    Returns the max over all entries of
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    if epsilon <= 0.0:
        raise ContractError("epsilon must be positive")
    single = isinstance(params, np.ndarray)
    plist = [params] if single else list(params)
    analytic = grad_fn(params)
    alist = [analytic] if single else list(analytic)
    worst = 0.0
    for ai, (arr, grad) in enumerate(zip(plist, alist)):
        flat = arr.reshape(-1)
        gflat = np.asarray(grad).reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + epsilon
            lo_hi = loss_fn(params)
            flat[i] = old - epsilon
            lo_lo = loss_fn(params)
            flat[i] = old
            if not (math.isfinite(lo_hi) and math.isfinite(lo_lo)):
                raise NumericError(
                    f"non-finite loss while perturbing parameter array {ai}, entry {i}"
                )
            numeric = (lo_hi - lo_lo) / (2.0 * epsilon)
            a = gflat[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
