"""Discrete-time PRB-allocation environment.

Each decision step the gNB grants a chunk-multiple of PRBs against the
step's traffic demand; the reward is 1 - |required - allocated| / prb_total,
so exact allocation scores 1 and over/under-allocation are penalized
symmetrically.  Demand comes from one of two traffic generators: Poisson
packet arrivals (pattern A) or strictly periodic packets (pattern B), both
supporting a piecewise-constant rate schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .exceptions import ContractError, ShapeError
from .nncore import Rng

FEATURE_DIM = 4

# Stream ids for deriving independent Rng streams from one run seed.
STREAM_TRAFFIC = 1
STREAM_AGENT = 2
STREAM_NOISE = 3
STREAM_INIT = 4


@dataclass
class TrafficPattern:
    """Downlink traffic model: Poisson arrivals or a periodic packet train.

    rate_schedule is a piecewise-constant scaling of the base rate:
    ((start_step, multiplier), ...) with start_steps strictly increasing
    from 0.  Multiplier m divides the periodic interval (period/m) and
    multiplies the Poisson rate (rate*m); m = 0 silences a segment.
    """

    kind: str                         # "poisson" | "periodic"
    packet_bits: int
    rate_pps: float | None = None     # poisson
    period_ms: float | None = None    # periodic
    rate_schedule: tuple = ((0, 1.0),)

    def __post_init__(self):
        self.rate_schedule = tuple((int(s), float(m)) for s, m in self.rate_schedule)
        self.validate()

    def validate(self) -> None:
        if self.kind not in ("poisson", "periodic"):
            raise ContractError(f"unknown traffic kind {self.kind!r}")
        if self.packet_bits <= 0:
            raise ContractError("packet_bits must be positive")
        if self.kind == "poisson" and (self.rate_pps is None or self.rate_pps <= 0):
            raise ContractError("poisson traffic needs rate_pps > 0")
        if self.kind == "periodic" and (self.period_ms is None or self.period_ms <= 0):
            raise ContractError("periodic traffic needs period_ms > 0")
        if not self.rate_schedule or self.rate_schedule[0][0] != 0:
            raise ContractError("rate_schedule must start at step 0")
        starts = [s for s, _ in self.rate_schedule]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ContractError("rate_schedule start_steps must be strictly increasing")
        if any(m < 0 for _, m in self.rate_schedule):
            raise ContractError("rate_schedule multipliers must be >= 0")


@dataclass
class EnvConfig:
    """Scale of the simulated cell and of one episode."""

    step_ms: float = 100.0
    prb_total: int = 50
    chunk_size: int = 5
    num_chunks: int = 11              # actions allocate 0, chunk, ..., (K-1)*chunk
    prb_capacity_bits: int = 100_000  # bits deliverable per PRB per step
    episode_steps: int = 200
    window_size: int = 8

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if min(self.step_ms, self.prb_total, self.chunk_size, self.num_chunks,
               self.prb_capacity_bits, self.episode_steps, self.window_size) <= 0:
            raise ContractError("all environment config values must be positive")
        if self.num_chunks < 2:
            raise ContractError("need at least two allocation actions")
        if (self.num_chunks - 1) * self.chunk_size > self.prb_total:
            raise ContractError(
                f"largest allocation {(self.num_chunks - 1) * self.chunk_size} "
                f"exceeds prb_total {self.prb_total}"
            )


@dataclass(frozen=True)
class Observation:
    """State features: [demand, prev allocation, prev gap, episode progress].

    Demand and allocation are normalized by prb_total, the signed gap by
    prb_total (range [-1, 1]), progress by episode_steps.
    """

    features: np.ndarray

    @property
    def demand(self) -> float:
        return float(self.features[0])


@dataclass(frozen=True)
class StepResult:
    observation: Observation
    reward: float
    gap: int
    required_prbs: int
    allocated_prbs: int
    done: bool


def default_traffic_a() -> TrafficPattern:
    """Stochastic Poisson downlink traffic (pattern A)."""
    return TrafficPattern(kind="poisson", rate_pps=100.0, packet_bits=120_000,
                          rate_schedule=((0, 1.0), (50, 2.0), (100, 3.0), (150, 1.5)))


def default_traffic_b() -> TrafficPattern:
    """Periodic downlink traffic (pattern B); required PRBs sweep mid-range."""
    return TrafficPattern(kind="periodic", period_ms=10.0, packet_bits=120_000,
                          rate_schedule=((0, 1.0), (50, 2.0), (100, 3.0), (150, 1.5)))


def _segments(pattern: TrafficPattern, horizon_steps: int):
    """Schedule segments clipped to the horizon: (start_step, end_step, mult)."""
    sched = list(pattern.rate_schedule) + [(horizon_steps, 0.0)]
    out = []
    for (start, mult), (nxt, _) in zip(sched, sched[1:]):
        if start >= horizon_steps:
            break
        out.append((start, min(nxt, horizon_steps), mult))
    return out


def gen_traffic(pattern: TrafficPattern, rng: Rng, horizon_steps: int, step_ms: float) -> np.ndarray:
    """Per-step demand in bits over the horizon.

    Poisson: exponential inter-arrival times with mean 1/(rate*multiplier),
    binned into steps; each schedule segment restarts the process at the
    segment boundary, which by memorylessness is distribution-identical.
    Periodic: one packet every period_ms/multiplier starting exactly at each
    segment boundary, counted with exact rational arithmetic so the series
    never drifts.
    """
    if horizon_steps < 1:
        raise ContractError("horizon must be at least one step")
    counts = np.zeros(horizon_steps, dtype=np.int64)
    for start, end, mult in _segments(pattern, horizon_steps):
        if mult == 0.0:
            continue
        if pattern.kind == "poisson":
            mean_ms = 1000.0 / (pattern.rate_pps * mult)
            t = start * step_ms + rng.exponential(mean_ms)
            limit = end * step_ms
            while t < limit:
                counts[int(t // step_ms)] += 1
                t += rng.exponential(mean_ms)
        else:
            period = Fraction(pattern.period_ms) / Fraction(mult)
            seg_start = Fraction(step_ms) * start
            for step in range(start, end):
                a = Fraction(step_ms) * step - seg_start
                b = a + Fraction(step_ms)
                counts[step] += math.ceil(b / period) - math.ceil(a / period)
    return counts * pattern.packet_bits


def required_prbs(demand_bits: int, cfg: EnvConfig) -> int:
    """PRBs needed to carry the step's demand, clipped to the cell total."""
    if demand_bits < 0:
        raise ContractError("demand must be non-negative")
    need = -(-int(demand_bits) // cfg.prb_capacity_bits)
    return min(need, cfg.prb_total)


class PrbEnv:
    """Gym-style allocation loop over a pre-generated demand series.

    Traffic for episode e of run seed s comes from the Rng stream
    (s, STREAM_TRAFFIC, e), so every agent sees identical demand for a
    given seed regardless of its own action sampling.
    """

    def __init__(self, cfg: EnvConfig, pattern: TrafficPattern):
        self.cfg = cfg
        self.pattern = pattern
        self._required = None
        self._demand = None
        self._t = 0
        self._prev_alloc = 0
        self._prev_gap = 0
        self._done = True

    def reset(self, seed: int, episode: int = 0) -> Observation:
        rng = Rng(seed).derive(STREAM_TRAFFIC, episode)
        self._demand = gen_traffic(self.pattern, rng, self.cfg.episode_steps, self.cfg.step_ms)
        self._required = np.array(
            [required_prbs(d, self.cfg) for d in self._demand], dtype=np.int64
        )
        self._t = 0
        self._prev_alloc = 0
        self._prev_gap = 0
        self._done = False
        return self._observe()

    def _observe(self) -> Observation:
        cfg = self.cfg
        demand = 0 if self._t >= cfg.episode_steps else self._required[self._t]
        return Observation(features=np.array([
            demand / cfg.prb_total,
            self._prev_alloc / cfg.prb_total,
            self._prev_gap / cfg.prb_total,
            self._t / cfg.episode_steps,
        ]))

    @property
    def required_now(self) -> int:
        """True required PRBs for the pending decision (oracle input)."""
        if self._done:
            raise ContractError("episode is finished")
        return int(self._required[self._t])

    @property
    def done(self) -> bool:
        return self._done

    def step(self, action: int) -> StepResult:
        cfg = self.cfg
        if self._done:
            raise ContractError("step() called on a finished episode")
        if not 0 <= action < cfg.num_chunks:
            raise ContractError(f"action {action} outside [0, {cfg.num_chunks})")
        required = int(self._required[self._t])
        allocated = action * cfg.chunk_size
        gap = required - allocated
        reward = 1.0 - abs(gap) / cfg.prb_total
        self._t += 1
        self._prev_alloc = allocated
        self._prev_gap = gap
        self._done = self._t >= cfg.episode_steps
        return StepResult(
            observation=self._observe(),
            reward=reward,
            gap=gap,
            required_prbs=required,
            allocated_prbs=allocated,
            done=self._done,
        )
