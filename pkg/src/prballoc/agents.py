"""Monte Carlo policy-gradient (REINFORCE) training and the benchmark agents.

Five agents share one action-selection interface: the GNN policy (graph
input), a dense MLP policy (raw feature input), uniform random, a fixed
static allocation, and a nearest-chunk oracle that reads the true demand.
Learnable policies train with plain SGD on the episode REINFORCE loss, an
EMA baseline and global gradient-norm clipping; every backward pass is
hand-derived and checked against finite differences in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .env import STREAM_AGENT, STREAM_INIT, EnvConfig, PrbEnv, TrafficPattern
from .exceptions import ContractError, NumericError, ShapeError
from .graph import GcnParams, build_state_graph, gcn_backward, gcn_forward
from .nncore import Rng, greedy_index, sample_categorical, softmax

GNN_REINFORCE = "gnn-reinforce"
MLP_REINFORCE = "mlp-reinforce"
RANDOM = "random"
STATIC = "static"
ORACLE = "oracle"

ALL_AGENTS = (GNN_REINFORCE, MLP_REINFORCE, RANDOM, STATIC, ORACLE)
LEARNABLE = (GNN_REINFORCE, MLP_REINFORCE)


@dataclass
class PolicyParams:
    """Agent kind plus its weights; trivial agents carry action-space info."""

    kind: str
    net: GcnParams | None = None
    num_chunks: int = 0
    chunk_size: int = 0
    static_action: int = 0

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            kind=self.kind,
            net=self.net.copy() if self.net is not None else None,
            num_chunks=self.num_chunks,
            chunk_size=self.chunk_size,
            static_action=self.static_action,
        )


@dataclass
class TrainConfig:
    episodes: int = 1500
    discount: float = 0.95
    learning_rate: float = 0.005
    baseline_decay: float = 0.9
    seed: int = 0
    gradient_clip_norm: float = 5.0
    hidden_dim: int = 16
    use_baseline: bool = True
    entropy_bonus: float = 0.01
    static_action: int = 0

    def __post_init__(self):
        if not 0.0 <= self.discount <= 1.0:
            raise ContractError("discount must be in [0, 1]")
        if self.learning_rate <= 0.0:
            raise ContractError("learning_rate must be positive")
        if not 0.0 <= self.baseline_decay < 1.0:
            raise ContractError("baseline_decay must be in [0, 1)")
        if self.gradient_clip_norm <= 0.0:
            raise ContractError("gradient_clip_norm must be positive")
        if self.episodes < 0 or self.hidden_dim < 1:
            raise ContractError("episodes must be >= 0 and hidden_dim >= 1")
        if self.entropy_bonus < 0.0:
            raise ContractError("entropy_bonus must be >= 0")


@dataclass
class EpisodeTrace:
    """Per-step rollout record consumed by one REINFORCE update."""

    inputs: list = field(default_factory=list)    # StateGraph or feature vector
    actions: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    rewards: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.actions)


@dataclass
class TrainResult:
    policy: PolicyParams
    history: list                 # total reward per episode
    losses: list
    baselines: list
    checkpoints: list             # (label, episode, PolicyParams)


def init_policy(kind: str, feature_dim: int, env_cfg: EnvConfig, cfg: TrainConfig) -> PolicyParams:
    """Fresh policy. Hidden weights are Glorot-uniform; the head and all
    biases start at zero so the initial action distribution is exactly
    uniform and exploration starts from a clean slate.
    """
    if kind not in ALL_AGENTS:
        raise ContractError(f"unknown agent kind {kind!r}")
    policy = PolicyParams(kind=kind, num_chunks=env_cfg.num_chunks,
                          chunk_size=env_cfg.chunk_size, static_action=cfg.static_action)
    if kind not in LEARNABLE:
        return policy
    rng = Rng(cfg.seed).derive(STREAM_INIT)
    h = cfg.hidden_dim
    k = env_cfg.num_chunks
    lim1 = math.sqrt(6.0 / (feature_dim + h))
    lim2 = math.sqrt(6.0 / (h + h))
    policy.net = GcnParams(
        w1=rng.uniform_array((feature_dim, h), -lim1, lim1),
        b1=np.zeros(h),
        w2=rng.uniform_array((h, h), -lim2, lim2),
        b2=np.zeros(h),
        w_head=np.zeros((h, k)),
        b_head=np.zeros(k),
    )
    return policy


def mlp_forward(features: np.ndarray, params: GcnParams):
    """Dense two-layer relu net plus linear head on a raw feature vector."""
    x = np.asarray(features, dtype=np.float64).reshape(1, -1)
    if x.shape[1] != params.w1.shape[0]:
        raise ShapeError(
            f"feature dim {x.shape[1]} does not match w1 input dim {params.w1.shape[0]}"
        )
    z1 = x @ params.w1 + params.b1
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ params.w2 + params.b2
    h2 = np.maximum(z2, 0.0)
    logits = (h2 @ params.w_head + params.b_head)[0]
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite values in mlp forward pass")
    return logits, (x, z1, h1, z2, h2)


def mlp_backward(cache, params: GcnParams, logit_grad: np.ndarray) -> GcnParams:
    x, z1, h1, z2, h2 = cache
    g = np.asarray(logit_grad, dtype=np.float64).reshape(1, -1)
    b_head_g = g[0].copy()
    w_head_g = h2.T @ g
    dh2 = g @ params.w_head.T
    dz2 = dh2 * (z2 > 0.0)
    b2_g = dz2[0].copy()
    w2_g = h1.T @ dz2
    dh1 = dz2 @ params.w2.T
    dz1 = dh1 * (z1 > 0.0)
    b1_g = dz1[0].copy()
    w1_g = x.T @ dz1
    return GcnParams(w1=w1_g, b1=b1_g, w2=w2_g, b2=b2_g, w_head=w_head_g, b_head=b_head_g)


def oracle_action(required: int, chunk_size: int, num_chunks: int) -> int:
    """Nearest achievable chunk, lowest index on ties."""
    gaps = [abs(required - a * chunk_size) for a in range(num_chunks)]
    return greedy_index(-np.asarray(gaps, dtype=np.float64))


def policy_probs(policy: PolicyParams, inp) -> np.ndarray:
    """Action distribution for any agent kind (oracle/static are one-hot)."""
    k = policy.num_chunks
    kind = policy.kind
    if kind in LEARNABLE:
        if kind == GNN_REINFORCE:
            logits, _ = gcn_forward(inp, policy.net)
        else:
            logits, _ = mlp_forward(inp, policy.net)
        return softmax(logits)
    if kind == RANDOM:
        return np.full(k, 1.0 / k)
    probs = np.zeros(k)
    if kind == STATIC:
        probs[policy.static_action] = 1.0
    else:  # oracle: inp is the true required-PRB count
        probs[oracle_action(int(inp), policy.chunk_size, k)] = 1.0
    return probs


def select_action(policy: PolicyParams, inp, rng: Rng, mode: str = "sample"):
    """Pick an action; returns (action, log_prob, probs).

    Input depends on the agent: a StateGraph for the GNN, the raw feature
    vector for the MLP, the true required-PRB count for the oracle, None
    for random/static.  Greedy mode breaks ties toward the lowest index.
    """
    if mode not in ("sample", "greedy"):
        raise ContractError(f"unknown selection mode {mode!r}")
    probs = policy_probs(policy, inp)
    if mode == "greedy":
        action = greedy_index(probs)
    else:
        action = sample_categorical(probs, rng)
    p = probs[action]
    log_prob = float(np.log(p)) if p > 0.0 else -math.inf
    return action, log_prob, probs


def policy_input(policy: PolicyParams, features: np.ndarray, window: list,
                 env: PrbEnv, window_size: int):
    """Assemble the agent-specific decision input for the current step."""
    kind = policy.kind
    if kind == GNN_REINFORCE:
        return build_state_graph(window, window_size)
    if kind == MLP_REINFORCE:
        return features
    if kind == ORACLE:
        return env.required_now
    return None


def compute_returns(rewards, gamma: float) -> np.ndarray:
    """Discounted reward-to-go: G_t = r_t + gamma * G_{t+1}."""
    if not 0.0 <= gamma <= 1.0:
        raise ContractError("gamma must be in [0, 1]")
    returns = np.zeros(len(rewards))
    g = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        g = rewards[t] + gamma * g
        returns[t] = g
    return returns


def _accumulate_policy_gradient(policy: PolicyParams, trace: EpisodeTrace,
                                advantages: np.ndarray, entropy_bonus: float):
    """Gradient of sum_t [-A_t ln pi(a_t|s_t) - beta H(pi(.|s_t))] and the loss.

    The entropy bonus keeps the action distribution from collapsing before
    the per-state chunk distinctions are resolved; the REINFORCE loss value
    reported excludes it.
    """
    net = policy.net
    grads = GcnParams(*(np.zeros_like(a) for a in net.arrays()))
    loss = 0.0
    for inp, action, adv in zip(trace.inputs, trace.actions, advantages):
        if policy.kind == GNN_REINFORCE:
            logits, cache = gcn_forward(inp, net)
        else:
            logits, cache = mlp_forward(inp, net)
        probs = softmax(logits)
        log_probs = np.log(probs)
        loss += -adv * log_probs[action]
        dlogits = adv * probs
        dlogits[action] -= adv
        if entropy_bonus > 0.0:
            entropy = -float(probs @ log_probs)
            # d(-H)/dlogits = p * (ln p + H)
            dlogits += entropy_bonus * probs * (log_probs + entropy)
        if policy.kind == GNN_REINFORCE:
            step_g, _ = gcn_backward(cache, dlogits)
        else:
            step_g = mlp_backward(cache, net, dlogits)
        for acc, g in zip(grads.arrays(), step_g.arrays()):
            acc += g
    return grads, loss


def clip_gradients(grads: GcnParams, max_norm: float) -> float:
    """Scale all gradients in place so the global norm is at most max_norm."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.arrays()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.arrays():
            g *= scale
    return total


def reinforce_update(policy: PolicyParams, trace: EpisodeTrace,
                     running_baseline: float, cfg: TrainConfig):
    """One REINFORCE step on a full episode trace.

    The baseline is an EMA of episode mean returns, refreshed before use;
    advantages A_t = G_t - b weight the log-prob gradients, an entropy
    bonus discourages premature determinism, the global gradient norm is
    clipped, and plain SGD applies the step.  Returns (policy,
    new_baseline, loss); parameters update in place.
    """
    if len(trace) == 0:
        raise ContractError("cannot update from an empty trace")
    returns = compute_returns(trace.rewards, cfg.discount)
    if cfg.use_baseline:
        baseline = cfg.baseline_decay * running_baseline \
            + (1.0 - cfg.baseline_decay) * float(returns.mean())
    else:
        baseline = running_baseline
    advantages = returns - baseline
    grads, loss = _accumulate_policy_gradient(policy, trace, advantages,
                                              cfg.entropy_bonus)
    for idx, g in enumerate(grads.arrays()):
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in parameter array {idx}")
    clip_gradients(grads, cfg.gradient_clip_norm)
    for p, g in zip(policy.net.arrays(), grads.arrays()):
        p -= cfg.learning_rate * g
    return policy, baseline, loss


def run_episode(policy: PolicyParams, env: PrbEnv, seed: int, episode: int,
                mode: str = "sample") -> EpisodeTrace:
    """Roll out one episode, building the graph window incrementally."""
    rng = Rng(seed).derive(STREAM_AGENT, episode)
    w = env.cfg.window_size
    obs = env.reset(seed, episode)
    window = [obs.features]
    trace = EpisodeTrace()
    while not env.done:
        inp = policy_input(policy, window[-1], window, env, w)
        action, log_prob, _ = select_action(policy, inp, rng, mode)
        result = env.step(action)
        trace.inputs.append(inp)
        trace.actions.append(action)
        trace.log_probs.append(log_prob)
        trace.rewards.append(result.reward)
        if not result.done:
            window.append(result.observation.features)
            if len(window) > w:
                window.pop(0)
    return trace


def _checkpoint_label(index: int, count: int) -> str:
    if count == 1:
        return "final"
    if index == 0:
        return "early"
    if index == count - 1:
        return "final"
    return "mid" if count == 3 else f"mid{index}"


def train(agent_kind: str, env_cfg: EnvConfig, pattern: TrafficPattern,
          cfg: TrainConfig, checkpoint_marks=None) -> TrainResult:
    """Train (or roll out) an agent for cfg.episodes episodes.

    Learnable agents get one REINFORCE update per episode; trivial agents
    just collect their episode rewards so the five-way comparison shares a
    code path.  Checkpoint marks are fractions of the episode budget; mark
    0.0 snapshots the untouched initial policy.  Deterministic given the
    seed: traffic, action sampling and init draw from separate Rng streams.
    """
    env = PrbEnv(env_cfg, pattern)
    feature_dim = 4
    policy = init_policy(agent_kind, feature_dim, env_cfg, cfg)
    marks = sorted(checkpoint_marks) if checkpoint_marks else []
    mark_eps = [min(cfg.episodes, max(0, math.ceil(m * cfg.episodes))) for m in marks]
    checkpoints = []

    def take_checkpoints(done_episodes: int) -> None:
        while len(checkpoints) < len(mark_eps) and mark_eps[len(checkpoints)] <= done_episodes:
            label = _checkpoint_label(len(checkpoints), len(mark_eps))
            checkpoints.append((label, done_episodes, policy.copy()))

    take_checkpoints(0)
    history, losses, baselines = [], [], []
    baseline = 0.0
    learnable = agent_kind in LEARNABLE
    for episode in range(cfg.episodes):
        trace = run_episode(policy, env, cfg.seed, episode, mode="sample")
        if learnable:
            policy, baseline, loss = reinforce_update(policy, trace, baseline, cfg)
        else:
            loss = 0.0
        history.append(float(sum(trace.rewards)))
        losses.append(float(loss))
        baselines.append(float(baseline))
        take_checkpoints(episode + 1)
    return TrainResult(policy=policy, history=history, losses=losses,
                       baselines=baselines, checkpoints=checkpoints)
