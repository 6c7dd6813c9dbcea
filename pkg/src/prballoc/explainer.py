"""Optimization-based edge-importance explainer.

A per-edge mask in (0, 1) (sigmoid of a raw parameter) multiplies the edge
weights of the policy's graph; the mask is optimized to keep the policy's
greedy decision while an L1 term shrinks edge influence and an element-wise
entropy term pushes each mask toward 0 or 1.  Self-loops stay fixed at
weight 1 and are never optimized: masking a node's own features would
explain feature importance, not edge importance.

Raw masks use Adam steps: the loss gradient w.r.t. a raw mask carries a
sigmoid-derivative factor that is ~0.007 at the initial raw value 5.0, so
fixed-step descent would stall in the saturated region regardless of the
learning rate, while Adam's normalized steps traverse it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ContractError
from .graph import StateGraph, gcn_backward, gcn_forward
from .nncore import greedy_index, softmax


@dataclass
class ExplainConfig:
    iterations: int = 300
    mask_lr: float = 0.05
    sparsity_weight: float = 0.05
    entropy_weight: float = 0.01
    init_raw_mask: float = 5.0
    zero_threshold: float = 0.01

    def __post_init__(self):
        if self.iterations < 0:
            raise ContractError("iterations must be >= 0")
        if self.mask_lr <= 0.0:
            raise ContractError("mask_lr must be positive")
        if self.sparsity_weight < 0.0 or self.entropy_weight < 0.0:
            raise ContractError("regularizer weights must be >= 0")
        if not 0.0 < self.zero_threshold < 1.0:
            raise ContractError("zero_threshold must be in (0, 1)")


@dataclass
class EdgeMask:
    """Per-edge importance in canonical edge order; self-loops pinned to 1.

    Self-loop raw entries are +inf so importance = sigmoid(raw) holds for
    every entry while self-loop importance is exactly 1.
    """

    raw_mask: np.ndarray
    edges: tuple

    @property
    def importance(self) -> np.ndarray:
        return _sigmoid(self.raw_mask)


def _sigmoid(m: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-m))


def _entropy(q: np.ndarray) -> np.ndarray:
    qc = np.clip(q, 1e-12, 1.0 - 1e-12)
    return -qc * np.log(qc) - (1.0 - qc) * np.log(1.0 - qc)


def masked_loss(policy_net, graph: StateGraph, raw_mask: np.ndarray,
                target_action: int, cfg: ExplainConfig):
    """Explainer loss and its gradient w.r.t. the raw mask.

    L = -ln p_masked(a*) + lambda1 * sum sigmoid(m) + lambda2 * sum H(sigmoid(m)).
    dH/dm is the exact form -sigmoid'(m) * m (since logit(sigmoid(m)) = m),
    so the two regularizers balance exactly where m = lambda1/lambda2.
    """
    q = _sigmoid(raw_mask)
    logits, cache = gcn_forward(graph, policy_net, edge_weights=q)
    probs = softmax(logits)
    ce = -math.log(max(probs[target_action], 1e-300))
    dlogits = probs.copy()
    dlogits[target_action] -= 1.0
    _, q_grads = gcn_backward(cache, dlogits, with_edge_grads=True)
    raw_grads = np.zeros_like(raw_mask)
    fin = np.isfinite(raw_mask)
    sig_prime = q[fin] * (1.0 - q[fin])
    raw_grads[fin] = sig_prime * (
        q_grads[fin] + cfg.sparsity_weight - cfg.entropy_weight * raw_mask[fin]
    )
    loss = ce + cfg.sparsity_weight * float(q.sum()) \
        + cfg.entropy_weight * float(_entropy(q).sum())
    return loss, raw_grads, probs


def explain(policy, graph: StateGraph, cfg: ExplainConfig,
            record_history: bool = False):
    """Optimize a per-edge mask that preserves the policy's greedy action.

    The target action is the unmasked greedy decision; only non-self-loop
    raw masks are optimized (Adam), the policy stays frozen.  With an
    iteration budget of 0 the initial mask is returned unchanged.  With
    record_history the per-iteration importance matrix comes back too.
    """
    net = policy.net if hasattr(policy, "net") else policy
    if net is None:
        raise ContractError("explainer needs a policy with graph weights")
    logits, _ = gcn_forward(graph, net)
    target_action = greedy_index(logits)

    edges = graph.edges
    opt = np.array([i for i, (s, d) in enumerate(edges) if s != d], dtype=np.intp)
    raw = np.full(len(edges), math.inf)
    raw[opt] = cfg.init_raw_mask

    history = [] if record_history else None
    m1 = np.zeros(opt.size)
    m2 = np.zeros(opt.size)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    for it in range(1, cfg.iterations + 1):
        _, raw_grads, _ = masked_loss(net, graph, raw, target_action, cfg)
        g = raw_grads[opt]
        m1 = beta1 * m1 + (1.0 - beta1) * g
        m2 = beta2 * m2 + (1.0 - beta2) * g * g
        m1_hat = m1 / (1.0 - beta1 ** it)
        m2_hat = m2 / (1.0 - beta2 ** it)
        raw[opt] -= cfg.mask_lr * m1_hat / (np.sqrt(m2_hat) + eps)
        if record_history:
            history.append(_sigmoid(raw))
    mask = EdgeMask(raw_mask=raw, edges=edges)
    if record_history:
        return mask, np.array(history)
    return mask


def importance_report(mask: EdgeMask, zero_threshold: float):
    """Rows of (edge, importance, is_active), sorted by importance.

    Importance is rounded to 4 decimals; is_active applies the threshold to
    the rounded value so the report is self-consistent.  Ties keep the
    canonical edge order.
    """
    rows = []
    for idx, (edge, imp) in enumerate(zip(mask.edges, mask.importance)):
        rounded = round(float(imp), 4)
        rows.append((edge, rounded, rounded >= zero_threshold, idx))
    rows.sort(key=lambda r: (-r[1], r[3]))
    return [(edge, imp, active) for edge, imp, active, _ in rows]


def active_edge_count(mask: EdgeMask, zero_threshold: float,
                      include_self_loops: bool = False) -> int:
    count = 0
    for (src, dst), imp in zip(mask.edges, mask.importance):
        if src == dst and not include_self_loops:
            continue
        if round(float(imp), 4) >= zero_threshold:
            count += 1
    return count


def explain_timeline(checkpoints, probe_graph: StateGraph, cfg: ExplainConfig):
    """Explain the same probe graph under each training checkpoint.

    `checkpoints` is a sequence of (label, episode, policy); returns
    (label, episode, EdgeMask) per entry, tracing how edge importance
    evolves from the uniform initial mask to the trained policy's sparse
    pattern.
    """
    out = []
    for label, episode, policy in checkpoints:
        out.append((label, episode, explain(policy, probe_graph, cfg)))
    return out
