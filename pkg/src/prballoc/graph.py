"""State-graph construction and the graph-convolution forward/backward pass.

Environment states over a sliding window become nodes of a temporal-chain
graph (plus self-loops).  Propagation uses the symmetrically normalized
adjacency D^{-1/2} A D^{-1/2}; edge weights, when given, flow through the
normalization so the explainer can differentiate through degrees as well.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ContractError, NumericError, ShapeError

_DEGREE_EPS = 1e-12


@dataclass(frozen=True)
class StateGraph:
    """Window of state feature vectors with temporal-chain edges.

    Edges are directed (src, dst) pairs, duplicate-free, canonically sorted
    by (src, dst), and always include a self-loop for every node.
    """

    node_features: np.ndarray          # N x F
    edges: tuple                       # ((src, dst), ...) canonical order
    target_node: int

    @property
    def num_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def num_edges(self) -> int:
        return len(self.edges)


@dataclass
class GcnParams:
    """Weights of the two graph-convolution layers plus the policy head."""

    w1: np.ndarray       # F x H
    b1: np.ndarray       # H
    w2: np.ndarray       # H x H
    b2: np.ndarray       # H
    w_head: np.ndarray   # H x K
    b_head: np.ndarray   # K

    def arrays(self) -> list:
        return [self.w1, self.b1, self.w2, self.b2, self.w_head, self.b_head]

    def copy(self) -> "GcnParams":
        return GcnParams(*(a.copy() for a in self.arrays()))

    def check_finite(self) -> None:
        for a in self.arrays():
            if not np.all(np.isfinite(a)):
                raise NumericError("policy parameters contain non-finite entries")


@dataclass
class ForwardCache:
    """Everything the backward pass needs to replay one forward pass."""

    graph: StateGraph
    params: GcnParams
    edge_weights: np.ndarray     # weights actually used (ones if none given)
    adj: np.ndarray              # weighted adjacency A
    inv_sqrt_deg: np.ndarray     # s = d^{-1/2}, zeroed where degenerate
    degenerate: np.ndarray       # bool per node: degree below threshold
    a_hat: np.ndarray            # normalized adjacency actually used
    x: np.ndarray
    m1: np.ndarray               # A_hat @ x
    z1: np.ndarray
    h1: np.ndarray
    m2: np.ndarray               # A_hat @ h1
    z2: np.ndarray
    h2: np.ndarray
    logits: np.ndarray


_chain_edges_cache: dict = {}
_unit_adj_cache: dict = {}


def chain_edges(n: int) -> tuple:
    """Canonical edge set for an n-node window: self-loops + temporal chain."""
    if n not in _chain_edges_cache:
        edges = [(i, i) for i in range(n)]
        for i in range(n - 1):
            edges.append((i, i + 1))
            edges.append((i + 1, i))
        _chain_edges_cache[n] = tuple(sorted(edges))
    return _chain_edges_cache[n]


def build_state_graph(window, window_size: int) -> StateGraph:
    """Build the graph for a window of observations, newest last.

    One node per observation in temporal order; the newest observation is
    the target node.  Short windows (episode start) yield smaller graphs.
    """
    feats = [np.asarray(f, dtype=np.float64).reshape(-1) for f in window]
    n = len(feats)
    if n == 0:
        raise ContractError("state-graph window must contain at least one observation")
    if n > window_size:
        raise ContractError(f"window has {n} observations, limit is {window_size}")
    dim = feats[0].size
    for f in feats:
        if f.size != dim:
            raise ShapeError(
                f"inconsistent feature dimensions in window: {f.size} vs {dim}"
            )
    return StateGraph(
        node_features=np.stack(feats),
        edges=chain_edges(n),
        target_node=n - 1,
    )


def _build_normalization(graph: StateGraph, edge_weights: np.ndarray):
    """Weighted adjacency, guarded inverse-sqrt degrees and A_hat."""
    n = graph.num_nodes
    adj = np.zeros((n, n))
    for (src, dst), w in zip(graph.edges, edge_weights):
        adj[dst, src] += w
    deg = adj.sum(axis=1)
    degenerate = deg < _DEGREE_EPS
    inv_sqrt = np.where(degenerate, 0.0, 1.0 / np.sqrt(np.where(degenerate, 1.0, deg)))
    a_hat = (inv_sqrt[:, None] * adj) * inv_sqrt[None, :]
    return adj, inv_sqrt, degenerate, a_hat


def normalized_adjacency(graph: StateGraph, edge_weights=None):
    """Symmetric normalization D^{-1/2} A D^{-1/2} of the weighted adjacency.

    Self-loops live in the edge list, so there is no separate +I term.
    Nodes whose incident weights sum below 1e-12 get a zeroed row instead of
    an exception (the explainer may drive all edges of a node to ~0); the
    returned boolean mask flags them.

    Returns (a_hat, degenerate_mask).
    """
    weights = _validate_edge_weights(graph, edge_weights)
    adj, _, degenerate, a_hat = _build_normalization(graph, weights)
    return a_hat, degenerate


def _validate_edge_weights(graph: StateGraph, edge_weights) -> np.ndarray:
    if edge_weights is None:
        return np.ones(graph.num_edges)
    weights = np.asarray(edge_weights, dtype=np.float64).reshape(-1)
    if weights.size != graph.num_edges:
        raise ContractError(
            f"edge_weights has length {weights.size}, graph has {graph.num_edges} edges"
        )
    if np.any(weights < 0.0) or np.any(weights > 1.0):
        raise ContractError("edge weights must lie in [0, 1]")
    return weights


def gcn_forward(graph: StateGraph, params: GcnParams, edge_weights=None):
    """Two relu graph-convolution layers plus a linear head on the target node.

    Returns (logits, cache).  With no edge weights the normalized adjacency
    is cached per edge set, which keeps the training loop cheap.
    """
    x = graph.node_features
    if x.shape[1] != params.w1.shape[0]:
        raise ShapeError(
            f"feature dim {x.shape[1]} does not match w1 input dim {params.w1.shape[0]}"
        )
    if edge_weights is None:
        key = graph.edges
        entry = _unit_adj_cache.get(key)
        if entry is None:
            entry = _build_normalization(graph, np.ones(graph.num_edges))
            _unit_adj_cache[key] = entry
        adj, inv_sqrt, degenerate, a_hat = entry
        weights = np.ones(graph.num_edges)
    else:
        weights = _validate_edge_weights(graph, edge_weights)
        adj, inv_sqrt, degenerate, a_hat = _build_normalization(graph, weights)

    m1 = a_hat @ x
    z1 = m1 @ params.w1 + params.b1
    if not np.all(np.isfinite(z1)):
        raise NumericError("non-finite values in graph-convolution layer 1")
    h1 = np.maximum(z1, 0.0)
    m2 = a_hat @ h1
    z2 = m2 @ params.w2 + params.b2
    if not np.all(np.isfinite(z2)):
        raise NumericError("non-finite values in graph-convolution layer 2")
    h2 = np.maximum(z2, 0.0)
    logits = h2[graph.target_node] @ params.w_head + params.b_head
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite values in policy head")
    cache = ForwardCache(
        graph=graph, params=params, edge_weights=weights,
        adj=adj, inv_sqrt_deg=inv_sqrt, degenerate=degenerate, a_hat=a_hat,
        x=x, m1=m1, z1=z1, h1=h1, m2=m2, z2=z2, h2=h2, logits=logits,
    )
    return logits, cache


def gcn_backward(cache: ForwardCache, logit_grad: np.ndarray, with_edge_grads: bool = False):
    """Exact gradients of logit_grad . logits w.r.t. parameters and edge weights.

    Edge-weight gradients chain through the degree normalization (degrees
    depend on the weights, so D^{-1/2} is differentiated, not frozen); they
    are skipped unless requested because training never needs them.

    Returns (param_grads, edge_weight_grads_or_None).
    """
    g = np.asarray(logit_grad, dtype=np.float64).reshape(-1)
    params = cache.params
    if g.shape != cache.logits.shape:
        raise ContractError(
            f"logit_grad has shape {g.shape}, logits have shape {cache.logits.shape}"
        )
    target = cache.graph.target_node
    h = cache.h2[target]

    b_head_g = g.copy()
    w_head_g = np.outer(h, g)
    dh2 = np.zeros_like(cache.h2)
    dh2[target] = params.w_head @ g

    dz2 = dh2 * (cache.z2 > 0.0)
    b2_g = dz2.sum(axis=0)
    w2_g = cache.m2.T @ dz2
    dm2 = dz2 @ params.w2.T

    dh1 = cache.a_hat.T @ dm2
    dz1 = dh1 * (cache.z1 > 0.0)
    b1_g = dz1.sum(axis=0)
    w1_g = cache.m1.T @ dz1

    grads = GcnParams(w1=w1_g, b1=b1_g, w2=w2_g, b2=b2_g, w_head=w_head_g, b_head=b_head_g)
    if not with_edge_grads:
        return grads, None

    dm1 = dz1 @ params.w1.T
    # dL/dA_hat from both propagation layers.
    g_hat = dm2 @ cache.h1.T + dm1 @ cache.x.T
    s = cache.inv_sqrt_deg
    # d(s_p)/d(d_p) = -1/2 d^{-3/2} = -s^3/2; zero on guarded nodes.
    s_prime = -0.5 * s ** 3
    ga = g_hat * cache.adj
    u = ga @ s              # row sums weighted by s_j
    v = ga.T @ s            # column sums weighted by s_i
    d_adj = (s[:, None] * s[None, :]) * g_hat + (s_prime * (u + v))[:, None]
    edge_grads = np.empty(cache.graph.num_edges)
    for idx, (src, dst) in enumerate(cache.graph.edges):
        edge_grads[idx] = d_adj[dst, src]
    return grads, edge_grads
