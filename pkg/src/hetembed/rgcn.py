"""Relational message passing with hand-written backpropagation.

Each layer maps node states through one matrix per link type plus a self
matrix::

    h_u^(k+1) = relu( sum_l mean_{v in N_l(u)} h_v^(k) @ W_l^(k)
                      + h_u^(k) @ W_0^(k) )

with the activation omitted on the final layer so output embeddings are
unbounded.  Neighbor sets are the symmetric per-type neighbor lists;
during minibatch training they are subsampled to a fixed fanout and the
mean is taken over the sampled set.  Inference always runs with full
neighborhoods.

Supervision is link reconstruction: a bilinear-diagonal decoder
``s = e_u . (a_l * e_v)`` scored with the log-sigmoid negative-sampling
loss, corrupting the first endpoint against the degree^0.75 noise
distribution of its node type.  Inputs are node attributes when the graph
has them (all types must agree on the attribute dimension) and a learned
per-node input row otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit

from .sampler import NoiseDistribution
from .tables import EmbeddingTable

_RELU_KINDS = ("attrs", "learned")


@dataclass
class RgcnParams:
    w_rel: list            # per layer: (n_link_types, d_k, d_{k+1})
    w_self: list           # per layer: (d_k, d_{k+1})
    decoder: np.ndarray    # (n_link_types, d_out) bilinear diagonals
    input_rows: np.ndarray | None   # (n_nodes, d_in) when attributes absent

    @property
    def depth(self):
        return len(self.w_self)

    def dims(self):
        return [w.shape[0] for w in self.w_self] + [self.w_self[-1].shape[1]]


@dataclass
class ComputationGraph:
    """Layered sampled neighborhoods for a seed batch.

    ``blocks[k]`` maps each node needed at layer k+1 to its sampled
    neighbor ids per link type; ``needs[k]`` is the sorted node list whose
    layer-k states the forward pass materializes.
    """
    blocks: list
    needs: list
    seeds: list


def input_dim(g):
    """Shared attribute dimension, or None when the graph has none."""
    dims = {a.shape[1] for a in g.attributes if a is not None}
    if not dims:
        return None
    if len(dims) > 1 or any(a is None for a in g.attributes):
        raise ValueError(
            "message passing needs one attribute dimension across all node "
            f"types; found {sorted(dims)} with "
            f"{sum(a is None for a in g.attributes)} attribute-free types")
    return dims.pop()


def init_rgcn(g, cfg, rng):
    """Glorot-initialized parameters for ``cfg.layers`` layers."""
    d_in = input_dim(g)
    learned = d_in is None
    if learned:
        d_in = cfg.dim
    dims = [d_in] + ([cfg.hidden] if cfg.layers == 2 else []) + [cfg.dim]
    w_rel, w_self = [], []
    for k in range(len(dims) - 1):
        lim = np.sqrt(6.0 / (dims[k] + dims[k + 1]))
        w_rel.append(rng.uniform(-lim, lim,
                                 (g.n_link_types, dims[k], dims[k + 1])))
        w_self.append(rng.uniform(-lim, lim, (dims[k], dims[k + 1])))
    decoder = np.ones((g.n_link_types, cfg.dim))
    input_rows = None
    if learned:
        input_rows = (rng.random((g.n_nodes, d_in)) - 0.5) / d_in
    return RgcnParams(w_rel=w_rel, w_self=w_self, decoder=decoder,
                      input_rows=input_rows)


def node_inputs(g, params, ids):
    """Layer-0 state rows for ``ids`` (attributes or learned rows)."""
    if params.input_rows is not None:
        return {int(v): params.input_rows[int(v)] for v in ids}
    out = {}
    for v in ids:
        v = int(v)
        k = g.node_type_of(v)
        lo, _ = g.nodes_of_type(k)
        out[v] = g.attributes[k][v - lo]
    return out


def sample_neighborhood(g, seeds, fanout, depth, rng):
    """Layered fixed-fanout neighbor sampling for a seed batch.

    ``fanout <= 0`` keeps full neighbor lists.  Sampling is without
    replacement and deterministic given (g, seeds, rng state).
    """
    seeds = sorted({int(v) for v in seeds})
    needs = [None] * (depth + 1)
    blocks = [None] * depth
    needs[depth] = seeds
    for k in range(depth - 1, -1, -1):
        block = {}
        needed = set(needs[k + 1])
        for u in needs[k + 1]:
            per_type = {}
            for l in range(g.n_link_types):
                ids, _ = g.neighbor_slice(u, l)
                if len(ids) == 0:
                    continue
                if 0 < fanout < len(ids):
                    pick = rng.choice(len(ids), size=fanout, replace=False)
                    chosen = np.sort(ids[pick])
                else:
                    chosen = ids.copy()
                per_type[l] = chosen
                needed.update(chosen.tolist())
            block[u] = per_type
        blocks[k] = block
        needs[k] = sorted(needed)
    return ComputationGraph(blocks=blocks, needs=needs, seeds=seeds)


def rgcn_forward(comp, params, x0):
    """Run the sampled forward pass.

    ``x0`` maps each node in ``comp.needs[0]`` to its input row.  Returns
    (h, pre, means): per-layer state dicts, pre-activation dicts and the
    cached per-(node, link type) neighbor means the backward pass reuses.
    """
    depth = params.depth
    h = [None] * (depth + 1)
    pre = [None] * (depth + 1)
    means = [None] * depth
    h[0] = {v: np.asarray(x0[v], dtype=np.float64) for v in comp.needs[0]}
    for k in range(depth):
        Wl, W0 = params.w_rel[k], params.w_self[k]
        last = k == depth - 1
        h_next, pre_next, mean_k = {}, {}, {}
        for u in comp.needs[k + 1]:
            z = h[k][u] @ W0
            m_u = {}
            for l, nbrs in comp.blocks[k][u].items():
                m = np.mean([h[k][int(v)] for v in nbrs], axis=0)
                m_u[l] = m
                z = z + m @ Wl[l]
            if not np.all(np.isfinite(z)):
                raise FloatingPointError(
                    f"non-finite layer state at node {u}, layer {k + 1}")
            pre_next[u] = z
            h_next[u] = z if last else np.maximum(z, 0.0)
            mean_k[u] = m_u
        h[k + 1] = h_next
        pre[k + 1] = pre_next
        means[k] = mean_k
    return h, pre, means


def rgcn_layer(g, H, params, k, nodes=None, activate=True):
    """One full-neighborhood layer applied to state dict ``H``.

    Computes layer ``k`` outputs for ``nodes`` (default: every node whose
    state and full neighborhood is covered by ``H``).  Utility form of the
    forward pass used directly by tests and small graphs.
    """
    if nodes is None:
        nodes = sorted(H)
    Wl, W0 = params.w_rel[k], params.w_self[k]
    out = {}
    for u in nodes:
        z = np.asarray(H[u], dtype=np.float64) @ W0
        for l in range(g.n_link_types):
            ids, _ = g.neighbor_slice(u, l)
            if len(ids) == 0:
                continue
            m = np.mean([H[int(v)] for v in ids], axis=0)
            z = z + m @ Wl[l]
        out[u] = np.maximum(z, 0.0) if activate else z
    return out


def decoder_loss(params, h_out, pos, negs):
    """Log-sigmoid reconstruction loss on final-layer states.

    ``pos`` is a list of (u, l, v); ``negs[i]`` lists the corrupted head
    ids for positive i.  Returns (loss, grads on h_out keyed by node,
    decoder gradient array).
    """
    loss = 0.0
    gh = {}
    gdec = np.zeros_like(params.decoder)

    def add(node, vec):
        if node in gh:
            gh[node] = gh[node] + vec
        else:
            gh[node] = vec.copy()

    for (u, l, v), nn in zip(pos, negs):
        a = params.decoder[l]
        e_u, e_v = h_out[u], h_out[v]
        av = a * e_v
        s_pos = e_u @ av
        g0 = expit(s_pos) - 1.0
        loss -= log_expit(s_pos)
        add(u, g0 * av)
        acc_v = g0 * e_u
        gdec[l] += g0 * (e_u * e_v)
        for un in nn:
            e_n = h_out[un]
            s_neg = e_n @ av
            gk = expit(s_neg)
            loss -= log_expit(-s_neg)
            add(un, gk * av)
            acc_v = acc_v + gk * e_n
            gdec[l] += gk * (e_n * e_v)
        add(v, a * acc_v)
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite decoder loss")
    return float(loss), gh, gdec


def rgcn_backward(comp, params, h, pre, means, gh_out):
    """Backpropagate head gradients through the sampled layers.

    Returns (gw_rel, gw_self, gx0) matching the parameter layout; ``gx0``
    maps layer-0 node ids to input-row gradients.
    """
    depth = params.depth
    gw_rel = [np.zeros_like(w) for w in params.w_rel]
    gw_self = [np.zeros_like(w) for w in params.w_self]
    gh = {v: g.copy() for v, g in gh_out.items()}
    for k in range(depth - 1, -1, -1):
        Wl, W0 = params.w_rel[k], params.w_self[k]
        gh_prev = {}

        def add_prev(node, vec):
            if node in gh_prev:
                gh_prev[node] = gh_prev[node] + vec
            else:
                gh_prev[node] = vec.copy()

        for u in comp.needs[k + 1]:
            g_u = gh.get(u)
            if g_u is None:
                continue
            if k + 1 < depth:
                g_u = g_u * (pre[k + 1][u] > 0)
            gw_self[k] += np.outer(h[k][u], g_u)
            add_prev(u, W0 @ g_u)
            for l, nbrs in comp.blocks[k][u].items():
                m = means[k][u][l]
                gw_rel[k][l] += np.outer(m, g_u)
                back = (Wl[l] @ g_u) / len(nbrs)
                for v in nbrs:
                    add_prev(int(v), back)
        gh = gh_prev
    return gw_rel, gw_self, gh


def full_forward(g, params):
    """Vectorized full-neighborhood forward pass over every node."""
    if params.input_rows is not None:
        H = params.input_rows.copy()
    else:
        dims = input_dim(g)
        H = np.empty((g.n_nodes, dims))
        for k in range(g.n_types):
            lo, hi = g.nodes_of_type(k)
            H[lo:hi] = g.attributes[k]
    for k in range(params.depth):
        Wl, W0 = params.w_rel[k], params.w_self[k]
        Z = H @ W0
        for l in range(g.n_link_types):
            indptr, partners, _ = g._nbr[l]
            if len(partners) == 0:
                continue
            gathered = np.concatenate((H[partners], np.zeros((1, H.shape[1]))))
            sums = np.add.reduceat(gathered, indptr[:-1], axis=0)[:g.n_nodes]
            counts = np.diff(indptr)
            mask = counts > 0
            sums[~mask] = 0.0
            mean = sums / np.maximum(counts, 1)[:, None]
            Z = Z + mean @ Wl[l]
        H = Z if k == params.depth - 1 else np.maximum(Z, 0.0)
        if not np.all(np.isfinite(H)):
            raise FloatingPointError(f"non-finite states after layer {k + 1}")
    return H


def train_rgcn(g, cfg):
    """Minibatch training over all links; returns (EmbeddingTable, params).

    Every stored link is a positive; ``cfg.negatives`` corrupted heads per
    positive.  Batches run sequentially and deterministically for a fixed
    seed; final embeddings come from a full-neighborhood pass.
    """
    rng = np.random.default_rng(cfg.seed)
    params = init_rgcn(g, cfg, rng)
    noise = NoiseDistribution(g)
    U, L, V = [], [], []
    for l, (src, dst, _) in enumerate(g.links):
        U.append(src)
        L.append(np.full(len(src), l, dtype=np.int64))
        V.append(dst)
    U = np.concatenate(U)
    L = np.concatenate(L)
    V = np.concatenate(V)
    n = len(U)
    if n == 0:
        raise ValueError("graph has no links to reconstruct")
    offsets = g.type_offsets
    total = cfg.epochs * n
    lo_eta = cfg.learning_rate * cfg.lr_floor_ratio
    done = 0
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for s0 in range(0, n, cfg.batch):
            sl = perm[s0:s0 + cfg.batch]
            frac = min((done + s0) / max(total, 1), 1.0)
            eta = cfg.learning_rate + (lo_eta - cfg.learning_rate) * frac
            pos = [(int(U[i]), int(L[i]), int(V[i])) for i in sl]
            negs = []
            for u, l, v in pos:
                k = int(np.searchsorted(offsets, u, side="right") - 1)
                negs.append(noise.sample_negative(k, cfg.negatives, rng).tolist())
            seeds = {p[0] for p in pos} | {p[2] for p in pos}
            for nn in negs:
                seeds.update(nn)
            comp = sample_neighborhood(g, seeds, cfg.fanout, params.depth, rng)
            x0 = node_inputs(g, params, comp.needs[0])
            h, pre, means = rgcn_forward(comp, params, x0)
            loss, gh_out, gdec = decoder_loss(params, h[params.depth], pos, negs)
            gw_rel, gw_self, gx0 = rgcn_backward(comp, params, h, pre, means,
                                                 gh_out)
            for k in range(params.depth):
                params.w_rel[k] -= eta * gw_rel[k]
                params.w_self[k] -= eta * gw_self[k]
            params.decoder -= eta * gdec
            if params.input_rows is not None:
                for v, gvec in gx0.items():
                    params.input_rows[v] -= eta * gvec
            epoch_loss += loss
        done += n
        if not np.isfinite(epoch_loss):
            raise FloatingPointError(
                f"message passing: non-finite loss after epoch {epoch}")
    emb = EmbeddingTable(g, full_forward(g, params))
    return emb, params
