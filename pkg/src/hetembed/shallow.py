"""Proximity-preserving embedding trainers over walk or edge pair corpora.

All four families minimize the same negative-sampling loss for a positive
pair (u, v) with negatives u' drawn from the degree^0.75 noise
distribution restricted to u's node type::

    L = -log sigmoid(s(u, v)) - sum_k log sigmoid(-s(u'_k, v))

with either a dot score ``s = e_u . e_v`` or a bilinear-diagonal score
``s = sum_i a_i u_i v_i`` whose diagonal is keyed by the pair's tag.
Gradients are closed-form; SGD runs in minibatches with a linearly
decaying learning rate and optional lock-free worker threads.

Families
--------
metapath2vec : typed walks, dot score, per-meta-path loss weights learned
    from sampled pair counts
hin2vec      : untyped walks, bilinear score keyed by the realized
    link-type sequence between the pair
pte          : weight-proportional edge draws, dot score
heer         : weight-proportional edge draws, bilinear score keyed by
    link type, either endpoint corrupted
"""
from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit, logsumexp

from .sampler import (EdgeSampler, NoiseDistribution, build_homogeneous_corpus,
                      build_walk_corpus)
from .tables import EmbeddingTable, RelationParams

_FAMILIES = ("metapath2vec", "hin2vec", "pte", "heer")


@dataclass
class ShallowModelSpec:
    family: str

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown shallow family {self.family!r}")

    @property
    def score(self):
        return "bilinear" if self.family in ("hin2vec", "heer") else "dot"

    @property
    def pair_source(self):
        return "walks" if self.family in ("metapath2vec", "hin2vec") else "edges"


@dataclass
class TrainSpec:
    """Hyperparameters shared by every trainer in the package."""
    dim: int = 50
    learning_rate: float = 0.025
    lr_floor_ratio: float = 0.01   # eta decays linearly to eta * this
    negatives: int = 5
    epochs: int = 5
    batch: int = 128
    threads: int = 1
    seed: int = 0
    margin: float = 1.0            # margin ranking loss
    p_norm: int = 2                # translation-distance norm
    loss_mode: str = ""            # relational: "margin" | "ns" | "" (default)
    fanout: int = 5                # message passing: sampled neighbors per type
    hidden: int = 32               # message passing: hidden layer width
    layers: int = 2                # message passing: K in {1, 2}

    def __post_init__(self):
        if self.dim < 1 or self.epochs < 1 or self.batch < 1:
            raise ValueError("dim, epochs and batch must be positive")
        if self.negatives < 1:
            raise ValueError("need at least one negative sample")
        if self.threads < 1:
            raise ValueError("thread count must be positive")
        if self.p_norm not in (1, 2):
            raise ValueError("p_norm must be 1 or 2")
        if self.layers not in (1, 2):
            raise ValueError("message passing supports 1 or 2 layers")


def score_pair(model, e_u, e_v, a=None):
    """Pair score under ``model``'s score kind."""
    e_u = np.asarray(e_u, dtype=np.float64)
    e_v = np.asarray(e_v, dtype=np.float64)
    if e_u.shape != e_v.shape:
        raise ValueError(f"shape mismatch {e_u.shape} vs {e_v.shape}")
    if model.score == "dot":
        return float(e_u @ e_v)
    if a is None:
        raise ValueError(f"{model.family} needs a bilinear diagonal")
    a = np.asarray(a, dtype=np.float64)
    if a.shape != e_u.shape:
        raise ValueError(f"diagonal shape {a.shape} != {e_u.shape}")
    return float(np.sum(a * e_u * e_v))


def ns_loss(model, pair, negatives, emb, rel=None):
    """Negative-sampling loss and analytic gradients for one pair.

    ``pair`` is (u, v, tag); ``negatives`` are node ids replacing u.
    Returns (loss, grads) with grads holding "u", "v", "neg" (one row per
    negative) and "a" (None for dot scores).
    """
    u, v, tag = int(pair[0]), int(pair[1]), pair[2]
    neg = np.asarray(negatives, dtype=np.int64)
    e_u = emb.array[u]
    e_v = emb.array[v]
    e_n = emb.array[neg]
    if model.score == "dot":
        a = None
        s_pos = e_u @ e_v
        s_neg = e_n @ e_v
    else:
        a = rel.get(tag)
        s_pos = np.sum(a * e_u * e_v)
        s_neg = e_n @ (a * e_v)
    loss = -(log_expit(s_pos) + log_expit(-s_neg).sum())
    if not np.isfinite(loss):
        raise FloatingPointError(
            f"non-finite loss for pair ({u}, {v}): s_pos={s_pos}")
    g0 = expit(s_pos) - 1.0          # dL/ds_pos
    gk = expit(s_neg)                # dL/ds_neg, one per negative
    if model.score == "dot":
        grads = {
            "u": g0 * e_v,
            "v": g0 * e_u + gk @ e_n,
            "neg": gk[:, None] * e_v[None, :],
            "a": None,
        }
    else:
        grads = {
            "u": g0 * (a * e_v),
            "v": a * (g0 * e_u + gk @ e_n),
            "neg": gk[:, None] * (a * e_v)[None, :],
            "a": g0 * (e_u * e_v) + (gk @ e_n) * e_v,
        }
    return float(loss), grads


# ---------------------------------------------------------------------- #
# exact objective and its distance-form rewrite (small graphs only)

_EXACT_NODE_CAP = 1000


def objective_exact(g, pairs, emb, rel=None, kind="dot"):
    """Exact softmax objective; the quantity SGD approximates.

    ``pairs`` is an iterable of (u, v, tag, weight).  Each pair contributes
    ``w * (s(u, v) - log sum_{u'} exp(s(u', v)))`` with the denominator
    enumerated over all nodes sharing u's type.  Higher is better.
    """
    if g.n_nodes > _EXACT_NODE_CAP:
        raise ValueError(
            f"exact objective enumerates nodes; {g.n_nodes} exceeds cap "
            f"{_EXACT_NODE_CAP}")
    if kind not in ("dot", "bilinear"):
        raise ValueError(f"unknown score kind {kind!r}")
    total = 0.0
    for u, v, tag, w in pairs:
        k = g.node_type_of(u)
        lo, hi = g.nodes_of_type(k)
        e_v = emb.array[int(v)]
        if kind == "dot":
            s_uv = emb.array[int(u)] @ e_v
            s_all = emb.array[lo:hi] @ e_v
        else:
            a = rel.get(tag)
            s_uv = np.sum(a * emb.array[int(u)] * e_v)
            s_all = emb.array[lo:hi] @ (a * e_v)
        total += w * (s_uv - logsumexp(s_all))
    return float(total)


def smoothness_decomposition(g, pairs, emb, rel=None, kind="dot"):
    """Rewrite the exact objective as smoothness minus norm plus partition
    terms.

    Returns (S, J_R1, J_R2) where S is the weighted half squared distance
    between mapped endpoint embeddings, J_R1 the matching weighted half
    squared norms, and J_R2 the weighted log partition term.  The mapping
    is the identity for dot scores and entrywise sqrt(a) scaling for
    bilinear scores, which requires a nonnegative diagonal; train with the
    plain bilinear path when the diagonal goes negative.
    The identity ``objective_exact == -(S - J_R1 + J_R2)`` holds exactly.
    """
    if g.n_nodes > _EXACT_NODE_CAP:
        raise ValueError(
            f"exact decomposition enumerates nodes; {g.n_nodes} exceeds cap "
            f"{_EXACT_NODE_CAP}")
    if kind not in ("dot", "bilinear"):
        raise ValueError(f"unknown score kind {kind!r}")
    S = 0.0
    j_r1 = 0.0
    j_r2 = 0.0
    for u, v, tag, w in pairs:
        k = g.node_type_of(u)
        lo, hi = g.nodes_of_type(k)
        if kind == "dot":
            f_u = emb.array[int(u)]
            f_v = emb.array[int(v)]
            f_all = emb.array[lo:hi]
        else:
            a = rel.get(tag)
            if np.any(a < 0):
                raise ValueError(
                    "bilinear diagonal has negative entries; the sqrt "
                    "mapping is undefined, use the score-space objective")
            r = np.sqrt(a)
            f_u = r * emb.array[int(u)]
            f_v = r * emb.array[int(v)]
            f_all = emb.array[lo:hi] * r
        S += 0.5 * w * float(np.sum((f_u - f_v) ** 2))
        j_r1 += 0.5 * w * (float(f_u @ f_u) + float(f_v @ f_v))
        j_r2 += w * logsumexp(f_all @ f_v)
    return float(S), float(j_r1), float(j_r2)


# ---------------------------------------------------------------------- #
# minibatch SGD


def _node_types_of(g, ids):
    return np.searchsorted(g.type_offsets, ids, side="right") - 1


def _draw_negatives(g, noise, U, b, rng):
    """Per-pair negatives restricted to each u's node type."""
    neg = np.empty((len(U), b), dtype=np.int64)
    types = _node_types_of(g, U)
    for k in np.unique(types):
        sel = types == k
        neg[sel] = noise.sample_negative(
            int(k), int(sel.sum()) * b, rng).reshape(-1, b)
    return neg


def _sgd_batch(emb, rel_vecs, U, V, NEG, AIDX, scale, eta, bilinear):
    """One minibatch update; returns the summed pair loss.

    Implements the same gradients as :func:`ns_loss`, vectorized.
    ``scale`` multiplies each pair's step (meta-path weighting).
    """
    E = emb.array
    EU = E[U]
    EV = E[V]
    EN = E[NEG]
    if bilinear:
        A = rel_vecs[AIDX]
        AV = A * EV
    else:
        AV = EV
    s_pos = np.einsum("bd,bd->b", EU, AV)
    s_neg = np.einsum("bkd,bd->bk", EN, AV)
    loss = -(log_expit(s_pos) + log_expit(-s_neg).sum(axis=1)).sum()
    c0 = (expit(s_pos) - 1.0) * scale * eta
    ck = expit(s_neg) * (scale * eta)[:, None]
    neg_mix = np.einsum("bk,bkd->bd", ck, EN)    # sum_k ck * e_neg_k
    if bilinear:
        np.add.at(E, U, -(c0[:, None] * AV))
        np.add.at(E, V, -(A * (c0[:, None] * EU + neg_mix)))
        np.add.at(E, NEG.ravel(),
                  -(ck[:, :, None] * AV[:, None, :]).reshape(-1, E.shape[1]))
        np.add.at(rel_vecs, AIDX,
                  -(c0[:, None] * EU * EV + neg_mix * EV))
    else:
        np.add.at(E, U, -(c0[:, None] * EV))
        np.add.at(E, V, -(c0[:, None] * EU + neg_mix))
        np.add.at(E, NEG.ravel(),
                  -(ck[:, :, None] * EV[:, None, :]).reshape(-1, E.shape[1]))
    return float(loss)


def _epoch_eta(cfg, done, total):
    lo = cfg.learning_rate * cfg.lr_floor_ratio
    frac = min(done / max(total, 1), 1.0)
    return cfg.learning_rate + (lo - cfg.learning_rate) * frac


def _run_epoch(g, emb, rel_vecs, noise, cfg, bilinear, U, V, TAG, scale,
               done_before, total_pairs, seed):
    """Sweep one epoch of pairs in minibatches; returns summed loss.

    With ``cfg.threads > 1`` the batch list is sharded across lock-free
    workers that update the shared tables concurrently; reproducibility is
    only guaranteed single-threaded.
    """
    n = len(U)
    starts = list(range(0, n, cfg.batch))
    losses = [0.0] * max(cfg.threads, 1)

    def work(worker, my_starts, rng):
        acc = 0.0
        for s in my_starts:
            sl = slice(s, min(s + cfg.batch, n))
            eta = _epoch_eta(cfg, done_before + s, total_pairs)
            NEG = _draw_negatives(g, noise, U[sl], cfg.negatives, rng)
            acc += _sgd_batch(emb, rel_vecs, U[sl], V[sl], NEG,
                              TAG[sl] if bilinear else None,
                              scale[sl], eta, bilinear)
        losses[worker] = acc

    if cfg.threads <= 1:
        work(0, starts, np.random.default_rng(seed))
    else:
        rngs = [np.random.default_rng((*seed, w)) for w in range(cfg.threads)]
        ts = [threading.Thread(target=work, args=(w, starts[w::cfg.threads], rngs[w]))
              for w in range(cfg.threads)]
        for t in ts:
            t.start()
        for t in ts:
            t.join()
    return sum(losses)


def train_shallow(g, model, cfg, walk_cfg=None):
    """Train one proximity-preserving family; returns (emb, rel).

    Walk families materialize their pair corpus once and reshuffle it per
    epoch; edge families redraw weight-proportional edges every epoch.
    Deterministic given (g, model, cfg, walk_cfg) when ``cfg.threads == 1``.
    """
    rng = np.random.default_rng(cfg.seed)
    emb = EmbeddingTable.init_uniform(g, cfg.dim, rng)
    noise = NoiseDistribution(g)
    bilinear = model.score == "bilinear"

    if model.pair_source == "walks":
        if walk_cfg is None:
            raise ValueError(f"{model.family} needs a WalkConfig")
        if model.family == "metapath2vec":
            if not walk_cfg.meta_paths:
                raise ValueError("metapath2vec needs at least one meta-path")
            pairs, counts = build_walk_corpus(g, walk_cfg)
            if not pairs:
                raise ValueError("walks produced no context pairs")
            alphas = counts / counts.sum()
            rel = RelationParams.empty(cfg.dim)
            U = np.fromiter((p.u for p in pairs), np.int64, len(pairs))
            V = np.fromiter((p.v for p in pairs), np.int64, len(pairs))
            TAG = np.fromiter((p.tag for p in pairs), np.int64, len(pairs))
            PW = alphas[TAG]
        else:  # hin2vec
            pairs, vocab = build_homogeneous_corpus(g, walk_cfg)
            if not pairs:
                raise ValueError("walks produced no context pairs")
            rel = RelationParams.ones(list(vocab), cfg.dim)
            U = np.fromiter((p.u for p in pairs), np.int64, len(pairs))
            V = np.fromiter((p.v for p in pairs), np.int64, len(pairs))
            TAG = np.fromiter((p.tag for p in pairs), np.int64, len(pairs))
            PW = np.ones(len(pairs))
        per_epoch = len(U)
    else:
        per_epoch = g.n_links()
        if per_epoch == 0:
            raise ValueError("graph has no links to sample")
        edges = EdgeSampler(g)
        if model.family == "heer":
            rel = RelationParams.ones(list(range(g.n_link_types)), cfg.dim)
        else:
            rel = RelationParams.empty(cfg.dim)

    total_pairs = cfg.epochs * per_epoch
    done = 0
    for epoch in range(cfg.epochs):
        if model.pair_source == "walks":
            perm = rng.permutation(per_epoch)
            eU, eV, eT, ePW = U[perm], V[perm], TAG[perm], PW[perm]
        else:
            src, dst, ltype = edges.sample_batch(per_epoch, rng)
            flip = rng.random(per_epoch) < 0.5
            eU = np.where(flip, dst, src)
            eV = np.where(flip, src, dst)
            eT = ltype
            ePW = np.ones(per_epoch)
        loss = _run_epoch(g, emb, rel.vectors, noise, cfg, bilinear,
                          eU, eV, eT, ePW, done, total_pairs,
                          seed=(cfg.seed, 1000 + epoch))
        done += per_epoch
        if not np.isfinite(loss) or not np.all(np.isfinite(emb.array)):
            raise FloatingPointError(
                f"{model.family}: non-finite loss or embeddings after "
                f"epoch {epoch} (loss={loss})")
    return emb, rel
