"""Triplet-based relation learning: translation, bilinear-diagonal,
complex-bilinear and rotation scorers over directed links.

Scores follow the higher-is-better convention; distance-based kinds return
the negated distance.  Complex coordinates live in plain float64 storage
as interleaved (real, imaginary) pairs, so width is ``2 * dim``.

Training draws oriented triplets from the directed link types, corrupts
one endpoint per positive against the degree^0.75 noise distribution of
the matching node type, and applies either a margin ranking loss
(translation and rotation default) or the log-sigmoid loss (bilinear
kinds default).  Norm constraints run after every update step:
translation projects node rows onto the unit sphere, rotation renormalizes
relation entries to unit modulus, and the bilinear kinds cap node row
norms at one.
"""
from __future__ import annotations

import threading

import numpy as np
from scipy.special import expit, log_expit

from .sampler import NoiseDistribution
from .tables import EmbeddingTable, RelationParams

KINDS = ("transe", "distmult", "complex", "rotate")
_COMPLEX_KINDS = ("complex", "rotate")
_UNIT_TOL = 1e-6


def _as_complex(rows):
    rows = np.ascontiguousarray(rows)
    return rows.view(np.complex128)


def _interleave(z):
    out = np.empty(z.shape + (2,))
    out[..., 0] = z.real
    out[..., 1] = z.imag
    return out.reshape(z.shape[:-1] + (-1,))


def _check_kind(kind):
    if kind not in KINDS:
        raise ValueError(f"unknown relational kind {kind!r}")


def _check_rotation(EL):
    mod2 = EL[..., 0::2] ** 2 + EL[..., 1::2] ** 2
    if np.any(np.abs(mod2 - 1.0) > _UNIT_TOL):
        raise ValueError(
            "rotation relation entries are off the unit circle; "
            "apply_constraints must run first")


def batch_scores_and_grads(kind, EU, EL, EV, p=2, want_grads=True,
                           validate=True):
    """Scores and score gradients for aligned triplet rows.

    Returns (s, gU, gL, gV) where the gradients are of the score with
    respect to each stored row (None when ``want_grads`` is false).
    ``validate=False`` skips the rotation unit-modulus check; gradient
    probes evaluate the score off the constraint set on purpose.
    """
    _check_kind(kind)
    EU = np.atleast_2d(np.asarray(EU, dtype=np.float64))
    EL = np.atleast_2d(np.asarray(EL, dtype=np.float64))
    EV = np.atleast_2d(np.asarray(EV, dtype=np.float64))
    if not EU.shape == EL.shape == EV.shape:
        raise ValueError(
            f"triplet row shapes disagree: {EU.shape} {EL.shape} {EV.shape}")
    if kind in _COMPLEX_KINDS and EU.shape[-1] % 2:
        raise ValueError(f"{kind} stores complex pairs; width must be even")

    if kind == "transe":
        x = EU + EL - EV
        if p == 2:
            nrm = np.linalg.norm(x, axis=-1)
            s = -nrm
            if not want_grads:
                return s, None, None, None
            safe = np.where(nrm > 0, nrm, 1.0)[:, None]
            gU = -x / safe
            gV = -gU
            return s, gU, gU.copy(), gV
        s = -np.abs(x).sum(axis=-1)
        if not want_grads:
            return s, None, None, None
        gU = -np.sign(x)
        return s, gU, gU.copy(), -gU

    if kind == "distmult":
        # Contract as l . (u * v): elementwise products commute, so the
        # score is symmetric in (u, v) down to the last bit.
        uv = EU * EV
        s = np.einsum("bd,bd->b", EL, uv)
        if not want_grads:
            return s, None, None, None
        return s, EL * EV, uv, EU * EL

    zu, zl, zv = _as_complex(EU), _as_complex(EL), _as_complex(EV)
    if kind == "complex":
        s = np.real(np.einsum("bd,bd,bd->b", zu, zl, np.conj(zv)))
        if not want_grads:
            return s, None, None, None
        gU = _interleave(np.conj(zl) * zv)
        gL = _interleave(np.conj(zu) * zv)
        gV = _interleave(zu * zl)
        return s, gU, gL, gV

    # rotate
    if validate:
        _check_rotation(EL)
    x = zu * zl - zv
    s = -np.real(np.einsum("bd,bd->b", x, np.conj(x)))
    if not want_grads:
        return s, None, None, None
    gU = _interleave(-2.0 * x * np.conj(zl))
    gL = _interleave(-2.0 * x * np.conj(zu))
    gV = _interleave(2.0 * x)
    return s, gU, gL, gV


def score_triplet(kind, e_u, e_l, e_v, p=2):
    """Score one (head row, relation row, tail row) triplet."""
    s, _, _, _ = batch_scores_and_grads(
        kind, e_u[None, :], e_l[None, :], e_v[None, :], p, want_grads=False)
    return float(s[0])


def margin_loss(s_pos, s_neg, gamma):
    """Margin ranking loss max(0, gamma - s_pos + s_neg)."""
    return float(np.maximum(0.0, gamma - s_pos + s_neg))


def training_triplets(g):
    """Oriented (u, l, v) triplets from the directed link types.

    Relation learning reads stored orientation as semantics, so it only
    consumes link types flagged directed; it refuses graphs without any.
    """
    if not g.directed.any():
        raise ValueError(
            "relation learning needs directed link types; none are flagged "
            "in this graph")
    U, L, V = [], [], []
    for l, (src, dst, _) in enumerate(g.links):
        if not g.directed[l]:
            continue
        U.append(src)
        L.append(np.full(len(src), l, dtype=np.int64))
        V.append(dst)
    U = np.concatenate(U)
    L = np.concatenate(L)
    V = np.concatenate(V)
    if len(U) == 0:
        raise ValueError("directed link types hold no links")
    return U, L, V


def corrupt_triplet(t, g, rng, noise=None, forbidden=None, max_tries=100):
    """Replace one endpoint of ``t = (u, l, v)`` with a sampled node.

    A fair coin picks the endpoint; the replacement keeps the endpoint's
    node type and is redrawn (up to ``max_tries``) while it recreates a
    known triplet.  Returns the corrupted (u', l, v').
    """
    u, l, v = int(t[0]), int(t[1]), int(t[2])
    if noise is None:
        noise = NoiseDistribution(g)
    if forbidden is None:
        forbidden = frozenset()
    head = rng.random() < 0.5
    k = g.node_type_of(u if head else v)
    for _ in range(max_tries):
        r = int(noise.sample_negative(k, 1, rng)[0])
        cand = (r, l, v) if head else (u, l, r)
        if cand not in forbidden:
            return cand
    return cand


def apply_constraints(kind, emb, rel):
    """Project parameters back onto each kind's feasible set (idempotent)."""
    _check_kind(kind)
    E = emb.array
    if kind == "transe":
        nrm = np.linalg.norm(E, axis=1)
        np.divide(E, np.where(nrm > 0, nrm, 1.0)[:, None], out=E)
    elif kind in ("distmult", "complex"):
        nrm = np.linalg.norm(E, axis=1)
        np.divide(E, np.maximum(nrm, 1.0)[:, None], out=E)
    else:  # rotate
        z = _as_complex(rel.vectors)
        mod = np.abs(z)
        z[mod == 0] = 1.0
        np.divide(z, np.maximum(np.abs(z), np.finfo(float).tiny), out=z)
    return emb, rel


def _constrain_rows(kind, E, ids):
    if kind == "transe":
        rows = E[ids]
        nrm = np.linalg.norm(rows, axis=1)
        E[ids] = rows / np.where(nrm > 0, nrm, 1.0)[:, None]
    elif kind in ("distmult", "complex"):
        rows = E[ids]
        nrm = np.linalg.norm(rows, axis=1)
        E[ids] = rows / np.maximum(nrm, 1.0)[:, None]


def _constrain_relations(kind, R, ids):
    if kind == "rotate":
        rows = np.ascontiguousarray(R[ids])
        z = rows.view(np.complex128)
        z[np.abs(z) == 0] = 1.0
        z /= np.abs(z)
        R[ids] = rows


def relational_loss(kind, emb, rel, pos, neg, mode="margin", gamma=1.0, p=2):
    """Scalar loss and analytic gradients for one positive/negative pair.

    Gradients come back as (node grads, relation grads), both dicts keyed
    by id with contributions from both triplets accumulated.  Rotation
    parameters are not validated here so the loss stays evaluable at
    finite-difference probe points slightly off the unit circle.
    """
    u, l, v = (int(x) for x in pos)
    uc, lc, vc = (int(x) for x in neg)
    if l != lc:
        raise ValueError("corruption must keep the link type")
    E, R = emb.array, rel.vectors
    s, gU, gL, gV = batch_scores_and_grads(
        kind, E[[u, uc]], R[[l, lc]], E[[v, vc]], p, validate=False)
    s_pos, s_neg = float(s[0]), float(s[1])
    if mode == "margin":
        loss = margin_loss(s_pos, s_neg, gamma)
        if loss <= 0.0:
            return 0.0, {}, {}
        c_pos, c_neg = -1.0, 1.0
    elif mode == "ns":
        loss = float(-(log_expit(s_pos) + log_expit(-s_neg)))
        c_pos = float(expit(s_pos) - 1.0)
        c_neg = float(expit(s_neg))
    else:
        raise ValueError(f"unknown loss mode {mode!r}")
    node_grads = {}
    rel_grads = {}

    def add(store, key, vec):
        if key in store:
            store[key] = store[key] + vec
        else:
            store[key] = vec.copy()

    add(node_grads, u, c_pos * gU[0])
    add(node_grads, v, c_pos * gV[0])
    add(rel_grads, l, c_pos * gL[0])
    add(node_grads, uc, c_neg * gU[1])
    add(node_grads, vc, c_neg * gV[1])
    add(rel_grads, lc, c_neg * gL[1])
    return loss, node_grads, rel_grads


def init_relational(g, kind, cfg, rng):
    """Fresh embedding and relation tables for ``kind``.

    Bilinear relations start at the identity scaling (1, or 1 + 0i per
    coordinate): with near-zero node rows the triple product has
    third-order gradients, and random near-zero relations leave SGD stuck
    at that saddle.
    """
    cpx = kind in _COMPLEX_KINDS
    emb = EmbeddingTable.init_uniform(g, cfg.dim, rng, complex_pairs=cpx)
    width = 2 * cfg.dim if cpx else cfg.dim
    if kind == "rotate":
        phases = rng.uniform(0.0, 2.0 * np.pi, (g.n_link_types, cfg.dim))
        vecs = _interleave(np.cos(phases) + 1j * np.sin(phases))
    elif kind == "distmult":
        vecs = np.ones((g.n_link_types, width))
    elif kind == "complex":
        vecs = np.zeros((g.n_link_types, width))
        vecs[:, 0::2] = 1.0
    else:
        vecs = (rng.random((g.n_link_types, width)) - 0.5) / width
    rel = RelationParams(list(range(g.n_link_types)), vecs, complex_pairs=cpx)
    if kind == "transe":
        apply_constraints(kind, emb, rel)
    return emb, rel


def train_relational(g, kind, cfg):
    """SGD over corrupted triplets; returns (emb, rel).

    One corrupted negative per positive.  ``cfg.loss_mode`` picks margin
    or log-sigmoid; empty means the kind's default.  Deterministic given
    (g, kind, cfg) when ``cfg.threads == 1``.
    """
    _check_kind(kind)
    mode = cfg.loss_mode or ("margin" if kind in ("transe", "rotate") else "ns")
    if mode not in ("margin", "ns"):
        raise ValueError(f"unknown loss mode {mode!r}")
    rng = np.random.default_rng(cfg.seed)
    emb, rel = init_relational(g, kind, cfg, rng)
    noise = NoiseDistribution(g)
    U, L, V = training_triplets(g)
    forbidden = frozenset(zip(U.tolist(), L.tolist(), V.tolist()))
    n = len(U)
    total = cfg.epochs * n
    E, R = emb.array, rel.vectors

    def corrupt_batch(Ub, Lb, Vb, rng):
        uc = np.empty(len(Ub), dtype=np.int64)
        vc = np.empty(len(Ub), dtype=np.int64)
        for i in range(len(Ub)):
            c = corrupt_triplet((Ub[i], Lb[i], Vb[i]), g, rng, noise, forbidden)
            uc[i], vc[i] = c[0], c[2]
        return uc, vc

    def step(Ub, Lb, Vb, eta, rng):
        uc, vc = corrupt_batch(Ub, Lb, Vb, rng)
        s_pos, gU, gL, gV = batch_scores_and_grads(kind, E[Ub], R[Lb], E[Vb],
                                                   cfg.p_norm)
        s_neg, hU, hL, hV = batch_scores_and_grads(kind, E[uc], R[Lb], E[vc],
                                                   cfg.p_norm)
        if mode == "margin":
            active = (cfg.margin - s_pos + s_neg) > 0
            loss = float(np.maximum(0.0, cfg.margin - s_pos + s_neg).sum())
            c_pos = np.where(active, -1.0, 0.0)
            c_neg = np.where(active, 1.0, 0.0)
        else:
            loss = float(-(log_expit(s_pos) + log_expit(-s_neg)).sum())
            c_pos = expit(s_pos) - 1.0
            c_neg = expit(s_neg)
        np.add.at(E, Ub, -eta * c_pos[:, None] * gU)
        np.add.at(E, Vb, -eta * c_pos[:, None] * gV)
        np.add.at(E, uc, -eta * c_neg[:, None] * hU)
        np.add.at(E, vc, -eta * c_neg[:, None] * hV)
        np.add.at(R, Lb, -eta * (c_pos[:, None] * gL + c_neg[:, None] * hL))
        touched = np.unique(np.concatenate((Ub, Vb, uc, vc)))
        _constrain_rows(kind, E, touched)
        _constrain_relations(kind, R, np.unique(Lb))
        return loss

    lo_eta = cfg.learning_rate * cfg.lr_floor_ratio
    done = 0
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        starts = list(range(0, n, cfg.batch))
        losses = [0.0] * max(cfg.threads, 1)

        def work(worker, my_starts, wrng):
            acc = 0.0
            for s0 in my_starts:
                sl = perm[s0:s0 + cfg.batch]
                frac = min((done + s0) / max(total, 1), 1.0)
                eta = cfg.learning_rate + (lo_eta - cfg.learning_rate) * frac
                acc += step(U[sl], L[sl], V[sl], eta, wrng)
            losses[worker] = acc

        if cfg.threads <= 1:
            work(0, starts, np.random.default_rng((cfg.seed, 500 + epoch)))
        else:
            ts = [threading.Thread(
                target=work,
                args=(w, starts[w::cfg.threads],
                      np.random.default_rng((cfg.seed, 500 + epoch, w))))
                for w in range(cfg.threads)]
            for t in ts:
                t.start()
            for t in ts:
                t.join()
        done += n
        loss = sum(losses)
        if not np.isfinite(loss) or not np.all(np.isfinite(E)):
            raise FloatingPointError(
                f"{kind}: non-finite loss or embeddings after epoch {epoch}")
    return emb, rel
