"""Walk generation, context extraction and negative/edge sampling.

Typed walks follow a meta-path and pick the next node uniformly among the
current node's neighbors of the required link type and node type; there is
no weight bias in the transition.  Homogeneous walks ignore types and pick
uniformly among all incident links, recording the link type taken at each
step so context pairs can be tagged with the path actually realized.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class ContextPair(NamedTuple):
    u: int        # center node
    v: int        # context node
    tag: object   # meta-path index, link-type id, tuple of link types, or "plain"


@dataclass
class WalkConfig:
    walks_per_node: int = 10
    walk_length: int = 40     # nodes per walk
    window: int = 5
    meta_paths: tuple = ()    # MetaPath objects; empty means homogeneous walks
    seed: int = 0

    def __post_init__(self):
        if self.walk_length < 2:
            raise ValueError("walk_length must be at least 2")
        if self.window < 1:
            raise ValueError("window must be at least 1")
        if self.walks_per_node < 1:
            raise ValueError("walks_per_node must be at least 1")


def metapath_walk(g, start, mp, length, rng):
    """One typed walk of up to ``length`` nodes following ``mp``.

    The meta-path cycles when its end type equals its start type; walks
    longer than one traversal of a non-cyclable meta-path are rejected.
    Dead ends truncate the walk.
    """
    if g.node_type_of(start) != mp.node_types[0]:
        raise ValueError(
            f"walk start {start} has type {g.node_type_of(start)}, "
            f"meta-path starts at type {mp.node_types[0]}")
    steps = length - 1
    if not mp.cyclable and steps > len(mp):
        raise ValueError(
            f"meta-path does not cycle; cannot walk {steps} steps over "
            f"{len(mp)} links")
    walk = [int(start)]
    v = int(start)
    for i in range(steps):
        l = mp.link_types[i % len(mp)]
        want = mp.node_types[i % len(mp) + 1]
        ids, _ = g.neighbor_slice(v, l)
        lo, hi = g.nodes_of_type(want)
        a = np.searchsorted(ids, lo, side="left")
        b = np.searchsorted(ids, hi, side="left")
        if a == b:
            break
        v = int(ids[a + rng.integers(b - a)])
        walk.append(v)
    return walk


def homogeneous_walk(g, start, length, rng):
    """One untyped walk: uniform over all incident links at each step.

    Returns (nodes, step_link_types); the second list has one entry per
    step taken and records which link type carried the transition.
    """
    walk = [int(start)]
    taken = []
    v = int(start)
    for _ in range(length - 1):
        ids, ltypes, _ = g.incident_slice(v)
        if len(ids) == 0:
            break
        i = int(rng.integers(len(ids)))
        v = int(ids[i])
        walk.append(v)
        taken.append(int(ltypes[i]))
    return walk, taken


def extract_context_pairs(walk, window, tag):
    """All (center, context) pairs within ``window`` positions of each other.

    A walk of length L with window w yields ``sum_i |{j != i : |i-j| <= w}|``
    pairs; every co-occurrence is emitted in both orders.
    """
    out = []
    L = len(walk)
    for i in range(L):
        for j in range(max(0, i - window), min(L, i + window + 1)):
            if j != i:
                out.append(ContextPair(walk[i], walk[j], tag))
    return out


def extract_tagged_pairs(walk, step_types, window):
    """Context pairs tagged with the realized link-type sequence between them.

    For positions i < j the tag is ``tuple(step_types[i:j])``; the reversed
    pair carries the reversed tuple.
    """
    out = []
    L = len(walk)
    for i in range(L):
        for j in range(i + 1, min(L, i + window + 1)):
            seg = tuple(step_types[i:j])
            out.append(ContextPair(walk[i], walk[j], seg))
            out.append(ContextPair(walk[j], walk[i], seg[::-1]))
    return out


def _walk_starts(g, mp, walks_per_node):
    lo, hi = g.nodes_of_type(mp.node_types[0])
    return [v for v in range(lo, hi) for _ in range(walks_per_node)]


def build_walk_corpus(g, cfg, collect_walks=False):
    """Generate typed walks for every configured meta-path.

    Returns (pairs, counts[, walks]) where ``pairs`` is a list of
    ContextPair with the meta-path index as tag and ``counts[m]`` is the
    number of pairs contributed by meta-path m.  Deterministic given
    (g, cfg); collecting the raw walks does not change them.
    """
    if not cfg.meta_paths:
        raise ValueError("no meta-paths configured")
    rng = np.random.default_rng(cfg.seed)
    pairs = []
    walks = []
    counts = np.zeros(len(cfg.meta_paths), dtype=np.int64)
    for m, mp in enumerate(cfg.meta_paths):
        for start in _walk_starts(g, mp, cfg.walks_per_node):
            walk = metapath_walk(g, start, mp, cfg.walk_length, rng)
            if len(walk) < 2:
                continue
            if collect_walks:
                walks.append(walk)
            got = extract_context_pairs(walk, cfg.window, m)
            pairs.extend(got)
            counts[m] += len(got)
    if collect_walks:
        return pairs, counts, walks
    return pairs, counts


def build_homogeneous_corpus(g, cfg, collect_walks=False):
    """Untyped walks from every node, pairs tagged by realized path.

    Returns (pairs, vocab[, walks]) where vocab maps each observed
    link-type tuple to a dense tag index and pairs carry those indices.
    """
    rng = np.random.default_rng(cfg.seed)
    vocab = {}
    pairs = []
    walks = []
    for start in range(g.n_nodes):
        for _ in range(cfg.walks_per_node):
            walk, taken = homogeneous_walk(g, start, cfg.walk_length, rng)
            if len(walk) < 2:
                continue
            if collect_walks:
                walks.append(walk)
            for u, v, seg in extract_tagged_pairs(walk, taken, cfg.window):
                idx = vocab.setdefault(seg, len(vocab))
                pairs.append(ContextPair(u, v, idx))
    if collect_walks:
        return pairs, vocab, walks
    return pairs, vocab


def learn_metapath_weights(g, cfg):
    """Meta-path mixing weights proportional to sampled pair counts.

    A meta-path with no realizable instance gets weight zero; if no
    meta-path yields any pair the corpus is unusable and this raises.
    """
    _, counts = build_walk_corpus(g, cfg)
    total = counts.sum()
    if total == 0:
        raise ValueError("no context pairs sampled for any meta-path")
    return counts / total


class NoiseDistribution:
    """Per-node-type negative sampler with P(v) proportional to degree^alpha.

    Degree is the total incident link weight.  A node type whose nodes all
    have zero degree falls back to the uniform distribution.
    """

    def __init__(self, g, alpha=0.75):
        self.alpha = float(alpha)
        self._offsets = g.type_offsets
        deg = g.weighted_degrees()
        self._cum = []
        for k in range(g.n_types):
            lo, hi = g.nodes_of_type(k)
            w = deg[lo:hi] ** self.alpha
            s = w.sum()
            if s <= 0:
                w = np.ones(hi - lo)
                s = float(hi - lo)
            self._cum.append(np.cumsum(w) / s)

    def sample_negative(self, node_type, b, rng):
        """Draw ``b`` node ids of ``node_type``."""
        cum = self._cum[node_type]
        idx = np.searchsorted(cum, rng.random(b), side="right")
        idx = np.minimum(idx, len(cum) - 1)
        return idx + int(self._offsets[node_type])


class EdgeSampler:
    """Weight-proportional link sampler, per link type and across types."""

    def __init__(self, g):
        self._g = g
        self._cum = []
        totals = []
        for src, dst, w in g.links:
            s = w.sum()
            totals.append(s)
            self._cum.append(np.cumsum(w) / s if s > 0 else None)
        totals = np.asarray(totals, dtype=np.float64)
        grand = totals.sum()
        if grand > 0:
            self._type_cum = np.cumsum(totals) / grand
        else:
            self._type_cum = None

    def sample_edge(self, l, rng):
        """One (src, dst) link of type ``l``, drawn with probability
        proportional to its weight."""
        self._g._check_link_type(l)
        cum = self._cum[l]
        if cum is None:
            raise ValueError(f"link type {l} has no positive-weight links")
        i = min(int(np.searchsorted(cum, rng.random(), side="right")),
                len(cum) - 1)
        src, dst, _ = self._g.links[l]
        return int(src[i]), int(dst[i])

    def sample_batch(self, n, rng):
        """``n`` links across all types, types drawn by total weight.

        Returns (src, dst, ltype) int arrays.
        """
        if self._type_cum is None:
            raise ValueError("graph has no positive-weight links")
        ls = np.searchsorted(self._type_cum, rng.random(n), side="right")
        ls = np.minimum(ls, len(self._type_cum) - 1)
        src = np.empty(n, dtype=np.int64)
        dst = np.empty(n, dtype=np.int64)
        for l in np.unique(ls):
            sel = ls == l
            cum = self._cum[l]
            idx = np.searchsorted(cum, rng.random(int(sel.sum())), side="right")
            idx = np.minimum(idx, len(cum) - 1)
            s, d, _ = self._g.links[l]
            src[sel] = s[idx]
            dst[sel] = d[idx]
        return src, dst, ls.astype(np.int64)


def write_walks(walks, g, path):
    """Dump walks one per line as space-separated ``type:original_id`` tokens."""
    with open(path, "w") as fh:
        for walk in walks:
            toks = []
            for v in walk:
                k = g.node_type_of(v)
                toks.append("%d:%d" % (g.type_ids[k], g.original_ids[v]))
            fh.write(" ".join(toks) + "\n")
