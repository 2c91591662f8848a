"""Shared graph builders and brute-force oracles for the test suite.

Everything here is deliberately naive: adjacency via dict-of-sets, metrics
via O(n^2) pair loops, gradients via central differences.  The point is to
have reference answers computed by a different route than the package.
"""
import numpy as np

from hetembed.graph import HeteroGraph


def build_graph(type_counts, schema, directed, links, attributes=None,
                labels=None, type_ids=None, original_ids=None,
                link_type_ids=None):
    """HeteroGraph with identity original ids unless told otherwise.

    ``links[l]`` is a list of (src, dst) or (src, dst, weight) tuples in
    dense global ids.
    """
    n = int(np.sum(type_counts))
    packed = []
    for rows in links:
        src = np.array([r[0] for r in rows], dtype=np.int64)
        dst = np.array([r[1] for r in rows], dtype=np.int64)
        w = np.array([r[2] if len(r) > 2 else 1.0 for r in rows])
        packed.append((src, dst, w))
    return HeteroGraph(
        type_counts=type_counts,
        type_ids=type_ids if type_ids is not None else list(range(len(type_counts))),
        original_ids=original_ids if original_ids is not None else list(range(n)),
        schema=schema, directed=directed,
        link_type_ids=link_type_ids if link_type_ids is not None
        else list(range(len(schema))),
        links=packed, attributes=attributes, labels=labels)


def two_type_graph():
    """Small fixture: 4 + 4 nodes, a cross-type and a same-type link type."""
    return build_graph(
        type_counts=[4, 4],
        schema=[(0, 1), (0, 0)],
        directed=[False, False],
        links=[
            [(0, 4), (0, 5), (1, 4), (1, 5), (2, 6), (3, 7)],
            [(0, 1), (2, 3)],
        ],
        labels={0: {0}, 1: {0}, 2: {1}, 3: {1}})


def random_graph(rng, max_types=3, max_per_type=6, max_link_types=3,
                 p_link=0.4):
    """Random small typed graph for oracle comparisons."""
    n_types = int(rng.integers(1, max_types + 1))
    counts = [int(rng.integers(1, max_per_type + 1)) for _ in range(n_types)]
    offsets = np.concatenate(([0], np.cumsum(counts)))
    n_lt = int(rng.integers(1, max_link_types + 1))
    schema, directed, links = [], [], []
    for _ in range(n_lt):
        a = int(rng.integers(n_types))
        b = int(rng.integers(n_types))
        schema.append((a, b))
        directed.append(bool(rng.random() < 0.5))
        rows = []
        for u in range(offsets[a], offsets[a + 1]):
            for v in range(offsets[b], offsets[b + 1]):
                if u != v and rng.random() < p_link:
                    rows.append((u, v, float(rng.integers(1, 4))))
        links.append(rows)
    return build_graph(counts, schema, directed, links)


def adjacency(g):
    """Symmetric dict-of-sets adjacency built straight from the link arrays."""
    adj = {v: set() for v in range(g.n_nodes)}
    for src, dst, _ in g.links:
        for s, d in zip(src.tolist(), dst.tolist()):
            adj[s].add(d)
            adj[d].add(s)
    return adj


def brute_two_hop(g, v):
    adj = adjacency(g)
    out = set(adj[v])
    for u in list(adj[v]):
        out |= adj[u]
    out.discard(v)
    return out


def brute_auc(scores, labels):
    """Pairwise U-statistic with half credit on ties."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y != 1]
    hits = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                hits += 1.0
            elif p == q:
                hits += 0.5
    return hits / (len(pos) * len(neg))


def brute_f1(pred_sets, gold_sets, labels):
    per = []
    tp_all = fp_all = fn_all = 0
    for c in labels:
        tp = sum(1 for p, g in zip(pred_sets, gold_sets) if c in p and c in g)
        fp = sum(1 for p, g in zip(pred_sets, gold_sets) if c in p and c not in g)
        fn = sum(1 for p, g in zip(pred_sets, gold_sets) if c not in p and c in g)
        tp_all, fp_all, fn_all = tp_all + tp, fp_all + fp, fn_all + fn
        per.append(2.0 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0)
    macro = sum(per) / len(per)
    denom = 2 * tp_all + fp_all + fn_all
    micro = 2.0 * tp_all / denom if denom else 0.0
    return macro, micro


def fd_entry(f, arr, idx, eps=1e-5):
    """Central difference of callable ``f()`` along one array entry."""
    old = arr[idx]
    arr[idx] = old + eps
    hi = f()
    arr[idx] = old - eps
    lo = f()
    arr[idx] = old
    return (hi - lo) / (2.0 * eps)


def rel_err(a, b, floor=1e-6):
    return abs(a - b) / max(abs(a), abs(b), floor)
