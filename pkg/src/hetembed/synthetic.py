"""Planted-partition generator for typed benchmark graphs.

Every node gets one of ``communities`` community ids (balanced at random);
each schema-allowed node pair receives a link with probability ``p_in``
when the endpoints share a community and ``p_out`` otherwise.  Labels are
the community ids of one designated node type, and optional attributes
leak the community as a noisy one-hot block so attribute-aware models have
signal to exploit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import HeteroGraph


@dataclass(frozen=True)
class LinkTypeSpec:
    src_type: int
    dst_type: int
    directed: bool = False


@dataclass(frozen=True)
class SyntheticSpec:
    type_counts: tuple = (500, 500)
    communities: int = 4
    p_in: float = 0.05
    p_out: float = 0.002
    link_types: tuple = (LinkTypeSpec(0, 1, False),)
    labeled_type: int = 0
    attr_dim: int = 0          # 0 disables attributes
    attr_noise: float = 0.1

    def __post_init__(self):
        if self.communities < 1:
            raise ValueError("need at least one community")
        if not self.type_counts or any(c < 1 for c in self.type_counts):
            raise ValueError("every node type needs at least one node")
        if not 0.0 <= self.p_out <= 1.0 or not 0.0 <= self.p_in <= 1.0:
            raise ValueError("p_in and p_out must be probabilities")
        if self.p_in <= self.p_out:
            raise ValueError(
                f"planted signal requires p_in > p_out, got "
                f"p_in={self.p_in} p_out={self.p_out}")
        if not 0 <= self.labeled_type < len(self.type_counts):
            raise ValueError("labeled_type out of range")
        for lt in self.link_types:
            if not (0 <= lt.src_type < len(self.type_counts)
                    and 0 <= lt.dst_type < len(self.type_counts)):
                raise ValueError(f"link type {lt} names an unknown node type")
        if self.attr_dim and self.attr_dim < self.communities:
            raise ValueError(
                "attr_dim must be at least the community count when set")


def generate_synthetic(spec, seed):
    """Sample a planted-partition graph.

    Returns (graph, communities) where ``communities`` maps every global
    node id to its planted community.  Deterministic given (spec, seed).
    """
    rng = np.random.default_rng(seed)
    offsets = np.concatenate(([0], np.cumsum(spec.type_counts)))
    n_total = int(offsets[-1])
    K = spec.communities

    communities = np.empty(n_total, dtype=np.int64)
    for k, cnt in enumerate(spec.type_counts):
        base = np.arange(cnt, dtype=np.int64) % K
        rng.shuffle(base)
        communities[offsets[k]:offsets[k + 1]] = base

    links = []
    for lt in spec.link_types:
        a, b = lt.src_type, lt.dst_type
        ca = communities[offsets[a]:offsets[a + 1]]
        cb = communities[offsets[b]:offsets[b + 1]]
        same = ca[:, None] == cb[None, :]
        prob = np.where(same, spec.p_in, spec.p_out)
        mask = rng.random(prob.shape) < prob
        if a == b:
            if lt.directed:
                np.fill_diagonal(mask, False)       # no self links
            else:
                mask = np.triu(mask, k=1)           # unordered pairs once
        src_local, dst_local = np.nonzero(mask)
        links.append((src_local + offsets[a], dst_local + offsets[b],
                      np.ones(len(src_local))))

    labels = {}
    lo, hi = int(offsets[spec.labeled_type]), int(offsets[spec.labeled_type + 1])
    for v in range(lo, hi):
        labels[v] = {int(communities[v])}

    attributes = None
    if spec.attr_dim:
        attributes = []
        for k, cnt in enumerate(spec.type_counts):
            X = spec.attr_noise * rng.standard_normal((cnt, spec.attr_dim))
            X[np.arange(cnt), communities[offsets[k]:offsets[k + 1]]] += 1.0
            attributes.append(X)

    g = HeteroGraph(
        type_counts=spec.type_counts,
        type_ids=list(range(len(spec.type_counts))),
        original_ids=list(range(n_total)),
        schema=[(lt.src_type, lt.dst_type) for lt in spec.link_types],
        directed=[lt.directed for lt in spec.link_types],
        link_type_ids=list(range(len(spec.link_types))),
        links=links, attributes=attributes, labels=labels)
    return g, communities
