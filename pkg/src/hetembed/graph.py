"""Typed heterogeneous multigraph: construction, file formats, meta-paths, splits.

Nodes carry dense global ids grouped by node type: dense type ``k`` owns the
contiguous id range ``[type_offsets[k], type_offsets[k+1])``.  Original node
and type ids from input files are kept so that every artifact written later
can be mapped back to the source data.

Link types keep their stored orientation (``src``, ``dst`` arrays), but the
neighbor index is symmetric: a link contributes its partner to both endpoint
neighbor lists regardless of the per-type directed flag.  Walk, neighborhood
and candidate machinery therefore treats the graph as undirected, while
relation-learning trainers read oriented triplets straight from the per-type
link arrays and honor the directed flag.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GraphFormatError(ValueError):
    """A node/link/label file violates the expected format."""


class SchemaError(ValueError):
    """A link or meta-path is incompatible with the link-type schema."""


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


class HeteroGraph:
    """Immutable typed multigraph over densified node and link-type ids.

    Parameters
    ----------
    type_counts : sequence of int
        Node count per dense node type.
    type_ids : sequence of int
        Original node-type id per dense node type.
    original_ids : sequence of int
        Original node id per dense global node id.
    schema : sequence of (int, int)
        Per dense link type, the (source dense type, target dense type) pair.
    directed : sequence of bool
        Per dense link type, whether stored orientation is meaningful.
    link_type_ids : sequence of int
        Original link-type id per dense link type.
    links : sequence of (src, dst, weight) array triples
        Per dense link type, the stored links.  ``src``/``dst`` hold dense
        global node ids; weights are nonnegative floats.
    attributes : list | None
        Per dense node type, a ``(count, dim)`` float array or None.
    labels : dict | None
        Dense global node id -> set of label ids.
    link_attributes : dict | None
        Optional per-link vectors keyed by (dense link type, row index).
        Stored for completeness; no trainer in this package reads them.
    """

    def __init__(self, *, type_counts, type_ids, original_ids, schema, directed,
                 link_type_ids, links, attributes=None, labels=None,
                 link_attributes=None):
        self.type_counts = _readonly(np.asarray(type_counts, dtype=np.int64))
        self.type_ids = _readonly(np.asarray(type_ids, dtype=np.int64))
        self.type_offsets = _readonly(np.concatenate(
            ([0], np.cumsum(self.type_counts))))
        self.n_nodes = int(self.type_offsets[-1])
        self.n_types = len(self.type_counts)
        self.original_ids = _readonly(np.asarray(original_ids, dtype=np.int64))
        self.schema = tuple((int(s), int(t)) for s, t in schema)
        self.directed = _readonly(np.asarray(directed, dtype=bool))
        self.link_type_ids = _readonly(np.asarray(link_type_ids, dtype=np.int64))
        self.n_link_types = len(self.schema)
        self.links = tuple(
            (_readonly(np.asarray(s, dtype=np.int64)),
             _readonly(np.asarray(d, dtype=np.int64)),
             _readonly(np.asarray(w, dtype=np.float64)))
            for s, d, w in links)
        if attributes is None:
            attributes = [None] * self.n_types
        self.attributes = [None if a is None else _readonly(np.asarray(a, dtype=np.float64))
                           for a in attributes]
        self.labels = {int(v): frozenset(int(c) for c in cs)
                       for v, cs in (labels or {}).items()}
        self.link_attributes = link_attributes
        self._build_neighbor_index()
        self.validate()

    # ------------------------------------------------------------------ #
    # indexing helpers

    def node_type_of(self, v):
        """Dense node type of global id ``v``."""
        v = int(v)
        if not 0 <= v < self.n_nodes:
            raise ValueError(f"unknown node id {v}")
        return int(np.searchsorted(self.type_offsets, v, side="right") - 1)

    def nodes_of_type(self, k):
        """Global id range of dense type ``k`` as (lo, hi)."""
        if not 0 <= k < self.n_types:
            raise ValueError(f"unknown node type {k}")
        return int(self.type_offsets[k]), int(self.type_offsets[k + 1])

    def n_links(self, l=None):
        if l is None:
            return sum(len(s) for s, _, _ in self.links)
        return len(self.links[l][0])

    def _check_link_type(self, l):
        if not 0 <= l < self.n_link_types:
            raise ValueError(f"unknown link type {l}")

    # ------------------------------------------------------------------ #
    # neighbor index (symmetric view)

    def _build_neighbor_index(self):
        n = self.n_nodes
        self._nbr = []
        for l, (src, dst, w) in enumerate(self.links):
            ends = np.concatenate((src, dst))
            partners = np.concatenate((dst, src))
            weights = np.concatenate((w, w))
            order = np.lexsort((partners, ends))
            ends, partners, weights = ends[order], partners[order], weights[order]
            indptr = np.zeros(n + 1, dtype=np.int64)
            np.add.at(indptr, ends + 1, 1)
            np.cumsum(indptr, out=indptr)
            self._nbr.append((_readonly(indptr), _readonly(partners),
                              _readonly(weights)))
        # merged index over all link types, used by homogeneous walks,
        # two-hop candidates and degree computation
        ends = np.concatenate([np.concatenate((s, d)) for s, d, _ in self.links]
                              or [np.empty(0, dtype=np.int64)])
        partners = np.concatenate([np.concatenate((d, s)) for s, d, _ in self.links]
                                  or [np.empty(0, dtype=np.int64)])
        ltypes = np.concatenate(
            [np.full(2 * len(s), l, dtype=np.int64)
             for l, (s, _, _) in enumerate(self.links)]
            or [np.empty(0, dtype=np.int64)])
        weights = np.concatenate([np.concatenate((w, w)) for _, _, w in self.links]
                                 or [np.empty(0, dtype=np.float64)])
        order = np.lexsort((partners, ends))
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, ends + 1, 1)
        np.cumsum(indptr, out=indptr)
        self._nbr_all = (_readonly(indptr), _readonly(partners[order]),
                         _readonly(ltypes[order]), _readonly(weights[order]))

    def neighbor_slice(self, v, l):
        """Type-``l`` partners of ``v`` (ascending id) with weights, as arrays."""
        self._check_link_type(l)
        if not 0 <= v < self.n_nodes:
            raise ValueError(f"unknown node id {v}")
        indptr, partners, weights = self._nbr[l]
        lo, hi = indptr[v], indptr[v + 1]
        return partners[lo:hi], weights[lo:hi]

    def neighbors(self, v, l):
        """Type-``l`` neighbors of ``v`` as a list of (node id, weight).

        Partners on either end of a link count as neighbors; the per-type
        directed flag does not filter this view.  Order is ascending id.
        """
        ids, w = self.neighbor_slice(v, l)
        return list(zip(ids.tolist(), w.tolist()))

    def incident_slice(self, v):
        """All partners of ``v`` across link types: (ids, link types, weights)."""
        if not 0 <= v < self.n_nodes:
            raise ValueError(f"unknown node id {v}")
        indptr, partners, ltypes, weights = self._nbr_all
        lo, hi = indptr[v], indptr[v + 1]
        return partners[lo:hi], ltypes[lo:hi], weights[lo:hi]

    def weighted_degrees(self):
        """Per-node total incident weight (self-loops count twice)."""
        indptr, _, _, weights = self._nbr_all
        return np.add.reduceat(
            np.concatenate((weights, [0.0])), indptr[:-1])[:self.n_nodes] \
            * (np.diff(indptr) > 0)

    def two_hop_candidates(self, v):
        """Nodes reachable from ``v`` in one or two hops over any link type.

        Links are followed in either direction.  ``v`` itself is excluded.
        """
        one, _, _ = self.incident_slice(v)
        out = set(one.tolist())
        for u in set(one.tolist()):
            nxt, _, _ = self.incident_slice(int(u))
            out.update(nxt.tolist())
        out.discard(int(v))
        return out

    # ------------------------------------------------------------------ #
    # validation + equality

    def validate(self):
        if len(self.type_ids) != self.n_types:
            raise SchemaError("type_ids length does not match type_counts")
        if len(self.original_ids) != self.n_nodes:
            raise GraphFormatError("original_ids length does not match node count")
        if len(set(self.original_ids.tolist())) != self.n_nodes:
            raise GraphFormatError("duplicate original node ids")
        if not (len(self.directed) == len(self.link_type_ids)
                == len(self.links) == self.n_link_types):
            raise SchemaError("link-type metadata lengths disagree")
        for l, (src, dst, w) in enumerate(self.links):
            a, b = self.schema[l]
            if not (0 <= a < self.n_types and 0 <= b < self.n_types):
                raise SchemaError(f"link type {l}: schema names unknown node type")
            if len(src) != len(dst) or len(src) != len(w):
                raise GraphFormatError(f"link type {l}: ragged link arrays")
            if len(src):
                if src.min() < 0 or src.max() >= self.n_nodes \
                        or dst.min() < 0 or dst.max() >= self.n_nodes:
                    raise GraphFormatError(f"link type {l}: node id out of range")
                slo, shi = self.type_offsets[a], self.type_offsets[a + 1]
                dlo, dhi = self.type_offsets[b], self.type_offsets[b + 1]
                bad = ((src < slo) | (src >= shi) | (dst < dlo) | (dst >= dhi))
                if bad.any():
                    i = int(np.flatnonzero(bad)[0])
                    raise SchemaError(
                        f"link type {l}: link ({int(src[i])}, {int(dst[i])}) "
                        f"violates schema ({a}, {b})")
                if (w < 0).any():
                    raise GraphFormatError(f"link type {l}: negative weight")
        for k, attrs in enumerate(self.attributes):
            if attrs is not None and len(attrs) != self.type_counts[k]:
                raise GraphFormatError(
                    f"node type {k}: attribute rows != node count")
        for v in self.labels:
            if not 0 <= v < self.n_nodes:
                raise GraphFormatError(f"label on unknown node id {v}")

    def equals(self, other):
        if self.n_nodes != other.n_nodes or self.schema != other.schema:
            return False
        if not (np.array_equal(self.type_counts, other.type_counts)
                and np.array_equal(self.type_ids, other.type_ids)
                and np.array_equal(self.original_ids, other.original_ids)
                and np.array_equal(self.directed, other.directed)
                and np.array_equal(self.link_type_ids, other.link_type_ids)):
            return False
        for (s1, d1, w1), (s2, d2, w2) in zip(self.links, other.links):
            if not (np.array_equal(s1, s2) and np.array_equal(d1, d2)
                    and np.array_equal(w1, w2)):
                return False
        for a1, a2 in zip(self.attributes, other.attributes):
            if (a1 is None) != (a2 is None):
                return False
            if a1 is not None and not np.allclose(a1, a2):
                return False
        return self.labels == other.labels


class MetaPath:
    """A link-type sequence together with the node-type sequence it induces.

    The node-type sequence is resolved against the schema ignoring the
    directed flag: from the current type, a link type whose endpoint types
    are (a, b) moves to b when standing at a and to a when standing at b.
    """

    def __init__(self, link_types, graph, start_type=None):
        self.link_types = tuple(int(l) for l in link_types)
        if not self.link_types:
            raise SchemaError("empty meta-path")
        for l in self.link_types:
            graph._check_link_type(l)
        a0, b0 = graph.schema[self.link_types[0]]
        if start_type is None:
            cur = a0
        else:
            cur = int(start_type)
            if cur not in (a0, b0):
                raise SchemaError(
                    f"start type {cur} is not an endpoint of link type "
                    f"{self.link_types[0]}")
        types = [cur]
        for l in self.link_types:
            a, b = graph.schema[l]
            if cur == a:
                cur = b
            elif cur == b:
                cur = a
            else:
                raise SchemaError(
                    f"meta-path step {l} with endpoints ({a}, {b}) cannot "
                    f"leave node type {cur}")
            types.append(cur)
        self.node_types = tuple(types)
        self.cyclable = self.node_types[0] == self.node_types[-1]

    def __len__(self):
        return len(self.link_types)

    def __repr__(self):
        return f"MetaPath({list(self.link_types)}, types={list(self.node_types)})"


@dataclass
class LinkSplit:
    """An 80/20-style link holdout: a training graph plus held-out links."""
    train: HeteroGraph
    heldout: list            # (u, v, dense link type) triples
    seed: int
    ratio: float
    whole_in_train: list = field(default_factory=list)  # link types too small to split


def split_links(g, ratio, seed):
    """Stratified link holdout: per link type, ``round(ratio * n)`` links out.

    The training graph keeps every node; link types with fewer than two
    links stay whole in train and are flagged in ``whole_in_train``.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"holdout ratio must be in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    heldout = []
    whole = []
    new_links = []
    for l, (src, dst, w) in enumerate(g.links):
        n = len(src)
        if n < 2:
            whole.append(l)
            new_links.append((src.copy(), dst.copy(), w.copy()))
            continue
        k = int(round(ratio * n))
        perm = rng.permutation(n)
        out_idx = np.sort(perm[:k])
        keep = np.ones(n, dtype=bool)
        keep[out_idx] = False
        for i in out_idx:
            heldout.append((int(src[i]), int(dst[i]), l))
        new_links.append((src[keep], dst[keep], w[keep]))
    train = HeteroGraph(
        type_counts=g.type_counts, type_ids=g.type_ids,
        original_ids=g.original_ids, schema=g.schema, directed=g.directed,
        link_type_ids=g.link_type_ids, links=new_links,
        attributes=g.attributes, labels=dict(g.labels))
    return LinkSplit(train=train, heldout=heldout, seed=int(seed),
                     ratio=float(ratio), whole_in_train=whole)


# ---------------------------------------------------------------------- #
# file formats


def _parse_int(tok, path, lineno, what):
    try:
        v = int(tok)
    except ValueError:
        raise GraphFormatError(f"{path}:{lineno}: bad {what} {tok!r}") from None
    if v < 0:
        raise GraphFormatError(f"{path}:{lineno}: negative {what} {tok!r}")
    return v


def load_graph(node_file, link_file, label_file=None, attr_mode=False):
    """Load a graph from the tab-separated node/link(/label) files.

    Node lines are ``node_id<TAB>node_type_id[<TAB>attr1,attr2,...]``; the
    attribute column is only parsed when ``attr_mode`` is set.  Link lines
    are ``src<TAB>dst<TAB>link_type_id<TAB>weight`` and an optional header
    ``#directed: id ...`` flags directed link types.  Label lines are
    ``node_id<TAB>label_id``; repeated node ids accumulate label sets.

    Node ids, node-type ids and link-type ids are densified; the original
    ids are kept on the returned graph.
    """
    raw_nodes = []   # (orig_id, orig_type, attrs | None)
    seen = set()
    with open(node_file) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) < 2:
                raise GraphFormatError(
                    f"{node_file}:{lineno}: expected at least 2 columns")
            nid = _parse_int(cols[0], node_file, lineno, "node id")
            ntype = _parse_int(cols[1], node_file, lineno, "node type id")
            if nid in seen:
                raise GraphFormatError(
                    f"{node_file}:{lineno}: duplicate node id {nid}")
            seen.add(nid)
            attrs = None
            if attr_mode and len(cols) >= 3 and cols[2]:
                try:
                    attrs = np.array([float(x) for x in cols[2].split(",")])
                except ValueError:
                    raise GraphFormatError(
                        f"{node_file}:{lineno}: bad attribute vector") from None
            raw_nodes.append((nid, ntype, attrs))
    if not raw_nodes:
        raise GraphFormatError(f"{node_file}: no nodes")

    orig_types = sorted({t for _, t, _ in raw_nodes})
    type_of = {t: k for k, t in enumerate(orig_types)}
    by_type = [[] for _ in orig_types]
    for nid, t, attrs in raw_nodes:
        by_type[type_of[t]].append((nid, attrs))
    type_counts = [len(b) for b in by_type]
    original_ids = [nid for b in by_type for nid, _ in b]
    node_of = {}
    gid = 0
    for b in by_type:
        for nid, _ in b:
            node_of[nid] = gid
            gid += 1
    attributes = []
    for k, b in enumerate(by_type):
        dims = {0 if a is None else len(a) for _, a in b}
        if dims == {0}:
            attributes.append(None)
            continue
        if len(dims) != 1:
            raise GraphFormatError(
                f"{node_file}: node type {orig_types[k]} mixes attribute "
                f"dimensions {sorted(dims)}")
        attributes.append(np.stack([a for _, a in b]))

    directed_orig = set()
    raw_links = {}   # orig link type -> list of (src gid, dst gid, w)
    with open(link_file) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("directed:"):
                    toks = body[len("directed:"):].replace(",", " ").split()
                    for t in toks:
                        directed_orig.add(
                            _parse_int(t, link_file, lineno, "link type id"))
                continue
            cols = line.split("\t")
            if len(cols) != 4:
                raise GraphFormatError(
                    f"{link_file}:{lineno}: expected 4 columns")
            s = _parse_int(cols[0], link_file, lineno, "node id")
            d = _parse_int(cols[1], link_file, lineno, "node id")
            lt = _parse_int(cols[2], link_file, lineno, "link type id")
            try:
                w = float(cols[3])
            except ValueError:
                raise GraphFormatError(
                    f"{link_file}:{lineno}: bad weight {cols[3]!r}") from None
            if w < 0:
                raise GraphFormatError(f"{link_file}:{lineno}: negative weight")
            for nid in (s, d):
                if nid not in node_of:
                    raise GraphFormatError(
                        f"{link_file}:{lineno}: unknown node id {nid}")
            raw_links.setdefault(lt, []).append((node_of[s], node_of[d], w))

    cum_counts = np.cumsum(type_counts)

    def dense_type(gid):
        return int(np.searchsorted(cum_counts, gid, side="right"))

    orig_ltypes = sorted(raw_links)
    schema = []
    directed = []
    links = []
    for lt in orig_ltypes:
        rows = raw_links[lt]
        is_dir = lt in directed_orig
        a, b = dense_type(rows[0][0]), dense_type(rows[0][1])
        src, dst, w = [], [], []
        for i, (s, d, wt) in enumerate(rows):
            ts, td = dense_type(s), dense_type(d)
            if (ts, td) == (a, b):
                pass
            elif not is_dir and (ts, td) == (b, a):
                s, d = d, s
            else:
                raise SchemaError(
                    f"{link_file}: link type {lt} mixes endpoint types: "
                    f"({orig_types[a]}, {orig_types[b]}) vs "
                    f"({orig_types[ts]}, {orig_types[td]}) at row {i + 1}")
            src.append(s)
            dst.append(d)
            w.append(wt)
        schema.append((a, b))
        directed.append(is_dir)
        links.append((np.array(src, dtype=np.int64),
                      np.array(dst, dtype=np.int64),
                      np.array(w, dtype=np.float64)))

    labels = {}
    if label_file is not None:
        with open(label_file) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                cols = line.split("\t")
                if len(cols) != 2:
                    raise GraphFormatError(
                        f"{label_file}:{lineno}: expected 2 columns")
                nid = _parse_int(cols[0], label_file, lineno, "node id")
                lab = _parse_int(cols[1], label_file, lineno, "label id")
                if nid not in node_of:
                    raise GraphFormatError(
                        f"{label_file}:{lineno}: unknown node id {nid}")
                labels.setdefault(node_of[nid], set()).add(lab)

    return HeteroGraph(
        type_counts=type_counts, type_ids=orig_types,
        original_ids=original_ids, schema=schema, directed=directed,
        link_type_ids=orig_ltypes, links=links, attributes=attributes,
        labels=labels)


def save_graph(g, node_file, link_file, label_file=None):
    """Write ``g`` back to the tab-separated formats using original ids."""
    with open(node_file, "w") as fh:
        for k in range(g.n_types):
            lo, hi = g.nodes_of_type(k)
            attrs = g.attributes[k]
            for v in range(lo, hi):
                cols = [str(int(g.original_ids[v])), str(int(g.type_ids[k]))]
                if attrs is not None:
                    cols.append(",".join("%.17g" % x for x in attrs[v - lo]))
                fh.write("\t".join(cols) + "\n")
    with open(link_file, "w") as fh:
        dir_ids = [int(g.link_type_ids[l]) for l in range(g.n_link_types)
                   if g.directed[l]]
        if dir_ids:
            fh.write("#directed: " + " ".join(str(i) for i in dir_ids) + "\n")
        for l, (src, dst, w) in enumerate(g.links):
            lt = int(g.link_type_ids[l])
            for s, d, wt in zip(src, dst, w):
                fh.write("%d\t%d\t%d\t%.17g\n"
                         % (g.original_ids[s], g.original_ids[d], lt, wt))
    if label_file is not None:
        with open(label_file, "w") as fh:
            for v in sorted(g.labels):
                for lab in sorted(g.labels[v]):
                    fh.write("%d\t%d\n" % (g.original_ids[v], lab))
