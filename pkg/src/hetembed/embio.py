"""Embedding file format.

Header line: ``node_count width`` plus a trailing ``complex`` token when
rows hold interleaved (real, imaginary) pairs.  Body lines are
``type:original_id v1 ... vw`` using original node-type and node ids, one
line per node in global id order.
"""
from __future__ import annotations

import numpy as np

from .tables import EmbeddingTable


class EmbeddingFormatError(ValueError):
    pass


def save_embeddings(table, path):
    g = table.graph
    with open(path, "w") as fh:
        head = "%d %d" % (g.n_nodes, table.width)
        if table.complex_pairs:
            head += " complex"
        fh.write(head + "\n")
        for v in range(g.n_nodes):
            k = g.node_type_of(v)
            key = "%d:%d" % (g.type_ids[k], g.original_ids[v])
            vals = " ".join("%.6f" % x for x in table.array[v])
            fh.write(key + " " + vals + "\n")
    return path


def load_embeddings(path, graph):
    """Read an embedding file and align rows to ``graph``'s global ids."""
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) not in (2, 3):
            raise EmbeddingFormatError(f"{path}:1: bad header")
        try:
            count, width = int(head[0]), int(head[1])
        except ValueError:
            raise EmbeddingFormatError(f"{path}:1: bad header") from None
        complex_pairs = len(head) == 3 and head[2] == "complex"
        if len(head) == 3 and not complex_pairs:
            raise EmbeddingFormatError(f"{path}:1: unknown flag {head[2]!r}")
        if count != graph.n_nodes:
            raise EmbeddingFormatError(
                f"{path}: header counts {count} nodes, graph has {graph.n_nodes}")
        key_to_gid = {}
        for k in range(graph.n_types):
            lo, hi = graph.nodes_of_type(k)
            t = int(graph.type_ids[k])
            for v in range(lo, hi):
                key_to_gid[(t, int(graph.original_ids[v]))] = v
        arr = np.empty((graph.n_nodes, width))
        seen = np.zeros(graph.n_nodes, dtype=bool)
        for lineno, line in enumerate(fh, 2):
            toks = line.split()
            if not toks:
                continue
            if len(toks) != width + 1 or ":" not in toks[0]:
                raise EmbeddingFormatError(f"{path}:{lineno}: bad row")
            ts, ns = toks[0].split(":", 1)
            try:
                key = (int(ts), int(ns))
            except ValueError:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: bad node key {toks[0]!r}") from None
            if key not in key_to_gid:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: node {toks[0]} not in graph")
            gid = key_to_gid[key]
            if seen[gid]:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: duplicate node {toks[0]}")
            seen[gid] = True
            arr[gid] = [float(x) for x in toks[1:]]
        if not seen.all():
            missing = int(np.flatnonzero(~seen)[0])
            raise EmbeddingFormatError(
                f"{path}: no row for node original id "
                f"{int(graph.original_ids[missing])}")
    return EmbeddingTable(graph, arr, complex_pairs)
