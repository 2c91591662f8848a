"""Embedding containers shared by every trainer.

An :class:`EmbeddingTable` is one dense float64 matrix over all global node
ids; per-type blocks are views into the contiguous id ranges.  Complex
embeddings live in the same storage as interleaved (real, imaginary) pairs,
so a table of ``dim`` complex coordinates has width ``2 * dim``.
"""
from __future__ import annotations

import numpy as np


class EmbeddingTable:

    def __init__(self, graph, array, complex_pairs=False):
        array = np.asarray(array, dtype=np.float64)
        if array.shape[0] != graph.n_nodes:
            raise ValueError(
                f"embedding rows {array.shape[0]} != node count {graph.n_nodes}")
        if complex_pairs and array.shape[1] % 2:
            raise ValueError("complex storage needs an even width")
        self.graph = graph
        self.array = array
        self.complex_pairs = bool(complex_pairs)

    @classmethod
    def init_uniform(cls, graph, dim, rng, complex_pairs=False):
        """Uniform init in [-0.5/width, 0.5/width] per entry."""
        width = 2 * dim if complex_pairs else dim
        a = (rng.random((graph.n_nodes, width)) - 0.5) / width
        return cls(graph, a, complex_pairs)

    @property
    def width(self):
        return self.array.shape[1]

    @property
    def dim(self):
        """Logical dimensionality: complex coordinates count once."""
        return self.width // 2 if self.complex_pairs else self.width

    def row(self, v):
        return self.array[int(v)]

    def for_type(self, k):
        lo, hi = self.graph.nodes_of_type(k)
        return self.array[lo:hi]

    def copy(self):
        return EmbeddingTable(self.graph, self.array.copy(), self.complex_pairs)

    def as_complex(self):
        """View the interleaved storage as a complex matrix."""
        if not self.complex_pairs:
            raise ValueError("table does not hold complex pairs")
        return self.array.view(np.complex128)


class RelationParams:
    """Per-relation parameter vectors keyed by link type, meta-path index
    or realized link-type tuple, in insertion order."""

    def __init__(self, keys, vectors, complex_pairs=False):
        self.keys = list(keys)
        self.vectors = np.asarray(vectors, dtype=np.float64)
        if len(self.keys) != self.vectors.shape[0]:
            raise ValueError("key count != vector count")
        self.complex_pairs = bool(complex_pairs)
        self._index = {k: i for i, k in enumerate(self.keys)}

    @classmethod
    def ones(cls, keys, width):
        """All-ones init, the neutral diagonal for bilinear scores."""
        keys = list(keys)
        return cls(keys, np.ones((len(keys), width)))

    @classmethod
    def empty(cls, width=0):
        return cls([], np.zeros((0, width)))

    def get(self, key):
        return self.vectors[self._index[key]]

    def index_of(self, key):
        return self._index[key]

    def __contains__(self, key):
        return key in self._index

    def __len__(self):
        return len(self.keys)
