"""Heterogeneous network embedding trainers with a shared benchmark harness."""

__version__ = "0.1.0"

from .graph import (GraphFormatError, HeteroGraph, LinkSplit, MetaPath,
                    SchemaError, load_graph, save_graph, split_links)
from .synthetic import LinkTypeSpec, SyntheticSpec, generate_synthetic
from .sampler import (ContextPair, EdgeSampler, NoiseDistribution, WalkConfig,
                      extract_context_pairs, homogeneous_walk,
                      learn_metapath_weights, metapath_walk)
from .tables import EmbeddingTable, RelationParams
from .embio import load_embeddings, save_embeddings
from .shallow import (ShallowModelSpec, TrainSpec, ns_loss, objective_exact,
                      score_pair, smoothness_decomposition, train_shallow)
from .relational import (apply_constraints, corrupt_triplet, margin_loss,
                         score_triplet, train_relational)
from .rgcn import RgcnParams, rgcn_layer, sample_neighborhood, train_rgcn
from .evaluation import (EvalReport, LinearClassifier, auc, f1_scores,
                         hadamard_features, mrr, run_link_prediction,
                         run_node_classification, train_linear_classifier)
from .reporting import emit_report, render_figures
