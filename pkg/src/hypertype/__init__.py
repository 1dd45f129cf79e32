"""Hierarchical entity typing with hyperbolic (Poincare ball) type embeddings."""
from .geometry import LossWeights, SpaceKind, hyperbolic_distance
from .hierarchy import AnnotatedInstance, TypeInventory, WeightedTypeGraph
from .type_embedding import GraphEmbedConfig, TypeEmbeddingTable, train_type_embeddings
from .projection import StackedProjector, TrainConfig, train
from .evaluation import metric_report, predict_batch

__version__ = "0.1.0"
