"""Hot numeric kernels, each with a numba and a pure-numpy implementation."""

from .cluster import silhouette_samples
from .knn import knn_predict
from .segment import TIE_TOL, cost_matrix, dp_table, prefix_sums, reconstruct
from .tree import bin_features, grow_tree, predict_tree

__all__ = [
    "TIE_TOL",
    "bin_features",
    "cost_matrix",
    "dp_table",
    "grow_tree",
    "knn_predict",
    "predict_tree",
    "prefix_sums",
    "reconstruct",
    "silhouette_samples",
]
