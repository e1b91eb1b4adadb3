"""AdaBoost over graph-propagated features (AdaGCN), with GCN/SGC/PPNP baselines."""

from .boosting import SAMME, SAMME_R, Ensemble, Split, ensemble_predict, run_adagcn, vc_depth_bound
from .data import Dataset, SbmConfig, SplitSpec, generate_sbm, load_dataset, make_split
from .graph import SparseAdjacency, build_from_edge_list, propagate_chain, spmm, sym_normalize
from .mlp import MlpParams, TrainConfig

__all__ = [
    "SAMME",
    "SAMME_R",
    "Dataset",
    "Ensemble",
    "MlpParams",
    "SbmConfig",
    "SparseAdjacency",
    "Split",
    "SplitSpec",
    "TrainConfig",
    "build_from_edge_list",
    "ensemble_predict",
    "generate_sbm",
    "load_dataset",
    "make_split",
    "propagate_chain",
    "run_adagcn",
    "spmm",
    "sym_normalize",
    "vc_depth_bound",
]
