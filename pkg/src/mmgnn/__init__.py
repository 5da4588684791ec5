"""Multi-modal graph neural network music recommender (numpy/scipy)."""

from .dataset import (
    Dataset,
    FeatureTable,
    SyntheticSpec,
    generate_synthetic,
    load_feature_table,
    load_interactions,
    read_dataset,
    split,
    write_dataset,
)
from .evaluation import MetricsReport, evaluate, random_baseline
from .graph import build_bipartite, build_social, spmv
from .model import ModelParams, forward, init_params, prepare_inputs, score, score_all
from .training import TrainConfig, fit, total_loss
from .checkpoint import load_checkpoint, save_checkpoint

__version__ = "0.1.0"
