"""Committees of Levenberg-Marquardt trained MLPs for closed-set identification
and verification on small feature-vector datasets."""

from .committee import Committee, committee_mse
from .data import LabeledDataset, fit_normalizer, generate_synthetic, load_dataset, split_train_test
from .evaluation import build_tensor, identification_rate, min_dcf, split_scores
from .experiment import SchemeId, run_experiment, run_scheme, summarize
from .kernels import BACKEND
from .mlp import MlpModel, MlpTopology, forward, init_weights
from .train import TrainConfig, train_lm, train_lm_bayes

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Committee", "LabeledDataset", "MlpModel", "MlpTopology", "SchemeId",
    "TrainConfig", "build_tensor", "committee_mse", "fit_normalizer", "forward",
    "generate_synthetic", "identification_rate", "init_weights", "load_dataset", "min_dcf",
    "run_experiment", "run_scheme", "split_scores", "split_train_test", "summarize", "train_lm",
    "train_lm_bayes",
]
