"""Information-bottleneck concept bottleneck models in plain numpy."""

from .config import TrainConfig, parse_config
from .datagen import Dataset, SynthSpec, load_concept_csv, make_synthetic, split
from .losses import LossConfig, compute_loss
from .metrics import auc_roc, auc_tti, intervention_curve, nauc_tti, nis, ois
from .model import CbmModel, forward, init_model
from .train import fit

__version__ = "0.1.0"

__all__ = [
    "TrainConfig", "parse_config", "Dataset", "SynthSpec", "load_concept_csv", "make_synthetic",
    "split", "LossConfig", "compute_loss", "auc_roc", "auc_tti", "intervention_curve", "nauc_tti",
    "nis", "ois", "CbmModel", "forward", "init_model", "fit",
]
