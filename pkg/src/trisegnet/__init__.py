"""Triple-view semi-supervised segmentation with confidence-weighted
pseudo-label voting and scheduled low-confidence label removal."""

__version__ = "0.1.0"

from .config import RunConfig, load_config, save_config
from .data import ImageGrid, MaskGrid, generate_synthetic, load_dataset, split_dataset
from .losses import TverskyParams, boundary_loss, focal_tversky_loss, overlap_loss, stage23_loss
from .metrics import evaluate_pair, evaluate_set
from .perturb import PerturbConfig, perturb_batch
from .trainer import StagePlan, run_pipeline
from .views import ModelConfig, TripleModel, ensemble_predict, forward_view, init_triple_model

__all__ = [
    "RunConfig", "load_config", "save_config",
    "ImageGrid", "MaskGrid", "generate_synthetic", "load_dataset", "split_dataset",
    "TverskyParams", "boundary_loss", "focal_tversky_loss", "overlap_loss", "stage23_loss",
    "evaluate_pair", "evaluate_set",
    "PerturbConfig", "perturb_batch",
    "StagePlan", "run_pipeline",
    "ModelConfig", "TripleModel", "ensemble_predict", "forward_view", "init_triple_model",
]
