"""Training, evaluation, data I/O, checkpoints and experiment protocols."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import (
    Coverage,
    Dataset,
    Example,
    load_dataset,
    load_embeddings,
    synth_generate,
    write_dataset,
)
from .errors import DataError, NumericError
from .experiments import mean_depth, rho_sweep, run_seeds
from .metrics import bleu, bucket_range, length_bucket, modified_precision
from .model import HeadConfig, Model
from .optim import Adam
from .train import (
    TrainConfig,
    TrainResult,
    evaluate,
    evaluate_by_length,
    evaluate_classification,
    predict_all,
    train,
)

__all__ = [
    "Adam", "CheckpointError", "Coverage", "DataError", "Dataset", "Example", "HeadConfig", "Model",
    "NumericError", "TrainConfig", "TrainResult", "bleu", "bucket_range", "evaluate", "evaluate_by_length",
    "evaluate_classification", "length_bucket", "load_checkpoint", "load_dataset", "load_embeddings",
    "mean_depth", "modified_precision", "predict_all", "rho_sweep", "run_seeds", "save_checkpoint",
    "synth_generate", "train", "write_dataset",
]
