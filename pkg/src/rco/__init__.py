"""Learnable axis-wise permutations for tensor inputs, trained jointly with
a small CNN-LSTM by reverse-mode autodiff.

The operator keeps one square logit matrix per tensor axis, relaxes it to a
right-stochastic matrix with a tempered row softmax, permutes the data by
swap-axes/multiply/swap-back before convolutional processing, and anneals
the temperature so the relaxation hardens into a binary permutation.
"""

from .autodiff import Var, backward, new_tape
from .cube import (
    RcoState,
    anneal,
    apply_hard,
    doubly_stochastic_gap,
    harden,
    permute,
    regularization_loss,
    soft_permutation,
)
from .dataflow import (
    SeriesTable,
    SyntheticTaskSpec,
    WindowedDataset,
    ingest_csv,
    make_windows,
    synthesize,
)
from .errors import (
    ContractError,
    IngestionError,
    InvalidAxisError,
    ParameterError,
    RcoError,
    ShapeError,
    TrainingDiverged,
)
from .layers import CnnLstm, Conv2d, Dense, LstmCell
from .losses import LossReport, rmse, task_loss, total_loss
from .trainer import (
    TrainConfig,
    TrainedModel,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    sweep_gamma,
    timing_report,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "Var",
    "backward",
    "new_tape",
    "RcoState",
    "anneal",
    "apply_hard",
    "doubly_stochastic_gap",
    "harden",
    "permute",
    "regularization_loss",
    "soft_permutation",
    "SeriesTable",
    "SyntheticTaskSpec",
    "WindowedDataset",
    "ingest_csv",
    "make_windows",
    "synthesize",
    "ContractError",
    "IngestionError",
    "InvalidAxisError",
    "ParameterError",
    "RcoError",
    "ShapeError",
    "TrainingDiverged",
    "CnnLstm",
    "Conv2d",
    "Dense",
    "LstmCell",
    "LossReport",
    "rmse",
    "task_loss",
    "total_loss",
    "TrainConfig",
    "TrainedModel",
    "evaluate",
    "load_checkpoint",
    "save_checkpoint",
    "sweep_gamma",
    "timing_report",
    "train",
]
