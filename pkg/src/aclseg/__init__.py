"""Continual class-incremental segmentation laboratory.

A small numpy-only stack: reverse-mode autodiff, the shared/private
latent segmentation model with an adversarial task discriminator,
fine-tuning / distillation / joint baselines, a deterministic synthetic
thoracic benchmark, and knowledge-retention (omega) scoring.
"""

import os as _os

# Honoured only if set before numpy first loads in this process, which
# is why it sits above every submodule import.
if _os.environ.get("ACLSEG_DETERMINISTIC", "") == "1":
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, "1")

from . import errors
from .baselines import MultiHeadUNet, UNetConfig
from .checkpoint import clone_model, load_model, save_model
from .data import (
    ORDER_A,
    ORDER_B,
    ORDER_C,
    SCHEDULE_PRESETS,
    TASK_SPECS,
    Dataset,
    generate_benchmark,
    load_dataset,
)
from .gradcheck import run_suite, summarize
from .losses import (
    LossWeights,
    adv_loss_discriminator,
    adv_loss_shared,
    bce_loss,
    diff_loss,
    lwf_distill,
    total_loss,
)
from .metrics import (
    CLASS_NAMES,
    AccuracyMatrix,
    IdealScores,
    OmegaScores,
    compute_omegas,
    dice,
    dice_masks,
    overall_dice,
)
from .model import VARIANTS, ACLSegModel, ModelConfig
from .nn import Conv2d, ConvTranspose2d, Linear, Module, ModuleList, Sequential, frozen_params
from .tensor import Parameter, Tensor, make_rng, no_grad
from .trainer import Adam, RunRecord, TrainConfig, run_sequence, train_joint

__version__ = "0.1.0"

__all__ = [
    "ACLSegModel",
    "AccuracyMatrix",
    "Adam",
    "CLASS_NAMES",
    "Conv2d",
    "ConvTranspose2d",
    "Dataset",
    "IdealScores",
    "Linear",
    "LossWeights",
    "ModelConfig",
    "Module",
    "ModuleList",
    "MultiHeadUNet",
    "OmegaScores",
    "ORDER_A",
    "ORDER_B",
    "ORDER_C",
    "Parameter",
    "RunRecord",
    "SCHEDULE_PRESETS",
    "Sequential",
    "TASK_SPECS",
    "Tensor",
    "TrainConfig",
    "UNetConfig",
    "VARIANTS",
    "adv_loss_discriminator",
    "adv_loss_shared",
    "bce_loss",
    "clone_model",
    "compute_omegas",
    "dice",
    "dice_masks",
    "diff_loss",
    "errors",
    "frozen_params",
    "generate_benchmark",
    "load_dataset",
    "load_model",
    "lwf_distill",
    "make_rng",
    "no_grad",
    "overall_dice",
    "run_sequence",
    "run_suite",
    "save_model",
    "summarize",
    "total_loss",
    "train_joint",
]
