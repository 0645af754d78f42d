"""Dynamic-width convolutional image restoration.

A width-adaptive backbone whose convolutions can run on any leading slice of
their channels, a per-image width selector trained against the frozen
backbone, and a synthetic degradation lab (noise, rain, haze) with exact
algebraic cross-checks. Everything is numpy on top of a small reverse-mode
tape; runs are deterministic given a seed.
"""

from .checkpoint import (
    checkpoint_load,
    checkpoint_save,
    check_checkpoint_pair,
    check_config_compat,
)
from .config import PROFILES, RunConfig, from_profile, load_config, write_config
from .degrade import (
    NUM_TASK_TYPES,
    TASK_NAMES,
    DegradedSample,
    HazeSpec,
    NoiseSpec,
    RainSpec,
    apply_haze,
    apply_noise,
    apply_rain,
    default_spec,
    make_sample,
    residual_haze,
    synth_clean,
    task_label,
    verify_decomposition,
)
from .dataset import TrainSet, export_ppm, load_pack, regenerate_sample, synth_pack
from .errors import (
    BadMagicError,
    CheckpointError,
    ChecksumError,
    CompatibilityError,
    ConfigurationError,
    DimensionError,
    LabelError,
    ManifestError,
    NumericsError,
    ShapeError,
    StageOrderError,
    VerificationError,
    WidthError,
    WidthnetError,
)
from .evaluate import evaluate_fixed, evaluate_routed, model_desc, sweep_targets
from .metrics import CostReport, ModelDesc, count_flops, count_params, psnr, ssim
from .selector import (
    SelectorModel,
    precompute_frozen,
    route_and_restore,
    selection_loss,
    selector_forward,
    selector_losses,
    sparsity_loss,
    train_ws,
)
from .tensor import Adam, Tape, Tensor, backward, conv2d, conv2d_sliced, set_strict
from .verify import SUITES, check_gradients, gradient_suite, run_suites
from .wab import (
    WabModel,
    WidthCandidates,
    sample_widths,
    train_wab,
    verify_prefix_decomposition,
    wab_losses,
)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "BadMagicError",
    "CheckpointError",
    "ChecksumError",
    "CompatibilityError",
    "ConfigurationError",
    "CostReport",
    "DegradedSample",
    "DimensionError",
    "HazeSpec",
    "LabelError",
    "ManifestError",
    "ModelDesc",
    "NoiseSpec",
    "NUM_TASK_TYPES",
    "NumericsError",
    "PROFILES",
    "RainSpec",
    "RunConfig",
    "SelectorModel",
    "ShapeError",
    "StageOrderError",
    "SUITES",
    "Tape",
    "TASK_NAMES",
    "Tensor",
    "TrainSet",
    "VerificationError",
    "WabModel",
    "WidthCandidates",
    "WidthError",
    "WidthnetError",
    "apply_haze",
    "apply_noise",
    "apply_rain",
    "backward",
    "check_checkpoint_pair",
    "check_config_compat",
    "check_gradients",
    "checkpoint_load",
    "checkpoint_save",
    "conv2d",
    "conv2d_sliced",
    "count_flops",
    "count_params",
    "default_spec",
    "evaluate_fixed",
    "evaluate_routed",
    "export_ppm",
    "from_profile",
    "gradient_suite",
    "load_config",
    "load_pack",
    "make_sample",
    "model_desc",
    "precompute_frozen",
    "psnr",
    "regenerate_sample",
    "residual_haze",
    "route_and_restore",
    "run_suites",
    "sample_widths",
    "selection_loss",
    "selector_forward",
    "selector_losses",
    "set_strict",
    "sparsity_loss",
    "ssim",
    "sweep_targets",
    "synth_clean",
    "synth_pack",
    "task_label",
    "train_wab",
    "train_ws",
    "verify_decomposition",
    "verify_prefix_decomposition",
    "wab_losses",
    "write_config",
]
