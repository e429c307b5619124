"""Scaling analysis for LLM post-training runs.

Turns training-run logs into compute-performance curves via exact FLOPs
accounting, fits sigmoidal scaling curves with a two-stage robust estimator,
labels validation-loss sub-phases, and reports ceiling/plasticity
decompositions and loss-ceiling correlations.
"""

from .analysis import (
    ConfigSummary,
    WinRate,
    build_report,
    ceiling_loss_correlation,
    pearson,
    read_report,
    win_rate,
)
from .curves import (
    DecompositionRecord,
    SigmoidParams,
    ceiling,
    decompose,
    eval_sigmoid,
    plasticity,
    sigmoid_gradient,
)
from .errors import (
    ContractError,
    DegenerateScaleError,
    InputDomainError,
    InsufficientDataError,
    ParseError,
    SchemaVersionError,
    UndefinedCorrelationError,
)
from .fitting import (
    FitBounds,
    FitConfig,
    FitResult,
    OutlierRecord,
    SigmoidScalingLaw,
    fit_metrics,
    fit_sigmoid_nls,
    iterative_outlier_fit,
    lts_fit,
    mad,
    modified_z_scores,
    robust_fit_pipeline,
    split_train_val,
)
from .flops import (
    Algorithm,
    FlopCount,
    ModelConfig,
    StepSpec,
    accumulate_run_flops,
    dapo_step_flops,
    forward_flops_per_token,
    grpo_step_flops,
    hybrid_step_flops,
    sft_step_flops,
    step_flops,
    train_flops_per_token,
    upt_step_flops,
)
from .phases import (
    PhaseInterval,
    PhaseLabel,
    PhaseThresholds,
    classify_phases,
    min_val_loss,
    phase_boundaries,
    smooth_losses,
)
from .series import LossSeries, RunSeries
from .synth import SynthSpec, log_grid, synthesize

__version__ = "0.1.0"

__all__ = [
    "Algorithm",
    "ConfigSummary",
    "ContractError",
    "DecompositionRecord",
    "DegenerateScaleError",
    "FitBounds",
    "FitConfig",
    "FitResult",
    "FlopCount",
    "InputDomainError",
    "InsufficientDataError",
    "LossSeries",
    "ModelConfig",
    "OutlierRecord",
    "ParseError",
    "PhaseInterval",
    "PhaseLabel",
    "PhaseThresholds",
    "RunSeries",
    "SchemaVersionError",
    "SigmoidParams",
    "SigmoidScalingLaw",
    "StepSpec",
    "SynthSpec",
    "UndefinedCorrelationError",
    "WinRate",
    "accumulate_run_flops",
    "build_report",
    "ceiling",
    "ceiling_loss_correlation",
    "classify_phases",
    "dapo_step_flops",
    "decompose",
    "eval_sigmoid",
    "fit_metrics",
    "fit_sigmoid_nls",
    "forward_flops_per_token",
    "grpo_step_flops",
    "hybrid_step_flops",
    "iterative_outlier_fit",
    "log_grid",
    "lts_fit",
    "mad",
    "min_val_loss",
    "modified_z_scores",
    "pearson",
    "phase_boundaries",
    "plasticity",
    "read_report",
    "robust_fit_pipeline",
    "sft_step_flops",
    "sigmoid_gradient",
    "smooth_losses",
    "split_train_val",
    "step_flops",
    "synthesize",
    "train_flops_per_token",
    "upt_step_flops",
    "win_rate",
]
