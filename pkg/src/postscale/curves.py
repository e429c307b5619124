"""Sigmoidal compute-performance curves and their ceiling/headroom summary.

The curve P(x) = p_start + (ceiling - p_start) / (1 + (x / c_mid)^-steepness)
rises from ``p_start`` at zero compute toward the asymptotic ``ceiling``;
``c_mid`` is the compute at which half the headroom is realized and
``steepness`` controls how sharply the transition happens. ``plasticity`` is
the headroom ceiling - p_start. A two-stage run is summarized by a
DecompositionRecord: the gain realized by the first (supervised) stage plus
the headroom the second (RL) stage's curve still holds above it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import InitVar, dataclass

import numpy as np
from scipy.special import expit

from .errors import ContractError, InputDomainError

#: Tolerance for the "RL curve starts at the realized first-stage
#: performance" contract in decompose().
START_MATCH_TOL = 1e-9


@dataclass(frozen=True)
class SigmoidParams:
    """Parameters of one sigmoidal scaling curve.

    ``c_mid`` is in exaFLOPs; the other fields are performance points except
    the dimensionless ``steepness``. By default the ceiling must not lie
    below the start (headroom is nonnegative); pass ``allow_decreasing=True``
    for degrading runs, which warns instead of raising.
    """

    p_start: float
    ceiling: float
    c_mid: float
    steepness: float
    allow_decreasing: InitVar[bool] = False

    def __post_init__(self, allow_decreasing: bool):
        for name in ("p_start", "ceiling", "c_mid", "steepness"):
            if not math.isfinite(getattr(self, name)):
                raise InputDomainError(f"{name} must be finite")
        if self.c_mid <= 0:
            raise InputDomainError(f"c_mid must be positive, got {self.c_mid!r}")
        if self.steepness <= 0:
            raise InputDomainError(f"steepness must be positive, got {self.steepness!r}")
        if self.ceiling < self.p_start:
            if not allow_decreasing:
                raise InputDomainError(
                    f"ceiling {self.ceiling!r} below p_start {self.p_start!r}; "
                    "pass allow_decreasing=True for a degrading run"
                )
            warnings.warn(
                f"ceiling {self.ceiling} is below p_start {self.p_start}: "
                "this curve models a degrading run",
                stacklevel=2,
            )


def _log_ratio(x: np.ndarray, c_mid: float) -> np.ndarray:
    # log(x / c_mid), with log(0) -> -inf kept silent: expit maps it to 0.
    with np.errstate(divide="ignore"):
        return np.log(x / c_mid)


def eval_sigmoid(params: SigmoidParams, x):
    """Evaluate the curve at compute ``x`` (scalar or array, exaFLOPs).

    x = 0 returns ``p_start`` by continuous extension. Negative or
    non-finite x is rejected.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InputDomainError("x must be finite")
    if np.any(arr < 0):
        raise InputDomainError("x must be nonnegative")
    t = params.steepness * _log_ratio(arr, params.c_mid)
    out = params.p_start + (params.ceiling - params.p_start) * expit(t)
    if arr.ndim == 0:
        return float(out)
    return out


def sigmoid_gradient(params: SigmoidParams, x) -> np.ndarray:
    """Partial derivatives of the curve value at ``x``.

    Returns the stacked partials with respect to
    (p_start, ceiling, c_mid, steepness): shape (4,) for scalar x, else
    x.shape + (4,). At x = 0 the curve is flat in c_mid and steepness.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InputDomainError("x must be finite")
    if np.any(arr < 0):
        raise InputDomainError("x must be nonnegative")
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    lr = _log_ratio(arr, params.c_mid)
    s = expit(params.steepness * lr)
    w = s * (1.0 - s)
    headroom = params.ceiling - params.p_start
    pos = arr > 0
    grad = np.zeros(arr.shape + (4,))
    grad[..., 0] = 1.0 - s
    grad[..., 1] = s
    grad[..., 2] = np.where(
        pos, headroom * w * (-params.steepness / params.c_mid), 0.0
    )
    grad[..., 3] = headroom * w * np.where(pos, lr, 0.0)
    if scalar:
        return grad[0]
    return grad


def ceiling(params: SigmoidParams) -> float:
    """Asymptotic performance as compute grows without bound."""
    return params.ceiling


def plasticity(params: SigmoidParams) -> float:
    """Headroom above the curve's starting performance."""
    return params.ceiling - params.p_start


@dataclass(frozen=True)
class DecompositionRecord:
    """Two-stage performance decomposition of an SFT-then-RL run.

    ``delta_sft`` is the supervised gain over the base performance ``p0``;
    ``pl_rl`` is the RL curve's remaining headroom above the realized
    ``p_sft``; ``a_post`` = p_sft + pl_rl is the post-training ceiling.
    """

    p0: float
    x_sft: float
    p_sft: float
    delta_sft: float
    rl_params: SigmoidParams
    pl_rl: float
    a_post: float

    def delta_rl(self, x_rl) -> float:
        """RL gain at RL compute ``x_rl``; zero at x_rl = 0."""
        return eval_sigmoid(self.rl_params, x_rl) - self.p_sft

    def performance(self, x_rl) -> float:
        """Total post-training performance after ``x_rl`` RL compute."""
        return eval_sigmoid(self.rl_params, x_rl)

    def to_dict(self) -> dict:
        return {
            "p0": self.p0,
            "x_sft": self.x_sft,
            "p_sft": self.p_sft,
            "delta_sft": self.delta_sft,
            "pl_rl": self.pl_rl,
            "a_post": self.a_post,
            "rl_params": {
                "p_start": self.rl_params.p_start,
                "ceiling": self.rl_params.ceiling,
                "c_mid": self.rl_params.c_mid,
                "steepness": self.rl_params.steepness,
            },
        }


def decompose(p0: float, sft_point: tuple[float, float], rl_fit: SigmoidParams) -> DecompositionRecord:
    """Build the two-stage decomposition record.

    ``sft_point`` is (x_sft, p_sft), the compute spent on and performance
    realized by the supervised stage. The RL curve must start at p_sft:
    a mismatch beyond START_MATCH_TOL raises ContractError.
    """
    x_sft, p_sft = float(sft_point[0]), float(sft_point[1])
    if abs(rl_fit.p_start - p_sft) > START_MATCH_TOL:
        raise ContractError(
            f"RL curve starts at {rl_fit.p_start!r} but the SFT stage ended at "
            f"{p_sft!r} (tolerance {START_MATCH_TOL})"
        )
    pl_rl = rl_fit.ceiling - p_sft
    return DecompositionRecord(
        p0=float(p0),
        x_sft=x_sft,
        p_sft=p_sft,
        delta_sft=p_sft - float(p0),
        rl_params=rl_fit,
        pl_rl=pl_rl,
        a_post=p_sft + pl_rl,
    )
