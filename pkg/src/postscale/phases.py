"""Sub-phase labeling of a supervised-stage validation-loss trajectory.

Relative to the global minimum loss L_min, the stable region is every
checkpoint with loss at most (1 + delta) * L_min. Checkpoints before it are
adaptive (still underfitting); checkpoints after it are mildly overfitting
while the loss stays under (1 + delta2) * L_min and severely overfitting
once it reaches that bound. Loss excursions above the tolerance that occur
strictly inside the stable span fit neither published region and are labeled
indeterminate instead of guessed.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InputDomainError, InsufficientDataError
from .series import LossSeries


class PhaseLabel(str, Enum):
    ADAPTIVE = "adaptive"
    STABLE = "stable"
    MILD_OVERFIT = "mild_overfit"
    SEVERE_OVERFIT = "severe_overfit"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class PhaseThresholds:
    """Relative loss tolerances about the minimum: stable within ``delta``,
    severe at or beyond ``delta2``."""

    delta: float = 0.02
    delta2: float = 0.1

    def __post_init__(self):
        if not 0 < self.delta < self.delta2:
            raise InputDomainError(
                f"need 0 < delta < delta2, got delta={self.delta!r} delta2={self.delta2!r}"
            )


@dataclass(frozen=True)
class PhaseInterval:
    """One contiguous run of equally-labeled checkpoints, spanning
    [x_start, x_end] in exaFLOPs."""

    label: PhaseLabel
    x_start: float
    x_end: float
    start_index: int
    end_index: int


def min_val_loss(series: LossSeries) -> tuple[float, float]:
    """(x at the minimum, minimum loss); ties resolve to the smallest x."""
    losses = series.loss_values
    idx = int(np.argmin(losses))  # argmin returns the first minimum
    return series.x[idx], float(losses[idx])


def classify_phases(
    series: LossSeries, thresholds: PhaseThresholds | None = None
) -> list[PhaseLabel]:
    """Label every checkpoint of the loss trajectory.

    Comparisons follow the region definitions: the stable set is inclusive
    (loss <= (1+delta)*L_min), the mild band is open on both sides, and the
    severe region is inclusive at (1+delta2)*L_min.
    """
    if len(series) < 2:
        raise InsufficientDataError("phase classification needs at least 2 points")
    thresholds = thresholds or PhaseThresholds()
    losses = series.loss_values
    l_min = float(np.min(losses))
    stable_cut = (1.0 + thresholds.delta) * l_min
    severe_cut = (1.0 + thresholds.delta2) * l_min
    stable_mask = losses <= stable_cut
    first = int(np.argmax(stable_mask))  # the minimum is always in the set
    last = len(losses) - 1 - int(np.argmax(stable_mask[::-1]))
    labels: list[PhaseLabel] = []
    for i, loss in enumerate(losses):
        if i < first:
            labels.append(PhaseLabel.ADAPTIVE)
        elif i <= last:
            labels.append(PhaseLabel.STABLE if stable_mask[i] else PhaseLabel.INDETERMINATE)
        elif loss >= severe_cut:
            labels.append(PhaseLabel.SEVERE_OVERFIT)
        else:
            # past the stable span, loss is strictly above stable_cut
            labels.append(PhaseLabel.MILD_OVERFIT)
    return labels


def phase_boundaries(
    labels: list[PhaseLabel], series: LossSeries
) -> list[PhaseInterval]:
    """Collapse per-point labels into contiguous x-intervals for plotting."""
    if len(labels) != len(series):
        raise InputDomainError(
            f"labels and series lengths differ: {len(labels)} vs {len(series)}"
        )
    intervals: list[PhaseInterval] = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] is not labels[start]:
            intervals.append(
                PhaseInterval(
                    label=labels[start],
                    x_start=series.x[start],
                    x_end=series.x[i - 1],
                    start_index=start,
                    end_index=i - 1,
                )
            )
            start = i
    return intervals


def smooth_losses(series: LossSeries, window: int) -> LossSeries:
    """Trailing-window median smoothing for noisy logs (off by default
    everywhere; callers must surface that it was applied)."""
    if window < 1:
        raise InputDomainError(f"window must be >= 1, got {window!r}")
    losses = series.loss_values
    smoothed = [
        float(np.median(losses[max(0, i - window + 1) : i + 1]))
        for i in range(len(losses))
    ]
    return LossSeries(series.x, tuple(smoothed))
