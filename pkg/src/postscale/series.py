"""Observation series: (compute, performance) runs and validation-loss logs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import as_float_vector, check_increasing, check_nondecreasing
from .errors import InputDomainError

#: Upper bound for performance values, in points. Raw observations are
#: percentages (<= 100); fitted ceilings may float slightly above, so the
#: series type tolerates up to this cap.
PERFORMANCE_MAX = 110.0


@dataclass(frozen=True)
class RunSeries:
    """Ordered (compute, performance) observations of one training run.

    ``x`` is cumulative compute in exaFLOPs and must be nondecreasing;
    ``y`` is benchmark performance in points on [0, PERFORMANCE_MAX].
    ``steps`` optionally records the training-step index of each point.
    """

    run_id: str
    x: tuple[float, ...]
    y: tuple[float, ...]
    steps: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "y", tuple(float(v) for v in self.y))
        if self.steps is not None:
            object.__setattr__(self, "steps", tuple(int(s) for s in self.steps))
        if len(self.x) != len(self.y):
            raise InputDomainError(
                f"x and y lengths differ: {len(self.x)} vs {len(self.y)}"
            )
        if len(self.x) < 1:
            raise InputDomainError("a run series needs at least one point")
        if self.steps is not None and len(self.steps) != len(self.x):
            raise InputDomainError("steps length does not match points")
        xs = as_float_vector(self.x, "x")
        if np.any(xs < 0):
            raise InputDomainError("compute values must be nonnegative")
        check_nondecreasing(xs, "x")
        ys = as_float_vector(self.y, "y")
        if np.any(ys < 0) or np.any(ys > PERFORMANCE_MAX):
            raise InputDomainError(
                f"performance values must lie in [0, {PERFORMANCE_MAX}]"
            )

    def __len__(self) -> int:
        return len(self.x)

    @property
    def xs(self) -> np.ndarray:
        return np.asarray(self.x, dtype=float)

    @property
    def ys(self) -> np.ndarray:
        return np.asarray(self.y, dtype=float)

    def subset(self, indices) -> "RunSeries":
        """New series keeping only the given positions, in ascending order."""
        idx = sorted(int(i) for i in indices)
        if not idx:
            raise InputDomainError("subset would be empty")
        steps = tuple(self.steps[i] for i in idx) if self.steps is not None else None
        return RunSeries(
            self.run_id,
            tuple(self.x[i] for i in idx),
            tuple(self.y[i] for i in idx),
            steps,
        )

    def slice(self, start: int, stop: int) -> "RunSeries":
        steps = self.steps[start:stop] if self.steps is not None else None
        return RunSeries(self.run_id, self.x[start:stop], self.y[start:stop], steps)


@dataclass(frozen=True)
class LossSeries:
    """Validation-loss trajectory over cumulative compute (exaFLOPs).

    ``x`` must be strictly increasing; losses are finite and nonnegative.
    """

    x: tuple[float, ...]
    losses: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "losses", tuple(float(v) for v in self.losses))
        if len(self.x) != len(self.losses):
            raise InputDomainError(
                f"x and loss lengths differ: {len(self.x)} vs {len(self.losses)}"
            )
        if len(self.x) < 1:
            raise InputDomainError("a loss series needs at least one point")
        xs = as_float_vector(self.x, "x")
        check_increasing(xs, "x")
        ls = as_float_vector(self.losses, "losses")
        if np.any(ls < 0):
            raise InputDomainError("losses must be nonnegative")

    def __len__(self) -> int:
        return len(self.x)

    @property
    def xs(self) -> np.ndarray:
        return np.asarray(self.x, dtype=float)

    @property
    def loss_values(self) -> np.ndarray:
        return np.asarray(self.losses, dtype=float)
