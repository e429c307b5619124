"""Seeded synthetic run generator; the oracle behind the fitting tests.

Draw order from the single seeded stream is fixed: Gaussian noise first
(skipped entirely at sigma = 0), then the outlier index subset, then the
shift signs. The generator is numpy's default_rng (PCG64); its name is
recorded in the sidecar metadata so artifacts are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .curves import SigmoidParams, eval_sigmoid
from .errors import InputDomainError
from .series import RunSeries

GENERATOR_NAME = "numpy-default-rng-pcg64"


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one synthetic run."""

    params: SigmoidParams
    x_grid: tuple[float, ...]
    noise_sigma: float = 0.0
    outlier_fraction: float = 0.0
    outlier_shift: float = 0.0
    seed: int = 0
    run_id: str = "synthetic"

    def __post_init__(self):
        object.__setattr__(self, "x_grid", tuple(float(v) for v in self.x_grid))
        if not self.x_grid:
            raise InputDomainError("x_grid must be nonempty")
        if any(not math.isfinite(v) or v < 0 for v in self.x_grid):
            raise InputDomainError("x_grid values must be finite and nonnegative")
        if list(self.x_grid) != sorted(self.x_grid):
            raise InputDomainError("x_grid must be nondecreasing")
        if self.noise_sigma < 0:
            raise InputDomainError(f"noise_sigma must be >= 0, got {self.noise_sigma!r}")
        if not 0 <= self.outlier_fraction < 0.5:
            raise InputDomainError(
                f"outlier_fraction must be in [0, 0.5), got {self.outlier_fraction!r}"
            )
        if self.outlier_shift < 0:
            raise InputDomainError(f"outlier_shift must be >= 0, got {self.outlier_shift!r}")


def log_grid(x_min: float, x_max: float, n_points: int) -> tuple[float, ...]:
    """Logarithmically spaced compute grid."""
    if n_points < 1:
        raise InputDomainError("n_points must be >= 1")
    if not 0 < x_min <= x_max:
        raise InputDomainError(f"need 0 < x_min <= x_max, got {x_min!r}, {x_max!r}")
    return tuple(float(v) for v in np.geomspace(x_min, x_max, n_points))


def synthesize(spec: SynthSpec) -> tuple[RunSeries, tuple[int, ...]]:
    """Deterministic synthetic run plus the injected-outlier indices.

    y_i = curve(x_i) + N(0, sigma); a seeded floor(n * outlier_fraction)
    subset is additionally shifted by +/- outlier_shift with seeded signs.
    """
    rng = np.random.default_rng(spec.seed)
    x = np.asarray(spec.x_grid, dtype=float)
    y = np.asarray(eval_sigmoid(spec.params, x), dtype=float).copy()
    if spec.noise_sigma > 0:
        y += rng.normal(0.0, spec.noise_sigma, size=x.size)
    n_outliers = math.floor(x.size * spec.outlier_fraction)
    indices: tuple[int, ...] = ()
    if n_outliers > 0:
        chosen = np.sort(rng.choice(x.size, size=n_outliers, replace=False))
        signs = rng.integers(0, 2, size=n_outliers) * 2 - 1
        y[chosen] += signs * spec.outlier_shift
        indices = tuple(int(i) for i in chosen)
    return RunSeries(spec.run_id, tuple(x), tuple(y)), indices
