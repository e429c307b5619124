"""Two-stage robust fitting of sigmoidal scaling curves.

Stage 1 alternates bounded nonlinear least squares with iterative outlier
rejection: residuals are scored with MAD-normalized modified Z-scores and
points beyond the threshold leave the active set until no more are flagged.
Stage 2 (optional) refines the fit with least-trimmed-squares concentration
steps, repeatedly refitting on the h best-fitting points. A chronological
head/tail split reserves a raw validation tail that is never filtered or
refit; RMSE is always reported against it.

The inner optimizer is a damped Gauss-Newton iteration with the analytic
curve gradient; c_mid and steepness are optimized in log space so positivity
holds by construction, and the performance parameters are kept inside their
box by projection after every accepted step.

``SigmoidScalingLaw`` wraps the pipeline behind a scikit-learn estimator
interface (get_params/fit/predict).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, RegressorMixin

from ._validation import as_compute_vector, as_float_vector, check_nondecreasing
from .curves import SigmoidParams, eval_sigmoid
from .errors import DegenerateScaleError, InputDomainError, InsufficientDataError
from .series import PERFORMANCE_MAX, RunSeries

#: Rescales MAD to a normal-consistent standard deviation.
MAD_NORMAL_CONSISTENCY = 0.6745

#: Residual MAD at or below this (in performance points) is treated as
#: degenerate scale: perfect fits leave only float noise (~1e-14), which must
#: not drive outlier removal.
MAD_FLOOR = 1e-9

_MIN_FIT_POINTS = 4  # parameter count of the curve
_MIN_SERIES_POINTS = 5
_MAX_CSTEPS = 100


@dataclass(frozen=True)
class FitConfig:
    """Knobs of the robust fitting pipeline."""

    train_fraction: float = 0.85
    z_threshold: float = 3.5
    use_lts: bool = False
    lts_alpha: float = 0.85
    max_outlier_rounds: int = 10
    nls_max_iters: int = 200
    nls_tolerance: float = 1e-8
    multistart_count: int = 16
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction <= 1:
            raise InputDomainError(f"train_fraction must be in (0, 1], got {self.train_fraction!r}")
        if self.z_threshold <= 0:
            raise InputDomainError(f"z_threshold must be positive, got {self.z_threshold!r}")
        if not 0.5 < self.lts_alpha <= 1:
            raise InputDomainError(f"lts_alpha must be in (0.5, 1], got {self.lts_alpha!r}")
        for name in ("max_outlier_rounds", "nls_max_iters", "multistart_count"):
            if getattr(self, name) < 1:
                raise InputDomainError(f"{name} must be >= 1")
        if self.nls_tolerance <= 0:
            raise InputDomainError("nls_tolerance must be positive")


@dataclass(frozen=True)
class FitBounds:
    """Box constraints on the curve parameters.

    ``pin_start`` fixes p_start; ``constrain_ceiling`` keeps the ceiling at
    or above p_start (disable for degrading runs).
    """

    p_start_range: tuple[float, float] = (0.0, PERFORMANCE_MAX)
    ceiling_max: float = PERFORMANCE_MAX
    c_mid_range: tuple[float, float] = (1e-3, 1e6)
    steepness_range: tuple[float, float] = (1e-2, 1e2)
    pin_start: float | None = None
    constrain_ceiling: bool = True


@dataclass(frozen=True)
class OutlierRecord:
    """One point dropped from the active training set.

    ``stage`` is "zscore" (stage-1 removal; score is the modified Z) or
    "lts" (trimmed by stage 2; score is the final squared residual).
    ``round`` is the stage-1 round or the last concentration step.
    """

    index: int
    stage: str
    round: int
    score: float


@dataclass(frozen=True)
class FitResult:
    """Robust-fit output over one training split.

    Indices refer to positions in the training split. Inliers and removed
    points partition the split. ``r2_train`` is computed on the inliers,
    ``rmse_val`` on the untouched validation tail (None when absent).
    """

    params: SigmoidParams
    inlier_indices: tuple[int, ...]
    removed_outliers: tuple[OutlierRecord, ...]
    r2_train: float | None
    rmse_val: float | None
    converged: bool
    rounds_used: int
    truncated: bool = False
    config: FitConfig | None = None


def split_train_val(points: RunSeries, train_fraction: float) -> tuple[RunSeries, RunSeries | None]:
    """Chronological split: first ceil(n * fraction) points train, rest validate.

    Never shuffles. Returns None for the validation part when the fraction
    covers everything.
    """
    if not 0 < train_fraction <= 1:
        raise InputDomainError(f"train_fraction must be in (0, 1], got {train_fraction!r}")
    n = len(points)
    if n < _MIN_SERIES_POINTS:
        raise InsufficientDataError(f"need at least {_MIN_SERIES_POINTS} points, got {n}")
    n_train = math.ceil(n * train_fraction)
    train = points.slice(0, n_train)
    val = points.slice(n_train, n) if n_train < n else None
    return train, val


def mad(values) -> float:
    """Median absolute deviation about the median.

    Even-length medians average the two central order statistics.
    """
    arr = as_float_vector(values, "values")
    if arr.size == 0:
        raise InputDomainError("mad of an empty sequence is undefined")
    return float(np.median(np.abs(arr - np.median(arr))))


def modified_z_scores(residuals) -> np.ndarray:
    """MAD-normalized residual scores: 0.6745 * (r - median) / MAD.

    Raises DegenerateScaleError when the MAD vanishes; the caller must skip
    filtering for that round.
    """
    arr = as_float_vector(residuals, "residuals")
    if arr.size == 0:
        raise InputDomainError("modified z-scores of an empty sequence are undefined")
    scale = mad(arr)
    if scale == 0:
        raise DegenerateScaleError("residual MAD is zero; scores are undefined")
    return MAD_NORMAL_CONSISTENCY * (arr - np.median(arr)) / scale


# ---------------------------------------------------------------------------
# Inner optimizer on the internal vector u = [p_start, ceiling, ln c, ln B]
# ---------------------------------------------------------------------------


def _u_from_params(p: SigmoidParams) -> np.ndarray:
    return np.array([p.p_start, p.ceiling, math.log(p.c_mid), math.log(p.steepness)])


def _params_from_u(u: np.ndarray, bounds: FitBounds) -> SigmoidParams:
    allow = not bounds.constrain_ceiling
    return SigmoidParams(
        float(u[0]), float(u[1]), math.exp(u[2]), math.exp(u[3]), allow_decreasing=allow
    )


def _clamp_u(u: np.ndarray, bounds: FitBounds) -> np.ndarray:
    out = u.copy()
    if bounds.pin_start is not None:
        out[0] = bounds.pin_start
    else:
        out[0] = min(max(out[0], bounds.p_start_range[0]), bounds.p_start_range[1])
    ceiling_lo = out[0] if bounds.constrain_ceiling else 0.0
    out[1] = min(max(out[1], ceiling_lo), bounds.ceiling_max)
    out[2] = min(max(out[2], math.log(bounds.c_mid_range[0])), math.log(bounds.c_mid_range[1]))
    out[3] = min(max(out[3], math.log(bounds.steepness_range[0])), math.log(bounds.steepness_range[1]))
    return out


def _predict_u(u: np.ndarray, x: np.ndarray) -> np.ndarray:
    b = math.exp(u[3])
    with np.errstate(divide="ignore"):
        lr = np.log(x) - u[2]  # log(x / c_mid); -inf at x = 0
    s = expit(b * lr)
    return u[0] + (u[1] - u[0]) * s


def _jacobian_u(u: np.ndarray, x: np.ndarray) -> np.ndarray:
    b = math.exp(u[3])
    pos = x > 0
    with np.errstate(divide="ignore"):
        lr = np.log(x) - u[2]
    s = expit(b * lr)
    w = s * (1.0 - s)
    headroom = u[1] - u[0]
    blr = np.where(pos, b * lr, 0.0)  # avoid 0 * -inf at x = 0
    J = np.empty((x.size, 4))
    J[:, 0] = 1.0 - s
    J[:, 1] = s
    J[:, 2] = -headroom * w * b  # d/d ln(c_mid)
    J[:, 3] = headroom * w * blr  # d/d ln(steepness)
    return J


def _nls_u(
    x: np.ndarray,
    y: np.ndarray,
    u0: np.ndarray,
    bounds: FitBounds,
    max_iters: int,
    tol: float,
) -> tuple[np.ndarray, float, bool]:
    """Damped Gauss-Newton descent from u0; returns (u, cost, converged).

    Only improving steps are accepted, so the returned cost never exceeds
    the initial one.
    """
    free = np.array([bounds.pin_start is None, True, True, True])
    u = _clamp_u(u0, bounds)
    r = y - _predict_u(u, x)
    cost = float(r @ r)
    if cost == 0.0:
        return u, cost, True
    lam = 1e-3
    for _ in range(max_iters):
        J = _jacobian_u(u, x)[:, free]
        g = J.T @ r
        A = J.T @ J
        d = np.diag(A).copy()
        d[d < 1e-12] = 1e-12
        accepted = False
        converged = False
        while lam <= 1e14:
            try:
                delta = np.linalg.solve(A + lam * np.diag(d), g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            if not np.all(np.isfinite(delta)):
                lam *= 10
                continue
            trial = u.copy()
            trial[free] += delta
            trial = _clamp_u(trial, bounds)
            tr = y - _predict_u(trial, x)
            tc = float(tr @ tr)
            if tc <= cost:
                rel_cost = (cost - tc) / max(cost, 1e-300)
                rel_step = float(np.linalg.norm(trial - u)) / (float(np.linalg.norm(u)) + 1.0)
                u, r, cost = trial, tr, tc
                lam = max(lam / 3, 1e-12)
                accepted = True
                converged = rel_cost <= tol and rel_step <= tol
                break
            lam *= 10
        if not accepted:
            # No improving step exists even under heavy damping: the iterate
            # is a (constrained) stationary point to working precision.
            return u, cost, True
        if converged or cost == 0.0:
            return u, cost, True
    return u, cost, False


def _initial_candidates(
    x: np.ndarray, y: np.ndarray, cfg: FitConfig, bounds: FitBounds
) -> list[np.ndarray]:
    """Multistart grid: start at min y, ceilings above max y, c_mid at the
    x quartiles, a spread of steepness values; seeded jitter fills any
    remaining slots."""
    p0 = bounds.pin_start if bounds.pin_start is not None else float(np.min(y))
    ymax = float(np.max(y))
    pos = x[x > 0]
    if pos.size:
        c_inits = [float(v) for v in np.percentile(pos, [25, 50, 75])]
    else:
        c_inits = [1.0, 1.0, 1.0]
    c_lo, c_hi = bounds.c_mid_range
    grid = [
        np.array([p0, ymax + da, math.log(min(max(c, c_lo), c_hi)), math.log(b)])
        for da in (0.0, 1.0, 3.0)
        for c in c_inits
        for b in (0.5, 1.0, 2.0)
    ]
    count = cfg.multistart_count
    if count <= len(grid):
        if count == 1:
            picks = [0]
        else:
            picks = [round(i * (len(grid) - 1) / (count - 1)) for i in range(count)]
        return [grid[i] for i in picks]
    rng = np.random.default_rng(cfg.seed)
    lo = math.log(min(c_inits)) if pos.size else math.log(c_lo)
    hi = math.log(max(c_inits)) if pos.size else math.log(c_hi)
    extra = []
    for _ in range(count - len(grid)):
        extra.append(
            np.array(
                [
                    p0,
                    ymax + rng.uniform(0.0, 5.0),
                    rng.uniform(lo - math.log(4), hi + math.log(4)),
                    rng.uniform(math.log(0.25), math.log(4.0)),
                ]
            )
        )
    return grid + extra


def _multistart_nls(
    x: np.ndarray, y: np.ndarray, cfg: FitConfig, bounds: FitBounds
) -> tuple[np.ndarray, float, bool]:
    best: tuple[np.ndarray, float, bool] | None = None
    for u0 in _initial_candidates(x, y, cfg, bounds):
        u, cost, conv = _nls_u(x, y, u0, bounds, cfg.nls_max_iters, cfg.nls_tolerance)
        if best is None or cost < best[1]:
            best = (u, cost, conv)
    assert best is not None
    return best


def fit_sigmoid_nls(
    points: RunSeries,
    init: SigmoidParams,
    bounds: FitBounds | None = None,
    *,
    max_iters: int = 200,
    tol: float = 1e-8,
) -> tuple[SigmoidParams, bool]:
    """Bounded nonlinear least squares from a single starting point.

    Deterministic given the init. Non-convergence within ``max_iters``
    returns the best iterate flagged converged=False.
    """
    if len(points) < _MIN_FIT_POINTS:
        raise InsufficientDataError(
            f"need at least {_MIN_FIT_POINTS} points to fit 4 parameters, got {len(points)}"
        )
    bounds = bounds or FitBounds()
    u, _, converged = _nls_u(points.xs, points.ys, _u_from_params(init), bounds, max_iters, tol)
    return _params_from_u(u, bounds), converged


# ---------------------------------------------------------------------------
# Stage 1: iterative modified-Z outlier rejection
# ---------------------------------------------------------------------------


def iterative_outlier_fit(
    train: RunSeries, cfg: FitConfig, bounds: FitBounds | None = None
) -> FitResult:
    """Alternate multistart fits with MAD-based outlier removal.

    Terminates when a round removes nothing, the residual scale degenerates,
    the active set would drop below the fit minimum (flagged truncated), or
    the round cap is reached. Metrics fields are left unset.
    """
    if len(train) < _MIN_SERIES_POINTS:
        raise InsufficientDataError(
            f"need at least {_MIN_SERIES_POINTS} training points, got {len(train)}"
        )
    bounds = bounds or FitBounds()
    x, y = train.xs, train.ys
    active = np.arange(len(train))
    removed: list[OutlierRecord] = []
    truncated = False
    rounds = 0
    while True:
        u, _, converged = _multistart_nls(x[active], y[active], cfg, bounds)
        rounds += 1
        if rounds >= cfg.max_outlier_rounds:
            break
        residuals = y[active] - _predict_u(u, x[active])
        if mad(residuals) <= MAD_FLOOR:
            break
        scores = modified_z_scores(residuals)
        flagged = np.abs(scores) > cfg.z_threshold
        if not flagged.any():
            break
        for idx, score in zip(active[flagged], scores[flagged]):
            removed.append(OutlierRecord(int(idx), "zscore", rounds, float(score)))
        active = active[~flagged]
        if active.size < _MIN_SERIES_POINTS:
            truncated = True
            break
    return FitResult(
        params=_params_from_u(u, bounds),
        inlier_indices=tuple(int(i) for i in active),
        removed_outliers=tuple(removed),
        r2_train=None,
        rmse_val=None,
        converged=converged,
        rounds_used=rounds,
        truncated=truncated,
        config=cfg,
    )


# ---------------------------------------------------------------------------
# Stage 2: least trimmed squares via concentration steps
# ---------------------------------------------------------------------------


def lts_fit(
    train: RunSeries,
    cfg: FitConfig,
    init: SigmoidParams,
    bounds: FitBounds | None = None,
) -> FitResult:
    """Minimize the sum of the h = floor(n * alpha) smallest squared residuals.

    Each concentration step re-selects the h best-fitting points (ties break
    toward the lower index) and refits on them; the trimmed objective is
    checked to be non-increasing on every step. Stops when the selected set
    stabilizes or the parameter update falls below tolerance.
    """
    n = len(train)
    if n < _MIN_SERIES_POINTS:
        raise InsufficientDataError(f"need at least {_MIN_SERIES_POINTS} points, got {n}")
    h = math.floor(n * cfg.lts_alpha)
    if h < _MIN_FIT_POINTS:
        raise InsufficientDataError(
            f"trimmed subset size {h} cannot identify 4 parameters; "
            f"raise lts_alpha or supply more points"
        )
    bounds = bounds or FitBounds()
    x, y = train.xs, train.ys
    u = _clamp_u(_u_from_params(init), bounds)

    def _select(uu: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
        sq = (y - _predict_u(uu, x)) ** 2
        order = np.argsort(sq, kind="stable")  # stable sort = lower-index ties first
        chosen = np.sort(order[:h])
        return chosen, sq, float(sq[order[:h]].sum())

    subset, sq, trimmed_prev = _select(u)
    converged = False
    steps = 0
    for steps in range(1, _MAX_CSTEPS + 1):
        u_new, _, conv = _nls_u(x[subset], y[subset], u, bounds, cfg.nls_max_iters, cfg.nls_tolerance)
        new_subset, sq, trimmed = _select(u_new)
        assert trimmed <= trimmed_prev * (1 + 1e-9) + 1e-12, (
            "concentration step increased the trimmed objective"
        )
        step_norm = float(np.linalg.norm(u_new - u))
        u = u_new
        trimmed_prev = trimmed
        if np.array_equal(new_subset, subset):
            subset = new_subset
            converged = conv
            break
        subset = new_subset
        if step_norm < cfg.nls_tolerance * (1.0 + float(np.linalg.norm(u))):
            converged = conv
            break
    keep = set(int(i) for i in subset)
    removed = tuple(
        OutlierRecord(i, "lts", steps, float(sq[i])) for i in range(n) if i not in keep
    )
    return FitResult(
        params=_params_from_u(u, bounds),
        inlier_indices=tuple(sorted(keep)),
        removed_outliers=removed,
        r2_train=None,
        rmse_val=None,
        converged=converged,
        rounds_used=steps,
        config=cfg,
    )


# ---------------------------------------------------------------------------
# Consolidated pipeline and metrics
# ---------------------------------------------------------------------------


def fit_metrics(
    params: SigmoidParams, train: RunSeries, val: RunSeries | None
) -> tuple[float | None, float | None]:
    """(R^2 on the training points, RMSE on the validation points).

    R^2 is None for zero-variance targets; RMSE is None without validation
    points.
    """
    if len(train) < 1:
        raise InputDomainError("fit metrics need at least one training point")
    resid = train.ys - eval_sigmoid(params, train.xs)
    ss_res = float(resid @ resid)
    centered = train.ys - float(np.mean(train.ys))
    ss_tot = float(centered @ centered)
    r2 = None if ss_tot == 0 else 1.0 - ss_res / ss_tot
    rmse = None
    if val is not None and len(val) > 0:
        vr = val.ys - eval_sigmoid(params, val.xs)
        rmse = float(np.sqrt(np.mean(vr**2)))
    return r2, rmse


def robust_fit_pipeline(
    points: RunSeries, cfg: FitConfig | None = None, bounds: FitBounds | None = None
) -> FitResult:
    """Full pipeline: split, stage-1 rejection, optional stage-2 LTS, metrics.

    Stage 2 runs on the stage-1 inliers, initialized at the stage-1
    parameters. The validation tail is never filtered and never refit.
    """
    cfg = cfg or FitConfig()
    bounds = bounds or FitBounds()
    if len(points) < 6:
        raise InsufficientDataError(f"pipeline needs at least 6 points, got {len(points)}")
    train, val = split_train_val(points, cfg.train_fraction)
    result = iterative_outlier_fit(train, cfg, bounds)
    if cfg.use_lts:
        stage1_inliers = result.inlier_indices
        refined = lts_fit(train.subset(stage1_inliers), cfg, result.params, bounds)
        inliers = tuple(stage1_inliers[i] for i in refined.inlier_indices)
        trimmed = tuple(
            replace(rec, index=stage1_inliers[rec.index])
            for rec in refined.removed_outliers
        )
        result = FitResult(
            params=refined.params,
            inlier_indices=inliers,
            removed_outliers=result.removed_outliers + trimmed,
            r2_train=None,
            rmse_val=None,
            converged=refined.converged,
            rounds_used=result.rounds_used,
            truncated=result.truncated,
            config=cfg,
        )
    r2, rmse = fit_metrics(result.params, train.subset(result.inlier_indices), val)
    return replace(result, r2_train=r2, rmse_val=rmse)


# ---------------------------------------------------------------------------
# scikit-learn estimator facade
# ---------------------------------------------------------------------------


class SigmoidScalingLaw(RegressorMixin, BaseEstimator):
    """Robust sigmoidal scaling-law regressor.

    Fits performance = p_start + (ceiling - p_start) / (1 + (x/c_mid)^-B)
    against cumulative compute with the two-stage robust pipeline. X is a
    single nondecreasing compute column (exaFLOPs); y is performance in
    points. Rows must be in chronological order: the train/validation split
    is a head/tail cut, never shuffled.

    Parameters mirror FitConfig, plus ``pin_start`` to fix the curve's
    starting level (e.g. at a measured checkpoint score) and
    ``constrain_ceiling`` to allow degrading runs when disabled.

    Attributes set by fit: ``params_``, ``result_``, ``ceiling_``,
    ``plasticity_``, ``inlier_indices_``.
    """

    def __init__(
        self,
        train_fraction: float = 0.85,
        z_threshold: float = 3.5,
        use_lts: bool = False,
        lts_alpha: float = 0.85,
        max_outlier_rounds: int = 10,
        nls_max_iters: int = 200,
        nls_tolerance: float = 1e-8,
        multistart_count: int = 16,
        seed: int = 0,
        pin_start: float | None = None,
        constrain_ceiling: bool = True,
    ):
        self.train_fraction = train_fraction
        self.z_threshold = z_threshold
        self.use_lts = use_lts
        self.lts_alpha = lts_alpha
        self.max_outlier_rounds = max_outlier_rounds
        self.nls_max_iters = nls_max_iters
        self.nls_tolerance = nls_tolerance
        self.multistart_count = multistart_count
        self.seed = seed
        self.pin_start = pin_start
        self.constrain_ceiling = constrain_ceiling

    def _fit_config(self) -> FitConfig:
        return FitConfig(
            train_fraction=self.train_fraction,
            z_threshold=self.z_threshold,
            use_lts=self.use_lts,
            lts_alpha=self.lts_alpha,
            max_outlier_rounds=self.max_outlier_rounds,
            nls_max_iters=self.nls_max_iters,
            nls_tolerance=self.nls_tolerance,
            multistart_count=self.multistart_count,
            seed=self.seed,
        )

    def _fit_bounds(self) -> FitBounds:
        return FitBounds(pin_start=self.pin_start, constrain_ceiling=self.constrain_ceiling)

    def fit(self, X, y):
        x = as_compute_vector(X)
        yv = as_float_vector(y, "y")
        if x.shape != yv.shape:
            raise InputDomainError(f"X and y lengths differ: {x.size} vs {yv.size}")
        check_nondecreasing(x, "X")
        series = RunSeries("fit", tuple(x), tuple(yv))
        self.result_ = robust_fit_pipeline(series, self._fit_config(), self._fit_bounds())
        self.params_ = self.result_.params
        self.ceiling_ = self.params_.ceiling
        self.plasticity_ = self.params_.ceiling - self.params_.p_start
        self.inlier_indices_ = self.result_.inlier_indices
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        if not hasattr(self, "params_"):
            raise InputDomainError("estimator is not fitted; call fit first")
        return eval_sigmoid(self.params_, as_compute_vector(X))
