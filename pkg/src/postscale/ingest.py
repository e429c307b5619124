"""Parsers and writers for run logs, loss logs, model configs, and fit
artifacts; the single place that defines the on-disk formats.

Formats
-------
- CSV: mandatory header row, comma-separated, UTF-8, decimal points only.
- JSON-lines: one object per record, same field names as the CSV columns.
- Model/fit config: flat ``key = value`` lines, ``#`` comments.
- Fit artifact: one JSON document, schema version "1".

Run series accept two shapes: precomputed compute (``x_exaflops`` or raw
``x_flops``, converted on ingest) with ``performance``, or step-level logs
(``step`` plus per-step algorithm fields) from which compute is synthesized
with a model config. Parsers reject invalid input instead of repairing it;
error messages name the offending row or key.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

from .analysis import ConfigSummary
from .curves import SigmoidParams
from .errors import ParseError, SchemaVersionError
from .fitting import FitConfig, FitResult, OutlierRecord
from .flops import EXA, Algorithm, ModelConfig, StepSpec, accumulate_run_flops, step_flops
from .series import LossSeries, RunSeries

ARTIFACT_FORMAT_VERSION = "1"

_MODEL_CONFIG_KEYS = (
    "num_layers",
    "hidden_size",
    "ffn_intermediate",
    "vocab_size",
    "kv_total_dim",
)

_STEP_COUNT_COLUMNS = (
    "batch",
    "update_batch",
    "sampling_rounds",
    "group_size",
    "expert_per_prompt",
    "on_policy_kept",
    "off_policy_kept",
)
_STEP_LENGTH_COLUMNS = ("avg_seq_len", "avg_on_len", "avg_off_len")


@dataclass(frozen=True)
class TrainLogRecord:
    """One raw log line: the step's cost parameters plus optional metrics."""

    step: int
    spec: StepSpec
    performance: float | None = None
    val_loss: float | None = None


@dataclass(frozen=True)
class RawTrainLog:
    """Step-level training log with strictly increasing step indices."""

    records: tuple[TrainLogRecord, ...]

    def __post_init__(self):
        if not self.records:
            raise ParseError("train log has no records")
        steps = [r.step for r in self.records]
        for i in range(1, len(steps)):
            if steps[i] <= steps[i - 1]:
                raise ParseError(
                    f"record {i + 1}: steps must be strictly increasing "
                    f"({steps[i]} after {steps[i - 1]})"
                )

    def __len__(self) -> int:
        return len(self.records)


# ---------------------------------------------------------------------------
# Source handling
# ---------------------------------------------------------------------------


def _read_text(source) -> tuple[str, str]:
    """Return (text, display name) from a path or a file-like object."""
    if hasattr(source, "read"):
        return source.read(), getattr(source, "name", "<stream>")
    path = Path(source)
    return path.read_text(encoding="utf-8"), str(path)


def _detect_format(source, fmt: str) -> str:
    if fmt != "auto":
        if fmt not in ("csv", "jsonl"):
            raise ParseError(f"unknown format {fmt!r} (expected csv or jsonl)")
        return fmt
    name = str(getattr(source, "name", source)).lower()
    if name.endswith(".csv"):
        return "csv"
    if name.endswith(".jsonl") or name.endswith(".json"):
        return "jsonl"
    raise ParseError(
        f"cannot infer format of {name!r}; pass format='csv' or 'jsonl'"
    )


def _records_from_text(text: str, fmt: str) -> list[tuple[int, dict]]:
    """Uniform record view: list of (1-based source row, field dict)."""
    if fmt == "csv":
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames is None:
            raise ParseError("row 1: missing CSV header")
        out = []
        for i, row in enumerate(reader):
            if None in row:
                raise ParseError(f"row {i + 2}: more cells than header columns")
            out.append((i + 2, {k: v for k, v in row.items() if v not in (None, "")}))
        return out
    out = []
    for i, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"row {i + 1}: invalid JSON ({exc})") from exc
        if not isinstance(obj, dict):
            raise ParseError(f"row {i + 1}: expected an object")
        out.append((i + 1, {k: v for k, v in obj.items() if v is not None}))
    return out


def _check_plain_number(raw, key: str, row: int) -> None:
    # decimal point only: no grouping separators of any locale
    if isinstance(raw, str) and ("_" in raw or "," in raw):
        raise ParseError(f"row {row}, column {key!r}: grouped digits are not accepted ({raw!r})")


def _parse_float(record: dict, key: str, row: int) -> float:
    raw = record[key]
    _check_plain_number(raw, key, row)
    try:
        return float(raw)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"row {row}, column {key!r}: not a number ({raw!r})") from exc


def _parse_int(record: dict, key: str, row: int, default: int = 0) -> int:
    if key not in record:
        return default
    raw = record[key]
    _check_plain_number(raw, key, row)
    try:
        value = int(str(raw))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"row {row}, column {key!r}: not an integer ({raw!r})") from exc
    return value


# ---------------------------------------------------------------------------
# Flat key=value configs
# ---------------------------------------------------------------------------


def _parse_keyvalue_text(text: str, name: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ParseError(f"{name} line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ParseError(f"{name} line {lineno}: empty key or value")
        if key in values:
            warnings.warn(f"{name} line {lineno}: duplicate key {key!r}; last value wins")
        values[key] = value
    return values


def parse_model_config(source) -> ModelConfig:
    """Read a transformer architecture description from a key=value file."""
    text, name = _read_text(source)
    values = _parse_keyvalue_text(text, name)
    kwargs = {}
    for key in _MODEL_CONFIG_KEYS:
        if key not in values:
            raise ParseError(f"{name}: missing key {key!r}")
        try:
            kwargs[key] = int(values[key])
        except ValueError as exc:
            raise ParseError(f"{name}: key {key!r} is not an integer ({values[key]!r})") from exc
    unknown = set(values) - set(_MODEL_CONFIG_KEYS)
    if unknown:
        raise ParseError(f"{name}: unknown keys {sorted(unknown)}")
    try:
        return ModelConfig(**kwargs)
    except ValueError as exc:
        raise ParseError(f"{name}: {exc}") from exc


def parse_fit_config(source) -> FitConfig:
    """Read fitting knobs from a key=value file; unspecified keys keep their
    defaults."""
    text, name = _read_text(source)
    values = _parse_keyvalue_text(text, name)
    kwargs: dict = {}
    converters = {
        "train_fraction": float,
        "z_threshold": float,
        "use_lts": lambda v: v.strip().lower() in ("true", "1", "yes"),
        "lts_alpha": float,
        "max_outlier_rounds": int,
        "nls_max_iters": int,
        "nls_tolerance": float,
        "multistart_count": int,
        "seed": int,
    }
    for key, value in values.items():
        if key not in converters:
            raise ParseError(f"{name}: unknown key {key!r}")
        try:
            kwargs[key] = converters[key](value)
        except ValueError as exc:
            raise ParseError(f"{name}: bad value for {key!r} ({value!r})") from exc
    try:
        return FitConfig(**kwargs)
    except ValueError as exc:
        raise ParseError(f"{name}: {exc}") from exc


# ---------------------------------------------------------------------------
# Step-level train logs
# ---------------------------------------------------------------------------


def _step_spec_from_record(record: dict, row: int, default_algorithm: str | None) -> StepSpec:
    algorithm = record.get("algorithm", default_algorithm)
    if algorithm is None:
        raise ParseError(f"row {row}, column 'algorithm': missing and no default given")
    kwargs: dict = {"algorithm": Algorithm.parse(str(algorithm))}
    for key in _STEP_COUNT_COLUMNS:
        kwargs[key] = _parse_int(record, key, row)
    for key in _STEP_LENGTH_COLUMNS:
        kwargs[key] = _parse_float(record, key, row) if key in record else 0.0
    try:
        return StepSpec(**kwargs)
    except ValueError as exc:
        raise ParseError(f"row {row}: {exc}") from exc


def parse_train_log(source, fmt: str = "auto", default_algorithm: str | None = None) -> RawTrainLog:
    """Read a step-level log (CSV or JSON-lines) into a RawTrainLog."""
    resolved = _detect_format(source, fmt)
    text, _ = _read_text(source)
    return _train_log_from_rows(_records_from_text(text, resolved), default_algorithm)


def _train_log_from_rows(rows: list[tuple[int, dict]], default_algorithm: str | None) -> RawTrainLog:
    if not rows:
        raise ParseError("train log has no records")
    records = []
    for row, record in rows:
        if "step" not in record:
            raise ParseError(f"row {row}, column 'step': missing")
        step = _parse_int(record, "step", row)
        spec = _step_spec_from_record(record, row, default_algorithm)
        performance = _parse_float(record, "performance", row) if "performance" in record else None
        if performance is not None and not 0 <= performance <= 100:
            raise ParseError(
                f"row {row}, column 'performance': {performance!r} outside [0, 100]"
            )
        val_loss = _parse_float(record, "val_loss", row) if "val_loss" in record else None
        if val_loss is not None and (val_loss < 0 or not math.isfinite(val_loss)):
            raise ParseError(f"row {row}, column 'val_loss': {val_loss!r} is invalid")
        records.append(TrainLogRecord(step, spec, performance, val_loss))
    return RawTrainLog(tuple(records))


def run_series_from_train_log(log: RawTrainLog, cfg: ModelConfig, run_id: str = "run") -> RunSeries:
    """Accumulate per-step compute and pair it with the logged performance."""
    cumulative = accumulate_run_flops(cfg, [r.spec for r in log.records])
    xs, ys, steps = [], [], []
    for record, total in zip(log.records, cumulative):
        if record.performance is None:
            continue
        xs.append(total.exaflops)
        ys.append(record.performance)
        steps.append(record.step)
    if not xs:
        raise ParseError("train log has no rows with a performance value")
    return RunSeries(run_id, tuple(xs), tuple(ys), tuple(steps))


def loss_series_from_train_log(log: RawTrainLog, cfg: ModelConfig) -> LossSeries:
    """Accumulate per-step compute and pair it with the logged val loss."""
    cumulative = accumulate_run_flops(cfg, [r.spec for r in log.records])
    xs, losses = [], []
    for record, total in zip(log.records, cumulative):
        if record.val_loss is None:
            continue
        xs.append(total.exaflops)
        losses.append(record.val_loss)
    if not xs:
        raise ParseError("train log has no rows with a val_loss value")
    return LossSeries(tuple(xs), tuple(losses))


# ---------------------------------------------------------------------------
# Run series
# ---------------------------------------------------------------------------


def _x_from_record(record: dict, row: int) -> float | None:
    if "x_exaflops" in record:
        return _parse_float(record, "x_exaflops", row)
    if "x_flops" in record:
        return _parse_float(record, "x_flops", row) / EXA
    return None


def parse_run_series(
    source,
    fmt: str = "auto",
    model_config: ModelConfig | None = None,
    run_id: str | None = None,
    default_algorithm: str | None = None,
) -> RunSeries:
    """Read (compute, performance) points from CSV or JSON-lines.

    Inputs either carry compute directly (``x_exaflops``/``x_flops``) or are
    step-level logs, in which case ``model_config`` is required to synthesize
    compute from the per-step fields.
    """
    resolved = _detect_format(source, fmt)
    text, name = _read_text(source)
    if run_id is None:
        stem = Path(name).stem
        run_id = stem if stem and stem != "<stream>" else "run"
    rows = _records_from_text(text, resolved)
    if not rows:
        raise ParseError(f"{name}: no data rows")
    if _x_from_record(rows[0][1], rows[0][0]) is None:
        if model_config is None:
            raise ParseError(
                f"{name}: rows carry no x_exaflops/x_flops column; "
                "a model config is required to derive compute from steps"
            )
        log = _train_log_from_rows(rows, default_algorithm)
        return run_series_from_train_log(log, model_config, run_id)
    xs, ys, steps = [], [], []
    have_steps = True
    prev_x = -math.inf
    for row, record in rows:
        x = _x_from_record(record, row)
        if x is None:
            raise ParseError(f"row {row}, column 'x_exaflops': missing")
        if x < 0:
            raise ParseError(f"row {row}, column 'x_exaflops': negative compute {x!r}")
        if x < prev_x:
            raise ParseError(f"row {row}, column 'x_exaflops': x decreased ({x!r})")
        prev_x = x
        if "performance" not in record:
            raise ParseError(f"row {row}, column 'performance': missing")
        y = _parse_float(record, "performance", row)
        if not 0 <= y <= 100:
            raise ParseError(f"row {row}, column 'performance': {y!r} outside [0, 100]")
        xs.append(x)
        ys.append(y)
        if "step" in record:
            steps.append(_parse_int(record, "step", row))
        else:
            have_steps = False
    return RunSeries(run_id, tuple(xs), tuple(ys), tuple(steps) if have_steps and steps else None)


def write_run_series(series: RunSeries, fmt: str = "csv") -> str:
    """Serialize a run series; parse_run_series inverts this exactly."""
    if fmt == "csv":
        buf = io.StringIO()
        fields = ["x_exaflops", "performance"] + (["step"] if series.steps else [])
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(fields)
        for i in range(len(series)):
            cells = [repr(series.x[i]), repr(series.y[i])]
            if series.steps:
                cells.append(str(series.steps[i]))
            writer.writerow(cells)
        return buf.getvalue()
    if fmt == "jsonl":
        lines = []
        for i in range(len(series)):
            record = {"x_exaflops": series.x[i], "performance": series.y[i]}
            if series.steps:
                record["step"] = series.steps[i]
            lines.append(json.dumps(record, sort_keys=True))
        return "\n".join(lines) + "\n"
    raise ParseError(f"unknown format {fmt!r}")


# ---------------------------------------------------------------------------
# Loss series
# ---------------------------------------------------------------------------


def parse_loss_series(
    source,
    fmt: str = "auto",
    model_config: ModelConfig | None = None,
    step_spec: StepSpec | None = None,
) -> LossSeries:
    """Read (compute, val_loss) points.

    Columns: ``x_exaflops`` (or ``x_flops``) with ``val_loss``; or ``step``
    with ``val_loss``, in which case a model config plus a uniform per-step
    spec convert step counts to compute.
    """
    resolved = _detect_format(source, fmt)
    text, name = _read_text(source)
    rows = _records_from_text(text, resolved)
    if not rows:
        raise ParseError(f"{name}: no data rows")
    xs, losses = [], []
    per_step = None
    for row, record in rows:
        x = _x_from_record(record, row)
        if x is None:
            if "step" not in record:
                raise ParseError(f"row {row}: need x_exaflops, x_flops, or step")
            if model_config is None or step_spec is None:
                raise ParseError(
                    f"row {row}: step-indexed losses need a model config and a step spec"
                )
            if per_step is None:
                per_step = step_flops(model_config, step_spec).exaflops
            x = _parse_int(record, "step", row) * per_step
        if "val_loss" not in record:
            raise ParseError(f"row {row}, column 'val_loss': missing")
        losses.append(_parse_float(record, "val_loss", row))
        xs.append(x)
    try:
        return LossSeries(tuple(xs), tuple(losses))
    except ValueError as exc:
        raise ParseError(f"{name}: {exc}") from exc


# ---------------------------------------------------------------------------
# Fit artifacts
# ---------------------------------------------------------------------------


def fit_artifact_dumps(result: FitResult, run_info: dict | None = None) -> str:
    """Serialize a FitResult to the versioned artifact JSON document."""
    payload = {
        "format_version": ARTIFACT_FORMAT_VERSION,
        "params": {
            "p_start": result.params.p_start,
            "ceiling": result.params.ceiling,
            "c_mid": result.params.c_mid,
            "steepness": result.params.steepness,
        },
        "inlier_indices": list(result.inlier_indices),
        "removed_outliers": [asdict(rec) for rec in result.removed_outliers],
        "metrics": {"r2_train": result.r2_train, "rmse_val": result.rmse_val},
        "r2_population": "inliers",
        "converged": result.converged,
        "rounds_used": result.rounds_used,
        "truncated": result.truncated,
        "config": asdict(result.config) if result.config is not None else None,
    }
    if run_info is not None:
        payload["run"] = run_info
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _artifact_payload(text: str) -> dict:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid artifact JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ParseError("artifact must be a JSON object")
    version = payload.get("format_version")
    if version != ARTIFACT_FORMAT_VERSION:
        raise SchemaVersionError(
            f"unsupported artifact format_version {version!r} "
            f"(expected {ARTIFACT_FORMAT_VERSION!r})"
        )
    return payload


def fit_artifact_loads(text: str) -> FitResult:
    """Inverse of fit_artifact_dumps."""
    payload = _artifact_payload(text)
    try:
        params = SigmoidParams(
            float(payload["params"]["p_start"]),
            float(payload["params"]["ceiling"]),
            float(payload["params"]["c_mid"]),
            float(payload["params"]["steepness"]),
            allow_decreasing=True,
        )
        config = FitConfig(**payload["config"]) if payload.get("config") else None
        metrics = payload["metrics"]
        return FitResult(
            params=params,
            inlier_indices=tuple(int(i) for i in payload["inlier_indices"]),
            removed_outliers=tuple(
                OutlierRecord(
                    int(r["index"]), str(r["stage"]), int(r["round"]), float(r["score"])
                )
                for r in payload["removed_outliers"]
            ),
            r2_train=None if metrics["r2_train"] is None else float(metrics["r2_train"]),
            rmse_val=None if metrics["rmse_val"] is None else float(metrics["rmse_val"]),
            converged=bool(payload["converged"]),
            rounds_used=int(payload["rounds_used"]),
            truncated=bool(payload.get("truncated", False)),
            config=config,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed artifact: {exc}") from exc


def write_fit_artifact(result: FitResult, path, run_info: dict | None = None) -> None:
    Path(path).write_text(fit_artifact_dumps(result, run_info), encoding="utf-8")


def read_fit_artifact(path) -> FitResult:
    return fit_artifact_loads(Path(path).read_text(encoding="utf-8"))


def read_fit_artifact_full(path) -> tuple[FitResult, dict]:
    """FitResult plus the run-metadata block (empty dict when absent)."""
    text = Path(path).read_text(encoding="utf-8")
    result = fit_artifact_loads(text)
    payload = _artifact_payload(text)
    run = payload.get("run") or {}
    if not isinstance(run, dict):
        raise ParseError("artifact 'run' block must be an object")
    return result, run


# ---------------------------------------------------------------------------
# Config summaries (correlation inputs)
# ---------------------------------------------------------------------------

_SUMMARY_FLOAT_FIELDS = (
    "x_sft",
    "pl_rl",
    "c_mid",
    "steepness",
    "p_sft",
    "a_post",
    "min_val_loss",
    "max_p_post",
)


def parse_summaries(source, fmt: str = "auto") -> list[ConfigSummary]:
    """Read configuration summaries (CSV or JSON-lines).

    ``config_name`` (alias ``sft_data``) is required; numeric fields are
    optional and default to absent.
    """
    resolved = _detect_format(source, fmt)
    text, name = _read_text(source)
    rows = _records_from_text(text, resolved)
    if not rows:
        raise ParseError(f"{name}: no data rows")
    out = []
    for row, record in rows:
        config_name = record.get("config_name", record.get("sft_data"))
        if config_name is None:
            raise ParseError(f"row {row}, column 'config_name': missing")
        kwargs: dict = {"config_name": str(config_name)}
        if "sft_step" in record:
            kwargs["sft_step"] = _parse_int(record, "sft_step", row)
        if "use_lts" in record:
            kwargs["use_lts"] = str(record["use_lts"]).strip().lower() in ("true", "1", "yes")
        for key in _SUMMARY_FLOAT_FIELDS:
            if key in record:
                kwargs[key] = _parse_float(record, key, row)
        out.append(ConfigSummary(**kwargs))
    return out
