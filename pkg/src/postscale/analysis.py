"""Cross-run analytics: correlation, win rates, and summary reports."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from ._validation import as_float_vector
from .errors import InputDomainError, InsufficientDataError, ParseError, UndefinedCorrelationError

REPORT_FORMAT_VERSION = "1"

#: Report columns, in order.
REPORT_COLUMNS = (
    "SFT data",
    "SFT Step",
    "SFT Compute (exaFLOPs)",
    "Use-LTS",
    "PL_rl",
    "C_mid",
    "B",
    "P_sft",
    "A_post",
)


def pearson(xs, ys) -> float:
    """Product-moment correlation of two equal-length sequences (n >= 3)."""
    x = as_float_vector(xs, "xs")
    y = as_float_vector(ys, "ys")
    if x.size != y.size:
        raise InputDomainError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 3:
        raise InsufficientDataError(f"correlation needs at least 3 pairs, got {x.size}")
    dx = x - x.mean()
    dy = y - y.mean()
    vx = float(dx @ dx)
    vy = float(dy @ dy)
    if vx == 0 or vy == 0:
        raise UndefinedCorrelationError("correlation is undefined for zero-variance data")
    return float((dx @ dy) / math.sqrt(vx * vy))


@dataclass(frozen=True)
class WinRate:
    """Successes over attempts; the difficulty proxy for expert trajectories."""

    successes: int
    attempts: int

    def __post_init__(self):
        if self.attempts < 1:
            raise InputDomainError(f"attempts must be >= 1, got {self.attempts!r}")
        if not 0 <= self.successes <= self.attempts:
            raise InputDomainError(
                f"successes must lie in [0, attempts], got {self.successes!r} of {self.attempts!r}"
            )

    @property
    def rate(self) -> float:
        return self.successes / self.attempts


def win_rate(successes: int, attempts: int) -> WinRate:
    return WinRate(successes, attempts)


@dataclass(frozen=True)
class ConfigSummary:
    """One report row: a training configuration's fit summary.

    ``min_val_loss`` and ``max_p_post`` are optional side-channel values used
    by the loss/ceiling correlation.
    """

    config_name: str
    sft_step: int | None = None
    x_sft: float | None = None
    use_lts: bool | None = None
    pl_rl: float | None = None
    c_mid: float | None = None
    steepness: float | None = None
    p_sft: float | None = None
    a_post: float | None = None
    min_val_loss: float | None = None
    max_p_post: float | None = None

    @classmethod
    def from_fit_result(
        cls,
        result,
        config_name: str,
        sft_step: int = 0,
        x_sft: float = 0.0,
        min_val_loss: float | None = None,
        max_p_post: float | None = None,
    ) -> "ConfigSummary":
        params = result.params
        pl_rl = params.ceiling - params.p_start
        return cls(
            config_name=config_name,
            sft_step=sft_step,
            x_sft=x_sft,
            use_lts=bool(result.config.use_lts) if result.config else False,
            pl_rl=pl_rl,
            c_mid=params.c_mid,
            steepness=params.steepness,
            p_sft=params.p_start,
            a_post=params.p_start + pl_rl,
            min_val_loss=min_val_loss,
            max_p_post=max_p_post,
        )


def _required(row: ConfigSummary, name: str):
    value = getattr(row, name)
    if value is None:
        raise InputDomainError(f"report row {row.config_name!r} is missing {name}")
    return value


def _round1(value: float) -> str:
    return format(float(value), ".1f")  # IEEE round-half-to-even


def _row_cells(row: ConfigSummary) -> list[str]:
    return [
        row.config_name,
        str(_required(row, "sft_step")),
        _round1(_required(row, "x_sft")),
        "true" if _required(row, "use_lts") else "false",
        _round1(_required(row, "pl_rl")),
        _round1(_required(row, "c_mid")),
        _round1(_required(row, "steepness")),
        _round1(_required(row, "p_sft")),
        _round1(_required(row, "a_post")),
    ]


def _sorted_rows(rows) -> list[ConfigSummary]:
    rows = list(rows)
    if not rows:
        raise InputDomainError("report needs at least one row")
    return sorted(rows, key=lambda r: (r.config_name, r.sft_step if r.sft_step is not None else 0))


def build_report(rows, format: str = "csv") -> str:
    """Render summary rows grouped by configuration and ordered by step.

    Numeric cells are one decimal, round-half-to-even; the JSON format also
    carries the full-precision values.
    """
    ordered = _sorted_rows(rows)
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in ordered:
            writer.writerow(_row_cells(row))
        return buf.getvalue()
    if format == "markdown":
        lines = [
            "| " + " | ".join(REPORT_COLUMNS) + " |",
            "|" + "|".join(" --- " for _ in REPORT_COLUMNS) + "|",
        ]
        for row in ordered:
            lines.append("| " + " | ".join(_row_cells(row)) + " |")
        return "\n".join(lines) + "\n"
    if format == "json":
        payload = {"format_version": REPORT_FORMAT_VERSION, "rows": []}
        for row in ordered:
            cells = _row_cells(row)
            payload["rows"].append(
                {
                    "sft_data": row.config_name,
                    "sft_step": int(cells[1]),
                    "sft_compute_exaflops": float(cells[2]),
                    "use_lts": cells[3] == "true",
                    "pl_rl": float(cells[4]),
                    "c_mid": float(cells[5]),
                    "steepness": float(cells[6]),
                    "p_sft": float(cells[7]),
                    "a_post": float(cells[8]),
                    "raw": {
                        "x_sft": row.x_sft,
                        "pl_rl": row.pl_rl,
                        "c_mid": row.c_mid,
                        "steepness": row.steepness,
                        "p_sft": row.p_sft,
                        "a_post": row.a_post,
                        "min_val_loss": row.min_val_loss,
                        "max_p_post": row.max_p_post,
                    },
                }
            )
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"
    raise InputDomainError(f"unknown report format {format!r}")


def _parse_bool(text: str, where: str) -> bool:
    key = text.strip().lower()
    if key in ("true", "1", "yes"):
        return True
    if key in ("false", "0", "no"):
        return False
    raise ParseError(f"{where}: expected a boolean, got {text!r}")


def _summary_from_cells(cells: list[str], where: str) -> ConfigSummary:
    if len(cells) != len(REPORT_COLUMNS):
        raise ParseError(
            f"{where}: expected {len(REPORT_COLUMNS)} columns, got {len(cells)}"
        )
    try:
        return ConfigSummary(
            config_name=cells[0],
            sft_step=int(cells[1]),
            x_sft=float(cells[2]),
            use_lts=_parse_bool(cells[3], where),
            pl_rl=float(cells[4]),
            c_mid=float(cells[5]),
            steepness=float(cells[6]),
            p_sft=float(cells[7]),
            a_post=float(cells[8]),
        )
    except ValueError as exc:
        raise ParseError(f"{where}: {exc}") from exc


def read_report(text: str, format: str = "csv") -> list[ConfigSummary]:
    """Parse a document produced by build_report."""
    if format == "csv":
        reader = csv.reader(io.StringIO(text))
        rows = list(reader)
        if not rows or tuple(rows[0]) != REPORT_COLUMNS:
            raise ParseError("row 1: missing or unexpected report header")
        return [
            _summary_from_cells(cells, f"row {i + 2}") for i, cells in enumerate(rows[1:])
        ]
    if format == "markdown":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if len(lines) < 2:
            raise ParseError("markdown report is missing its header")
        out = []
        for i, line in enumerate(lines[2:]):
            cells = [c.strip() for c in line.strip().strip("|").split("|")]
            out.append(_summary_from_cells(cells, f"row {i + 3}"))
        return out
    if format == "json":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON report: {exc}") from exc
        if payload.get("format_version") != REPORT_FORMAT_VERSION:
            raise ParseError(
                f"unsupported report format_version {payload.get('format_version')!r}"
            )
        out = []
        for i, row in enumerate(payload.get("rows", [])):
            raw = row.get("raw", {})
            try:
                out.append(
                    ConfigSummary(
                        config_name=row["sft_data"],
                        sft_step=int(row["sft_step"]),
                        x_sft=float(raw.get("x_sft", row["sft_compute_exaflops"])),
                        use_lts=bool(row["use_lts"]),
                        pl_rl=float(raw.get("pl_rl", row["pl_rl"])),
                        c_mid=float(raw.get("c_mid", row["c_mid"])),
                        steepness=float(raw.get("steepness", row["steepness"])),
                        p_sft=float(raw.get("p_sft", row["p_sft"])),
                        a_post=float(raw.get("a_post", row["a_post"])),
                        min_val_loss=raw.get("min_val_loss"),
                        max_p_post=raw.get("max_p_post"),
                    )
                )
            except KeyError as exc:
                raise ParseError(f"rows[{i}]: missing key {exc}") from exc
        return out
    raise InputDomainError(f"unknown report format {format!r}")


def ceiling_loss_correlation(
    summaries, prefer_observed: bool = False
) -> tuple[float, list[tuple[str, float, float]]]:
    """Pearson r between minimum validation loss and the ceiling, with the
    pair list used (for auditability).

    Each summary contributes its fitted ceiling ``a_post`` when present,
    falling back to the observed ``max_p_post``; ``prefer_observed=True``
    reverses the preference. Rows without a loss or any ceiling are skipped.
    """
    pairs: list[tuple[str, float, float]] = []
    for summary in summaries:
        if summary.min_val_loss is None:
            continue
        first, second = (summary.max_p_post, summary.a_post)
        if not prefer_observed:
            first, second = second, first
        value = first if first is not None else second
        if value is None:
            continue
        pairs.append((summary.config_name, float(summary.min_val_loss), float(value)))
    if len(pairs) < 3:
        raise InsufficientDataError(
            f"need at least 3 summaries with both loss and ceiling, got {len(pairs)}"
        )
    r = pearson([p[1] for p in pairs], [p[2] for p in pairs])
    return r, pairs
