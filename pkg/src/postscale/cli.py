"""Command-line front end.

Subcommands: flops, fit, phases, decompose, correlate, synth, report.
Exit codes: 0 success, 1 data/domain error, 2 usage error. Every command is
deterministic given its inputs and --seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import analysis, ingest, phases, synth
from .curves import SigmoidParams, decompose
from .errors import ContractError, InputDomainError, ParseError
from .fitting import FitBounds, FitConfig, FitResult, robust_fit_pipeline
from .flops import Algorithm, StepSpec, step_flops


class UsageError(Exception):
    """Command-line usage problem discovered after argparse."""


def _write_output(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _add_fit_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--fit-config", help="key=value file with fitting knobs")
    parser.add_argument("--train-fraction", type=float, help="chronological train share (default 0.85)")
    parser.add_argument("--z-threshold", type=float, help="modified-Z removal threshold (default 3.5)")
    parser.add_argument("--use-lts", action="store_true", default=None, help="enable the trimmed-squares stage")
    parser.add_argument("--alpha", type=float, help="trimmed-squares keep fraction (default 0.85)")
    parser.add_argument("--max-outlier-rounds", type=int, help="stage-1 round cap (default 10)")
    parser.add_argument("--nls-max-iters", type=int, help="inner solver iteration cap (default 200)")
    parser.add_argument("--nls-tol", type=float, help="inner solver tolerance (default 1e-8)")
    parser.add_argument("--multistart", type=int, help="number of solver starts (default 16)")
    parser.add_argument("--seed", type=int, help="seed for solver multistart jitter (default 0)")
    parser.add_argument("--unconstrained", action="store_true", help="allow a ceiling below the start (degrading runs)")


def _fit_config_from_args(args) -> FitConfig:
    cfg = ingest.parse_fit_config(args.fit_config) if args.fit_config else FitConfig()
    overrides = {
        "train_fraction": args.train_fraction,
        "z_threshold": args.z_threshold,
        "use_lts": args.use_lts,
        "lts_alpha": args.alpha,
        "max_outlier_rounds": args.max_outlier_rounds,
        "nls_max_iters": args.nls_max_iters,
        "nls_tolerance": args.nls_tol,
        "multistart_count": args.multistart,
        "seed": args.seed,
    }
    kwargs = {k: v for k, v in overrides.items() if v is not None}
    if not kwargs:
        return cfg
    return replace(cfg, **kwargs)


def _fit_summary_lines(result: FitResult) -> list[str]:
    p = result.params
    lines = [
        f"p_start    {p.p_start:.4f}",
        f"ceiling    {p.ceiling:.4f}",
        f"c_mid      {p.c_mid:.4f} exaFLOPs",
        f"steepness  {p.steepness:.4f}",
        f"plasticity {p.ceiling - p.p_start:.4f}",
        f"r2_train   {'n/a' if result.r2_train is None else f'{result.r2_train:.6f}'}",
        f"rmse_val   {'n/a' if result.rmse_val is None else f'{result.rmse_val:.6f}'}",
        f"removed    {len(result.removed_outliers)} point(s) in {result.rounds_used} round(s)",
        f"converged  {result.converged}",
    ]
    if result.truncated:
        lines.append("warning    active set shrank to the fit minimum; result truncated")
    return lines


def _cmd_flops(args) -> int:
    cfg = ingest.parse_model_config(args.model_config)
    log = ingest.parse_train_log(args.log, args.format, default_algorithm=args.algorithm)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["step", "step_flops", "cumulative_exaflops"])
    running = 0
    for record in log.records:
        value = step_flops(cfg, record.spec).value
        running = running + value
        writer.writerow([record.step, repr(float(value)), repr(running / 1e18)])
    _write_output(buf.getvalue(), args.out)
    return 0


def _cmd_fit(args) -> int:
    cfg = _fit_config_from_args(args)
    model_config = ingest.parse_model_config(args.model_config) if args.model_config else None
    series = ingest.parse_run_series(
        args.run, args.format, model_config=model_config, default_algorithm=args.algorithm
    )
    bounds = FitBounds(constrain_ceiling=not args.unconstrained, pin_start=args.pin_start)
    result = robust_fit_pipeline(series, cfg, bounds)
    run_info = {"config_name": args.config_name or series.run_id, "sft_step": args.sft_step, "x_sft": args.x_sft}
    if args.min_val_loss is not None:
        run_info["min_val_loss"] = args.min_val_loss
    _write_output(ingest.fit_artifact_dumps(result, run_info), args.out)
    print("\n".join(_fit_summary_lines(result)), file=sys.stderr)
    return 0


def _cmd_phases(args) -> int:
    if args.delta >= args.delta2:
        raise UsageError("--delta must be strictly below --delta2")
    model_config = ingest.parse_model_config(args.model_config) if args.model_config else None
    step_spec = None
    if args.step_batch is not None or args.step_seq_len is not None:
        if args.step_batch is None or args.step_seq_len is None:
            raise UsageError("--step-batch and --step-seq-len must be given together")
        step_spec = StepSpec(Algorithm.SFT, batch=args.step_batch, avg_seq_len=args.step_seq_len)
    series = ingest.parse_loss_series(
        args.loss_log, args.format, model_config=model_config, step_spec=step_spec
    )
    if args.smooth_window:
        series = phases.smooth_losses(series, args.smooth_window)
    thresholds = phases.PhaseThresholds(args.delta, args.delta2)
    labels = phases.classify_phases(series, thresholds)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["x_exaflops", "val_loss", "phase"])
    for x, loss, label in zip(series.x, series.losses, labels):
        writer.writerow([repr(x), repr(loss), label.value])
    _write_output(buf.getvalue(), args.out)
    summary = []
    if args.smooth_window:
        summary.append(f"smoothing: trailing median, window={args.smooth_window}")
    x_min, l_min = phases.min_val_loss(series)
    summary.append(f"min val loss {l_min!r} at {x_min!r} exaFLOPs")
    for interval in phases.phase_boundaries(labels, series):
        summary.append(
            f"{interval.label.value}: x in [{interval.x_start!r}, {interval.x_end!r}]"
        )
    summary.append("guidance: switch away from supervised training inside the stable span")
    print("\n".join(summary), file=sys.stderr)
    return 0


def _cmd_decompose(args) -> int:
    cfg = _fit_config_from_args(args)
    sft = ingest.parse_run_series(args.sft_run, args.format)
    rl = ingest.parse_run_series(args.rl_run, args.format)
    x_sft, p_sft = sft.x[-1], sft.y[-1]
    if abs(rl.y[0] - p_sft) > 0.5:
        print(
            f"warning: RL run starts at {rl.y[0]} but the SFT stage ended at {p_sft}",
            file=sys.stderr,
        )
    bounds = FitBounds(pin_start=p_sft, constrain_ceiling=not args.unconstrained)
    result = robust_fit_pipeline(rl, cfg, bounds)
    record = decompose(args.p0, (x_sft, p_sft), result.params)
    payload = record.to_dict()
    payload["fit"] = {
        "r2_train": result.r2_train,
        "rmse_val": result.rmse_val,
        "removed_outliers": len(result.removed_outliers),
        "converged": result.converged,
    }
    _write_output(json.dumps(payload, indent=2, sort_keys=True) + "\n", args.out)
    summary = analysis.ConfigSummary(
        config_name=args.config_name or rl.run_id,
        sft_step=args.sft_step,
        x_sft=x_sft,
        use_lts=cfg.use_lts,
        pl_rl=record.pl_rl,
        c_mid=result.params.c_mid,
        steepness=result.params.steepness,
        p_sft=p_sft,
        a_post=record.a_post,
    )
    print(analysis.build_report([summary], "markdown"), end="", file=sys.stderr)
    return 0


def _cmd_correlate(args) -> int:
    summaries = ingest.parse_summaries(args.summaries, args.format)
    r, pairs = analysis.ceiling_loss_correlation(summaries, prefer_observed=args.observed)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["config_name", "min_val_loss", "ceiling"])
    for name, loss, ceiling_value in pairs:
        writer.writerow([name, repr(loss), repr(ceiling_value)])
    _write_output(buf.getvalue(), args.out)
    print(f"pearson_r {r:.6f} over {len(pairs)} pairs", file=sys.stderr)
    return 0


def _cmd_synth(args) -> int:
    params = SigmoidParams(args.p_start, args.ceiling, args.c_mid, args.steepness)
    x_min = args.x_min if args.x_min is not None else 0.1 * args.c_mid
    x_max = args.x_max if args.x_max is not None else 10.0 * args.c_mid
    spec = synth.SynthSpec(
        params=params,
        x_grid=synth.log_grid(x_min, x_max, args.n_points),
        noise_sigma=args.noise_sigma,
        outlier_fraction=args.outlier_fraction,
        outlier_shift=args.outlier_shift,
        seed=args.seed,
        run_id=args.run_id,
    )
    series, outlier_indices = synth.synthesize(spec)
    _write_output(ingest.write_run_series(series, "csv"), args.out)
    sidecar = args.sidecar
    if sidecar is None and args.out not in (None, "-"):
        sidecar = args.out + ".outliers.json"
    if sidecar is not None:
        meta = {
            "generator": synth.GENERATOR_NAME,
            "seed": args.seed,
            "outlier_indices": list(outlier_indices),
            "outlier_shift": args.outlier_shift,
            "noise_sigma": args.noise_sigma,
        }
        Path(sidecar).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return 0


def _cmd_report(args) -> int:
    directory = Path(args.artifacts)
    paths = sorted(directory.glob("*.json"))
    if not paths:
        raise InputDomainError(f"no fit artifacts (*.json) in {directory}")
    rows = []
    for path in paths:
        try:
            result, run = ingest.read_fit_artifact_full(path)
        except ParseError as exc:
            raise ParseError(f"{path}: {exc}") from exc
        rows.append(
            analysis.ConfigSummary.from_fit_result(
                result,
                config_name=str(run.get("config_name", path.stem)),
                sft_step=int(run.get("sft_step", 0)),
                x_sft=float(run.get("x_sft", 0.0)),
                min_val_loss=run.get("min_val_loss"),
                max_p_post=run.get("max_p_post"),
            )
        )
    _write_output(analysis.build_report(rows, args.report_format), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="postscale",
        description="Scaling analysis for post-training runs: compute accounting, "
        "robust curve fits, phase labeling, and reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("flops", help="cumulative compute from a step-level log")
    p.add_argument("--model-config", required=True, help="key=value architecture file")
    p.add_argument("--log", required=True, help="step-level log (CSV or JSON-lines)")
    p.add_argument("--format", default="auto", choices=["auto", "csv", "jsonl"])
    p.add_argument(
        "--algorithm",
        choices=["sft", "grpo", "dapo", "hybrid", "luffy", "srft", "upt"],
        help="default algorithm for rows without one",
    )
    p.add_argument("--out", help="output path (default stdout)")
    p.set_defaults(func=_cmd_flops)

    p = sub.add_parser("fit", help="robust sigmoidal fit of a run series")
    p.add_argument("--run", required=True, help="run series (CSV or JSON-lines)")
    p.add_argument("--format", default="auto", choices=["auto", "csv", "jsonl"])
    p.add_argument("--model-config", help="architecture file for step-level runs")
    p.add_argument(
        "--algorithm",
        choices=["sft", "grpo", "dapo", "hybrid", "luffy", "srft", "upt"],
        help="default algorithm for step-level rows without one",
    )
    p.add_argument("--pin-start", type=float, help="fix the curve start at this value")
    p.add_argument("--config-name", help="configuration name stored in the artifact")
    p.add_argument("--sft-step", type=int, default=0, help="supervised step count stored in the artifact")
    p.add_argument("--x-sft", type=float, default=0.0, help="supervised compute stored in the artifact")
    p.add_argument("--min-val-loss", type=float, help="minimum validation loss stored in the artifact")
    _add_fit_flags(p)
    p.add_argument("--out", help="artifact path (default stdout)")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("phases", help="label validation-loss sub-phases")
    p.add_argument("--loss-log", required=True, help="loss log (CSV or JSON-lines)")
    p.add_argument("--format", default="auto", choices=["auto", "csv", "jsonl"])
    p.add_argument("--model-config", help="architecture file when losses are step-indexed")
    p.add_argument("--step-batch", type=int, help="per-step batch for step-indexed losses")
    p.add_argument("--step-seq-len", type=float, help="per-step average length for step-indexed losses")
    p.add_argument("--delta", type=float, default=0.02, help="stable tolerance (default 0.02)")
    p.add_argument("--delta2", type=float, default=0.1, help="severe tolerance (default 0.1)")
    p.add_argument("--smooth-window", type=int, default=0, help="trailing median window (default off)")
    p.add_argument("--out", help="labeled CSV path (default stdout)")
    p.set_defaults(func=_cmd_phases)

    p = sub.add_parser("decompose", help="two-stage gain/headroom decomposition")
    p.add_argument("--p0", type=float, required=True, help="base model performance")
    p.add_argument("--sft-run", required=True, help="supervised-stage run series")
    p.add_argument("--rl-run", required=True, help="RL-stage run series (x = RL compute)")
    p.add_argument("--format", default="auto", choices=["auto", "csv", "jsonl"])
    p.add_argument("--config-name", help="configuration name for the summary row")
    p.add_argument("--sft-step", type=int, default=0, help="supervised step count for the summary row")
    _add_fit_flags(p)
    p.add_argument("--out", help="decomposition JSON path (default stdout)")
    p.set_defaults(func=_cmd_decompose)

    p = sub.add_parser("correlate", help="minimum-loss vs ceiling correlation")
    p.add_argument("--summaries", required=True, help="summaries file (CSV or JSON-lines)")
    p.add_argument("--format", default="auto", choices=["auto", "csv", "jsonl"])
    p.add_argument("--observed", action="store_true", help="prefer observed maxima over fitted ceilings")
    p.add_argument("--out", help="pair table path (default stdout)")
    p.set_defaults(func=_cmd_correlate)

    p = sub.add_parser("synth", help="seeded synthetic run series")
    p.add_argument("--p-start", type=float, required=True)
    p.add_argument("--ceiling", type=float, required=True)
    p.add_argument("--c-mid", type=float, required=True)
    p.add_argument("--steepness", type=float, required=True)
    p.add_argument("--n-points", type=int, default=20)
    p.add_argument("--x-min", type=float, help="default 0.1 * c_mid")
    p.add_argument("--x-max", type=float, help="default 10 * c_mid")
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--outlier-fraction", type=float, default=0.0)
    p.add_argument("--outlier-shift", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--run-id", default="synthetic")
    p.add_argument("--sidecar", help="outlier-index JSON path (default <out>.outliers.json)")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("report", help="summary table from a directory of fit artifacts")
    p.add_argument("--artifacts", required=True, help="directory of fit artifacts")
    p.add_argument(
        "--report-format", default="csv", choices=["csv", "markdown", "json"], dest="report_format"
    )
    p.add_argument("--out", help="report path (default stdout)")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))  # exits 2
        return 2
    except (ParseError, InputDomainError, ContractError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
