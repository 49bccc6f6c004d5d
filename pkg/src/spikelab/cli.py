"""Command-line interface and CSV ingestion.

Subcommands: simulate, detect, estimate, price-forward, price-strip,
study-estimation, study-pricing.  Exit codes: 0 success, 1 computation or
input error (one-line diagnostic on stderr), 2 usage error.  Data goes to
stdout, diagnostics to stderr; ``--json`` switches machine-readable output.

Ingested series are renormalized to horizon 1 (the real calendar span is
recorded so estimates can be reported per year); floats are written with
``repr`` so a simulate -> write -> load round trip is bit-exact.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import List, Optional, Tuple

import numpy as np

from . import config as cfgmod
from .detect import PLAIN, SIGN_FILTERED, DetectionConfig, apply_min_gap, detect_jumps
from .estimate import estimate_spikes
from .experiments import (
    PricingStudyConfig,
    StudyConfig,
    pricing_rows_to_csv,
    resolve_workers,
    run_estimation_study,
    run_pricing_study,
    study_rows_to_csv,
    study_summary,
)
from .model import GridSpec, SampledPath
from .pricing import (
    StripOptionSpec,
    TwoFactorDynamics,
    forward_spike_arith,
    forward_spike_delivery,
    forward_spike_log,
    price_strip_mc,
)
from .simulate import make_rng, simulate_spot

__all__ = ["IngestRules", "IngestReport", "IngestError", "load_spot_csv", "dispatch", "main"]

SECONDS_PER_YEAR = 365.25 * 24 * 3600.0

GAP_REJECT = "reject"
GAP_FFILL1 = "forward_fill_max_1"
DEDUP_REJECT = "reject"
DEDUP_KEEP_FIRST = "keep_first"


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class IngestRules:
    """How to turn a raw CSV into a regular grid.

    ``timestamp_column`` / ``price_column`` default to the first and second
    header fields.  ``expected_step`` is in the timestamp unit and is
    inferred from the data (modal spacing) when omitted.
    """

    timestamp_column: Optional[str] = None
    price_column: Optional[str] = None
    expected_step: Optional[float] = None
    gap_policy: str = GAP_REJECT
    dedup_policy: str = DEDUP_REJECT

    def __post_init__(self):
        if self.expected_step is not None and not self.expected_step > 0:
            raise ValueError(f"expected_step must be positive, got {self.expected_step}")
        if self.gap_policy not in (GAP_REJECT, GAP_FFILL1):
            raise ValueError(f"unknown gap policy {self.gap_policy!r}")
        if self.dedup_policy not in (DEDUP_REJECT, DEDUP_KEEP_FIRST):
            raise ValueError(f"unknown dedup policy {self.dedup_policy!r}")


@dataclass(frozen=True)
class IngestReport:
    rows_read: int
    n: int
    step: float
    span: float
    calendar_timestamps: bool  # True when timestamps were ISO-8601 dates
    filled_timestamps: tuple = field(default_factory=tuple)
    duplicates_dropped: int = 0

    @property
    def span_years(self) -> Optional[float]:
        return self.span / SECONDS_PER_YEAR if self.calendar_timestamps else None


def _parse_timestamp(text: str) -> Tuple[float, bool]:
    """Timestamp as (numeric value, was_calendar).  ISO-8601 maps to epoch seconds."""
    text = text.strip()
    try:
        return float(text), False
    except ValueError:
        pass
    try:
        stamp = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError as exc:
        raise IngestError(f"cannot parse timestamp {text!r}") from exc
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp.timestamp(), True


def _infer_step(diffs: np.ndarray) -> float:
    positive = diffs[diffs > 0]
    if positive.size == 0:
        raise IngestError("cannot infer a time step from constant timestamps")
    rounded = np.round(positive / positive.min())
    values, counts = np.unique(positive / np.maximum(rounded, 1), return_counts=True)
    return float(values[np.argmax(counts)])


def load_spot_csv(path: str, rules: IngestRules) -> Tuple[SampledPath, IngestReport]:
    """Load a price series onto a strictly regular grid, horizon normalized to 1.

    Duplicated timestamps follow ``dedup_policy``; a single missing step is
    forward filled under ``forward_fill_max_1`` and anything larger is an
    error naming the first missing timestamp.
    """
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise IngestError(f"{path}: missing CSV header")
        fields = reader.fieldnames
        ts_col = rules.timestamp_column or fields[0]
        px_col = rules.price_column or (fields[1] if len(fields) > 1 else None)
        if ts_col not in fields:
            raise IngestError(f"{path}: no timestamp column {ts_col!r}")
        if px_col is None or px_col not in fields:
            raise IngestError(f"{path}: no price column {px_col!r}")
        times: List[float] = []
        prices: List[float] = []
        calendar = False
        for row in reader:
            stamp, is_cal = _parse_timestamp(row[ts_col])
            calendar = calendar or is_cal
            try:
                price = float(row[px_col])
            except (TypeError, ValueError) as exc:
                raise IngestError(f"{path}: bad price {row[px_col]!r} at {row[ts_col]}") from exc
            times.append(stamp)
            prices.append(price)

    if len(times) < 3:
        raise IngestError(f"{path}: need at least 3 rows, got {len(times)}")
    times_arr = np.asarray(times)
    prices_arr = np.asarray(prices)
    rows_read = len(times)

    if rules.dedup_policy == DEDUP_REJECT:
        bad = np.nonzero(np.diff(times_arr) <= 0)[0]
        if bad.size:
            raise IngestError(
                f"{path}: non-monotone timestamp at row {bad[0] + 2} (t={times[bad[0] + 1]})"
            )
        dropped = 0
    else:
        order = np.argsort(times_arr, kind="stable")
        times_arr, prices_arr = times_arr[order], prices_arr[order]
        keep = np.concatenate([[True], np.diff(times_arr) > 0])
        dropped = int(np.count_nonzero(~keep))
        times_arr, prices_arr = times_arr[keep], prices_arr[keep]

    diffs = np.diff(times_arr)
    step = rules.expected_step if rules.expected_step is not None else _infer_step(diffs)
    filled: List[float] = []
    out_prices: List[float] = [float(prices_arr[0])]
    for i, gap in enumerate(diffs):
        k = int(round(gap / step))
        if abs(gap / step - k) > 1e-6 * max(k, 1):
            raise IngestError(
                f"{path}: irregular spacing {gap!r} after t={times_arr[i]!r} "
                f"(expected multiples of {step!r})"
            )
        if k == 1:
            out_prices.append(float(prices_arr[i + 1]))
        elif k == 2 and rules.gap_policy == GAP_FFILL1:
            filled.append(float(times_arr[i] + step))
            out_prices.append(float(prices_arr[i]))  # forward fill one step
            out_prices.append(float(prices_arr[i + 1]))
        else:
            raise IngestError(
                f"{path}: gap of {k} steps after t={times_arr[i]!r}; first missing "
                f"timestamp {times_arr[i] + step!r}"
            )

    n = len(out_prices) - 1
    path_obj = SampledPath(GridSpec(n=n, horizon=1.0), np.asarray(out_prices))
    report = IngestReport(
        rows_read=rows_read,
        n=n,
        step=float(step),
        span=float(times_arr[-1] - times_arr[0]),
        calendar_timestamps=calendar,
        filled_timestamps=tuple(filled),
        duplicates_dropped=dropped,
    )
    return path_obj, report


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _write_simulation_csv(path: str, sim, grid: GridSpec) -> None:
    times = grid.times()
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t", "X", "Xc", "Z"])
        for i in range(grid.n + 1):
            writer.writerow(
                [
                    repr(float(times[i])),
                    repr(float(sim.observed.values[i])),
                    repr(float(sim.continuous.values[i])),
                    repr(float(sim.spike.values[i])),
                ]
            )


def _write_truth_csv(path: str, truth) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t_jump", "size"])
        for rec in truth:
            writer.writerow([repr(rec.time), repr(rec.size)])


def _cmd_simulate(args) -> int:
    cfg = cfgmod.load_config(args.config)
    model = cfgmod.build_model(cfg)
    grid = cfgmod.build_grid(cfg)
    sim = simulate_spot(model, grid, make_rng(args.seed))
    _write_simulation_csv(args.out, sim, grid)
    truth_path = args.truth_out or args.out + ".truth.csv"
    _write_truth_csv(truth_path, sim.truth)
    if args.json:
        print(json.dumps({"out": args.out, "truth": truth_path, "n": grid.n, "jumps": len(sim.truth)}))
    else:
        print(f"wrote {grid.n + 1} observations to {args.out} ({len(sim.truth)} jumps, truth in {truth_path})")
    return 0


def _ingest_rules(args) -> IngestRules:
    gap = GAP_FFILL1 if args.gap_policy == "ffill1" else GAP_REJECT
    dedup = DEDUP_KEEP_FIRST if args.dedup_policy == "keep-first" else DEDUP_REJECT
    return IngestRules(
        timestamp_column=args.time_col,
        price_column=args.price_col,
        expected_step=args.step,
        gap_policy=gap,
        dedup_policy=dedup,
    )


def _detection_config(args) -> DetectionConfig:
    mode = SIGN_FILTERED if args.mode == "signfiltered" else PLAIN
    return DetectionConfig(
        constant=args.C, exponent=args.varpi, mpv_order=args.mpv_order, mode=mode
    )


def _detect_with_flags(path, args):
    report = detect_jumps(path, _detection_config(args))
    if args.min_gap > 1:
        report = apply_min_gap(report, args.min_gap)
    return report


def _cmd_detect(args) -> int:
    path, ingest = load_spot_csv(args.infile, _ingest_rules(args))
    report = _detect_with_flags(path, args)
    if args.out:
        with open(args.out, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["index", "increment"])
            for idx, inc in zip(report.indices, report.increments):
                writer.writerow([int(idx), repr(float(inc))])
    if args.json:
        print(
            json.dumps(
                {
                    "count": report.count,
                    "sigma_hat": report.sigma_hat,
                    "threshold_abs": report.threshold_abs,
                    "mode": report.mode,
                    "indices": [int(i) for i in report.indices],
                    "ingest": {"n": ingest.n, "filled": len(ingest.filled_timestamps)},
                }
            )
        )
    else:
        print(f"count: {report.count}")
        print(f"sigma_hat: {report.sigma_hat:.6g}")
        print(f"threshold_abs: {report.threshold_abs:.6g}")
        print(f"mode: {report.mode}")
        print("indices: " + " ".join(str(int(i)) for i in report.indices))
    return 0


def _cmd_estimate(args) -> int:
    path, ingest = load_spot_csv(args.infile, _ingest_rules(args))
    report = _detect_with_flags(path, args)
    est = estimate_spikes(path, report)
    years = args.horizon_years if args.horizon_years is not None else ingest.span_years

    payload = {
        "lambda_hat": est.lambda_hat,
        "lambda_ci": list(est.lambda_ci),
        "beta_hat": est.beta_hat,
        "slope_hat": est.slope_hat,
        "count": report.count,
        "sigma_hat": report.sigma_hat,
        "threshold_abs": report.threshold_abs,
        "mode": report.mode,
        "moments": {str(m): v for m, v in est.moment_estimates.items()},
        "flags": {
            "undefined": est.flags.undefined,
            "floored": est.flags.floored,
            "boundary_drops": est.flags.boundary_drops,
        },
    }
    if est.diagnostics is not None:
        payload["diagnostics"] = {
            "bias_term": est.diagnostics.bias_term,
            "error_components": list(est.diagnostics.error_components),
            "relative_error_bound": est.diagnostics.relative_error_bound,
        }
    if years:
        payload["per_year"] = {"lambda_hat": est.lambda_hat / years, "beta_hat": est.beta_hat / years}

    if args.json:
        print(json.dumps(payload))
    else:
        print(f"lambda_hat: {est.lambda_hat:.6g}  (95% CI {est.lambda_ci[0]:.6g} .. {est.lambda_ci[1]:.6g})")
        print(f"beta_hat: {est.beta_hat:.6g}")
        print(f"slope_hat: {est.slope_hat:.6g}")
        for m, value in est.moment_estimates.items():
            print(f"moment[{m}]: {'undefined' if value is None else f'{value:.6g}'}")
        if est.diagnostics is not None:
            v = est.diagnostics.error_components
            print(f"bias_term: {est.diagnostics.bias_term:.4g}")
            print(f"error_components: {v[0]:.4g} {v[1]:.4g} {v[2]:.4g} {v[3]:.4g}")
            print(f"relative_error_bound: {est.diagnostics.relative_error_bound:.4g}")
        flags = []
        if est.flags.undefined:
            flags.append("undefined")
        if est.flags.floored:
            flags.append("floored")
        if est.flags.boundary_drops:
            flags.append(f"boundary_drops={est.flags.boundary_drops}")
        print("flags: " + (", ".join(flags) if flags else "none"))
        if years:
            print(f"per-year: lambda_hat {est.lambda_hat / years:.6g}, beta_hat {est.beta_hat / years:.6g}")
    return 0


def _cmd_price_forward(args) -> int:
    cfg = cfgmod.load_config(args.config)
    spikes = cfgmod.build_spike_params(cfg)
    if args.log_model:
        if args.theta is not None:
            raise ValueError("delivery-period averaging is only available for the arithmetic model")
        value = forward_spike_log(args.z_now, spikes, args.t, args.T)
        kind = "log"
    elif args.theta is not None:
        value = forward_spike_delivery(args.z_now, spikes, args.t, args.T, args.theta)
        kind = "delivery"
    else:
        value = forward_spike_arith(args.z_now, spikes, args.t, args.T)
        kind = "instant"
    if args.json:
        print(json.dumps({"kind": kind, "value": value, "t": args.t, "T": args.T, "theta": args.theta}))
    else:
        print(f"spike forward correction ({kind}): {value!r}")
    return 0


def _exercise_times(spec_text: str, grid: GridSpec) -> np.ndarray:
    if spec_text == "hourly":
        return grid.times()[1:]
    if spec_text.startswith("csv:"):
        times = np.loadtxt(spec_text[4:], ndmin=1)
        return np.asarray(times, dtype=float)
    raise ValueError(f"unknown exercise spec {spec_text!r}; use 'hourly' or 'csv:<file>'")


def _cmd_price_strip(args) -> int:
    cfg = cfgmod.load_config(args.config)
    continuous = cfgmod.build_continuous(cfg)
    if not isinstance(continuous, TwoFactorDynamics):
        raise ValueError("price-strip needs cont.kind = twofactor in the config")
    grid = cfgmod.build_grid(cfg)
    spikes = None if args.no_spikes else cfgmod.build_spike_params(cfg)
    spec = StripOptionSpec(
        exercise_times=_exercise_times(args.exercises, grid),
        strike=args.strike,
        num_sims=args.sims,
        seed=args.seed,
    )
    price = price_strip_mc(
        continuous.params, continuous.curve, spikes, grid, spec, antithetic=args.antithetic
    )
    print(
        json.dumps(
            {
                "estimate": price.estimate,
                "ci95": list(price.ci95),
                "stderr": price.stderr,
                "sims": price.num_sims,
            }
        )
    )
    return 0


def _cmd_study_estimation(args) -> int:
    cfg = cfgmod.load_config(args.config)
    modes = tuple(args.modes.split(",")) if args.modes else (PLAIN, SIGN_FILTERED)
    for mode in modes:
        if mode not in (PLAIN, SIGN_FILTERED):
            raise ValueError(f"unknown mode {mode!r}")
    study = StudyConfig(
        pairs=tuple(cfgmod.build_study_pairs(cfg)),
        replications=args.reps,
        grid=cfgmod.build_grid(cfg),
        detection=DetectionConfig(constant=args.C, exponent=args.varpi, mpv_order=args.mpv_order),
        law=cfgmod.build_jump_law(cfg),
        continuous=cfgmod.build_continuous(cfg),
        master_seed=args.seed,
        modes=modes,
    )
    rows = run_estimation_study(study, workers=resolve_workers(args.workers))
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "estimation_study.csv")
    json_path = os.path.join(args.out, "estimation_study.json")
    study_rows_to_csv(rows, csv_path)
    with open(json_path, "w") as handle:
        json.dump(study_summary(rows), handle, indent=2)
    if args.json:
        print(json.dumps(study_summary(rows)))
    else:
        print(f"wrote {csv_path} and {json_path} ({len(rows)} rows)")
    return 0


def _cmd_study_pricing(args) -> int:
    cfg = cfgmod.load_config(args.config)
    continuous = cfgmod.build_continuous(cfg)
    if not isinstance(continuous, TwoFactorDynamics):
        raise ValueError("study-pricing needs cont.kind = twofactor in the config")
    grid = cfgmod.build_grid(cfg)
    strikes = tuple(float(s) for s in args.strikes.split(","))
    study = PricingStudyConfig(
        two_factor=continuous.params,
        curve=continuous.curve,
        spikes=cfgmod.build_spike_params(cfg),
        grid=grid,
        exercise_times=_exercise_times(args.exercises, grid),
        strikes=strikes,
        num_sims=args.sims,
        master_seed=args.seed,
        antithetic=args.antithetic,
    )
    rows = run_pricing_study(study)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "pricing_study.csv")
    pricing_rows_to_csv(rows, csv_path)
    summary = [
        {
            "strike": row.strike,
            "without": {"estimate": row.without_spikes.estimate, "ci95": list(row.without_spikes.ci95)},
            "with": {"estimate": row.with_spikes.estimate, "ci95": list(row.with_spikes.ci95)},
            "premium": row.spike_premium,
        }
        for row in rows
    ]
    json_path = os.path.join(args.out, "pricing_study.json")
    with open(json_path, "w") as handle:
        json.dump(summary, handle, indent=2)
    if args.json:
        print(json.dumps(summary))
    else:
        print(f"wrote {csv_path} and {json_path} ({len(rows)} strikes)")
    return 0


# ---------------------------------------------------------------------------
# Parser and dispatch
# ---------------------------------------------------------------------------


def _add_ingest_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--in", dest="infile", required=True, help="input CSV")
    parser.add_argument("--time-col", default=None, help="timestamp column (default: first)")
    parser.add_argument("--price-col", default=None, help="price column (default: second)")
    parser.add_argument("--step", type=float, default=None, help="expected time step (default: inferred)")
    parser.add_argument("--gap-policy", choices=["reject", "ffill1"], default="reject")
    parser.add_argument("--dedup-policy", choices=["reject", "keep-first"], default="reject")


def _add_detection_flags(parser: argparse.ArgumentParser, include_mode: bool = True) -> None:
    if include_mode:
        parser.add_argument("--mode", choices=["plain", "signfiltered"], default="signfiltered")
        parser.add_argument(
            "--min-gap", type=int, default=0, help="post-filter: minimum index gap between flags (off by default)"
        )
    parser.add_argument("--C", type=float, default=5.0, help="threshold constant (default 5)")
    parser.add_argument("--varpi", type=float, default=0.01, help="threshold exponent (default 0.01)")
    parser.add_argument("--mpv-order", type=int, default=20, help="multipower order (default 20)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikelab",
        description="Spiky electricity-price simulation, estimation and pricing",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a spot path to CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--truth-out", default=None, help="jump sidecar (default <out>.truth.csv)")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("detect", help="detect jump increments in a series")
    _add_ingest_flags(p)
    _add_detection_flags(p)
    p.add_argument("--out", default=None, help="write flagged increments to CSV")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("estimate", help="estimate spike intensity and reversion")
    _add_ingest_flags(p)
    _add_detection_flags(p)
    p.add_argument("--horizon-years", type=float, default=None, help="span in years for per-year rates")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("price-forward", help="spike correction to a forward price")
    p.add_argument("--config", required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--theta", type=float, default=None, help="delivery-period length")
    p.add_argument("--log-model", action="store_true", help="multiplicative (log-price) model")
    p.add_argument("--z-now", type=float, default=0.0, help="current spike level")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_price_forward)

    p = sub.add_parser("price-strip", help="Monte Carlo strip-of-calls price")
    p.add_argument("--config", required=True)
    p.add_argument("--strike", type=float, required=True)
    p.add_argument("--exercises", default="hourly", help="hourly | csv:<file>")
    p.add_argument("--sims", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-spikes", action="store_true")
    p.add_argument("--antithetic", action="store_true")
    p.add_argument("--json", action="store_true")  # output is already JSON
    p.set_defaults(func=_cmd_price_strip)

    p = sub.add_parser("study-estimation", help="estimator performance study")
    p.add_argument("--config", required=True)
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--modes", default=None, help="comma-separated: plain,signfiltered")
    p.add_argument("--workers", type=int, default=None)
    _add_detection_flags(p, include_mode=False)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_study_estimation)

    p = sub.add_parser("study-pricing", help="strip-option study with/without spikes")
    p.add_argument("--config", required=True)
    p.add_argument("--strikes", default="100,200,300")
    p.add_argument("--exercises", default="hourly")
    p.add_argument("--sims", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--antithetic", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_study_pricing)

    return parser


def dispatch(argv: Optional[List[str]] = None) -> int:
    """Route argv to a subcommand; return the process exit status."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"spikelab: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
