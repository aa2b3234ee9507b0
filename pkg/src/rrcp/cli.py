"""Command-line surface: calibrate, predict, evaluate, benchmark.

Exit codes are a stable contract: 0 success, 1 internal error, 2 user or
input error. All file writes are atomic.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__, baselines, evaluation, reliability
from .core import Dataset, ProbabilityVector, ValidationError
from .fileio import (
    FileFormatError,
    atomic_write_text,
    load_model,
    load_probability_file,
    render_report,
    save_model,
    verify_sidecar,
)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USER = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rrcp",
        description="Conformal prediction sets with reliable-region calibration",
    )
    parser.add_argument("--version", action="version", version=f"rrcp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, method: bool = True) -> None:
        if method:
            p.add_argument(
                "--method", choices=("classic", "aps", "rrcp"), required=True
            )
        p.add_argument("--alpha", type=float, required=True,
                       help="target error rate in (0, 1)")
        p.add_argument("--B", type=int, default=1000, dest="B",
                       help="bootstrap rounds (rrcp only)")
        p.add_argument("--seed", type=int, default=0,
                       help="bootstrap seed (rrcp only)")
        p.add_argument("--early-termination", action="store_true",
                       help="stop each candidate scan at its first failure")
        p.add_argument("--renormalize-tolerance", type=float, default=1e-3,
                       help="max deviation of a row sum from 1 that is renormalized")

    cal = sub.add_parser("calibrate", help="fit a model on a calibration file")
    add_common(cal)
    cal.add_argument("--cali", required=True, help="labeled calibration file")
    cal.add_argument("--out", required=True, help="model file to write")

    pred = sub.add_parser("predict", help="emit prediction sets for an input file")
    pred.add_argument("--model", required=True, help="model file")
    pred.add_argument("--test", required=True,
                      help="input probability file (label column optional)")
    pred.add_argument("--out", required=True, help="predictions file to write")
    pred.add_argument("--renormalize-tolerance", type=float, default=1e-3)

    ev = sub.add_parser("evaluate", help="calibrate, predict, and report AER/PSS")
    add_common(ev)
    ev.add_argument("--cali", required=True, help="labeled calibration file")
    ev.add_argument("--test", required=True, help="labeled test file")
    ev.add_argument("--out", required=True, help="report file to write")
    ev.add_argument("--format", choices=("text", "structured"), default="text")

    bench = sub.add_parser(
        "benchmark", help="compare classic, aps, and rrcp on one split"
    )
    add_common(bench, method=False)
    bench.add_argument("--cali", required=True, help="labeled calibration file")
    bench.add_argument("--test", required=True, help="labeled test file")
    bench.add_argument("--out", required=True, help="comparison file to write")
    bench.add_argument("--format", choices=("text", "structured"), default="text")
    return parser


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"--alpha must lie in (0, 1), got {alpha}")


def _load_dataset(path: str, tolerance: float, require_labels: bool = True):
    data = load_probability_file(
        path, require_labels=require_labels, renorm_tolerance=tolerance
    )
    return data


def _calibrate(method: str, cali: Dataset, args) -> object:
    if method == "classic":
        return baselines.calibrate_classic(cali, args.alpha)
    if method == "aps":
        return baselines.calibrate_aps(cali, args.alpha)
    return reliability.estimate_thresholds(
        cali,
        args.alpha,
        bootstrap_rounds=args.B,
        seed=args.seed,
        early_stop=args.early_termination,
    )


def cmd_calibrate(args) -> int:
    _check_alpha(args.alpha)
    cali = _load_dataset(args.cali, args.renormalize_tolerance).dataset()
    model = _calibrate(args.method, cali, args)
    save_model(args.out, model, n_classes=cali.n_classes)
    print(f"calibrated {args.method} on {len(cali)} samples -> {args.out}")
    if isinstance(model, reliability.RrcpModel):
        table = reliability.build_confidence_table(cali)
        for entry in reliability.threshold_summary(model):
            w = entry["size"]
            n_candidates = np.unique(table.confidences[:, w - 1]).size
            shown = (
                f"{entry['threshold']:.6f}" if entry["usable"] else "unusable"
            )
            print(f"  size {w}: threshold {shown} ({n_candidates} candidates)")
    else:
        print(f"  q_alpha={model.q_alpha:.17g}")
    return EXIT_OK


def cmd_predict(args) -> int:
    envelope = load_model(args.model)
    data = _load_dataset(args.test, args.renormalize_tolerance, require_labels=False)
    if data.n_classes != envelope.n_classes:
        raise ValidationError(
            f"model expects K={envelope.n_classes} but {args.test} has "
            f"K={data.n_classes}"
        )
    lines = ["set,size,confidence,fallback"]
    sets = []
    for row in data.probs:
        p = ProbabilityVector(row)
        if envelope.method == "rrcp":
            detail = reliability.rrcp_predict_detailed(p, envelope.model)
            ps, fallback = detail.labels, detail.fallback
            confidence = detail.confidence
        elif envelope.method == "classic":
            ps, fallback = baselines.predict_classic_detailed(p, envelope.model)
            confidence = float(sum(p.probs[k - 1] for k in ps))
        else:
            ps = baselines.predict_aps(p, envelope.model)
            fallback = False
            confidence = float(sum(p.probs[k - 1] for k in ps))
        sets.append(ps)
        lines.append(
            "|".join(str(k) for k in ps)
            + f",{ps.size},{confidence:.17g},{int(fallback)}"
        )
    atomic_write_text(args.out, "\n".join(lines) + "\n")
    print(f"wrote {len(sets)} prediction sets -> {args.out}")
    if data.labeled:
        aer = evaluation.actual_error_rate(sets, [int(y) for y in data.labels])
        pss = evaluation.mean_set_size(sets)
        print(f"aer={100.0 * aer:.2f}% pss={pss:.3f}")
    return EXIT_OK


def _report_parameters(args, method: str) -> dict:
    params = {
        "method": method,
        "alpha": args.alpha,
        "cali": str(args.cali),
        "test": str(args.test),
        "seed": args.seed,
        "bootstrap_rounds": args.B,
        "early_termination": bool(args.early_termination),
        "renormalize_tolerance": args.renormalize_tolerance,
    }
    return params


def cmd_evaluate(args) -> int:
    _check_alpha(args.alpha)
    cali = _load_dataset(args.cali, args.renormalize_tolerance).dataset()
    test = _load_dataset(args.test, args.renormalize_tolerance).dataset()
    report = evaluation.run_experiment(
        cali, test, args.method, args.alpha,
        bootstrap_rounds=args.B, seed=args.seed, early_stop=args.early_termination,
    )
    payload = report.to_dict()
    payload["parameters"] = _report_parameters(args, args.method)
    atomic_write_text(args.out, render_report(payload, args.format))
    print(
        f"{args.method}: aer={report.aer_percent():.2f}% pss={report.pss:.3f} "
        f"fallbacks={report.fallback_count}"
    )
    return EXIT_OK


def cmd_benchmark(args) -> int:
    _check_alpha(args.alpha)
    for path in (args.cali, args.test):
        verdict = verify_sidecar(path)
        if verdict is False:
            raise ValidationError(f"{path}: checksum sidecar does not match")
        if verdict:
            print(f"verified checksum sidecar for {path}")
    cali = _load_dataset(args.cali, args.renormalize_tolerance).dataset()
    test = _load_dataset(args.test, args.renormalize_tolerance).dataset()
    rows = []
    for method in ("classic", "aps", "rrcp"):
        report = evaluation.run_experiment(
            cali, test, method, args.alpha,
            bootstrap_rounds=args.B, seed=args.seed,
            early_stop=args.early_termination,
        )
        rows.append(report)
    header = f"{'method':<10}{'AER(%)':>10}{'PSS':>10}"
    table_lines = [header, "-" * len(header)]
    for r in rows:
        table_lines.append(f"{r.method:<10}{r.aer_percent():>10.2f}{r.pss:>10.2f}")
    table = "\n".join(table_lines)
    print(table)
    if args.format == "structured":
        payload = {
            "alpha": args.alpha,
            "parameters": _report_parameters(args, "all"),
            "results": [r.to_dict() for r in rows],
        }
        atomic_write_text(args.out, render_report(payload, "structured"))
    else:
        atomic_write_text(args.out, table + "\n")
    print(f"wrote comparison -> {args.out}")
    return EXIT_OK


_COMMANDS = {
    "calibrate": cmd_calibrate,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "benchmark": cmd_benchmark,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValidationError, FileFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_USER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
