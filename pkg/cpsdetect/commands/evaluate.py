import argparse
import dataclasses
import logging
import sys

from cpsdetect.commands.context import RunContext
from cpsdetect.exceptions import DataException, UsageException
from cpsdetect.schemas.eval import EvalReport
from cpsdetect.services import density_net_service, eval_service, log_service, report_service, svm_service

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("evaluate", help="Score a trace or verdicts against a labeled log")
    parser.add_argument("--mode", choices=["entry", "window"], required=True)
    parser.add_argument("--trace", help="Score trace CSV (entry mode)")
    parser.add_argument("--verdicts", help="Verdict CSV (window mode)")
    parser.add_argument("--log", required=True, help="Fully labeled log CSV")
    threshold = parser.add_mutually_exclusive_group()
    threshold.add_argument("--threshold", type=float, help="Outlier-factor threshold; sweep-selected when omitted")
    threshold.add_argument("--validation-trace", help="Score trace of a normal run; the threshold is its --quantile")
    parser.add_argument("--quantile", type=float, default=0.99, help="Quantile used with --validation-trace")
    parser.add_argument("--w", type=int, help="Window size; inferred from the verdict count when omitted")
    parser.add_argument("--out", help="EvalReport JSON output path")
    parser.add_argument("--export", help="Plot-ready trace CSV output path")
    parser.set_defaults(handler=evaluate)

    parser = subparsers.add_parser("report", help="Summarize the detector exports of a run directory")
    parser.add_argument("--run-dir", required=True)
    parser.set_defaults(handler=report)


def _evaluate_entries(args: argparse.Namespace, context: RunContext) -> EvalReport:
    if args.trace is None:
        raise UsageException("--trace is required with --mode entry")
    trace = density_net_service.read_trace(context.input(args.trace))
    log = log_service.ingest_csv(context.input(args.log))
    if len(trace) != len(log):
        raise DataException(f"trace has {len(trace)} entries, log has {len(log)}")
    trace = dataclasses.replace(trace, labels=log.labels)
    threshold = args.threshold
    if args.validation_trace is not None:
        validation = density_net_service.read_trace(context.input(args.validation_trace))
        threshold = eval_service.normal_threshold(validation, args.quantile)
    elif threshold is None:
        sweep = eval_service.threshold_sweep(trace.factors, eval_service.truth_from_codes(log.labels))
        threshold = sweep.best_threshold
        logger.info("Threshold selected: threshold=%.6g, f=%.5f", threshold, sweep.best_f)
    report = eval_service.evaluate_dnn(trace, log.labels, threshold)
    if args.export:
        eval_service.export_trace(trace, log.labels, context.output(args.export), threshold=threshold)
    return report


def _evaluate_windows(args: argparse.Namespace, context: RunContext) -> EvalReport:
    if args.verdicts is None:
        raise UsageException("--verdicts is required with --mode window")
    prediction = svm_service.read_verdicts(context.input(args.verdicts))
    log = log_service.ingest_csv(context.input(args.log))
    eval_service.truth_from_codes(log.labels)
    w = args.w if args.w is not None else len(log) - len(prediction) + 1
    windows = svm_service.extract_windows(log, w)
    report = eval_service.evaluate_svm(prediction, windows)
    if args.export:
        eval_service.export_trace(prediction, windows, context.output(args.export), timestamps=log.timestamps)
    return report


def evaluate(args: argparse.Namespace, context: RunContext) -> None:
    if args.mode == "entry":
        report = _evaluate_entries(args, context)
    else:
        report = _evaluate_windows(args, context)
    if args.out:
        context.output(args.out).write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    name = "dnn" if args.mode == "entry" else "svm"
    sys.stdout.write(eval_service.render_report_table({name: report}) + "\n")


def report(args: argparse.Namespace, context: RunContext) -> None:
    reports = report_service.report(args.run_dir)
    for detector in reports:
        context.input(report_service.run_export_path(args.run_dir, detector))
    context.output(report_service.summary_path(args.run_dir))
    context.output(report_service.per_attack_path(args.run_dir))
    sys.stdout.write(eval_service.render_report_table(reports) + "\n")
