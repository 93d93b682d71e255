import argparse
import re
import sys
from pathlib import Path
from typing import Optional

from cpsdetect.commands.context import RunContext, load_config
from cpsdetect.exceptions import DataException
from cpsdetect.schemas.tune import GridSpec, RandomSearchSpec
from cpsdetect.services import density_net_service, log_service, tune_service


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("tune", help="Hyper-parameter search")
    targets = parser.add_subparsers(dest="target", metavar="target", required=True)

    svm = targets.add_parser("svm", help="Grid or random search over (w, nu, gamma)")
    search = svm.add_mutually_exclusive_group(required=True)
    search.add_argument("--grid",
                        help="GridSpec JSON; 1/d joins the gamma candidates unless include_default_gamma is false")
    search.add_argument("--log-grid", action="store_true", help="The 2 x 5 x 5 logarithmic grid")
    search.add_argument("--random", help="RandomSearchSpec JSON")
    svm.add_argument("--train", required=True, help="Normal log CSV")
    svm.add_argument("--eval", required=True, help="Labeled evaluation log CSV")
    svm.add_argument("--out", required=True, help="Tuning table CSV output path")
    svm.add_argument("--best-out", help="Best SvmConfig JSON output path (random search)")
    svm.set_defaults(handler=tune_svm)

    dnn = targets.add_parser("dnn", help="Pick the (hidden_dim, epoch, threshold) operating point")
    dnn.add_argument("--traces", required=True,
                     help="Per-epoch trace CSVs in name order, flat or in one h<hidden_dim> subdirectory per net")
    dnn.add_argument("--log", required=True, help="Labeled log the traces were scored on")
    dnn.add_argument("--out", required=True, help="Operating point CSV output path, one row per (hidden_dim, epoch)")
    dnn.set_defaults(handler=tune_dnn)


def tune_svm(args: argparse.Namespace, context: RunContext) -> None:
    train_log = log_service.ingest_csv(context.input(args.train))
    eval_log = log_service.ingest_csv(context.input(args.eval))
    if args.random is not None:
        spec = load_config(context, "random_search", RandomSearchSpec, args.random, seed_key="seed")
        best, best_f, rows = tune_service.random_search(spec, train_log, eval_log)
        if args.best_out:
            context.output(args.best_out).write_text(best.model_dump_json(indent=2) + "\n", encoding="utf-8")
        sys.stdout.write(f"best nu={best.nu!r} gamma={best.gamma!r} F={best_f:.5f}\n")
    else:
        base = None if args.grid else GridSpec.log_grid().model_dump()
        spec = load_config(context, "grid", GridSpec, args.grid, base=base)
        rows = tune_service.grid_search(spec, train_log, eval_log)
    tune_service.write_table(rows, context.output(args.out))


HIDDEN_DIR = re.compile(r"h(\d+)")


def _trace_paths(directory: Path) -> dict[Optional[int], list[Path]]:
    """Epoch trace files, flat or grouped in one h<hidden_dim> subdirectory per net"""
    groups: dict[Optional[int], list[Path]] = {}
    flat = sorted(directory.glob("*.csv"))
    if flat:
        groups[None] = flat
    for sub in sorted(p for p in directory.iterdir() if p.is_dir()):
        match = HIDDEN_DIR.fullmatch(sub.name)
        if match is None:
            raise DataException(f"trace subdirectory {sub.name} is not named h<hidden_dim>")
        paths = sorted(sub.glob("*.csv"))
        if paths:
            groups[int(match.group(1))] = paths
    if None in groups and len(groups) > 1:
        raise DataException(f"{directory} mixes flat traces with h<hidden_dim> subdirectories")
    if not groups:
        raise DataException(f"no trace CSVs in {directory}")
    return groups


def tune_dnn(args: argparse.Namespace, context: RunContext) -> None:
    directory = Path(args.traces)
    if not directory.is_dir():
        raise DataException(f"trace directory not found: {directory}")
    groups = _trace_paths(directory)
    log = log_service.ingest_csv(context.input(args.log))
    traces = {}
    for hidden_dim, paths in groups.items():
        traces[hidden_dim] = [density_net_service.read_trace(context.input(path)) for path in paths]
        for path, trace in zip(paths, traces[hidden_dim]):
            if len(trace) != len(log):
                raise DataException(f"{path} has {len(trace)} entries, log has {len(log)}")
    best, points = tune_service.select_dnn_operating_point(traces.get(None) or traces, log.labels)
    tune_service.write_operating_points(points, context.output(args.out))
    chosen = groups[best.hidden_dim][best.epoch - 1].relative_to(directory)
    size = "" if best.hidden_dim is None else f"hidden_dim={best.hidden_dim} "
    sys.stdout.write(f"best {size}epoch={best.epoch} ({chosen}) threshold={best.threshold!r} F={best.f_measure:.5f}\n")
