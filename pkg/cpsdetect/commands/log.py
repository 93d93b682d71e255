import argparse
import json
import logging
import shutil
from pathlib import Path

from cpsdetect.commands.context import RunContext, load_config
from cpsdetect.config import settings
from cpsdetect.exceptions import UsageException
from cpsdetect.logging_config import log_duration
from cpsdetect.schemas.plant import Scenario
from cpsdetect.services import log_service, plant_service

logger = logging.getLogger(__name__)

SUITE_INDEX = "suite.json"
SUITE_TRAIN_FILE = "train.csv"


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("simulate", help="Simulate the water-treatment plant")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--scenario", help="Scenario JSON (plant config plus attacks)")
    source.add_argument("--suite", metavar="DIR", help="Write the standard scenario suite into DIR")
    parser.add_argument("--out", help="Log CSV output path (with --scenario)")
    parser.add_argument("--train-ticks", type=int, default=20_000)
    parser.add_argument("--test-ticks", type=int, default=6_000)
    parser.add_argument("--noise-std", type=float, default=0.5)
    parser.set_defaults(handler=simulate)

    parser = subparsers.add_parser("ingest", help="Convert a native or SWaT-layout CSV to a native log")
    parser.add_argument("--input", required=True)
    parser.add_argument("--format", choices=["native", "swat-layout"], default="native")
    parser.add_argument("--schema", help="Channel schema JSON (required for swat-layout)")
    parser.add_argument("--out", required=True)
    parser.set_defaults(handler=ingest)


def simulate(args: argparse.Namespace, context: RunContext) -> None:
    """Simulate a scenario file, or write the whole scenario suite"""
    if args.suite is not None:
        _simulate_suite(args, context)
        return
    if args.out is None:
        raise UsageException("--out is required with --scenario")
    scenario = load_config(context, "scenario", Scenario, args.scenario, seed_key="plant.seed")
    log = plant_service.simulate(scenario.plant, scenario.attacks)
    log_service.write_csv(log, context.output(args.out))


def _suite_cache_dir(seed: int, args: argparse.Namespace) -> Path:
    key = f"suite-seed{seed}-train{args.train_ticks}-test{args.test_ticks}-noise{args.noise_std!r}"
    return settings.cache_dir / key


def _write_suite(cache: Path, seed: int, args: argparse.Namespace) -> None:
    suite = plant_service.standard_scenario_suite(seed, args.train_ticks, args.test_ticks, args.noise_std)
    cache.mkdir(parents=True, exist_ok=True)
    log_service.write_csv(suite[0].train_log, cache / SUITE_TRAIN_FILE)
    index = {"seed": seed, "train": SUITE_TRAIN_FILE, "scenarios": []}
    for scenario in suite:
        name = f"{scenario.name}.csv"
        log_service.write_csv(scenario.test_log, cache / name)
        index["scenarios"].append({
            "name": scenario.name,
            "log": name,
            "attacks": [a.model_dump(mode="json") for a in scenario.attacks],
        })
    # written last: its presence marks a complete cache entry
    (cache / SUITE_INDEX).write_text(json.dumps(index, indent=2) + "\n", encoding="utf-8")


def _simulate_suite(args: argparse.Namespace, context: RunContext) -> None:
    seed = context.seed if context.seed is not None else 0
    cache = _suite_cache_dir(seed, args)
    if (cache / SUITE_INDEX).exists():
        logger.info("Suite cache hit: path=%s", cache)
    else:
        with log_duration(logger, "Suite simulation", seed=seed):
            _write_suite(cache, seed, args)
    out = Path(args.suite)
    out.mkdir(parents=True, exist_ok=True)
    index = json.loads((cache / SUITE_INDEX).read_text(encoding="utf-8"))
    files = [index["train"], *(s["log"] for s in index["scenarios"])]
    for name in files:
        shutil.copyfile(cache / name, context.output(out / name))
        sidecar = log_service.schema_sidecar_path(name)
        shutil.copyfile(cache / sidecar, out / sidecar)
    shutil.copyfile(cache / SUITE_INDEX, context.output(out / SUITE_INDEX))


def ingest(args: argparse.Namespace, context: RunContext) -> None:
    schema = log_service.load_schema(context.input(args.schema)) if args.schema else None
    log = log_service.ingest_csv(context.input(args.input), args.format, schema)
    log_service.write_csv(log, context.output(args.out))
