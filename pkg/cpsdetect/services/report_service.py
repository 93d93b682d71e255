import json
import logging
from pathlib import Path
from typing import Union

import pandas as pd

from cpsdetect.exceptions import DataException
from cpsdetect.schemas.eval import EvalReport
from cpsdetect.services import eval_service

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# detector name -> export file expected in a run directory
EXPORT_FILES = {"dnn": "dnn_export.csv", "svm": "svm_export.csv"}
SUMMARY_FILE = "summary.json"
PER_ATTACK_FILE = "per_attack.csv"
PER_ATTACK_COLUMNS = ["detector", "attack_id", "recall"]


def run_export_path(run_dir: PathLike, detector: str) -> Path:
    return Path(run_dir) / EXPORT_FILES[detector]


def summary_path(run_dir: PathLike) -> Path:
    return Path(run_dir) / SUMMARY_FILE


def per_attack_path(run_dir: PathLike) -> Path:
    return Path(run_dir) / PER_ATTACK_FILE


def collect_reports(run_dir: PathLike) -> dict[str, EvalReport]:
    """Evaluate every detector export present in a run directory"""
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise DataException(f"run directory not found: {run_dir}")
    reports = {}
    for detector in EXPORT_FILES:
        path = run_export_path(run_dir, detector)
        if path.exists():
            reports[detector] = eval_service.evaluate_export(eval_service.read_trace(path))
    if not reports:
        raise DataException(f"{run_dir} holds none of {sorted(EXPORT_FILES.values())}")
    return reports


def report(run_dir: PathLike) -> dict[str, EvalReport]:
    """Write summary.json and per_attack.csv for a run directory.

    Detectors without an export are left out of the summary rather than zeroed.
    Outputs depend only on the exports, so re-running rewrites identical files.
    """
    run_dir = Path(run_dir)
    reports = collect_reports(run_dir)
    summary = {detector: r.model_dump(mode="json") for detector, r in reports.items()}
    summary_path(run_dir).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    rows = [
        {"detector": detector, "attack_id": attack_id, "recall": recall}
        for detector, r in reports.items()
        for attack_id, recall in sorted(r.per_attack_recall.items())
    ]
    pd.DataFrame(rows, columns=PER_ATTACK_COLUMNS).to_csv(per_attack_path(run_dir), index=False, lineterminator="\n")
    logger.info("Report written: run_dir=%s, detectors=%s", run_dir, ",".join(reports))
    return reports
