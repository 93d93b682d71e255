import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from sklearn.metrics import auc, roc_curve

from cpsdetect.exceptions import DataException
from cpsdetect.models.density_net import ScoreTrace
from cpsdetect.models.log import UNLABELED_CODE
from cpsdetect.models.svm import ABNORMAL_VERDICT, NORMAL_VERDICT, SvmPrediction, WindowSet
from cpsdetect.schemas.eval import CountingMode, EvalReport

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

ATTACK_ID_SEPARATOR = ";"


@dataclass(frozen=True)
class SweepResult:
    best_threshold: float
    best_f: float
    fpr: np.ndarray
    tpr: np.ndarray
    auc: Optional[float]  # None when only one class is present


@dataclass(frozen=True)
class ExportedTrace:
    """Rows of an exported trace file"""

    timestamps: np.ndarray
    scores: np.ndarray  # outlier factor, or decision value for windows
    truth: np.ndarray  # bool
    attack_ids: list[frozenset[int]]
    predicted: Optional[np.ndarray] = None  # bool, when the export carried verdicts
    kind: str = "entry"

    def __len__(self) -> int:
        return len(self.timestamps)


def metrics_from_counts(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Precision, recall and F measure; zero denominators yield 0"""
    if min(tp, fp, fn) < 0:
        raise DataException(f"counts must be non-negative, got tp={tp}, fp={fp}, fn={fn}")
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    return precision, recall, f_from_pr(precision, recall)


def f_from_pr(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def truth_from_codes(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    if np.any(labels == UNLABELED_CODE):
        raise DataException("evaluation needs a fully labeled log")
    return labels >= 0


def _roc(truth: np.ndarray, scores: np.ndarray) -> tuple[np.ndarray, np.ndarray, Optional[float]]:
    if truth.all() or not truth.any():
        return np.zeros(0), np.zeros(0), None
    fpr, tpr, _ = roc_curve(truth.astype(int), scores)
    return fpr, tpr, float(auc(fpr, tpr))


def threshold_sweep(scores: np.ndarray, truth: np.ndarray) -> SweepResult:
    """Best-F threshold over every distinct score (plus one below the minimum).

    An entry is flagged when its score is strictly above the threshold; ties in F go
    to the smallest threshold.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=bool)
    if scores.shape != truth.shape:
        raise DataException(f"{len(scores)} scores against {len(truth)} labels")
    if len(scores) == 0:
        raise DataException("cannot sweep thresholds over an empty trace")
    candidates = np.unique(scores)
    candidates = np.concatenate([[np.nextafter(candidates[0], -np.inf)], candidates])

    attack_scores = np.sort(scores[truth])
    normal_scores = np.sort(scores[~truth])
    tp = len(attack_scores) - np.searchsorted(attack_scores, candidates, side="right")
    fp = len(normal_scores) - np.searchsorted(normal_scores, candidates, side="right")
    fn = len(attack_scores) - tp
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(tp + fp > 0, tp / np.maximum(tp + fp, 1), 0.0)
        recall = np.where(tp + fn > 0, tp / np.maximum(tp + fn, 1), 0.0)
        f = np.where(precision + recall > 0, 2 * precision * recall / (precision + recall), 0.0)
    best = int(np.argmax(f))
    fpr, tpr, area = _roc(truth, scores)
    return SweepResult(best_threshold=float(candidates[best]), best_f=float(f[best]), fpr=fpr, tpr=tpr, auc=area)


def normal_threshold(scores: Union[ScoreTrace, np.ndarray], quantile: float = 0.99) -> float:
    """Operating threshold taken from outlier factors of a normal validation run.

    The threshold is the quantile-th factor itself, so at most a 1 - quantile share
    of the validation entries lies strictly above it.
    """
    scores = np.asarray(scores.factors if isinstance(scores, ScoreTrace) else scores, dtype=np.float64)
    if not 0.0 < quantile <= 1.0:
        raise DataException(f"quantile must lie in (0, 1], got {quantile}")
    if len(scores) == 0:
        raise DataException("cannot take a threshold from an empty validation trace")
    if not np.all(np.isfinite(scores)):
        raise DataException("validation trace holds non-finite outlier factors")
    threshold = float(np.quantile(scores, quantile, method="higher"))
    logger.info("Validation threshold chosen: entries=%d, quantile=%.4g, threshold=%.6g",
                len(scores), quantile, threshold)
    return threshold


def _report(
    mode: CountingMode,
    predicted: np.ndarray,
    truth: np.ndarray,
    attack_sets: Sequence[frozenset[int]],
    scores: np.ndarray,
    threshold: Optional[float],
) -> EvalReport:
    tp = int(np.sum(predicted & truth))
    fp = int(np.sum(predicted & ~truth))
    fn = int(np.sum(~predicted & truth))
    tn = int(np.sum(~predicted & ~truth))
    precision, recall, f = metrics_from_counts(tp, fp, fn)
    normals = fp + tn
    per_attack: dict[int, list[bool]] = {}
    for flagged, ids in zip(predicted, attack_sets):
        for attack_id in ids:
            per_attack.setdefault(attack_id, []).append(bool(flagged))
    _, _, area = _roc(truth, scores)
    return EvalReport(
        counting_mode=mode,
        precision=precision,
        recall=recall,
        f_measure=f,
        auc=area,
        auc_defined=area is not None,
        false_alarm_rate=fp / normals if normals else 0.0,
        per_attack_recall={a: float(np.mean(v)) for a, v in sorted(per_attack.items())},
        threshold=threshold,
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
    )


def evaluate_dnn(trace: Union[ScoreTrace, np.ndarray], labels: np.ndarray, threshold: float) -> EvalReport:
    """Entry-counted metrics; an entry is abnormal when its outlier factor exceeds the threshold"""
    scores = np.asarray(trace.factors if isinstance(trace, ScoreTrace) else trace, dtype=np.float64)
    labels = np.asarray(labels)
    if len(scores) != len(labels):
        raise DataException(f"trace has {len(scores)} entries, labels have {len(labels)}")
    truth = truth_from_codes(labels)
    attack_sets = [frozenset([int(c)]) if c >= 0 else frozenset() for c in labels]
    report = _report("PerEntry", scores > threshold, truth, attack_sets, scores, threshold)
    logger.info("DNN evaluated: entries=%d, threshold=%.6g, precision=%.5f, recall=%.5f, f=%.5f",
                len(scores), threshold, report.precision, report.recall, report.f_measure)
    return report


def evaluate_svm(prediction: SvmPrediction, windows: WindowSet) -> EvalReport:
    """Window-counted metrics; multi-attack windows count toward every attack they contain"""
    if len(prediction) != len(windows) or not np.array_equal(prediction.start_index, windows.start_index):
        raise DataException(f"{len(prediction)} verdicts do not align with {len(windows)} windows")
    report = _report(
        "PerWindow",
        np.asarray(prediction.abnormal, dtype=bool),
        np.asarray(windows.abnormal, dtype=bool),
        windows.attack_ids,
        -np.asarray(prediction.decision_value),
        None,
    )
    logger.info("SVM evaluated: windows=%d, precision=%.5f, recall=%.5f, f=%.5f, false_alarm_rate=%.5f",
                len(prediction), report.precision, report.recall, report.f_measure, report.false_alarm_rate)
    return report


def _format_ids(ids: frozenset[int]) -> str:
    return ATTACK_ID_SEPARATOR.join(str(a) for a in sorted(ids))


def export_trace(
    result: Union[ScoreTrace, SvmPrediction],
    truth: Union[np.ndarray, WindowSet],
    path: PathLike,
    timestamps: Optional[np.ndarray] = None,
    threshold: Optional[float] = None,
) -> None:
    """Plot-ready CSV: timestamp, score or verdict, truth flag (1/0) and attack ids.

    For a score trace `truth` is the log's label codes and `threshold`, when given, adds
    a predicted column. For SVM verdicts `truth` is the WindowSet and `timestamps` the
    log timestamps, from which each window's first-entry timestamp is taken.
    """
    if isinstance(result, ScoreTrace):
        codes = np.asarray(truth)
        if len(codes) != len(result):
            raise DataException(f"trace has {len(result)} entries, labels have {len(codes)}")
        columns: dict[str, object] = {
            "timestamp": result.timestamps,
            "outlier_factor": result.factors,
        }
        if threshold is not None:
            columns["predicted"] = (result.factors > threshold).astype(int)
        columns["truth"] = (codes >= 0).astype(int)
        columns["attack_id"] = [str(int(c)) if c >= 0 else "" for c in codes]
    else:
        windows = truth
        if not isinstance(windows, WindowSet) or len(windows) != len(result):
            raise DataException("SVM verdicts must be exported against their windows")
        stamps = np.asarray(timestamps)[result.start_index] if timestamps is not None else windows.timestamps
        columns = {
            "timestamp": stamps,
            "start_index": result.start_index,
            "decision_value": result.decision_value,
            "verdict": np.where(result.abnormal, ABNORMAL_VERDICT, NORMAL_VERDICT),
            "truth": windows.abnormal.astype(int),
            "attack_id": [_format_ids(ids) for ids in windows.attack_ids],
        }
    pd.DataFrame(columns).to_csv(path, index=False, lineterminator="\n")
    logger.info("Trace exported: path=%s, rows=%d", path, len(result))


def read_trace(path: PathLike) -> ExportedTrace:
    """Re-ingest a file written by export_trace"""
    path = Path(path)
    if not path.exists():
        raise DataException(f"file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype={"attack_id": str}, keep_default_na=False, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataException(f"unreadable trace export {path}: {exc}") from exc
    required = {"timestamp", "truth", "attack_id"}
    if not required <= set(frame.columns):
        raise DataException(f"{path} is not a trace export")
    attack_ids = [
        frozenset(int(a) for a in str(cell).split(ATTACK_ID_SEPARATOR) if a != "") for cell in frame["attack_id"]
    ]
    truth = frame["truth"].to_numpy(dtype=np.int64) == 1
    if "outlier_factor" in frame.columns:
        predicted = frame["predicted"].to_numpy(dtype=np.int64) == 1 if "predicted" in frame.columns else None
        return ExportedTrace(
            timestamps=frame["timestamp"].to_numpy(dtype=np.int64),
            scores=frame["outlier_factor"].to_numpy(dtype=np.float64),
            truth=truth,
            attack_ids=attack_ids,
            predicted=predicted,
            kind="entry",
        )
    if "decision_value" in frame.columns:
        return ExportedTrace(
            timestamps=frame["timestamp"].to_numpy(dtype=np.int64),
            scores=frame["decision_value"].to_numpy(dtype=np.float64),
            truth=truth,
            attack_ids=attack_ids,
            predicted=(frame["verdict"].astype(str).str.strip() == ABNORMAL_VERDICT).to_numpy(),
            kind="window",
        )
    raise DataException(f"{path} carries neither outlier factors nor decision values")


def evaluate_export(exported: ExportedTrace) -> EvalReport:
    """Metrics of an exported trace; entry exports without verdicts use the sweep-selected threshold"""
    if exported.kind == "window":
        return _report("PerWindow", exported.predicted, exported.truth, exported.attack_ids,
                       -exported.scores, None)
    threshold = None
    predicted = exported.predicted
    if predicted is None:
        threshold = threshold_sweep(exported.scores, exported.truth).best_threshold
        predicted = exported.scores > threshold
    return _report("PerEntry", predicted, exported.truth, exported.attack_ids, exported.scores, threshold)


def render_report_table(reports: dict[str, EvalReport]) -> str:
    """Human-readable comparison table, one row per detector"""
    rows = []
    for name, report in reports.items():
        rows.append({
            "detector": name,
            "counting": report.counting_mode,
            "precision": f"{report.precision:.5f}",
            "recall": f"{report.recall:.5f}",
            "F": f"{report.f_measure:.5f}",
            "AUC": f"{report.auc:.5f}" if report.auc is not None else "undefined",
            "false_alarm_rate": f"{report.false_alarm_rate:.5f}",
        })
    return pd.DataFrame(rows).to_string(index=False)
