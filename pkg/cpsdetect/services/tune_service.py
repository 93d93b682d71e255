import logging
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.stats import expon
from sklearn.model_selection import ParameterGrid, ParameterSampler

from cpsdetect.exceptions import AppException, NumericalException
from cpsdetect.logging_config import log_duration
from cpsdetect.models.density_net import ScoreTrace
from cpsdetect.models.log import Log
from cpsdetect.models.svm import WindowSet
from cpsdetect.schemas.channel import ActuatorEncoding
from cpsdetect.schemas.svm import SvmConfig
from cpsdetect.schemas.tune import GridSpec, Objective, OperatingPoint, RandomSearchSpec, TuneRow
from cpsdetect.services import eval_service, svm_service
from cpsdetect.services.log_service import split_log

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FAILED_SENTINEL = "NaN"
TABLE_COLUMNS = ["index", "w", "nu", "gamma", "F", "test_F", "status", "error"]
OPERATING_POINT_COLUMNS = ["hidden_dim", "epoch", "threshold", "f_measure", "auc"]


class _WindowCache:
    """Windows per w for the training log and the evaluation (and test) split"""

    def __init__(self, train_log: Log, eval_log: Log, objective: Objective, encoding: ActuatorEncoding):
        self.train_log = train_log
        self.encoding = encoding
        if objective == "F_on_validation":
            self.eval_log, self.test_log = split_log(eval_log, 0.5)
        else:
            self.eval_log, self.test_log = eval_log, None
        self._cache: dict[int, tuple[WindowSet, WindowSet, Optional[WindowSet]]] = {}

    def get(self, w: int) -> tuple[WindowSet, WindowSet, Optional[WindowSet]]:
        if w not in self._cache:
            self._cache[w] = (
                svm_service.prepare_windows(self.train_log, w, self.encoding),
                svm_service.prepare_windows(self.eval_log, w, self.encoding),
                svm_service.prepare_windows(self.test_log, w, self.encoding) if self.test_log is not None else None,
            )
        return self._cache[w]


def _run_cell(index: int, config: SvmConfig, cache: _WindowCache) -> TuneRow:
    row = TuneRow(index=index, w=config.w, nu=config.nu, gamma=config.gamma)
    try:
        train_windows, eval_windows, test_windows = cache.get(config.w)
        with log_duration(logger, "Tuning cell", index=index, w=config.w, nu=config.nu, gamma=config.gamma):
            model = svm_service.train_svm(config, train_windows)
            row.f_measure = eval_service.evaluate_svm(svm_service.predict(model, eval_windows), eval_windows).f_measure
            if test_windows is not None:
                row.test_f_measure = eval_service.evaluate_svm(
                    svm_service.predict(model, test_windows), test_windows
                ).f_measure
    except AppException as exc:
        logger.warning("Tuning cell failed: index=%d, error=%s", index, exc.message)
        row.f_measure = None
        row.status = "failed"
        row.error = exc.message
    return row


def _sort_rows(rows: list[TuneRow]) -> list[TuneRow]:
    return sorted(rows, key=lambda r: (r.status != "ok", -(r.f_measure or 0.0), r.index))


def grid_search(spec: GridSpec, train_log: Log, eval_log: Log) -> list[TuneRow]:
    """Train and evaluate every (w, nu, gamma) cell; rows sorted by F descending, failed cells last"""
    cache = _WindowCache(train_log, eval_log, spec.objective, spec.encoding)
    rows = []
    index = 0
    for w in spec.w_values:
        gammas = list(spec.gamma_values)
        if spec.include_default_gamma:
            default = svm_service.default_gamma(train_log.schema.feature_dim(spec.encoding) * w)
            if default not in gammas:
                gammas.append(default)
        for cell in ParameterGrid({"nu": spec.nu_values, "gamma": gammas}):
            config = SvmConfig(w=w, nu=cell["nu"], gamma=cell["gamma"], encoding=spec.encoding,
                               solver_tol=spec.solver_tol, max_iter=spec.max_iter)
            rows.append(_run_cell(index, config, cache))
            index += 1
    failed = sum(r.status == "failed" for r in rows)
    logger.info("Grid search finished: cells=%d, failed=%d", len(rows), failed)
    return _sort_rows(rows)


def sample_random_configs(spec: RandomSearchSpec) -> list[tuple[float, float]]:
    """(nu, gamma) pairs drawn independently from an exponential with mean `scale`"""
    sampler = ParameterSampler(
        {"nu": expon(scale=spec.scale), "gamma": expon(scale=spec.scale)},
        n_iter=spec.trials,
        random_state=np.random.RandomState(spec.seed),
    )
    return [(float(p["nu"]), float(p["gamma"])) for p in sampler]


def random_search(spec: RandomSearchSpec, train_log: Log, eval_log: Log) -> tuple[SvmConfig, float, list[TuneRow]]:
    """Random refinement; returns the best config, its F and every trial in trial order"""
    cache = _WindowCache(train_log, eval_log, spec.objective, spec.encoding)
    points = sample_random_configs(spec)
    if spec.incumbent is not None:
        points.insert(0, (spec.incumbent.nu, spec.incumbent.gamma))
    rows = []
    for index, (nu, gamma) in enumerate(points):
        if not 0 < nu <= 1 or gamma <= 0:
            rows.append(TuneRow(index=index, w=spec.w, nu=nu, gamma=gamma, status="failed",
                                error="sample outside the legal parameter range"))
            continue
        config = SvmConfig(w=spec.w, nu=nu, gamma=gamma, encoding=spec.encoding,
                           solver_tol=spec.solver_tol, max_iter=spec.max_iter)
        rows.append(_run_cell(index, config, cache))

    succeeded = [r for r in rows if r.status == "ok"]
    if not succeeded:
        raise NumericalException("no random-search trial succeeded")
    best = _sort_rows(succeeded)[0]
    best_config = SvmConfig(w=spec.w, nu=best.nu, gamma=best.gamma, encoding=spec.encoding,
                            solver_tol=spec.solver_tol, max_iter=spec.max_iter)
    logger.info("Random search finished: trials=%d, best_index=%d, best_f=%.5f", len(rows), best.index, best.f_measure)
    return best_config, best.f_measure, rows


EpochTraces = Sequence[Union[ScoreTrace, np.ndarray]]


def select_dnn_operating_point(
    traces: Union[EpochTraces, Mapping[int, EpochTraces]],
    labels: np.ndarray,
) -> tuple[OperatingPoint, list[OperatingPoint]]:
    """Best (hidden_dim, epoch, threshold) by F over per-epoch traces.

    A plain sequence holds the epochs of one net; a mapping keys the epoch traces of
    each net by its hidden size. Ties go to the smallest net, then the earliest epoch.
    """
    by_size = {None: traces} if not isinstance(traces, Mapping) else dict(sorted(traces.items()))
    if not any(len(epochs) for epochs in by_size.values()):
        raise NumericalException("no epoch traces to select from")
    truth = eval_service.truth_from_codes(labels)
    points = []
    for hidden_dim, epochs in by_size.items():
        for epoch, trace in enumerate(epochs, start=1):
            scores = trace.factors if isinstance(trace, ScoreTrace) else np.asarray(trace)
            sweep = eval_service.threshold_sweep(scores, truth)
            points.append(OperatingPoint(hidden_dim=hidden_dim, epoch=epoch, threshold=sweep.best_threshold,
                                         f_measure=sweep.best_f, auc=sweep.auc))
    best = points[0]
    for point in points[1:]:
        if point.f_measure > best.f_measure:
            best = point
    logger.info("Operating point selected: hidden_dim=%s, epoch=%d, threshold=%.6g, f=%.5f",
                best.hidden_dim, best.epoch, best.threshold, best.f_measure)
    return best, points


def write_table(rows: Sequence[TuneRow], path: PathLike) -> None:
    """Tuning table as CSV; failed cells carry the NaN sentinel in the F column"""
    frame = pd.DataFrame(
        [
            {
                "index": r.index,
                "w": r.w,
                "nu": repr(r.nu),
                "gamma": repr(r.gamma),
                "F": repr(r.f_measure) if r.f_measure is not None else FAILED_SENTINEL,
                "test_F": repr(r.test_f_measure) if r.test_f_measure is not None else "",
                "status": r.status,
                "error": r.error,
            }
            for r in rows
        ],
        columns=TABLE_COLUMNS,
    )
    frame.to_csv(path, index=False, lineterminator="\n")
    logger.info("Tuning table written: path=%s, rows=%d", path, len(rows))


def write_operating_points(points: Sequence[OperatingPoint], path: PathLike) -> None:
    frame = pd.DataFrame([p.model_dump() for p in points], columns=OPERATING_POINT_COLUMNS)
    frame.to_csv(path, index=False, lineterminator="\n")
