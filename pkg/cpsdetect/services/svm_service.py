import hashlib
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import ValidationError

from cpsdetect.exceptions import DataException, SchemaMismatchException
from cpsdetect.logging_config import log_duration
from cpsdetect.models.log import Log
from cpsdetect.models.svm import ABNORMAL_VERDICT, NORMAL_VERDICT, SvmModel, SvmPrediction, WindowSet
from cpsdetect.schemas.channel import ActuatorEncoding, ChannelSchema
from cpsdetect.schemas.svm import SvmConfig, SvmHeader
from cpsdetect.services.log_service import compute_norm_stats, encode_entries, normalize
from cpsdetect.solver import KernelRows, OneClassSolver, dense_qp_oracle, rbf_gram, recover_rho

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FORMAT_VERSION = 1
VERDICT_COLUMNS = ["start_index", "decision_value", "verdict"]


def extract_windows(log: Log, w: int, encoding: ActuatorEncoding = "onehot") -> WindowSet:
    """All k-w+1 sliding windows of a log; a window is abnormal if any of its entries is an attack"""
    k = len(log)
    if w < 1:
        raise DataException(f"window size must be at least 1, got {w}")
    if k < w:
        raise DataException(f"log of {k} entries is shorter than window size {w}")
    entries = encode_entries(log, encoding)
    d = entries.shape[1]
    features = sliding_window_view(entries, (w, d)).reshape(k - w + 1, w * d)
    codes = sliding_window_view(np.asarray(log.labels), w)
    attack_ids = [frozenset(int(c) for c in row if c >= 0) for row in codes]
    return WindowSet(
        w=w,
        encoding=encoding,
        start_index=np.arange(k - w + 1),
        timestamps=np.asarray(log.timestamps)[:k - w + 1].copy(),
        features=np.ascontiguousarray(features),
        abnormal=(codes >= 0).any(axis=1),
        attack_ids=attack_ids,
    )


def prepare_windows(log: Log, w: int, encoding: ActuatorEncoding = "onehot") -> WindowSet:
    """Normalize a log with its own statistics, then window it"""
    return extract_windows(normalize(log, compute_norm_stats(log)), w, encoding)


def rbf_kernel(x: np.ndarray, y: np.ndarray, gamma: float) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DataException(f"kernel arguments differ in length: {x.shape} vs {y.shape}")
    return float(np.exp(-gamma * np.sum((x - y) ** 2)))


def default_gamma(dim: int) -> float:
    return 1.0 / dim


def train_svm(config: SvmConfig, windows: WindowSet, schema: Optional[ChannelSchema] = None) -> SvmModel:
    """Fit a one-class SVM on normal windows.

    Support vectors are the windows with a non-zero alpha; rho is recovered from the
    free (margin) support vectors.
    """
    size = len(windows)
    if size < 2:
        raise DataException(f"need at least 2 training windows, got {size}")
    if windows.abnormal.any():
        raise DataException("training windows must all be Normal")
    if windows.w != config.w:
        raise DataException(f"windows have w={windows.w}, config has w={config.w}")
    gamma = config.gamma if config.gamma is not None else default_gamma(windows.dim)

    with log_duration(logger, "SVM training", windows=size, nu=config.nu, gamma=gamma):
        rows = KernelRows(windows.features, gamma, cache_rows=config.cache_rows)
        solver = OneClassSolver(rows, config.nu, config.solver_tol)
        iterations = solver.solve(config.max_iter)
        rho = solver.calculate_rho()

    support = np.flatnonzero(solver.alpha > 0)
    logger.info("SVM trained: windows=%d, support_vectors=%d, iterations=%d, rho=%.6g",
                size, len(support), iterations, rho)
    return SvmModel(
        schema=schema,
        w=config.w,
        nu=config.nu,
        gamma=gamma,
        rho=rho,
        encoding=windows.encoding,
        support_vectors=windows.features[support].copy(),
        alphas=solver.alpha[support].copy(),
        n_train=size,
        objective=solver.objective(),
        iterations=iterations,
        margin_tol=config.solver_tol,
    )


def decision_function(model: SvmModel, features: np.ndarray, block: int = 4096) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != model.dim:
        raise DataException(f"window features have dimension {features.shape[-1]}, model expects {model.dim}")
    values = np.empty(len(features))
    for start in range(0, len(features), block):
        chunk = features[start:start + block]
        values[start:start + block] = rbf_gram(chunk, model.support_vectors, model.gamma) @ model.alphas - model.rho
    return values


def predict(model: SvmModel, windows: WindowSet) -> SvmPrediction:
    """Verdict per window, aligned to its first entry.

    A window is Normal when f >= -margin_tol, so margin support vectors, which the
    solver leaves within its tolerance of f = 0, stay Normal.
    """
    if windows.w != model.w:
        raise DataException(f"windows have w={windows.w}, model has w={model.w}")
    values = decision_function(model, windows.features)
    prediction = SvmPrediction(
        start_index=windows.start_index.copy(),
        decision_value=values,
        abnormal=values < -model.margin_tol,
    )
    logger.info("Windows classified: windows=%d, abnormal=%d", len(prediction), int(prediction.abnormal.sum()))
    return prediction


def oracle_model(config: SvmConfig, windows: WindowSet) -> SvmModel:
    """Same model as train_svm, with alphas from the dense QP oracle"""
    gamma = config.gamma if config.gamma is not None else default_gamma(windows.dim)
    Q = rbf_gram(windows.features, windows.features, gamma)
    alpha, objective = dense_qp_oracle(Q, config.nu)
    C = 1.0 / (config.nu * len(windows))
    rho = recover_rho(alpha, Q @ alpha, C, rel_eps=1e-6)
    support = np.flatnonzero(alpha > C * 1e-9)
    return SvmModel(
        schema=None,
        w=config.w,
        nu=config.nu,
        gamma=gamma,
        rho=rho,
        encoding=windows.encoding,
        support_vectors=windows.features[support].copy(),
        alphas=alpha[support].copy(),
        n_train=len(windows),
        objective=objective,
        margin_tol=config.solver_tol,
    )


def save(model: SvmModel, path: PathLike, created_at: Optional[str] = None) -> None:
    """One JSON metadata line, then support vectors and alphas as little-endian float64"""
    if model.schema is None:
        raise DataException("model has no channel schema to record")
    header = SvmHeader(
        format_version=FORMAT_VERSION,
        channels=model.schema,
        w=model.w,
        nu=model.nu,
        gamma=model.gamma,
        rho=model.rho,
        encoding=model.encoding,
        n_support=len(model.alphas),
        dim=model.dim,
        n_train=model.n_train,
        objective=model.objective,
        iterations=model.iterations,
        margin_tol=model.margin_tol,
        created_at=created_at or datetime.now(timezone.utc).isoformat(),
    )
    payload = (np.ascontiguousarray(model.support_vectors, dtype="<f8").tobytes()
               + np.ascontiguousarray(model.alphas, dtype="<f8").tobytes())
    path = Path(path)
    path.write_bytes(header.model_dump_json().encode("utf-8") + b"\n" + payload)
    logger.info("SVM model saved: path=%s, support_vectors=%d, sha256=%s",
                path, header.n_support, hashlib.sha256(payload).hexdigest()[:12])


def load(path: PathLike) -> SvmModel:
    path = Path(path)
    if not path.exists():
        raise DataException(f"file not found: {path}")
    raw = path.read_bytes()
    line_end = raw.find(b"\n")
    if line_end < 0:
        raise DataException(f"{path} is not an SVM model file")
    try:
        header = SvmHeader.model_validate_json(raw[:line_end])
    except (ValidationError, ValueError) as exc:
        raise DataException(f"corrupted SVM model header in {path}: {exc}") from exc
    if header.format_version != FORMAT_VERSION:
        raise DataException(f"unsupported SVM model format version {header.format_version}")
    payload = raw[line_end + 1:]
    expected = (header.n_support * header.dim + header.n_support) * 8
    if len(payload) != expected:
        raise DataException(f"{path} holds {len(payload)} bytes of model data, expected {expected}")
    values = np.frombuffer(payload, dtype="<f8")
    support_vectors = values[:header.n_support * header.dim].reshape(header.n_support, header.dim).copy()
    return SvmModel(
        schema=header.channels,
        w=header.w,
        nu=header.nu,
        gamma=header.gamma,
        rho=header.rho,
        encoding=header.encoding,
        support_vectors=support_vectors,
        alphas=values[header.n_support * header.dim:].copy(),
        n_train=header.n_train,
        objective=header.objective,
        iterations=header.iterations,
        margin_tol=header.margin_tol,
    )


def check_model_schema(model: SvmModel, log: Log) -> None:
    if model.schema is not None and model.schema != log.schema:
        raise SchemaMismatchException(
            f"log channels {log.schema.names} do not match model channels {model.schema.names}"
        )


def write_verdicts(prediction: SvmPrediction, path: PathLike) -> None:
    frame = pd.DataFrame({
        "start_index": prediction.start_index,
        "decision_value": prediction.decision_value,
        "verdict": np.where(prediction.abnormal, ABNORMAL_VERDICT, NORMAL_VERDICT),
    }, columns=VERDICT_COLUMNS)
    frame.to_csv(path, index=False, lineterminator="\n")
    logger.info("Verdicts written: path=%s, windows=%d", path, len(prediction))


def read_verdicts(path: PathLike) -> SvmPrediction:
    path = Path(path)
    if not path.exists():
        raise DataException(f"file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype={"verdict": str}, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataException(f"unreadable verdict file {path}: {exc}") from exc
    if list(frame.columns) != VERDICT_COLUMNS:
        raise DataException(f"{path} is not a verdict file")
    verdicts = frame["verdict"].str.strip()
    unknown = ~verdicts.isin([NORMAL_VERDICT, ABNORMAL_VERDICT])
    if unknown.any():
        raise DataException(f"unknown verdict {verdicts[unknown].iloc[0]!r} in {path}")
    start_index = frame["start_index"].to_numpy(dtype=np.int64)
    return SvmPrediction(
        start_index=start_index,
        decision_value=frame["decision_value"].to_numpy(dtype=np.float64),
        abnormal=(verdicts == ABNORMAL_VERDICT).to_numpy(),
    )
