import hashlib
import logging
import struct
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from cpsdetect import layers
from cpsdetect.exceptions import DataException, NumericalException, SchemaMismatchException
from cpsdetect.logging_config import log_duration
from cpsdetect.models.density_net import DensityNet, ScoreTrace
from cpsdetect.models.log import UNLABELED_CODE, Log, LogEntry
from cpsdetect.schemas.channel import ChannelSchema, NormStats
from cpsdetect.schemas.density_net import DensityNetConfig, DensityNetHeader, ParamShape
from cpsdetect.services.log_service import compute_norm_stats, encode_entries, normalize

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
State = tuple[np.ndarray, np.ndarray]

MAGIC = b"CPSDNET\n"
FORMAT_VERSION = 1
_PREAMBLE = struct.Struct("<8sHI")
TRACE_FACTOR_COLUMN = "outlier_factor"
TRACE_TERM_PREFIX = "nll:"


def _param_layout(schema: ChannelSchema, hidden: int) -> dict[str, tuple[tuple[int, ...], int]]:
    """Shape and fan-in of every parameter, in serialization order"""
    d = schema.feature_dim("onehot")
    layout: dict[str, tuple[tuple[int, ...], int]] = {
        "lstm.Wx": ((d, 4 * hidden), d + hidden),
        "lstm.Wh": ((hidden, 4 * hidden), d + hidden),
        "lstm.b": ((4 * hidden,), d + hidden),
    }
    for j, arity in enumerate(schema.arities):
        layout[f"act.{j}.V"] = ((hidden, arity), hidden)
        layout[f"act.{j}.b"] = ((arity,), hidden)
    for k in range(schema.m):
        layout[f"sen.{k}.W1"] = ((hidden, hidden), hidden)
        layout[f"sen.{k}.b1"] = ((hidden,), hidden)
        layout[f"sen.{k}.W2"] = ((hidden, 2), hidden)
        layout[f"sen.{k}.b2"] = ((2,), hidden)
    channels = schema.n + schema.m
    for c in range(channels - 1):
        q = schema.arities[c] if c < schema.n else 1
        layout[f"mix.{c}.W"] = ((q, hidden, hidden), hidden + q)
        layout[f"mix.{c}.V1"] = ((hidden, hidden), hidden + q)
        layout[f"mix.{c}.V2"] = ((q, hidden), hidden + q)
        layout[f"mix.{c}.b"] = ((hidden,), hidden + q)
    return layout


def init_net(schema: ChannelSchema, config: DensityNetConfig, norm_stats: Optional[NormStats] = None) -> DensityNet:
    """Fresh net with weights drawn uniformly from +-1/sqrt(fan_in).

    Sensor heads are offset to start near unit variance.
    """
    rng = np.random.Generator(np.random.PCG64(config.seed))
    params = {}
    for name, (shape, fan_in) in _param_layout(schema, config.hidden_dim).items():
        bound = 1.0 / np.sqrt(fan_in)
        params[name] = rng.uniform(-bound, bound, size=shape)
    for k in range(schema.m):
        params[f"sen.{k}.b2"][1] += layers.inverse_softplus(1.0 - config.variance_floor)
    return DensityNet(schema=schema, config=config, params=params, norm_stats=norm_stats)


def _check_schema(net: DensityNet, log: Log) -> None:
    if log.schema != net.schema:
        raise SchemaMismatchException(
            f"log channels {log.schema.names} do not match model channels {net.schema.names}"
        )


def _mixer_input(net: DensityNet, c: int, positions: np.ndarray, values: np.ndarray) -> np.ndarray:
    n = net.schema.n
    if c < n:
        return layers.one_hot(positions[:, c], net.schema.arities[c])
    return values[:, c - n][:, None]


def _score_entry(net: DensityNet, z: np.ndarray, positions: np.ndarray, values: np.ndarray, keep: bool):
    """Per-channel negative log-probabilities of one entry given the context z"""
    p = net.params
    n = net.schema.n
    channels = net.channel_count
    terms = np.zeros((z.shape[0], channels))
    caches = []
    for c in range(channels):
        if c < n:
            nll, head = layers.actuator_head_forward(z, positions[:, c], p[f"act.{c}.V"], p[f"act.{c}.b"])
        else:
            k = c - n
            nll, head = layers.sensor_head_forward(
                z, values[:, k], p[f"sen.{k}.W1"], p[f"sen.{k}.b1"], p[f"sen.{k}.W2"], p[f"sen.{k}.b2"],
                net.config.variance_floor,
            )
        if not np.all(np.isfinite(nll)):
            raise NumericalException(f"non-finite negative log-probability on channel {net.schema.names[c]}")
        terms[:, c] = nll
        mix = None
        if c < channels - 1:
            e = _mixer_input(net, c, positions, values)
            z, mix = layers.mixer_forward(z, e, p[f"mix.{c}.W"], p[f"mix.{c}.V1"], p[f"mix.{c}.V2"], p[f"mix.{c}.b"])
        if keep:
            caches.append((head, mix))
    return terms, caches


def _score_entry_backward(net: DensityNet, caches, grads: dict[str, np.ndarray]) -> np.ndarray:
    p = net.params
    n = net.schema.n
    dz = None
    for c in range(len(caches) - 1, -1, -1):
        head, mix = caches[c]
        if mix is not None:
            dz, g = layers.mixer_backward(dz, mix, p[f"mix.{c}.W"], p[f"mix.{c}.V1"])
            for key, value in g.items():
                grads[f"mix.{c}.{key}"] += value
        ones = np.ones(head[0].shape[0])
        if c < n:
            dz_head, g = layers.actuator_head_backward(ones, head, p[f"act.{c}.V"])
            prefix = f"act.{c}."
        else:
            k = c - n
            dz_head, g = layers.sensor_head_backward(ones, head, p[f"sen.{k}.W1"], p[f"sen.{k}.W2"])
            prefix = f"sen.{k}."
        for key, value in g.items():
            grads[prefix + key] += value
        dz = dz_head if dz is None else dz + dz_head
    return dz


def _run_segment(
    net: DensityNet,
    inputs: np.ndarray,
    positions: np.ndarray,
    values: np.ndarray,
    state: State,
    with_grad: bool = False,
):
    """Score a (T, B, ...) block of entries from `state`.

    Returns the (T, B, channels) terms, the state after consuming the last entry
    and, with `with_grad`, the gradient of the summed terms. The returned state is
    a plain array pair, so gradients never flow past the segment start.
    """
    p = net.params
    steps = inputs.shape[0]
    h, c = state
    terms = np.zeros((steps, inputs.shape[1], net.channel_count))
    entry_caches = []
    step_caches = []
    for t in range(steps):
        terms[t], caches = _score_entry(net, h, positions[t], values[t], with_grad)
        h, c, step = layers.lstm_forward(inputs[t], h, c, p["lstm.Wx"], p["lstm.Wh"], p["lstm.b"])
        if with_grad:
            entry_caches.append(caches)
            step_caches.append(step)
    if not with_grad:
        return terms, (h, c), None

    grads = {name: np.zeros_like(value) for name, value in p.items()}
    dh = np.zeros_like(h)
    dc = np.zeros_like(c)
    for t in range(steps - 1, -1, -1):
        if t < steps - 1:
            dh, dc, g = layers.lstm_backward(dh, dc, step_caches[t], p["lstm.Wh"])
            for key, value in g.items():
                grads[f"lstm.{key}"] += value
        dh = dh + _score_entry_backward(net, entry_caches[t], grads)
    return terms, (h, c), grads


def _sequence_arrays(log: Log) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(T, 1, ...) inputs, positions and values of a whole log"""
    return (
        encode_entries(log, "onehot")[:, None, :],
        np.asarray(log.actuators)[:, None, :],
        np.asarray(log.sensors)[:, None, :],
    )


def _chunked_arrays(log: Log, batch_size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split a log into batch_size contiguous chunks, stacked on the batch axis; the remainder is dropped"""
    chunk = len(log) // batch_size
    used = chunk * batch_size

    def stack(array: np.ndarray) -> np.ndarray:
        return array[:used].reshape(batch_size, chunk, array.shape[1]).transpose(1, 0, 2)

    return stack(encode_entries(log, "onehot")), stack(np.asarray(log.actuators)), stack(np.asarray(log.sensors))


def _encode_entry(schema: ChannelSchema, entry: LogEntry) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    positions = np.array([entry.actuator_values], dtype=np.int64).reshape(1, schema.n)
    values = np.array([entry.sensor_values], dtype=np.float64).reshape(1, schema.m)
    blocks = [layers.one_hot(positions[:, j], arity) for j, arity in enumerate(schema.arities)]
    return np.hstack(blocks + [values]), positions, values


def forward_step(
    net: DensityNet,
    state: State,
    prev_entry: Optional[LogEntry],
    cur_entry: LogEntry,
) -> tuple[State, np.ndarray]:
    """Consume prev_entry (if any) into the LSTM state, then score cur_entry channel by channel.

    Entries must already be normalized. Returns the new state and the per-channel
    negative log-probabilities of cur_entry.
    """
    h, c = state
    if prev_entry is not None:
        x, _, _ = _encode_entry(net.schema, prev_entry)
        p = net.params
        h, c, _ = layers.lstm_forward(x, h, c, p["lstm.Wx"], p["lstm.Wh"], p["lstm.b"])
    _, positions, values = _encode_entry(net.schema, cur_entry)
    terms, _ = _score_entry(net, h, positions, values, keep=False)
    return (h, c), terms[0]


def outlier_factors(net: DensityNet, log: Log) -> ScoreTrace:
    """Score every entry of a log normalized with the training statistics"""
    _check_schema(net, log)
    inputs, positions, values = _sequence_arrays(log)
    terms, _, _ = _run_segment(net, inputs, positions, values, net.zero_state(1))
    breakdown = terms[:, 0, :]
    return ScoreTrace(
        timestamps=np.array(log.timestamps),
        factors=breakdown.sum(axis=1),
        breakdown=breakdown,
        channel_names=net.schema.names,
        labels=np.array(log.labels),
    )


def score(net: DensityNet, log: Log) -> ScoreTrace:
    """Normalize a raw log with the net's training statistics and score it"""
    if net.norm_stats is None:
        raise DataException("model carries no normalization statistics")
    _check_schema(net, log)
    trace = outlier_factors(net, normalize(log, net.norm_stats))
    logger.info("Log scored: entries=%d, mean_factor=%.6f",
                len(trace), float(trace.factors.mean()) if len(trace) else float("nan"))
    return trace


def total_cost(net: DensityNet, log: Log, batch_size: int = 1, truncation_len: Optional[int] = None) -> float:
    """Training objective (sum of outlier factors) over a normalized log, without updating parameters"""
    _check_schema(net, log)
    if len(log) < batch_size:
        raise DataException(f"log of {len(log)} entries is shorter than batch size {batch_size}")
    inputs, positions, values = _chunked_arrays(log, batch_size)
    steps = inputs.shape[0]
    span = truncation_len or steps
    state = net.zero_state(batch_size)
    total = 0.0
    for start in range(0, steps, span):
        stop = min(start + span, steps)
        terms, state, _ = _run_segment(net, inputs[start:stop], positions[start:stop], values[start:stop], state)
        total += float(terms.sum())
    return total


class _Adam:
    """Adam update applied in place to a parameter dict"""

    def __init__(self, params: dict[str, np.ndarray], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(value) for name, value in params.items()}
        self.v = {name: np.zeros_like(value) for name, value in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for name, grad in grads.items():
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * grad ** 2
            m_hat = self.m[name] / correction1
            v_hat = self.v[name] / correction2
            self.params[name] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train(
    config: DensityNetConfig,
    train_log: Log,
    holdout_log: Optional[Log] = None,
    checkpoint_dir: Optional[PathLike] = None,
    created_at: Optional[str] = None,
) -> DensityNet:
    """Train a density net on a normal log.

    The log is normalized with its own statistics (kept on the net), split into
    batch_size contiguous chunks and walked in truncation_len steps; each step is one
    Adam update of the summed outlier factors. With a holdout log, its mean cost is
    recorded after every epoch; with a checkpoint directory, the net is saved after
    every epoch as epoch_NNN.bin.
    """
    if train_log.attack_mask.any():
        raise DataException("training log must contain only Normal entries")
    needed = config.batch_size * config.truncation_len
    if len(train_log) < needed:
        raise DataException(
            f"training log has {len(train_log)} entries, needs batch_size x truncation_len = {needed}"
        )
    stats = compute_norm_stats(train_log)
    net = init_net(train_log.schema, config, stats)
    inputs, positions, values = _chunked_arrays(normalize(train_log, stats), config.batch_size)
    holdout = normalize(holdout_log, stats) if holdout_log is not None else None
    if holdout is not None:
        _check_schema(net, holdout)
    if checkpoint_dir is not None:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)

    optimizer = _Adam(net.params, config.learning_rate)
    steps = inputs.shape[0]
    entries = steps * config.batch_size
    logger.info("Training started: entries=%d, chunks=%d, hidden_dim=%d, epochs=%d",
                entries, config.batch_size, config.hidden_dim, config.epochs)
    for epoch in range(1, config.epochs + 1):
        with log_duration(logger, "Epoch", epoch=epoch):
            state = net.zero_state(config.batch_size)
            epoch_cost = 0.0
            for step, start in enumerate(range(0, steps, config.truncation_len)):
                stop = min(start + config.truncation_len, steps)
                terms, state, grads = _run_segment(
                    net, inputs[start:stop], positions[start:stop], values[start:stop], state, with_grad=True
                )
                cost = float(terms.sum())
                if not np.isfinite(cost) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                    raise NumericalException(f"non-finite training cost at epoch {epoch}, step {step}")
                optimizer.step(grads)
                epoch_cost += cost
        net.history.append(epoch_cost / entries)
        if holdout is not None:
            net.holdout_history.append(total_cost(net, holdout) / len(holdout))
        logger.info("Epoch trained: epoch=%d, mean_cost=%.6f%s", epoch, net.history[-1],
                    f", holdout_cost={net.holdout_history[-1]:.6f}" if holdout is not None else "")
        if checkpoint_dir is not None:
            save(net, Path(checkpoint_dir) / f"epoch_{epoch:03d}.bin", created_at=created_at)
    return net


def gradient_check(
    config: DensityNetConfig,
    tiny_log: Log,
    step: float = 1e-5,
    net: Optional[DensityNet] = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Meant for tiny instances (hidden_dim up to 8, a few dozen entries): every
    parameter entry is perturbed, with the whole log as one truncation segment.
    """
    net = net or init_net(tiny_log.schema, config)
    inputs, positions, values = _sequence_arrays(tiny_log)

    def loss() -> float:
        terms, _, _ = _run_segment(net, inputs, positions, values, net.zero_state(1))
        return float(terms.sum())

    _, _, analytic = _run_segment(net, inputs, positions, values, net.zero_state(1), with_grad=True)
    worst = 0.0
    for name, param in net.params.items():
        flat = param.reshape(-1)
        grad = analytic[name].reshape(-1)
        for idx in range(flat.size):
            original = flat[idx]
            flat[idx] = original + step
            plus = loss()
            flat[idx] = original - step
            minus = loss()
            flat[idx] = original
            numeric = (plus - minus) / (2.0 * step)
            error = abs(grad[idx] - numeric) / max(abs(grad[idx]), abs(numeric), 1e-3)
            worst = max(worst, error)
    logger.info("Gradient check finished: params=%d, max_rel_error=%.3e",
                sum(p.size for p in net.params.values()), worst)
    return worst


def save(net: DensityNet, path: PathLike, created_at: Optional[str] = None) -> None:
    """Write a checkpoint: preamble, JSON header, then little-endian float64 parameters"""
    names = list(_param_layout(net.schema, net.config.hidden_dim))
    payload = b"".join(np.ascontiguousarray(net.params[name], dtype="<f8").tobytes() for name in names)
    header = DensityNetHeader(
        format_version=FORMAT_VERSION,
        channels=net.schema,
        config=net.config,
        norm_stats=net.norm_stats,
        history=net.history,
        holdout_history=net.holdout_history,
        params=[ParamShape(name=name, shape=list(net.params[name].shape)) for name in names],
        sha256=hashlib.sha256(payload).hexdigest(),
        created_at=created_at or datetime.now(timezone.utc).isoformat(),
    )
    header_bytes = header.model_dump_json().encode("utf-8")
    path = Path(path)
    path.write_bytes(_PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(header_bytes)) + header_bytes + payload)
    logger.info("Model saved: path=%s, params=%d", path, len(names))


def load(path: PathLike) -> DensityNet:
    """Read a checkpoint written by save; any inconsistency raises DataException"""
    path = Path(path)
    if not path.exists():
        raise DataException(f"file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < _PREAMBLE.size:
        raise DataException(f"{path} is too short to be a model file")
    magic, version, header_len = _PREAMBLE.unpack_from(raw)
    if magic != MAGIC:
        raise DataException(f"{path} is not a density net model file")
    if version != FORMAT_VERSION:
        raise DataException(f"unsupported model format version {version}")
    start = _PREAMBLE.size
    try:
        header = DensityNetHeader.model_validate_json(raw[start:start + header_len])
    except (ValidationError, ValueError) as exc:
        raise DataException(f"corrupted model header in {path}: {exc}") from exc
    payload = raw[start + header_len:]
    if hashlib.sha256(payload).hexdigest() != header.sha256:
        raise DataException(f"parameter checksum mismatch in {path}")

    layout = _param_layout(header.channels, header.config.hidden_dim)
    if [p.name for p in header.params] != list(layout):
        raise DataException(f"parameter layout in {path} does not match its schema")
    params = {}
    offset = 0
    for entry in header.params:
        shape = tuple(entry.shape)
        if shape != layout[entry.name][0]:
            raise DataException(f"parameter {entry.name} has shape {shape}, expected {layout[entry.name][0]}")
        size = int(np.prod(shape)) * 8
        if offset + size > len(payload):
            raise DataException(f"truncated parameter data in {path}")
        params[entry.name] = np.frombuffer(payload, dtype="<f8", count=size // 8, offset=offset).reshape(shape).copy()
        offset += size
    if offset != len(payload):
        raise DataException(f"trailing bytes after parameter data in {path}")
    logger.info("Model loaded: path=%s, hidden_dim=%d", path, header.config.hidden_dim)
    return DensityNet(
        schema=header.channels,
        config=header.config,
        params=params,
        norm_stats=header.norm_stats,
        history=list(header.history),
        holdout_history=list(header.holdout_history),
    )


def write_trace(trace: ScoreTrace, path: PathLike) -> None:
    """Trace CSV: timestamp, outlier_factor and one nll:<channel> column per channel"""
    columns: dict[str, object] = {"timestamp": trace.timestamps, TRACE_FACTOR_COLUMN: trace.factors}
    for c, name in enumerate(trace.channel_names):
        columns[TRACE_TERM_PREFIX + name] = trace.breakdown[:, c]
    pd.DataFrame(columns).to_csv(path, index=False, lineterminator="\n")
    logger.info("Trace written: path=%s, entries=%d", path, len(trace))


def read_trace(path: PathLike) -> ScoreTrace:
    path = Path(path)
    if not path.exists():
        raise DataException(f"file not found: {path}")
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataException(f"unreadable trace file {path}: {exc}") from exc
    if list(frame.columns[:2]) != ["timestamp", TRACE_FACTOR_COLUMN]:
        raise DataException(f"{path} is not a score trace")
    term_columns = [c for c in frame.columns[2:] if c.startswith(TRACE_TERM_PREFIX)]
    factors = frame[TRACE_FACTOR_COLUMN].to_numpy(dtype=np.float64)
    return ScoreTrace(
        timestamps=frame["timestamp"].to_numpy(dtype=np.int64),
        factors=factors,
        breakdown=frame[term_columns].to_numpy(dtype=np.float64).reshape(len(frame), len(term_columns)),
        channel_names=[c[len(TRACE_TERM_PREFIX):] for c in term_columns],
        labels=np.full(len(frame), UNLABELED_CODE, dtype=np.int64),
    )
