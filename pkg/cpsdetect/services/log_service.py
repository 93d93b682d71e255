import logging
import re
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from cpsdetect.exceptions import DataException, IngestionException, SchemaMismatchException
from cpsdetect.models.log import NORMAL_CODE, UNLABELED_CODE, Log
from cpsdetect.schemas.channel import (
    ActuatorChannel,
    ActuatorEncoding,
    ChannelSchema,
    NormStats,
    SensorChannel,
)

logger = logging.getLogger(__name__)

CsvFormat = Literal["native", "swat-layout"]
PathLike = Union[str, Path]

SCHEMA_SUFFIX = ".schema.json"
SWAT_TIME_FORMAT = "%d/%m/%Y %I:%M:%S %p"
_ATTACK_LABEL = re.compile(r"^attack(?::(\d+))?$")


def schema_sidecar_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + SCHEMA_SUFFIX)


def load_schema(path: PathLike) -> ChannelSchema:
    """Load a schema sidecar (JSON)"""
    path = Path(path)
    if not path.exists():
        raise DataException(f"schema file not found: {path}")
    try:
        return ChannelSchema.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as exc:
        raise DataException(f"invalid schema file {path}: {exc}") from exc


def save_schema(schema: ChannelSchema, path: PathLike) -> None:
    Path(path).write_text(schema.model_dump_json(indent=2), encoding="utf-8")


def compute_norm_stats(log: Log) -> NormStats:
    """Population mean and variance of every sensor channel"""
    if len(log) == 0:
        raise DataException("cannot compute normalization statistics of an empty log")
    mean = log.sensors.mean(axis=0)
    variance = log.sensors.var(axis=0)
    return NormStats(mean=tuple(float(v) for v in mean), variance=tuple(float(v) for v in variance))


def normalize(log: Log, stats: NormStats) -> Log:
    """Standardize sensor channels with the given stats; zero-variance channels become 0"""
    if len(stats.mean) != log.schema.m:
        raise SchemaMismatchException(
            f"normalization stats cover {len(stats.mean)} sensors, schema has {log.schema.m}"
        )
    mean = np.asarray(stats.mean, dtype=np.float64)
    variance = np.asarray(stats.variance, dtype=np.float64)
    std = np.sqrt(variance)
    constant = variance == 0.0
    scaled = (log.sensors - mean) / np.where(constant, 1.0, std)
    scaled[:, constant] = 0.0
    return log.with_sensors(scaled)


def encode_entries(log: Log, encoding: ActuatorEncoding = "onehot") -> np.ndarray:
    """Feature matrix with one row per entry: encoded actuators, then sensors"""
    k = len(log)
    if encoding == "ordinal":
        return np.hstack([log.actuators.astype(np.float64), log.sensors])
    blocks = []
    for j, arity in enumerate(log.schema.arities):
        onehot = np.zeros((k, arity), dtype=np.float64)
        onehot[np.arange(k), log.actuators[:, j]] = 1.0
        blocks.append(onehot)
    blocks.append(log.sensors)
    return np.hstack(blocks) if blocks else np.zeros((k, 0))


def split_log(log: Log, fraction: float) -> tuple[Log, Log]:
    """Split a log in time; the first part holds `fraction` of the entries"""
    if not 0.0 < fraction < 1.0:
        raise DataException(f"split fraction must be in (0, 1), got {fraction}")
    cut = int(round(len(log) * fraction))
    return log.slice(0, cut), log.slice(cut, len(log))


def format_label(code: int) -> str:
    if code == NORMAL_CODE:
        return "Normal"
    if code == UNLABELED_CODE:
        return "Unlabeled"
    return f"Attack:{code}"


def parse_label(text: str, line: int) -> int:
    """Parse a native label cell into a label code"""
    cleaned = text.strip().lower()
    if cleaned == "normal":
        return NORMAL_CODE
    if cleaned in ("", "unlabeled"):
        return UNLABELED_CODE
    match = _ATTACK_LABEL.match(cleaned)
    if match:
        return int(match.group(1)) if match.group(1) else 0
    raise IngestionException(f"unknown label {text!r}", line)


def write_csv(log: Log, path: PathLike) -> None:
    """Write a log in native format plus its schema sidecar"""
    path = Path(path)
    schema = log.schema
    columns: dict[str, object] = {"timestamp": log.timestamps}
    for j, name in enumerate(schema.actuator_names):
        columns[name] = log.actuators[:, j]
    for k, name in enumerate(schema.sensor_names):
        columns[name] = log.sensors[:, k]
    columns["label"] = [format_label(int(c)) for c in log.labels]
    frame = pd.DataFrame(columns, columns=["timestamp", *schema.names, "label"])
    frame.to_csv(path, index=False, lineterminator="\n")
    save_schema(schema, schema_sidecar_path(path))
    logger.info("Log written: path=%s, entries=%d", path, len(log))


def ingest_csv(
    path: PathLike,
    format: CsvFormat = "native",
    schema: Optional[ChannelSchema] = None,
) -> Log:
    """Read a native or SWaT-layout CSV into a Log.

    Native files use their `<file>.schema.json` sidecar when no schema is passed and
    otherwise infer one from the column types; SWaT-layout files need a schema.
    """
    path = Path(path)
    if not path.exists():
        raise DataException(f"file not found: {path}")
    frame = _read_frame(path)
    if format == "native":
        if schema is None and schema_sidecar_path(path).exists():
            schema = load_schema(schema_sidecar_path(path))
        log = _ingest_native(frame, schema)
    elif format == "swat-layout":
        if schema is None:
            raise DataException("SWaT-layout ingestion requires a schema file")
        log = _ingest_swat(frame, schema)
    else:
        raise DataException(f"unknown CSV format {format!r}")
    logger.info("Log ingested: path=%s, format=%s, entries=%d, actuators=%d, sensors=%d",
                path, format, len(log), log.schema.n, log.schema.m)
    return log


def _read_frame(path: Path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_values=[], skip_blank_lines=True)
    except pd.errors.EmptyDataError as exc:
        raise IngestionException("missing header row", 1) from exc
    except pd.errors.ParserError as exc:
        raise IngestionException(f"ragged row: {exc}") from exc
    frame.columns = [str(c).strip() for c in frame.columns]
    missing = frame.isna()
    if missing.to_numpy().any():
        row = int(np.flatnonzero(missing.to_numpy().any(axis=1))[0])
        raise IngestionException("ragged row: too few fields", row + 2)
    return frame


def _parse_column(values: pd.Series, dtype: type, column: str) -> np.ndarray:
    cells = values.str.strip().tolist()
    try:
        return np.array(cells, dtype=dtype)
    except (ValueError, OverflowError):
        for row, cell in enumerate(cells):
            try:
                dtype(cell)
            except (ValueError, OverflowError):
                raise IngestionException(f"cannot parse {cell!r} in column {column}", row + 2) from None
        raise


def _looks_integer(values: pd.Series) -> bool:
    return bool(values.str.strip().str.fullmatch(r"[+-]?\d+").all())


def _infer_schema(frame: pd.DataFrame, channel_columns: list[str]) -> ChannelSchema:
    actuators: list[ActuatorChannel] = []
    sensors: list[SensorChannel] = []
    for column in channel_columns:
        values = frame[column]
        if not sensors and len(values) and _looks_integer(values):
            top = int(_parse_column(values, int, column).max())
            actuators.append(ActuatorChannel(name=column, arity=max(2, top + 1)))
        else:
            sensors.append(SensorChannel(name=column))
    return ChannelSchema(actuators=tuple(actuators), sensors=tuple(sensors))


def _check_timestamps(timestamps: np.ndarray) -> None:
    if len(timestamps) > 1:
        bad = np.flatnonzero(np.diff(timestamps) != 1)
        if bad.size:
            row = int(bad[0]) + 1
            raise IngestionException(
                f"timestamp {timestamps[row]} does not follow {timestamps[row - 1]} by one tick", row + 2
            )


def _build_log(frame: pd.DataFrame, schema: ChannelSchema, timestamps: np.ndarray, labels: np.ndarray) -> Log:
    k = len(frame)
    actuators = np.zeros((k, schema.n), dtype=np.int64)
    for j, channel in enumerate(schema.actuators):
        column = _parse_column(frame[channel.name], int, channel.name)
        bad = np.flatnonzero((column < 0) | (column >= channel.arity))
        if bad.size:
            raise IngestionException(
                f"position {column[bad[0]]} of {channel.name} outside [0, {channel.arity})", int(bad[0]) + 2
            )
        actuators[:, j] = column
    sensors = np.zeros((k, schema.m), dtype=np.float64)
    for s, channel in enumerate(schema.sensors):
        column = _parse_column(frame[channel.name], float, channel.name)
        bad = np.flatnonzero(~np.isfinite(column))
        if bad.size:
            raise IngestionException(f"non-finite value in column {channel.name}", int(bad[0]) + 2)
        sensors[:, s] = column
    _check_timestamps(timestamps)
    return Log(schema=schema, timestamps=timestamps, actuators=actuators, sensors=sensors, labels=labels)


def _ingest_native(frame: pd.DataFrame, schema: Optional[ChannelSchema]) -> Log:
    columns = list(frame.columns)
    if len(columns) < 3 or columns[0] != "timestamp" or columns[-1] != "label":
        raise IngestionException("header must be timestamp,<channels...>,label", 1)
    channel_columns = columns[1:-1]
    if schema is None:
        schema = _infer_schema(frame, channel_columns)
    elif channel_columns != schema.names:
        raise SchemaMismatchException(
            f"header channels {channel_columns} do not match schema channels {schema.names}"
        )
    timestamps = _parse_column(frame["timestamp"], int, "timestamp").astype(np.int64)
    labels = np.array([parse_label(text, row + 2) for row, text in enumerate(frame["label"])], dtype=np.int64)
    return _build_log(frame, schema, timestamps, labels)


def _parse_swat_timestamps(values: pd.Series) -> np.ndarray:
    cleaned = values.str.strip()
    try:
        stamps = pd.to_datetime(cleaned, format=SWAT_TIME_FORMAT)
    except (ValueError, TypeError):
        try:
            stamps = pd.to_datetime(cleaned, dayfirst=True, format="mixed")
        except (ValueError, TypeError) as exc:
            raise IngestionException(f"unparseable timestamp column: {exc}") from exc
    return ((stamps - pd.Timestamp("1970-01-01")) // pd.Timedelta(seconds=1)).to_numpy(dtype=np.int64)


def _ingest_swat(frame: pd.DataFrame, schema: ChannelSchema) -> Log:
    columns = list(frame.columns)
    if len(columns) < 3:
        raise IngestionException("SWaT layout needs a timestamp, channel columns and a status column", 1)
    time_column, status_column = columns[0], columns[-1]
    missing = [name for name in schema.names if name not in columns]
    if missing:
        raise SchemaMismatchException(f"schema channels missing from file: {missing}")
    ignored = [c for c in columns[1:-1] if c not in schema.names]
    if ignored:
        logger.warning("SWaT columns not in schema dropped: columns=%s", ",".join(ignored))

    timestamps = _parse_swat_timestamps(frame[time_column])
    labels = np.empty(len(frame), dtype=np.int64)
    attack_id = 0
    in_attack = False
    for row, text in enumerate(frame[status_column]):
        status = re.sub(r"\s+", "", text).lower()
        if status == "normal":
            labels[row] = NORMAL_CODE
            in_attack = False
        elif status == "attack":
            if not in_attack:
                attack_id += 1
                in_attack = True
            labels[row] = attack_id
        else:
            raise IngestionException(f"unknown label {text!r}", row + 2)
    return _build_log(frame, schema, timestamps, labels)
