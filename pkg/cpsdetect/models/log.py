from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Optional, Sequence

import numpy as np

from cpsdetect.exceptions import DataException
from cpsdetect.schemas.channel import ChannelSchema

# Integer label codes stored in Log.labels; attack ids are the non-negative codes
NORMAL_CODE = -1
UNLABELED_CODE = -2


class LabelKind(str, Enum):
    NORMAL = "normal"
    ATTACK = "attack"
    UNLABELED = "unlabeled"


@dataclass(frozen=True)
class Label:
    kind: LabelKind
    attack_id: Optional[int] = None

    @classmethod
    def normal(cls) -> "Label":
        return cls(LabelKind.NORMAL)

    @classmethod
    def attack(cls, attack_id: int = 0) -> "Label":
        if attack_id < 0:
            raise DataException(f"attack id must be non-negative, got {attack_id}")
        return cls(LabelKind.ATTACK, attack_id)

    @classmethod
    def unlabeled(cls) -> "Label":
        return cls(LabelKind.UNLABELED)

    @classmethod
    def from_code(cls, code: int) -> "Label":
        if code == NORMAL_CODE:
            return cls.normal()
        if code == UNLABELED_CODE:
            return cls.unlabeled()
        return cls.attack(int(code))

    @property
    def code(self) -> int:
        if self.kind is LabelKind.NORMAL:
            return NORMAL_CODE
        if self.kind is LabelKind.UNLABELED:
            return UNLABELED_CODE
        return int(self.attack_id)

    @property
    def is_attack(self) -> bool:
        return self.kind is LabelKind.ATTACK

    def __str__(self) -> str:
        if self.kind is LabelKind.ATTACK:
            return f"Attack:{self.attack_id}"
        return "Normal" if self.kind is LabelKind.NORMAL else "Unlabeled"


@dataclass(frozen=True)
class LogEntry:
    timestamp: int
    actuator_values: tuple[int, ...]
    sensor_values: tuple[float, ...]
    label: Label = Label.normal()


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Log:
    """A schema plus column arrays for its entries.

    Entries are stored column-wise (timestamps, actuator positions, sensor values,
    label codes); `entries` and indexing give LogEntry views. Arrays are read-only.
    """

    schema: ChannelSchema
    timestamps: np.ndarray
    actuators: np.ndarray
    sensors: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        k = len(self.timestamps)
        timestamps = np.array(self.timestamps, dtype=np.int64).reshape(k)
        actuators = np.array(self.actuators, dtype=np.int64).reshape(k, self.schema.n)
        sensors = np.array(self.sensors, dtype=np.float64).reshape(k, self.schema.m)
        labels = np.array(self.labels, dtype=np.int64).reshape(k)

        if k > 1:
            steps = np.diff(timestamps)
            bad = np.flatnonzero(steps != 1)
            if bad.size:
                i = int(bad[0]) + 1
                raise DataException(
                    f"timestamps must advance by exactly one tick: entry {i} has "
                    f"{timestamps[i]} after {timestamps[i - 1]}"
                )
        if not np.all(np.isfinite(sensors)):
            i = int(np.flatnonzero(~np.isfinite(sensors).all(axis=1))[0])
            raise DataException(f"non-finite sensor value at entry {i}")
        for j, arity in enumerate(self.schema.arities):
            column = actuators[:, j]
            if column.size and (column.min() < 0 or column.max() >= arity):
                i = int(np.flatnonzero((column < 0) | (column >= arity))[0])
                raise DataException(
                    f"actuator {self.schema.actuator_names[j]} position {column[i]} "
                    f"outside [0, {arity}) at entry {i}"
                )
        if labels.size and labels.min() < UNLABELED_CODE:
            raise DataException("invalid label code")

        object.__setattr__(self, "timestamps", _frozen(timestamps))
        object.__setattr__(self, "actuators", _frozen(actuators))
        object.__setattr__(self, "sensors", _frozen(sensors))
        object.__setattr__(self, "labels", _frozen(labels))

    @classmethod
    def from_entries(cls, schema: ChannelSchema, entries: Sequence[LogEntry]) -> "Log":
        for i, entry in enumerate(entries):
            if len(entry.actuator_values) != schema.n or len(entry.sensor_values) != schema.m:
                raise DataException(f"entry {i} does not match the schema's channel counts")
        return cls(
            schema=schema,
            timestamps=np.array([e.timestamp for e in entries], dtype=np.int64),
            actuators=np.array([e.actuator_values for e in entries], dtype=np.int64).reshape(len(entries), schema.n),
            sensors=np.array([e.sensor_values for e in entries], dtype=np.float64).reshape(len(entries), schema.m),
            labels=np.array([e.label.code for e in entries], dtype=np.int64),
        )

    @classmethod
    def empty(cls, schema: ChannelSchema) -> "Log":
        return cls(
            schema=schema,
            timestamps=np.zeros(0, dtype=np.int64),
            actuators=np.zeros((0, schema.n), dtype=np.int64),
            sensors=np.zeros((0, schema.m), dtype=np.float64),
            labels=np.zeros(0, dtype=np.int64),
        )

    def __len__(self) -> int:
        return len(self.timestamps)

    def __getitem__(self, i: int) -> LogEntry:
        return LogEntry(
            timestamp=int(self.timestamps[i]),
            actuator_values=tuple(int(v) for v in self.actuators[i]),
            sensor_values=tuple(float(v) for v in self.sensors[i]),
            label=Label.from_code(int(self.labels[i])),
        )

    def __iter__(self) -> Iterator[LogEntry]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Log):
            return NotImplemented
        return (
            self.schema == other.schema
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.actuators, other.actuators)
            and np.array_equal(self.sensors, other.sensors)
            and np.array_equal(self.labels, other.labels)
        )

    @property
    def entries(self) -> list[LogEntry]:
        return list(self)

    @property
    def attack_mask(self) -> np.ndarray:
        return self.labels >= 0

    def attack_ids(self) -> list[int]:
        return sorted(int(a) for a in np.unique(self.labels[self.labels >= 0]))

    def slice(self, start: int, stop: int) -> "Log":
        return Log(
            schema=self.schema,
            timestamps=self.timestamps[start:stop],
            actuators=self.actuators[start:stop],
            sensors=self.sensors[start:stop],
            labels=self.labels[start:stop],
        )

    def with_sensors(self, sensors: np.ndarray) -> "Log":
        return Log(self.schema, self.timestamps, self.actuators, sensors, self.labels)
