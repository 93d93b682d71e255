from typing import Literal

from pydantic import BaseModel, Field, model_validator

ActuatorEncoding = Literal["onehot", "ordinal"]


class ActuatorChannel(BaseModel):
    name: str = Field(min_length=1)
    arity: int = Field(ge=2)

    model_config = {"frozen": True}


class SensorChannel(BaseModel):
    name: str = Field(min_length=1)
    unit: str = ""

    model_config = {"frozen": True}


class ChannelSchema(BaseModel):
    """Names, kinds and arities of all channels.

    The order (actuators first, then sensors) is the autoregressive order used by the
    density net and the column order of every CSV file.
    """

    actuators: tuple[ActuatorChannel, ...] = ()
    sensors: tuple[SensorChannel, ...] = ()

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def _check_names(self) -> "ChannelSchema":
        names = self.names
        if not names:
            raise ValueError("schema must declare at least one channel")
        seen = set()
        for name in names:
            if name in seen:
                raise ValueError(f"duplicate channel name {name!r}")
            seen.add(name)
        if {"timestamp", "label"} & seen:
            raise ValueError("'timestamp' and 'label' are reserved column names")
        return self

    @property
    def n(self) -> int:
        return len(self.actuators)

    @property
    def m(self) -> int:
        return len(self.sensors)

    @property
    def actuator_names(self) -> list[str]:
        return [a.name for a in self.actuators]

    @property
    def sensor_names(self) -> list[str]:
        return [s.name for s in self.sensors]

    @property
    def names(self) -> list[str]:
        return self.actuator_names + self.sensor_names

    @property
    def arities(self) -> list[int]:
        return [a.arity for a in self.actuators]

    def index_of(self, name: str) -> int:
        """Channel position; actuators come first, so an actuator's index is also its arity index"""
        return self.names.index(name)

    def is_actuator(self, name: str) -> bool:
        return name in self.actuator_names

    def is_sensor(self, name: str) -> bool:
        return name in self.sensor_names

    def feature_dim(self, encoding: ActuatorEncoding = "onehot") -> int:
        """Width of one encoded entry"""
        if encoding == "onehot":
            return sum(self.arities) + self.m
        return self.n + self.m


class NormStats(BaseModel):
    """Population mean and variance per sensor channel"""

    mean: tuple[float, ...]
    variance: tuple[float, ...]

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def _check_lengths(self) -> "NormStats":
        if len(self.mean) != len(self.variance):
            raise ValueError("mean and variance must have one value per sensor")
        if any(v < 0 for v in self.variance):
            raise ValueError("variance must be non-negative")
        return self
