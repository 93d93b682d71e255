from typing import Optional, Sequence

import numpy as np
import pytest

from cpsdetect.config import settings
from cpsdetect.models.log import NORMAL_CODE, Log
from cpsdetect.schemas.channel import ActuatorChannel, ChannelSchema, SensorChannel
from cpsdetect.schemas.plant import AttackPoint, AttackSpec, ConstantSpoof
from cpsdetect.services import plant_service


def make_log(
    schema: ChannelSchema,
    actuators: Sequence,
    sensors: Sequence,
    labels: Optional[Sequence[int]] = None,
    start: int = 0,
) -> Log:
    sensors = np.asarray(sensors, dtype=np.float64)
    k = sensors.shape[0]
    sensors = sensors.reshape(k, schema.m)
    return Log(
        schema=schema,
        timestamps=start + np.arange(k),
        actuators=np.asarray(actuators, dtype=np.int64).reshape(k, schema.n),
        sensors=sensors,
        labels=np.full(k, NORMAL_CODE) if labels is None else np.asarray(labels),
    )


@pytest.fixture
def log_factory():
    return make_log


@pytest.fixture
def small_schema() -> ChannelSchema:
    """One 3-position actuator and two sensors"""
    return ChannelSchema(
        actuators=(ActuatorChannel(name="MV-101", arity=3),),
        sensors=(SensorChannel(name="LIT-101", unit="L"), SensorChannel(name="FIT-101")),
    )


@pytest.fixture
def random_log(small_schema):
    def build(k: int, seed: int = 0, labels: Optional[Sequence[int]] = None) -> Log:
        rng = np.random.default_rng(seed)
        return make_log(small_schema, rng.integers(0, 3, size=(k, 1)), rng.normal(size=(k, 2)), labels)
    return build


@pytest.fixture(scope="session")
def plant_logs() -> tuple[Log, Log]:
    """Short normal training run and a test run with one constant spoof on LIT-101"""
    train = plant_service.simulate(plant_service.default_plant(600, seed=11))
    attack = AttackSpec(
        attack_id=1,
        start_tick=200,
        end_tick=260,
        points=[AttackPoint(channel="LIT-101", mode=ConstantSpoof(value=500.0))],
    )
    test = plant_service.simulate(plant_service.default_plant(400, seed=12), [attack])
    return train, test


@pytest.fixture
def isolated_cache(tmp_path, monkeypatch):
    cache = tmp_path / "cache"
    monkeypatch.setattr(settings, "cache_dir", cache)
    return cache
