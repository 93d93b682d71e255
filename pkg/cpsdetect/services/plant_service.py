import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from pydantic import ValidationError

from cpsdetect.exceptions import DataException
from cpsdetect.logging_config import log_duration
from cpsdetect.models.log import NORMAL_CODE, Log
from cpsdetect.schemas.channel import ActuatorChannel, ChannelSchema, SensorChannel
from cpsdetect.schemas.plant import (
    ActuatorOverride,
    AttackPoint,
    AttackSpec,
    ConstantSpoof,
    DriftSpoof,
    PlantConfig,
    Scenario,
    StageConfig,
)

logger = logging.getLogger(__name__)

CLOSED, OPEN = 0, 1
OFF, ON = 0, 1

# Levels stay integer-valued without noise; fractional L/H keep them off the switching points
DEFAULT_THRESHOLDS = (100.0, 250.5, 750.5, 900.0)
# Noise-free, the three-stage cycle repeats every 1908 ticks after a 1325-tick transient
DEFAULT_RATES = ((6.0, 5.0), (5.0, 5.0), (5.0, 4.0))
DEFAULT_INITIAL_LEVEL = 500.0


@dataclass(frozen=True)
class PlantTrace:
    log: Log
    true_levels: np.ndarray  # (ticks, stages)


@dataclass(frozen=True)
class SuiteScenario:
    name: str
    train_log: Log
    test_log: Log
    attacks: list[AttackSpec]


def valve_name(stage: int) -> str:
    return f"MV-{stage + 1}01"


def pump_name(stage: int) -> str:
    return f"P-{stage + 1}01"


def level_name(stage: int) -> str:
    return f"LIT-{stage + 1}01"


def flow_name(stage: int) -> str:
    return f"FIT-{stage + 1}01"


def plant_schema(config: PlantConfig) -> ChannelSchema:
    """Channel layout of a plant: valve and pump per stage, then level and inflow per stage"""
    actuators = []
    sensors = []
    for s in range(len(config.stages)):
        actuators += [ActuatorChannel(name=valve_name(s), arity=2), ActuatorChannel(name=pump_name(s), arity=2)]
        sensors += [SensorChannel(name=level_name(s), unit="L"), SensorChannel(name=flow_name(s), unit="L/tick")]
    return ChannelSchema(actuators=tuple(actuators), sensors=tuple(sensors))


def default_plant(tick_count: int, seed: int = 0, noise_std: float = 0.5, stages: int = 3) -> PlantConfig:
    """The desk-scale plant: up to three coupled stages of 1000 L tanks"""
    if not 1 <= stages <= len(DEFAULT_RATES):
        raise DataException(f"default plant has 1..{len(DEFAULT_RATES)} stages, got {stages}")
    return PlantConfig(
        stages=[
            StageConfig(tank_capacity=1000.0, inflow_rate=inflow, outflow_rate=outflow,
                        thresholds=DEFAULT_THRESHOLDS, initial_level=DEFAULT_INITIAL_LEVEL)
            for inflow, outflow in DEFAULT_RATES[:stages]
        ],
        tick_count=tick_count,
        seed=seed,
        noise_std=noise_std,
    )


def load_scenario(path: Union[str, Path]) -> Scenario:
    try:
        return Scenario.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except ValidationError as exc:
        raise DataException(f"invalid scenario file {path}: {exc}") from exc


def _validate_attacks(schema: ChannelSchema, config: PlantConfig, attacks: Sequence[AttackSpec]) -> None:
    ids = [a.attack_id for a in attacks]
    if len(ids) != len(set(ids)):
        raise DataException(f"duplicate attack ids in {ids}")
    windows: dict[str, list[AttackSpec]] = {}
    for attack in attacks:
        if attack.start_tick >= config.tick_count or attack.end_tick > config.tick_count:
            raise DataException(f"attack {attack.attack_id} window outside [0, {config.tick_count})")
        for point in attack.points:
            if point.channel not in schema.names:
                raise DataException(f"attack {attack.attack_id} targets unknown channel {point.channel}")
            if point.is_spoof and not schema.is_sensor(point.channel):
                raise DataException(f"attack {attack.attack_id}: spoofs must target sensors, not {point.channel}")
            if isinstance(point.mode, ActuatorOverride):
                if not schema.is_actuator(point.channel):
                    raise DataException(
                        f"attack {attack.attack_id}: overrides must target actuators, not {point.channel}"
                    )
                arity = schema.arities[schema.index_of(point.channel)]
                if point.mode.position >= arity:
                    raise DataException(f"attack {attack.attack_id}: position {point.mode.position} >= {arity}")
            for other in windows.get(point.channel, []):
                if attack.start_tick < other.end_tick and other.start_tick < attack.end_tick:
                    raise DataException(
                        f"attacks {other.attack_id} and {attack.attack_id} overlap on channel {point.channel}"
                    )
            windows.setdefault(point.channel, []).append(attack)


def _label_codes(tick_count: int, attacks: Sequence[AttackSpec]) -> np.ndarray:
    """Entries inside a window carry its id; where windows overlap, the earliest start wins"""
    labels = np.full(tick_count, NORMAL_CODE, dtype=np.int64)
    for attack in sorted(attacks, key=lambda a: (a.start_tick, a.attack_id), reverse=True):
        labels[attack.start_tick:attack.end_tick] = attack.attack_id
    return labels


class _Tampering:
    """Active spoofs and overrides, looked up per channel and tick"""

    def __init__(self, attacks: Sequence[AttackSpec]):
        self._points: dict[str, list[tuple[AttackSpec, AttackPoint]]] = {}
        self._drift_base: dict[tuple[int, str], float] = {}
        for attack in attacks:
            for point in attack.points:
                self._points.setdefault(point.channel, []).append((attack, point))

    def _active(self, channel: str, tick: int) -> Optional[tuple[AttackSpec, AttackPoint]]:
        for attack, point in self._points.get(channel, ()):
            if attack.active(tick):
                return attack, point
        return None

    def report(self, channel: str, tick: int, true_value: float) -> float:
        hit = self._active(channel, tick)
        if hit is None:
            return true_value
        attack, point = hit
        if isinstance(point.mode, ConstantSpoof):
            return point.mode.value
        if isinstance(point.mode, DriftSpoof):
            key = (attack.attack_id, channel)
            if tick == attack.start_tick:
                self._drift_base[key] = true_value
            return self._drift_base[key] + point.mode.delta_per_tick * (tick - attack.start_tick)
        return true_value

    def forced(self, channel: str, tick: int) -> Optional[int]:
        hit = self._active(channel, tick)
        if hit is None or not isinstance(hit[1].mode, ActuatorOverride):
            return None
        return hit[1].mode.position


def simulate(config: PlantConfig, attacks: Sequence[AttackSpec] = ()) -> Log:
    """Simulate the plant and return its labeled log"""
    return simulate_trace(config, attacks).log


def simulate_trace(config: PlantConfig, attacks: Sequence[AttackSpec] = ()) -> PlantTrace:
    """Simulate the plant, keeping the true (unspoofed) tank levels alongside the log"""
    schema = plant_schema(config)
    _validate_attacks(schema, config, attacks)
    stages = config.stages
    n_stages = len(stages)
    ticks = config.tick_count
    rng = np.random.Generator(np.random.PCG64(config.seed))
    tampering = _Tampering(attacks)

    level = np.array([stage.start_level for stage in stages], dtype=np.float64)
    valve = np.zeros(n_stages, dtype=np.int64)
    pump = np.zeros(n_stages, dtype=np.int64)

    actuators = np.zeros((ticks, 2 * n_stages), dtype=np.int64)
    sensors = np.zeros((ticks, 2 * n_stages), dtype=np.float64)
    true_levels = np.zeros((ticks, n_stages), dtype=np.float64)

    with log_duration(logger, "Simulation", stages=n_stages, ticks=ticks, attacks=len(attacks)):
        for t in range(ticks):
            true_levels[t] = level
            reported = [tampering.report(level_name(s), t, float(level[s])) for s in range(n_stages)]

            # PLC logic sees reported (possibly spoofed) levels
            for s, stage in enumerate(stages):
                _, low, high, _ = stage.thresholds
                if reported[s] < low:
                    valve[s] = OPEN
                elif reported[s] > high:
                    valve[s] = CLOSED
                downstream_ok = s == n_stages - 1 or reported[s + 1] < stages[s + 1].thresholds[2]
                pump[s] = ON if reported[s] > low and downstream_ok else OFF
                forced_valve = tampering.forced(valve_name(s), t)
                if forced_valve is not None:
                    valve[s] = forced_valve
                forced_pump = tampering.forced(pump_name(s), t)
                if forced_pump is not None:
                    pump[s] = forced_pump

            # One draw per transfer slot every tick keeps the noise stream independent of control
            noise = rng.normal(0.0, config.noise_std, size=n_stages + 1)
            inflow = np.zeros(n_stages)
            outflow = np.zeros(n_stages)
            if valve[0] == OPEN:
                inflow[0] = max(0.0, stages[0].inflow_rate + noise[0])
            for s, stage in enumerate(stages):
                if pump[s] != ON:
                    continue
                if s == n_stages - 1:
                    nominal = stage.outflow_rate
                elif valve[s + 1] == OPEN:
                    nominal = min(stage.outflow_rate, stages[s + 1].inflow_rate)
                else:
                    continue
                moved = min(max(0.0, nominal + noise[s + 1]), level[s])
                outflow[s] = moved
                if s < n_stages - 1:
                    inflow[s + 1] = moved

            for s in range(n_stages):
                actuators[t, 2 * s] = valve[s]
                actuators[t, 2 * s + 1] = pump[s]
                sensors[t, 2 * s] = reported[s]
                sensors[t, 2 * s + 1] = tampering.report(flow_name(s), t, float(inflow[s]))

            capacity = np.array([stage.tank_capacity for stage in stages])
            level = np.clip(level + inflow - outflow, 0.0, capacity)

    log = Log(
        schema=schema,
        timestamps=config.start_timestamp + np.arange(ticks, dtype=np.int64),
        actuators=actuators,
        sensors=sensors,
        labels=_label_codes(ticks, attacks),
    )
    logger.info("Plant simulated: ticks=%d, seed=%d, attack_entries=%d",
                ticks, config.seed, int(log.attack_mask.sum()))
    return PlantTrace(log=log, true_levels=true_levels)


def _suite_attacks(test_ticks: int) -> list[tuple[str, list[AttackSpec]]]:
    start = test_ticks // 3
    end = start + max(1, test_ticks // 10)

    def spec(attack_id: int, description: str, *points: tuple[str, object]) -> AttackSpec:
        return AttackSpec(
            attack_id=attack_id,
            start_tick=start,
            end_tick=end,
            description=description,
            points=[AttackPoint(channel=channel, mode=mode) for channel, mode in points],
        )

    return [
        ("constant_spoof_in_range", [spec(1, "Hold LIT-101 at 120, between LL and L",
                                          ("LIT-101", ConstantSpoof(value=120.0)))]),
        ("constant_spoof_out_of_range", [spec(2, "Hold LIT-301 above capacity",
                                              ("LIT-301", ConstantSpoof(value=1200.0)))]),
        ("constant_spoof_below_range", [spec(3, "Hold LIT-201 below LL", ("LIT-201", ConstantSpoof(value=50.0)))]),
        ("flow_spoof", [spec(4, "Set FIT-201 to 0", ("FIT-201", ConstantSpoof(value=0.0)))]),
        ("drift_up", [spec(5, "Increase LIT-101 by 1 every tick", ("LIT-101", DriftSpoof(delta_per_tick=1.0)))]),
        ("drift_down", [spec(6, "Decrease LIT-301 by 1 every tick", ("LIT-301", DriftSpoof(delta_per_tick=-1.0)))]),
        ("actuator_override", [spec(7, "Keep MV-201 open", ("MV-201", ActuatorOverride(position=OPEN)))]),
        ("multi_point", [spec(8, "Set LIT-201 to 700; keep P-201 on",
                              ("LIT-201", ConstantSpoof(value=700.0)), ("P-201", ActuatorOverride(position=ON)))]),
        ("multi_stage_multi_point", [spec(9, "Set LIT-101 to 800; keep MV-301 open; turn P-201 off",
                                          ("LIT-101", ConstantSpoof(value=800.0)),
                                          ("MV-301", ActuatorOverride(position=OPEN)),
                                          ("P-201", ActuatorOverride(position=OFF)))]),
    ]


def standard_scenario_suite(
    seed: int,
    train_ticks: int = 20_000,
    test_ticks: int = 6_000,
    noise_std: float = 0.5,
) -> list[SuiteScenario]:
    """Fixed catalog of attack scenarios over the default plant, sharing one normal training run"""
    if test_ticks < 100:
        raise DataException(f"test runs need at least 100 ticks, got {test_ticks}")
    catalog = _suite_attacks(test_ticks)
    seeds = np.random.SeedSequence(seed).generate_state(len(catalog) + 1, dtype=np.uint64)
    train_log = simulate(default_plant(train_ticks, int(seeds[0]), noise_std))
    suite = []
    for (name, attacks), scenario_seed in zip(catalog, seeds[1:]):
        test_log = simulate(default_plant(test_ticks, int(scenario_seed), noise_std), attacks)
        suite.append(SuiteScenario(name=name, train_log=train_log, test_log=test_log, attacks=attacks))
    logger.info("Scenario suite built: seed=%d, scenarios=%d", seed, len(suite))
    return suite
