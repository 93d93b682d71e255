import numpy as np
import pytest
from pydantic import ValidationError

from cpsdetect.exceptions import DataException
from cpsdetect.models.log import NORMAL_CODE
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
from cpsdetect.services import plant_service


def _attack(attack_id, start, end, *points):
    return AttackSpec(
        attack_id=attack_id,
        start_tick=start,
        end_tick=end,
        points=[AttackPoint(channel=channel, mode=mode) for channel, mode in points],
    )


def test_schema_layout():
    schema = plant_service.plant_schema(plant_service.default_plant(10))
    assert schema.actuator_names == ["MV-101", "P-101", "MV-201", "P-201", "MV-301", "P-301"]
    assert schema.sensor_names == ["LIT-101", "FIT-101", "LIT-201", "FIT-201", "LIT-301", "FIT-301"]
    assert schema.arities == [2] * 6


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_levels_stay_within_alarm_band(seed):
    config = plant_service.default_plant(3000, seed=seed)
    trace = plant_service.simulate_trace(config)
    for s, stage in enumerate(config.stages):
        ll, _, _, hh = stage.thresholds
        assert trace.true_levels[:, s].min() >= ll
        assert trace.true_levels[:, s].max() <= hh


def test_controller_cycles_the_tanks():
    log = plant_service.simulate(plant_service.default_plant(3000, seed=4))
    # every actuator takes both positions over a long enough run
    for j in range(log.schema.n):
        assert set(log.actuators[:, j].tolist()) == {0, 1}


def test_simulation_is_deterministic():
    config = plant_service.default_plant(500, seed=9)
    assert plant_service.simulate(config) == plant_service.simulate(config)
    assert plant_service.simulate(config) != plant_service.simulate(plant_service.default_plant(500, seed=10))


def test_noise_free_levels_are_integral():
    log = plant_service.simulate(plant_service.default_plant(500, seed=0, noise_std=0.0))
    levels = log.sensors[:, ::2]
    assert np.array_equal(levels, np.round(levels))


def test_labels_follow_attack_window():
    attack = _attack(3, 100, 150, ("LIT-101", ConstantSpoof(value=500.0)))
    log = plant_service.simulate(plant_service.default_plant(300, seed=1), [attack])
    assert np.all(log.labels[100:150] == 3)
    assert np.all(log.labels[:100] == NORMAL_CODE)
    assert np.all(log.labels[150:] == NORMAL_CODE)


def test_overlapping_windows_keep_the_earliest_attack():
    first = _attack(1, 50, 120, ("LIT-101", ConstantSpoof(value=500.0)))
    second = _attack(2, 100, 180, ("LIT-201", ConstantSpoof(value=500.0)))
    log = plant_service.simulate(plant_service.default_plant(300, seed=1), [first, second])
    assert np.all(log.labels[50:120] == 1)
    assert np.all(log.labels[120:180] == 2)


def test_constant_spoof_only_changes_reports():
    config = plant_service.default_plant(400, seed=5)
    attack = _attack(1, 200, 260, ("LIT-101", ConstantSpoof(value=500.0)))
    clean = plant_service.simulate_trace(config)
    spoofed = plant_service.simulate_trace(config, [attack])
    lit = spoofed.log.schema.sensor_names.index("LIT-101")
    assert np.all(spoofed.log.sensors[200:260, lit] == 500.0)
    # nothing differs before the attack starts
    assert np.array_equal(spoofed.log.sensors[:200], clean.log.sensors[:200])
    assert np.array_equal(spoofed.true_levels[:201], clean.true_levels[:201])


def test_drift_spoof_grows_from_true_level():
    config = plant_service.default_plant(400, seed=5)
    attack = _attack(1, 100, 140, ("LIT-101", DriftSpoof(delta_per_tick=1.0)))
    trace = plant_service.simulate_trace(config, [attack])
    reported = trace.log.sensors[100:140, 0]
    expected = trace.true_levels[100, 0] + np.arange(40)
    assert np.allclose(reported, expected)


def test_actuator_override_forces_position():
    attack = _attack(7, 100, 200, ("MV-201", ActuatorOverride(position=1)))
    log = plant_service.simulate(plant_service.default_plant(300, seed=2), [attack])
    column = log.schema.actuator_names.index("MV-201")
    assert np.all(log.actuators[100:200, column] == 1)


@pytest.mark.parametrize("attack", [
    _attack(1, 10, 20, ("MV-101", ConstantSpoof(value=1.0))),
    _attack(1, 10, 20, ("LIT-101", ActuatorOverride(position=1))),
    _attack(1, 10, 20, ("MV-101", ActuatorOverride(position=2))),
    _attack(1, 10, 20, ("XYZ-101", ConstantSpoof(value=1.0))),
    _attack(1, 90, 120, ("LIT-101", ConstantSpoof(value=1.0))),
])
def test_invalid_attacks(attack):
    with pytest.raises(DataException):
        plant_service.simulate(plant_service.default_plant(100), [attack])


def test_overlap_on_one_channel_is_rejected():
    attacks = [
        _attack(1, 10, 30, ("LIT-101", ConstantSpoof(value=1.0))),
        _attack(2, 20, 40, ("LIT-101", DriftSpoof(delta_per_tick=1.0))),
    ]
    with pytest.raises(DataException):
        plant_service.simulate(plant_service.default_plant(100), attacks)


def test_duplicate_attack_ids_are_rejected():
    attacks = [
        _attack(1, 10, 30, ("LIT-101", ConstantSpoof(value=1.0))),
        _attack(1, 40, 50, ("LIT-201", ConstantSpoof(value=1.0))),
    ]
    with pytest.raises(DataException):
        plant_service.simulate(plant_service.default_plant(100), attacks)


def test_controller_margins_are_validated():
    stage = StageConfig(tank_capacity=1000.0, inflow_rate=200.0, outflow_rate=4.0,
                        thresholds=(100.0, 250.5, 750.5, 900.0))
    with pytest.raises(ValidationError):
        PlantConfig(stages=[stage], tick_count=10)


def test_thresholds_must_be_ordered():
    with pytest.raises(ValidationError):
        StageConfig(tank_capacity=1000.0, inflow_rate=5.0, outflow_rate=4.0,
                    thresholds=(100.0, 750.5, 250.5, 900.0))


def test_load_scenario(tmp_path):
    scenario = Scenario(
        name="spoof",
        plant=plant_service.default_plant(200, seed=3),
        attacks=[_attack(1, 50, 60, ("LIT-101", ConstantSpoof(value=500.0)))],
    )
    path = tmp_path / "scenario.json"
    path.write_text(scenario.model_dump_json())
    assert plant_service.load_scenario(path) == scenario


def test_load_scenario_invalid(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text('{"plant": {"stages": [], "tick_count": 10}}')
    with pytest.raises(DataException):
        plant_service.load_scenario(path)


def test_standard_scenario_suite():
    suite = plant_service.standard_scenario_suite(seed=3, train_ticks=500, test_ticks=300)
    assert len(suite) == 9
    assert len({s.name for s in suite}) == 9
    train = suite[0].train_log
    assert all(s.train_log is train for s in suite)
    assert not train.attack_mask.any()
    for scenario in suite:
        assert len(scenario.test_log) == 300
        assert scenario.test_log.attack_ids() == [a.attack_id for a in scenario.attacks]
        assert np.flatnonzero(scenario.test_log.attack_mask).tolist() == list(range(100, 130))


def test_standard_scenario_suite_is_seeded():
    first = plant_service.standard_scenario_suite(seed=8, train_ticks=300, test_ticks=200)
    second = plant_service.standard_scenario_suite(seed=8, train_ticks=300, test_ticks=200)
    assert all(a.test_log == b.test_log for a, b in zip(first, second))
    assert first[0].train_log == second[0].train_log


def test_noise_free_plant_is_periodic():
    config = plant_service.default_plant(10_000, noise_std=0.0)
    trace = plant_service.simulate_trace(config)
    valves = trace.log.actuators[:, ::2]
    seen = {}
    for tick, state in enumerate(zip(map(tuple, trace.true_levels), map(tuple, valves))):
        if state in seen:
            break
        seen[state] = tick
    else:
        pytest.fail("no (levels, valves) state repeats within 10 x capacity ticks")
    first = seen[state]
    period = tick - first
    assert tick < 10 * config.stages[0].tank_capacity
    # from the first repeat on, the run replays itself
    assert np.array_equal(trace.true_levels[first + period:], trace.true_levels[first:len(valves) - period])
    assert np.array_equal(valves[first + period:], valves[first:len(valves) - period])


@pytest.mark.parametrize("stages", [1, 2])
def test_smaller_default_plants_are_periodic(stages):
    trace = plant_service.simulate_trace(plant_service.default_plant(10_000, noise_std=0.0, stages=stages))
    states = {(tuple(levels), tuple(valves)) for levels, valves in zip(trace.true_levels, trace.log.actuators[:, ::2])}
    assert len(states) < 10_000


def test_in_range_spoof_holds_level_below_normal_reports():
    suite = plant_service.standard_scenario_suite(seed=0, train_ticks=3000, test_ticks=300)
    scenario = next(s for s in suite if s.name == "constant_spoof_in_range")
    [point] = scenario.attacks[0].points
    ll, low, _, _ = plant_service.DEFAULT_THRESHOLDS
    assert ll < point.mode.value < low
    lit = scenario.train_log.schema.sensor_names.index("LIT-101")
    assert scenario.train_log.sensors[:, lit].min() > point.mode.value + 100
