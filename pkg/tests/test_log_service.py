import numpy as np
import pytest

from cpsdetect.exceptions import DataException, IngestionException, SchemaMismatchException
from cpsdetect.models.log import NORMAL_CODE, UNLABELED_CODE, Label, Log, LogEntry
from cpsdetect.schemas.channel import ActuatorChannel, ChannelSchema, NormStats, SensorChannel
from cpsdetect.services import log_service

ONE_SENSOR = ChannelSchema(sensors=(SensorChannel(name="S"),))


def _series(values):
    values = np.asarray(values, dtype=np.float64)
    return Log(ONE_SENSOR, np.arange(len(values)), np.zeros((len(values), 0)), values[:, None],
               np.full(len(values), NORMAL_CODE))


@pytest.mark.parametrize("values, mean, variance", [
    ([0.0, 2.0], 1.0, 1.0),
    ([5.0, 5.0, 5.0], 5.0, 0.0),
    ([1.0, 2.0, 3.0, 4.0], 2.5, 1.25),
])
def test_compute_norm_stats(values, mean, variance):
    stats = log_service.compute_norm_stats(_series(values))
    assert stats.mean[0] == pytest.approx(mean)
    assert stats.variance[0] == pytest.approx(variance)


def test_compute_norm_stats_empty_log():
    with pytest.raises(DataException):
        log_service.compute_norm_stats(Log.empty(ONE_SENSOR))


def test_normalize_values():
    stats = NormStats(mean=(1.0,), variance=(1.0,))
    normalized = log_service.normalize(_series([2.0, 1.0]), stats)
    assert normalized.sensors[:, 0].tolist() == [1.0, 0.0]


def test_normalize_zero_variance_channel():
    normalized = log_service.normalize(_series([3.0, -7.0, 1e6]), NormStats(mean=(5.0,), variance=(0.0,)))
    assert np.all(normalized.sensors == 0.0)


def test_normalize_stats_mismatch():
    with pytest.raises(SchemaMismatchException):
        log_service.normalize(_series([1.0]), NormStats(mean=(0.0, 0.0), variance=(1.0, 1.0)))


def test_ingest_native_infers_schema(tmp_path):
    path = tmp_path / "log.csv"
    path.write_text(
        "timestamp,MV-101,P-101,LIT-101,FIT-101,AIT-201,label\n"
        "0,1,0,500.5,2.5,7.25,Normal\n"
        "1,0,1,501.0,2.4,7.3, Attack \n"
        "2,1,1,502.0,2.6,7.2,normal\n"
    )
    log = log_service.ingest_csv(path)
    assert len(log) == 3
    assert (log.schema.n, log.schema.m) == (2, 3)
    assert log.schema.arities == [2, 2]
    assert log.labels.tolist() == [NORMAL_CODE, 0, NORMAL_CODE]
    assert log.sensors[1].tolist() == [501.0, 2.4, 7.3]


@pytest.mark.parametrize("text, code", [
    ("Normal", NORMAL_CODE),
    ("  ATTACK ", 0),
    ("attack:7", 7),
    ("", UNLABELED_CODE),
    ("Unlabeled", UNLABELED_CODE),
])
def test_parse_label(text, code):
    assert log_service.parse_label(text, 2) == code


def test_ingest_unknown_label_names_line(tmp_path):
    path = tmp_path / "log.csv"
    path.write_text("timestamp,S,label\n0,1.0,Normal\n1,2.0,Suspicious\n")
    with pytest.raises(IngestionException, match="line 3"):
        log_service.ingest_csv(path)


def test_ingest_ragged_row(tmp_path):
    path = tmp_path / "log.csv"
    path.write_text("timestamp,A,S,label\n0,1,1.0,Normal\n1,1,Normal\n")
    with pytest.raises(IngestionException):
        log_service.ingest_csv(path)


def test_ingest_timestamp_gap(tmp_path):
    path = tmp_path / "log.csv"
    path.write_text("timestamp,S,label\n0,1.0,Normal\n2,2.0,Normal\n")
    with pytest.raises(IngestionException, match="line 3"):
        log_service.ingest_csv(path)


def test_ingest_header_mismatch_with_schema(tmp_path, small_schema):
    path = tmp_path / "log.csv"
    path.write_text("timestamp,X,Y,Z,label\n0,1,1.0,2.0,Normal\n")
    with pytest.raises(SchemaMismatchException):
        log_service.ingest_csv(path, schema=small_schema)


def test_ingest_missing_file(tmp_path):
    with pytest.raises(DataException):
        log_service.ingest_csv(tmp_path / "absent.csv")


def test_write_empty_log_is_header_only(tmp_path, small_schema):
    path = tmp_path / "empty.csv"
    log_service.write_csv(Log.empty(small_schema), path)
    assert path.read_text().splitlines() == ["timestamp,MV-101,LIT-101,FIT-101,label"]


def test_write_line_count(tmp_path, random_log):
    path = tmp_path / "log.csv"
    log_service.write_csv(random_log(1000), path)
    assert len(path.read_text().splitlines()) == 1001


def test_write_then_ingest_is_exact(tmp_path, random_log):
    labels = [NORMAL_CODE] * 10 + [4] * 5 + [UNLABELED_CODE] * 5
    log = random_log(20, seed=3, labels=labels)
    path = tmp_path / "log.csv"
    log_service.write_csv(log, path)
    assert log_service.schema_sidecar_path(path).exists()
    again = log_service.ingest_csv(path)
    assert again == log
    assert again.sensors.tobytes() == log.sensors.tobytes()


def test_ingest_swat_layout(tmp_path):
    schema = ChannelSchema(
        actuators=(ActuatorChannel(name="MV101", arity=3),),
        sensors=(SensorChannel(name="FIT101"), SensorChannel(name="LIT101")),
    )
    statuses = ["Normal", "Attack", "A ttack", "Normal", "Attack"]
    rows = [
        f" 28/12/2015 10:00:0{i} AM,{2.4 + i},{520.0 + i},{1 + i % 2},0,{status}"
        for i, status in enumerate(statuses)
    ]
    path = tmp_path / "swat.csv"
    path.write_text(" Timestamp,FIT101,LIT101,MV101,P102,Normal/Attack\n" + "\n".join(rows) + "\n")
    log = log_service.ingest_csv(path, format="swat-layout", schema=schema)
    assert log.schema == schema
    assert log.labels.tolist() == [NORMAL_CODE, 1, 1, NORMAL_CODE, 2]
    assert np.all(np.diff(log.timestamps) == 1)
    assert log.actuators[:, 0].tolist() == [1, 2, 1, 2, 1]
    assert log.sensors[0].tolist() == [2.4, 520.0]


def test_ingest_swat_layout_needs_schema(tmp_path):
    path = tmp_path / "swat.csv"
    path.write_text("Timestamp,A,Normal/Attack\n28/12/2015 10:00:00 AM,1,Normal\n")
    with pytest.raises(DataException):
        log_service.ingest_csv(path, format="swat-layout")


def test_ingest_swat_layout_missing_channel(tmp_path):
    schema = ChannelSchema(sensors=(SensorChannel(name="LIT101"), SensorChannel(name="AIT201")))
    path = tmp_path / "swat.csv"
    path.write_text("Timestamp,LIT101,Normal/Attack\n28/12/2015 10:00:00 AM,1.0,Normal\n")
    with pytest.raises(SchemaMismatchException):
        log_service.ingest_csv(path, format="swat-layout", schema=schema)


def test_split_log(random_log):
    first, second = log_service.split_log(random_log(10), 0.5)
    assert (len(first), len(second)) == (5, 5)
    assert second.timestamps[0] == first.timestamps[-1] + 1


def test_split_log_bad_fraction(random_log):
    with pytest.raises(DataException):
        log_service.split_log(random_log(10), 1.0)


def test_encode_entries(small_schema, log_factory):
    log = log_factory(small_schema, [[2], [0]], [[1.5, -1.0], [0.0, 3.0]])
    onehot = log_service.encode_entries(log, "onehot")
    assert onehot.tolist() == [[0, 0, 1, 1.5, -1.0], [1, 0, 0, 0.0, 3.0]]
    assert log_service.encode_entries(log, "ordinal").tolist() == [[2, 1.5, -1.0], [0, 0.0, 3.0]]


def test_log_rejects_out_of_range_actuator(small_schema, log_factory):
    with pytest.raises(DataException):
        log_factory(small_schema, [[3]], [[0.0, 0.0]])


def test_log_from_entries_round_trip(small_schema):
    entries = [
        LogEntry(timestamp=5, actuator_values=(1,), sensor_values=(0.5, 1.5), label=Label.normal()),
        LogEntry(timestamp=6, actuator_values=(2,), sensor_values=(0.25, 2.5), label=Label.attack(3)),
    ]
    log = Log.from_entries(small_schema, entries)
    assert log.entries == entries
    assert log.attack_ids() == [3]
