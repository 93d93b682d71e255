import hashlib

import pytest

from cpsdetect import __version__
from cpsdetect.exceptions import DataException
from cpsdetect.schemas.svm import SvmConfig
from cpsdetect.services import manifest_service


def test_file_digest(tmp_path):
    path = tmp_path / "data.bin"
    path.write_bytes(b"abc")
    assert manifest_service.file_digest(path) == hashlib.sha256(b"abc").hexdigest()


def test_file_digest_missing(tmp_path):
    with pytest.raises(DataException):
        manifest_service.file_digest(tmp_path / "absent.bin")


def test_config_digest_follows_values():
    assert manifest_service.config_digest(SvmConfig(w=2)) == manifest_service.config_digest(SvmConfig(w=2))
    assert manifest_service.config_digest(SvmConfig(w=2)) != manifest_service.config_digest(SvmConfig(w=3))


def test_manifest_round_trip(tmp_path):
    output = tmp_path / "model.svm"
    output.write_bytes(b"model")
    source = tmp_path / "train.csv"
    source.write_text("timestamp,label\n")
    manifest = manifest_service.build_manifest(
        run_id="run-1",
        command=["train-svm", "--train", str(source)],
        subcommand="train-svm",
        output=output,
        created_at="2020-01-01T00:00:00",
        wall_clock_seconds=0.5,
        seed=7,
        configs={"svm": SvmConfig(w=2)},
        inputs=[source],
    )
    path = manifest_service.write_manifest(manifest)
    assert path.name == "model.svm.manifest.json"
    loaded = manifest_service.read_manifest(path)
    assert loaded == manifest
    assert loaded.tool_version == __version__
    assert loaded.configs["svm"]["w"] == 2
    assert loaded.input_digests == {str(source): manifest_service.file_digest(source)}


def test_read_invalid_manifest(tmp_path):
    path = tmp_path / "x.manifest.json"
    path.write_text('{"run_id": "r"}')
    with pytest.raises(DataException):
        manifest_service.read_manifest(path)
