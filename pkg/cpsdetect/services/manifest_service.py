import hashlib
import json
import logging
from pathlib import Path
from typing import Optional, Union

from pydantic import BaseModel, ValidationError

from cpsdetect import __version__
from cpsdetect.exceptions import DataException
from cpsdetect.schemas.manifest import RunManifest

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MANIFEST_SUFFIX = ".manifest.json"
_CHUNK = 1 << 20


def manifest_path(output: PathLike) -> Path:
    output = Path(output)
    return output.with_name(output.name + MANIFEST_SUFFIX)


def file_digest(path: PathLike) -> str:
    """sha256 of a file, read in chunks"""
    path = Path(path)
    if not path.is_file():
        raise DataException(f"file not found: {path}")
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for chunk in iter(lambda: handle.read(_CHUNK), b""):
            digest.update(chunk)
    return digest.hexdigest()


def canonical_config(config: BaseModel) -> dict:
    return config.model_dump(mode="json")


def config_digest(config: BaseModel) -> str:
    """sha256 of a config's key-sorted JSON form"""
    text = json.dumps(canonical_config(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def build_manifest(
    run_id: str,
    command: list[str],
    subcommand: str,
    output: PathLike,
    created_at: str,
    wall_clock_seconds: float,
    seed: Optional[int] = None,
    configs: Optional[dict[str, BaseModel]] = None,
    inputs: Optional[list[PathLike]] = None,
) -> RunManifest:
    configs = configs or {}
    return RunManifest(
        run_id=run_id,
        command=list(command),
        subcommand=subcommand,
        tool_version=__version__,
        seed=seed,
        config_hashes={name: config_digest(cfg) for name, cfg in sorted(configs.items())},
        configs={name: canonical_config(cfg) for name, cfg in sorted(configs.items())},
        input_digests={str(path): file_digest(path) for path in inputs or []},
        output=str(output),
        output_digest=file_digest(output),
        created_at=created_at,
        wall_clock_seconds=wall_clock_seconds,
    )


def write_manifest(manifest: RunManifest) -> Path:
    """Write `<output>.manifest.json` next to the output it describes"""
    path = manifest_path(manifest.output)
    path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info("Manifest written: path=%s, output_digest=%s", path, manifest.output_digest[:12])
    return path


def read_manifest(path: PathLike) -> RunManifest:
    path = Path(path)
    if not path.exists():
        raise DataException(f"file not found: {path}")
    try:
        return RunManifest.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as exc:
        raise DataException(f"invalid manifest {path}: {exc}") from exc
