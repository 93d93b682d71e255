import json
import logging
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional, TypeVar, Union

from pydantic import BaseModel, ValidationError

from cpsdetect.exceptions import UsageException
from cpsdetect.services import manifest_service

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
ConfigT = TypeVar("ConfigT", bound=BaseModel)


@dataclass
class RunContext:
    """State of one CLI invocation: global flags plus what the command read and wrote"""

    command: list[str]
    run_id: str
    seed: Optional[int] = None
    timestamp: Optional[str] = None  # pins checkpoint and manifest timestamps
    overrides: list[str] = field(default_factory=list)
    configs: dict[str, BaseModel] = field(default_factory=dict)
    inputs: list[Path] = field(default_factory=list)
    outputs: list[Path] = field(default_factory=list)
    started: float = field(default_factory=time.perf_counter)

    def created_at(self) -> str:
        return self.timestamp or datetime.now(timezone.utc).isoformat()

    def input(self, path: PathLike) -> Path:
        path = Path(path)
        if path not in self.inputs:
            self.inputs.append(path)
        return path

    def output(self, path: PathLike) -> Path:
        """Register an output file and make sure its directory exists"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        if path not in self.outputs:
            self.outputs.append(path)
        return path

    def write_manifests(self, subcommand: str) -> None:
        elapsed = time.perf_counter() - self.started
        for output in self.outputs:
            manifest = manifest_service.build_manifest(
                run_id=self.run_id,
                command=self.command,
                subcommand=subcommand,
                output=output,
                created_at=self.created_at(),
                wall_clock_seconds=elapsed,
                seed=self.seed,
                configs=self.configs,
                inputs=[p for p in self.inputs if p.is_file()],
            )
            manifest_service.write_manifest(manifest)


def parse_override(text: str) -> tuple[list[str], Any]:
    """Split `a.b.c=value`; the value is JSON when it parses, otherwise a plain string"""
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise UsageException(f"--set expects key=value, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    for text in overrides:
        keys, value = parse_override(text)
        node = data
        for key in keys[:-1]:
            child = node.get(key)
            if not isinstance(child, dict):
                child = {}
                node[key] = child
            node = child
        node[keys[-1]] = value
    return data


def load_config(
    context: RunContext,
    name: str,
    model: type[ConfigT],
    path: Optional[PathLike] = None,
    seed_key: Optional[str] = None,
    base: Optional[dict] = None,
) -> ConfigT:
    """Load a JSON config, apply --seed and --set overrides, then validate.

    Without a path the config starts from `base` (or the model defaults). Any
    validation failure is a usage error.
    """
    data: dict = dict(base or {})
    if path is not None:
        path = context.input(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise UsageException(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise UsageException(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageException(f"config file {path} must hold a JSON object")
    if seed_key is not None and context.seed is not None:
        apply_overrides(data, [f"{seed_key}={context.seed}"])
    apply_overrides(data, context.overrides)
    try:
        config = model.model_validate(data)
    except ValidationError as exc:
        raise UsageException(f"invalid {name} config: {exc}") from exc
    context.configs[name] = config
    logger.info("Config loaded: name=%s, path=%s, overrides=%d", name, path, len(context.overrides))
    return config
