from typing import Optional

from pydantic import BaseModel, Field


class RunManifest(BaseModel):
    """Everything needed to reproduce one output file"""

    run_id: str
    command: list[str]  # argv as given, without the program name
    subcommand: str
    tool_version: str
    seed: Optional[int] = None
    config_hashes: dict[str, str] = {}  # config name -> sha256 of its canonical JSON
    configs: dict[str, dict] = {}  # the effective configs after --set overrides
    input_digests: dict[str, str] = {}  # input path -> sha256
    output: str
    output_digest: str
    created_at: str
    wall_clock_seconds: float = Field(ge=0)
