from typing import Optional

from pydantic import BaseModel, Field

from cpsdetect.schemas.channel import ChannelSchema, NormStats


class DensityNetConfig(BaseModel):
    hidden_dim: int = Field(default=100, ge=1)
    truncation_len: int = Field(default=100, ge=1)  # entries per gradient step
    batch_size: int = Field(default=10, ge=1)  # contiguous chunks trained in parallel
    learning_rate: float = Field(default=1e-3, gt=0)
    epochs: int = Field(default=10, ge=1)
    variance_floor: float = Field(default=1e-4, gt=0)
    seed: int = Field(default=0, ge=0)


class ParamShape(BaseModel):
    name: str
    shape: list[int]


class DensityNetHeader(BaseModel):
    """JSON header of a model checkpoint; parameter arrays follow in `params` order"""

    format_version: int
    channels: ChannelSchema
    config: DensityNetConfig
    norm_stats: Optional[NormStats] = None
    history: list[float] = []
    holdout_history: list[float] = []
    params: list[ParamShape]
    sha256: str
    created_at: str
