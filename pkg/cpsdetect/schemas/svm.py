from typing import Optional

from pydantic import BaseModel, Field

from cpsdetect.schemas.channel import ActuatorEncoding, ChannelSchema


class SvmConfig(BaseModel):
    w: int = Field(default=4, ge=1)  # window size in entries
    nu: float = Field(default=0.01, gt=0, le=1)
    gamma: Optional[float] = Field(default=None, gt=0)  # None means 1/d
    solver_tol: float = Field(default=1e-6, gt=0)
    max_iter: int = Field(default=10**7, ge=1)
    encoding: ActuatorEncoding = "onehot"
    cache_rows: int = Field(default=2048, ge=2)


class SvmHeader(BaseModel):
    """First line of a model file; support vectors and alphas follow as float64"""

    format_version: int
    channels: ChannelSchema
    w: int
    nu: float
    gamma: float
    rho: float
    encoding: ActuatorEncoding
    n_support: int
    dim: int
    n_train: int
    objective: float
    iterations: int
    margin_tol: float = 0.0
    created_at: str
