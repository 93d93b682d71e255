from typing import Literal, Optional

from pydantic import BaseModel, Field, field_validator

from cpsdetect.schemas.channel import ActuatorEncoding

Objective = Literal["F_on_eval", "F_on_validation"]
CellStatus = Literal["ok", "failed"]


class GridSpec(BaseModel):
    w_values: list[int] = Field(min_length=1)
    nu_values: list[float] = Field(min_length=1)
    gamma_values: list[float] = Field(min_length=1)
    include_default_gamma: bool = True  # adds 1/d for each w
    objective: Objective = "F_on_eval"
    encoding: ActuatorEncoding = "onehot"
    solver_tol: float = Field(default=1e-6, gt=0)
    max_iter: int = Field(default=10**7, ge=1)

    @field_validator("w_values")
    @classmethod
    def _check_w(cls, values: list[int]) -> list[int]:
        if any(w < 1 for w in values):
            raise ValueError("window sizes must be at least 1")
        return values

    @field_validator("nu_values")
    @classmethod
    def _check_nu(cls, values: list[float]) -> list[float]:
        if any(not 0 < nu <= 1 for nu in values):
            raise ValueError("nu values must lie in (0, 1]")
        return values

    @field_validator("gamma_values")
    @classmethod
    def _check_gamma(cls, values: list[float]) -> list[float]:
        if any(gamma <= 0 for gamma in values):
            raise ValueError("gamma values must be positive")
        return values

    @classmethod
    def log_grid(cls, **overrides) -> "GridSpec":
        """The 2 x 5 x 5 logarithmic grid, without the extra 1/d candidate"""
        fields = {
            "include_default_gamma": False,
            "w_values": [2, 4],
            "nu_values": [1e-4, 1e-3, 1e-2, 1e-1, 0.5],
            "gamma_values": [1e-4, 1e-3, 1e-2, 1e-1, 1.0],
        }
        fields.update(overrides)
        return cls(**fields)


class SvmPoint(BaseModel):
    nu: float = Field(gt=0, le=1)
    gamma: float = Field(gt=0)


class RandomSearchSpec(BaseModel):
    w: int = Field(ge=1)
    scale: float = Field(default=1e-3, gt=0)  # mean of the exponential draws
    trials: int = Field(ge=1)
    seed: int = Field(default=0, ge=0)
    incumbent: Optional[SvmPoint] = None  # evaluated as trial 0
    objective: Objective = "F_on_eval"
    encoding: ActuatorEncoding = "onehot"
    solver_tol: float = Field(default=1e-6, gt=0)
    max_iter: int = Field(default=10**7, ge=1)


class TuneRow(BaseModel):
    index: int
    w: int
    nu: float
    gamma: float
    f_measure: Optional[float] = None  # None for failed cells
    test_f_measure: Optional[float] = None  # validation mode only
    status: CellStatus = "ok"
    error: str = ""


class OperatingPoint(BaseModel):
    hidden_dim: Optional[int] = Field(default=None, ge=1)  # None when a single net was swept
    epoch: int = Field(ge=1)
    threshold: float
    f_measure: float
    auc: Optional[float] = None
