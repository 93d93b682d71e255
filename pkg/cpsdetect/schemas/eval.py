from typing import Literal, Optional

from pydantic import BaseModel, Field, model_validator

CountingMode = Literal["PerEntry", "PerWindow"]


class EvalReport(BaseModel):
    counting_mode: CountingMode
    precision: float = Field(ge=0, le=1)
    recall: float = Field(ge=0, le=1)
    f_measure: float = Field(ge=0, le=1)
    auc: Optional[float] = Field(default=None, ge=0, le=1)  # None when a class is absent
    auc_defined: bool = False
    false_alarm_rate: float = Field(ge=0, le=1)
    per_attack_recall: dict[int, float] = {}
    threshold: Optional[float] = None  # PerEntry only
    tp: int = Field(ge=0)
    fp: int = Field(ge=0)
    fn: int = Field(ge=0)
    tn: int = Field(ge=0)

    @model_validator(mode="after")
    def _check_auc_flag(self) -> "EvalReport":
        if self.auc_defined != (self.auc is not None):
            raise ValueError("auc_defined must be set exactly when auc is present")
        return self
