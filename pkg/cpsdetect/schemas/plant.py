from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, Field, model_validator


class StageConfig(BaseModel):
    tank_capacity: float = Field(gt=0)  # liters
    inflow_rate: float = Field(gt=0)  # liters/tick
    outflow_rate: float = Field(gt=0)  # liters/tick
    thresholds: tuple[float, float, float, float]  # LL, L, H, HH in liters
    initial_level: Optional[float] = None  # defaults to the middle of [L, H]

    @model_validator(mode="after")
    def _check_thresholds(self) -> "StageConfig":
        ll, low, high, hh = self.thresholds
        if not 0 <= ll < low < high < hh < self.tank_capacity:
            raise ValueError("thresholds must satisfy 0 <= LL < L < H < HH < tank_capacity")
        if self.initial_level is not None and not ll <= self.initial_level <= hh:
            raise ValueError("initial_level must lie in [LL, HH]")
        return self

    @property
    def start_level(self) -> float:
        if self.initial_level is not None:
            return self.initial_level
        return (self.thresholds[1] + self.thresholds[2]) / 2


class PlantConfig(BaseModel):
    stages: list[StageConfig] = Field(min_length=1)
    tick_count: int = Field(ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    noise_std: float = Field(default=0.0, ge=0)
    start_timestamp: int = 1_500_000_000

    @model_validator(mode="after")
    def _check_margins(self) -> "PlantConfig":
        # One tick of overshoot past L or H must stay inside [LL, HH]
        for k, stage in enumerate(self.stages):
            ll, low, high, hh = stage.thresholds
            max_in = stage.inflow_rate if k == 0 else min(self.stages[k - 1].outflow_rate, stage.inflow_rate)
            if hh - high < max_in:
                raise ValueError(f"stage {k + 1}: HH - H must be at least the maximum inflow {max_in}")
            if low - ll < stage.outflow_rate:
                raise ValueError(f"stage {k + 1}: L - LL must be at least the outflow rate {stage.outflow_rate}")
        return self


class ConstantSpoof(BaseModel):
    kind: Literal["constant_spoof"] = "constant_spoof"
    value: float


class DriftSpoof(BaseModel):
    kind: Literal["drift_spoof"] = "drift_spoof"
    delta_per_tick: float


class ActuatorOverride(BaseModel):
    kind: Literal["actuator_override"] = "actuator_override"
    position: int = Field(ge=0)


AttackMode = Annotated[Union[ConstantSpoof, DriftSpoof, ActuatorOverride], Field(discriminator="kind")]


class AttackPoint(BaseModel):
    channel: str
    mode: AttackMode

    @property
    def is_spoof(self) -> bool:
        return not isinstance(self.mode, ActuatorOverride)


class AttackSpec(BaseModel):
    attack_id: int = Field(ge=0)
    start_tick: int = Field(ge=0)
    end_tick: int = Field(ge=0)  # exclusive
    points: list[AttackPoint] = Field(min_length=1)
    description: str = ""

    @model_validator(mode="after")
    def _check_window(self) -> "AttackSpec":
        if self.start_tick > self.end_tick:
            raise ValueError("start_tick must not exceed end_tick")
        return self

    def active(self, tick: int) -> bool:
        return self.start_tick <= tick < self.end_tick


class Scenario(BaseModel):
    """Scenario file: a plant plus the attacks injected into it"""

    name: str = "scenario"
    plant: PlantConfig
    attacks: list[AttackSpec] = []
