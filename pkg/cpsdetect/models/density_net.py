from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from cpsdetect.schemas.channel import ChannelSchema, NormStats
from cpsdetect.schemas.density_net import DensityNetConfig


@dataclass
class DensityNet:
    """LSTM encoder plus one head per channel and one mixer between consecutive channels.

    Parameters live in `params`, keyed `lstm.*`, `act.<j>.*`, `sen.<k>.*` and
    `mix.<c>.*`, where c is the channel position in schema order. The last channel
    has no mixer.
    """

    schema: ChannelSchema
    config: DensityNetConfig
    params: dict[str, np.ndarray]
    norm_stats: Optional[NormStats] = None
    history: list[float] = field(default_factory=list)
    holdout_history: list[float] = field(default_factory=list)

    @property
    def input_dim(self) -> int:
        return self.schema.feature_dim("onehot")

    @property
    def channel_count(self) -> int:
        return self.schema.n + self.schema.m

    def zero_state(self, batch: int = 1) -> tuple[np.ndarray, np.ndarray]:
        hidden = self.config.hidden_dim
        return np.zeros((batch, hidden)), np.zeros((batch, hidden))


@dataclass(frozen=True)
class ScoreTrace:
    """Per-entry outlier factors and their per-channel negative log-probabilities"""

    timestamps: np.ndarray
    factors: np.ndarray  # (k,)
    breakdown: np.ndarray  # (k, channels)
    channel_names: list[str]
    labels: np.ndarray  # label codes copied from the scored log

    def __len__(self) -> int:
        return len(self.factors)
