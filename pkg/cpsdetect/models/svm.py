from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from cpsdetect.schemas.channel import ActuatorEncoding, ChannelSchema

NORMAL_VERDICT = "Normal"
ABNORMAL_VERDICT = "Abnormal"


@dataclass(frozen=True)
class Window:
    start_index: int
    features: np.ndarray
    abnormal: bool
    attack_ids: frozenset[int]


@dataclass(frozen=True)
class WindowSet:
    """Arrays behind the windows of one log; features are flattened entry-major"""

    w: int
    encoding: ActuatorEncoding
    start_index: np.ndarray  # (K,)
    timestamps: np.ndarray  # (K,) timestamp of each window's first entry
    features: np.ndarray  # (K, d*w)
    abnormal: np.ndarray  # (K,) bool
    attack_ids: list[frozenset[int]]

    def __len__(self) -> int:
        return len(self.start_index)

    def __getitem__(self, i: int) -> Window:
        return Window(
            start_index=int(self.start_index[i]),
            features=self.features[i],
            abnormal=bool(self.abnormal[i]),
            attack_ids=self.attack_ids[i],
        )

    def __iter__(self) -> Iterator[Window]:
        for i in range(len(self)):
            yield self[i]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass
class SvmModel:
    schema: Optional[ChannelSchema]
    w: int
    nu: float
    gamma: float
    rho: float
    encoding: ActuatorEncoding
    support_vectors: np.ndarray  # (s, d*w)
    alphas: np.ndarray  # (s,)
    n_train: int
    objective: float
    iterations: int = 0
    margin_tol: float = 0.0  # decision values down to -margin_tol are Normal

    @property
    def dim(self) -> int:
        return self.support_vectors.shape[1]


@dataclass(frozen=True)
class SvmPrediction:
    start_index: np.ndarray
    decision_value: np.ndarray
    abnormal: np.ndarray  # decision_value < -margin_tol

    def __len__(self) -> int:
        return len(self.start_index)

    def __iter__(self) -> Iterator[tuple[int, str, float]]:
        for i in range(len(self)):
            verdict = ABNORMAL_VERDICT if self.abnormal[i] else NORMAL_VERDICT
            yield int(self.start_index[i]), verdict, float(self.decision_value[i])
