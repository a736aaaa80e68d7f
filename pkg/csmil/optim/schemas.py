# csmil/optim/schemas.py
from dataclasses import dataclass
from typing import Dict, Iterator, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from csmil.model.schemas import CsmilModel


class AdamConfig(BaseModel):
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)


class EarlyStopConfig(BaseModel):
    patience: int = Field(50, ge=1)
    metric: Literal["auc", "accuracy", "f1"] = "auc"


class TrainConfig(BaseModel):
    epochs: int = Field(300, ge=1)
    lr_smooth: float = Field(1e-3, gt=0)
    lr_beta: float = Field(1e-2, gt=0)
    gamma: float = Field(0.01, ge=0)
    batch_mode: Literal["full", "minibatch"] = "full"
    batch_size: int = Field(32, ge=1)
    optimizer: Literal["adam", "sgd"] = "adam"
    adam: AdamConfig = Field(default_factory=AdamConfig)
    seed: int = Field(0, ge=0, le=2**64 - 1)
    early_stop: Optional[EarlyStopConfig] = None
    grad_clip: Optional[float] = Field(5.0, gt=0)
    freeze_beta: bool = False
    schedule: Literal["joint", "alternating"] = "joint"


@dataclass
class GradientSet:
    """∂(data term)/∂θ, shaped like the model's parameters"""

    heads_V: List[np.ndarray]
    heads_w: List[np.ndarray]
    beta: np.ndarray
    W: np.ndarray
    b: np.ndarray

    @classmethod
    def zeros_like(cls, model: CsmilModel) -> "GradientSet":
        return cls(
            heads_V=[np.zeros_like(h.V) for h in model.heads],
            heads_w=[np.zeros_like(h.w) for h in model.heads],
            beta=np.zeros_like(model.beta),
            W=np.zeros_like(model.W),
            b=np.zeros_like(model.b),
        )

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        """Same names and order as CsmilModel.parameters()"""
        for h, (dV, dw) in enumerate(zip(self.heads_V, self.heads_w)):
            yield f"heads.{h}.V", dV
            yield f"heads.{h}.w", dw
        yield "beta", self.beta
        yield "W", self.W
        yield "b", self.b

    def as_dict(self) -> Dict[str, np.ndarray]:
        return dict(self.items())

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(g * g)) for _, g in self.items())))

    def scale(self, factor: float) -> None:
        for _, g in self.items():
            g *= factor

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(g)) for _, g in self.items())


class EpochRecord(BaseModel):
    epoch: int
    total: float
    data: float
    penalty: float
    beta_l0: int
    val_acc: Optional[float] = None
    val_f1: Optional[float] = None
    val_auc: Optional[float] = None


class TrainHistory(BaseModel):
    records: List[EpochRecord] = Field(default_factory=list)
    stopped_early: bool = False
    best_epoch: Optional[int] = None

    def __len__(self) -> int:
        return len(self.records)

    @property
    def epochs_run(self) -> int:
        return len(self.records)

    @property
    def final(self) -> EpochRecord:
        return self.records[-1]
