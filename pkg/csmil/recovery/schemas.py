# csmil/recovery/schemas.py
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator


@dataclass
class RecoveryProblem:
    """y = Z β* + ε with an s-sparse β*"""

    Z: np.ndarray  # M × K
    y: np.ndarray
    beta_star: np.ndarray
    sigma: float
    beta_min: float

    @property
    def M(self) -> int:
        return self.Z.shape[0]

    @property
    def K(self) -> int:
        return self.Z.shape[1]

    @property
    def s(self) -> int:
        return int(np.count_nonzero(self.beta_star))

    @property
    def support(self) -> List[int]:
        return np.flatnonzero(self.beta_star).tolist()


@dataclass
class LassoSolution:
    beta_hat: np.ndarray
    iterations: int
    final_objective: float
    converged: bool
    lipschitz: float
    objective_history: List[float] = field(default_factory=list)

    @property
    def support(self) -> List[int]:
        return np.flatnonzero(self.beta_hat).tolist()


class PhaseRow(BaseModel):
    M: int
    s: int
    K: int
    sigma: float
    gamma: float
    trials: int
    success_rate: float = Field(..., ge=0, le=1)
    mean_l2_error: float


class PhaseTable(BaseModel):
    rows: List[PhaseRow] = Field(default_factory=list)
    gamma_rule: str = "2*sigma*sqrt(log(K)/M)"
    support_mode: Literal["sign", "set"] = "sign"

    @property
    def M_values(self) -> List[int]:
        return [row.M for row in self.rows]

    def row_for(self, M: int) -> PhaseRow:
        for row in self.rows:
            if row.M == M:
                return row
        raise KeyError(M)


class ScalingFit(BaseModel):
    slope: float
    intercept: float
    r_squared: float


class ScalingPoint(BaseModel):
    s: int
    K: int
    s_log_k: float
    minimal_M: Optional[int]


class ScalingReport(BaseModel):
    points: List[ScalingPoint]
    fit: Optional[ScalingFit] = None
    level: float = 0.9


class Diagnostics(BaseModel):
    mu: float
    kappa_s: Dict[int, float]
    columns: Optional[List[int]] = None  # down-sampled column subset used for κ


class ScalingConfig(BaseModel):
    s_values: List[int] = Field(default_factory=lambda: [2, 4])
    k_values: List[int] = Field(default_factory=lambda: [32, 64, 128])
    M_grid: List[int] = Field(default_factory=lambda: [8, 12, 16, 20, 24, 28, 32, 40, 48, 56, 64, 80, 96, 128, 160, 192, 256])
    trials: int = Field(50, ge=1)
    level: float = Field(0.9, gt=0, le=1)


class RecoveryConfig(BaseModel):
    K: int = Field(64, ge=1)
    s: int = Field(4, ge=1)
    M_grid: List[int] = Field(default_factory=lambda: [8, 16, 32, 48, 64, 96, 134, 192])
    trials: int = Field(50, ge=1)
    sigma: float = Field(0.05, ge=0)
    beta_min: float = Field(1.0, gt=0)
    gamma: Optional[float] = Field(None, ge=0)  # overrides the 2σ√(log K / M) rule
    accelerated: bool = True
    support_mode: Literal["sign", "set"] = "sign"
    max_iter: int = Field(20000, ge=1)
    tol: float = Field(1e-12, ge=0)
    scaling: Optional[ScalingConfig] = None

    @field_validator("M_grid")
    @classmethod
    def validate_grid(cls, v):
        if not v or any(m < 1 for m in v):
            raise ValueError("M_grid must be a non-empty list of positive sample counts")
        return v

    @model_validator(mode="after")
    def validate_sparsity(self):
        if self.s > self.K:
            raise ValueError("s cannot exceed K")
        return self
