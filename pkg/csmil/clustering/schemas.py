# csmil/clustering/schemas.py
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field


class ClusteringConfig(BaseModel):
    K: int = Field(8, ge=1)
    max_iter: int = Field(300, ge=1)
    tol: float = Field(1e-6, ge=0)
    n_init: int = Field(10, ge=1)
    standardize: bool = False


@dataclass
class ClusterModel:
    """K global centers; shift/scale are set when fitted on z-scored features"""

    centers: np.ndarray
    inertia: float
    iterations_run: int
    shift: Optional[np.ndarray] = None
    scale: Optional[np.ndarray] = None
    inertia_history: List[float] = field(default_factory=list)

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64)
        if self.centers.ndim != 2 or self.centers.shape[0] < 1:
            raise ValueError(f"centers must be a K×d matrix, got shape {self.centers.shape}")
        if not np.all(np.isfinite(self.centers)):
            raise ValueError("centers must be finite")
        if self.inertia < 0:
            raise ValueError("inertia must be non-negative")

    @property
    def K(self) -> int:
        return self.centers.shape[0]

    @property
    def d(self) -> int:
        return self.centers.shape[1]

    def transform(self, embeddings: np.ndarray) -> np.ndarray:
        if self.shift is None:
            return embeddings
        return (embeddings - self.shift) / self.scale


@dataclass(frozen=True)
class ClusterAssignment:
    cluster_of_instance: np.ndarray
    K: int

    def __post_init__(self):
        labels = np.asarray(self.cluster_of_instance, dtype=np.int64)
        if labels.ndim != 1:
            raise ValueError("cluster_of_instance must be a vector")
        if labels.size and (labels.min() < 0 or labels.max() >= self.K):
            raise ValueError(f"cluster ids must lie in [0, {self.K})")
        labels.setflags(write=False)
        object.__setattr__(self, "cluster_of_instance", labels)

    @property
    def counts(self) -> np.ndarray:
        """C^i_k for k = 0..K-1"""
        return np.bincount(self.cluster_of_instance, minlength=self.K)

    @property
    def n(self) -> int:
        return self.cluster_of_instance.size

    def present(self) -> Tuple[int, ...]:
        return tuple(int(k) for k in np.flatnonzero(self.counts))
