# csmil/model/schemas.py
from dataclasses import dataclass, field
from typing import Iterator, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field


class ModelConfig(BaseModel):
    hidden_dim: int = Field(64, ge=1)  # L
    shared_attention: bool = False
    pooling: Literal["attention", "mean"] = "attention"


@dataclass
class AttentionHead:
    """tanh attention: logits = tanh(H Vᵀ) w, V is L × d"""

    V: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        self.V = np.asarray(self.V, dtype=np.float64)
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.V.ndim != 2 or self.w.shape != (self.V.shape[0],):
            raise ValueError(f"head shapes inconsistent: V {self.V.shape}, w {self.w.shape}")
        if not (np.all(np.isfinite(self.V)) and np.all(np.isfinite(self.w))):
            raise ValueError("attention head has non-finite entries")

    @property
    def L(self) -> int:
        return self.V.shape[0]


@dataclass
class CsmilModel:
    """Per-cluster attention heads, global sparse weights β and a 2-way linear classifier"""

    heads: List[AttentionHead]
    beta: np.ndarray
    W: np.ndarray
    b: np.ndarray
    config: ModelConfig = field(default_factory=ModelConfig)
    seed: int = 0
    version: int = 0

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=np.float64)
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        K, d = self.K, self.d
        if K < 1:
            raise ValueError("K must be >= 1")
        if self.W.shape != (2, d) or self.b.shape != (2,):
            raise ValueError(f"classifier shapes inconsistent: W {self.W.shape}, b {self.b.shape}")
        expected_heads = 1 if self.config.shared_attention else K
        if len(self.heads) != expected_heads:
            raise ValueError(f"expected {expected_heads} attention heads, got {len(self.heads)}")
        for head in self.heads:
            if head.V.shape[1] != d:
                raise ValueError(f"head V has {head.V.shape[1]} columns, classifier expects d={d}")
        for name, value in (("beta", self.beta), ("W", self.W), ("b", self.b)):
            if not np.all(np.isfinite(value)):
                raise ValueError(f"{name} has non-finite entries")

    @property
    def K(self) -> int:
        return self.beta.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @property
    def L(self) -> int:
        return self.heads[0].L

    def head_for(self, k: int) -> AttentionHead:
        return self.heads[0] if self.config.shared_attention else self.heads[k]

    def head_index(self, k: int) -> int:
        return 0 if self.config.shared_attention else k

    def parameters(self) -> Iterator[Tuple[str, np.ndarray]]:
        """Named parameter arrays (live views) in a fixed order"""
        for h, head in enumerate(self.heads):
            yield f"heads.{h}.V", head.V
            yield f"heads.{h}.w", head.w
        yield "beta", self.beta
        yield "W", self.W
        yield "b", self.b

    def bump(self) -> None:
        """Mark parameters as changed; invalidates older forward caches"""
        self.version += 1

    def copy(self) -> "CsmilModel":
        return CsmilModel(
            heads=[AttentionHead(V=h.V.copy(), w=h.w.copy()) for h in self.heads],
            beta=self.beta.copy(),
            W=self.W.copy(),
            b=self.b.copy(),
            config=self.config.model_copy(),
            seed=self.seed,
            version=self.version,
        )


@dataclass
class ForwardCache:
    """Single-bag forward quantities"""

    alphas: List[Optional[np.ndarray]]  # None for an empty cluster
    prototypes: np.ndarray  # K × d, zero rows for empty clusters
    z: np.ndarray
    logits: np.ndarray
    probs: np.ndarray


@dataclass
class LossBreakdown:
    total: float
    data_term: float
    penalty: float


def beta_l0(beta: np.ndarray, threshold: float = 1e-8) -> int:
    """‖β‖₀; the threshold only matters for legacy checkpoints"""
    return int(np.count_nonzero(np.abs(np.asarray(beta)) > threshold))


@dataclass
class ClusterBlock:
    """Instances of one cluster across a batch, grouped by bag (bag order, then instance order)"""

    X: np.ndarray  # n_k × d
    starts: np.ndarray  # first row of each present bag's segment
    lengths: np.ndarray
    bag_index: np.ndarray  # batch index of each present bag

    @property
    def empty(self) -> bool:
        return self.X.shape[0] == 0


@dataclass
class PackedBatch:
    labels: np.ndarray
    blocks: List[ClusterBlock]
    bag_ids: List[str]
    dim: int
    token: int

    @property
    def M(self) -> int:
        return self.labels.shape[0]

    @property
    def K(self) -> int:
        return len(self.blocks)


@dataclass
class BatchCache:
    alphas: List[Optional[np.ndarray]]
    activations: List[Optional[np.ndarray]]  # tanh(X Vᵀ) per cluster, None under mean pooling
    prototypes: np.ndarray  # M × K × d
    z: np.ndarray  # M × d
    logits: np.ndarray  # M × 2
    probs: np.ndarray  # M × 2
    model_version: int
    batch_token: int
    model_id: int = 0
