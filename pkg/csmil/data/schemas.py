# csmil/data/schemas.py
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from csmil.core.errors import InvalidBagError


def _frozen_array(values, name: str) -> np.ndarray:
    array = np.array(values, dtype=np.float64, copy=True)
    if array.ndim != 2:
        raise InvalidBagError(f"{name}: embeddings must be a 2-D matrix, got shape {array.shape}")
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Bag:
    """One slide: instance embeddings (n × d, float64 in memory) and a binary label"""

    id: str
    label: int
    embeddings: np.ndarray

    def __post_init__(self):
        embeddings = _frozen_array(self.embeddings, self.id)
        if embeddings.shape[0] < 1:
            raise InvalidBagError(f"bag {self.id!r} has no instances")
        if embeddings.shape[1] < 1:
            raise InvalidBagError(f"bag {self.id!r} has zero-dimensional embeddings")
        if not np.all(np.isfinite(embeddings)):
            raise InvalidBagError(f"bag {self.id!r} contains non-finite values")
        if self.label not in (0, 1):
            raise InvalidBagError(f"bag {self.id!r} has label {self.label!r}, expected 0 or 1")
        object.__setattr__(self, "embeddings", embeddings)
        object.__setattr__(self, "label", int(self.label))

    @property
    def n(self) -> int:
        return self.embeddings.shape[0]

    @property
    def d(self) -> int:
        return self.embeddings.shape[1]

    def subset(self, rows: np.ndarray) -> "Bag":
        """Same bag restricted to the given instance rows"""
        return Bag(id=self.id, label=self.label, embeddings=self.embeddings[np.asarray(rows, dtype=np.intp)])


@dataclass(frozen=True)
class Dataset:
    bags: Tuple[Bag, ...]
    dim: int
    name: str = "dataset"

    def __post_init__(self):
        bags = tuple(self.bags)
        object.__setattr__(self, "bags", bags)
        seen = set()
        for bag in bags:
            if bag.id in seen:
                raise InvalidBagError(f"duplicate bag id {bag.id!r}")
            seen.add(bag.id)
            if bag.d != self.dim:
                raise InvalidBagError(f"bag {bag.id!r} has dimension {bag.d}, dataset dimension is {self.dim}")

    def __len__(self) -> int:
        return len(self.bags)

    @property
    def labels(self) -> np.ndarray:
        return np.array([bag.label for bag in self.bags], dtype=np.int64)

    @property
    def ids(self) -> List[str]:
        return [bag.id for bag in self.bags]

    @property
    def n_instances(self) -> int:
        return sum(bag.n for bag in self.bags)

    def by_id(self) -> Dict[str, Bag]:
        return {bag.id: bag for bag in self.bags}

    def select(self, ids: List[str]) -> "Dataset":
        index = self.by_id()
        return Dataset(bags=tuple(index[i] for i in ids), dim=self.dim, name=self.name)


class SynthConfig(BaseModel):
    """Planted-cluster MIL generator settings"""

    K_latent: int = Field(8, ge=2)
    s_informative: int = Field(2, ge=1)
    d: int = Field(16, ge=1)
    bags_per_class: int = Field(100, ge=1)
    instances_per_bag: Tuple[int, int] = (20, 40)
    component_separation: float = Field(6.0, gt=0)
    noise_sigma: float = Field(0.5, gt=0)
    positive_fraction: float = Field(0.2, gt=0, le=1)
    seed: int = Field(0, ge=0, le=2**64 - 1)
    name: str = "synthetic"

    @field_validator("instances_per_bag")
    @classmethod
    def validate_range(cls, v):
        n_min, n_max = v
        if n_min < 1:
            raise ValueError("instances_per_bag minimum must be >= 1")
        if n_max < n_min:
            raise ValueError("instances_per_bag maximum must be >= minimum")
        return v

    @model_validator(mode="after")
    def validate_components(self):
        if self.s_informative > self.K_latent:
            raise ValueError("s_informative cannot exceed K_latent")
        if self.s_informative == self.K_latent:
            # negative bags need at least one background component
            raise ValueError("s_informative must leave at least one background component")
        if self.K_latent > self.d:
            raise ValueError("K_latent cannot exceed d (centroids sit on rotated axes)")
        return self


@dataclass(frozen=True)
class GroundTruth:
    informative_components: Tuple[int, ...]
    component_of_instance: Dict[str, Tuple[int, ...]] = field(default_factory=dict)

    def is_informative(self, component: int) -> bool:
        return component in self.informative_components


@dataclass(frozen=True)
class FoldAssignment:
    fold_of_bag: Dict[str, int]
    n_folds: int

    def test_ids(self, fold: int) -> List[str]:
        return [bag_id for bag_id, f in self.fold_of_bag.items() if f == fold]

    def train_ids(self, fold: int) -> List[str]:
        return [bag_id for bag_id, f in self.fold_of_bag.items() if f != fold]

    def restricted_to(self, ids) -> "FoldAssignment":
        keep = set(ids)
        return FoldAssignment({k: v for k, v in self.fold_of_bag.items() if k in keep}, self.n_folds)


class ManifestEntry(BaseModel):
    id: str
    label: Literal[0, 1]
    path: str


class Manifest(BaseModel):
    name: str
    dim: int = Field(..., ge=1)
    bags: List[ManifestEntry]
