# csmil/evaluation/schemas.py
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, model_validator

DEFAULT_GAMMA_GRID: Tuple[float, ...] = (
    0.0001, 0.0005, 0.001, 0.002, 0.003, 0.004, 0.005, 0.006, 0.007, 0.008, 0.009, 0.01, 0.02, 0.05, 0.1,
)
DEFAULT_K_GRID: Tuple[int, ...] = (2, 3, 5, 10)


class Confusion(BaseModel):
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


class MetricReport(BaseModel):
    accuracy: float = Field(..., ge=0, le=1)
    f1: float = Field(..., ge=0, le=1)
    auc: Optional[float] = Field(None, ge=0, le=1)
    roc: List[Tuple[float, float]] = Field(default_factory=list)
    confusion: Confusion

    @model_validator(mode="after")
    def validate_roc(self):
        if self.roc:
            if self.roc[0] != (0.0, 0.0) or self.roc[-1] != (1.0, 1.0):
                raise ValueError("ROC must run from (0, 0) to (1, 1)")
            for (f0, t0), (f1, t1) in zip(self.roc, self.roc[1:]):
                if f1 < f0 or t1 < t0:
                    raise ValueError("ROC coordinates must be non-decreasing")
        return self


class FoldResult(BaseModel):
    fold: int
    report: MetricReport
    bag_ids: List[str]
    labels: List[int]
    scores: List[float]
    beta: List[float]
    beta_l0: int
    penalty: float
    epochs_run: int


class CVReport(BaseModel):
    K: int
    gamma: float
    folds: List[FoldResult]
    mean: MetricReport
    pooled: Optional[MetricReport] = None  # all out-of-fold scores together

    @property
    def mean_beta_l0(self) -> float:
        return sum(f.beta_l0 for f in self.folds) / len(self.folds)


class AblationEntry(BaseModel):
    removed: Tuple[int, ...]
    report: MetricReport
    delta_acc: float
    excluded_bags: int
    majority_component: Optional[List[Optional[int]]] = None

    @property
    def key(self) -> str:
        return "+".join(str(k) for k in self.removed)


class AblationReport(BaseModel):
    K: int
    drop_size: int
    sparse: bool
    baseline: MetricReport
    entries: List[AblationEntry]
    reference_counts: List[int]  # instances per reference cluster over the whole dataset

    @property
    def per_removed(self) -> Dict[str, MetricReport]:
        return {e.key: e.report for e in self.entries}

    @property
    def delta(self) -> Dict[str, float]:
        return {e.key: e.delta_acc for e in self.entries}


class SweepEntry(BaseModel):
    value: float
    cv: CVReport


class SweepReport(BaseModel):
    param: str  # "gamma" or "K"
    entries: List[SweepEntry]

    @property
    def grid(self) -> List[float]:
        return [e.value for e in self.entries]

    def best(self, metric: str = "auc") -> SweepEntry:
        """First grid value with the highest mean metric"""
        def score(entry: SweepEntry) -> float:
            value = getattr(entry.cv.mean, metric)
            return float("-inf") if value is None else value

        return max(self.entries, key=score)


class SelectionReport(BaseModel):
    selected: List[int]
    majority_component: List[Optional[int]]
    informative_clusters: List[int]
    zero_background_clusters: List[int]
    precision: float
    recall: float


class ComparisonReport(BaseModel):
    csmil: CVReport
    abmil: CVReport
