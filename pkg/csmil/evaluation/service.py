# csmil/evaluation/service.py
import itertools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from csmil.clustering.schemas import ClusterAssignment, ClusteringConfig, ClusterModel
from csmil.clustering.service import assign_all, fit_on_bags
from csmil.core.errors import PreconditionError
from csmil.core.seeding import derive_seed, make_rng
from csmil.core.serialization import write_csv
from csmil.core.tasks import run_jobs
from csmil.data.schemas import Bag, Dataset, FoldAssignment, GroundTruth
from csmil.model.batch import forward_batch, pack_batch
from csmil.model.schemas import CsmilModel, ModelConfig, beta_l0
from csmil.model.service import init_model
from csmil.optim.schemas import TrainConfig, TrainHistory
from csmil.optim.trainer import train

from .metrics import mean_report, safe_metrics
from .schemas import (
    DEFAULT_GAMMA_GRID,
    DEFAULT_K_GRID,
    AblationEntry,
    AblationReport,
    ComparisonReport,
    CVReport,
    FoldResult,
    SelectionReport,
    SweepEntry,
    SweepReport,
)

logger = logging.getLogger(__name__)

ClusterFitHook = Callable[[List[str]], None]

INNER_VALIDATION_FRACTION = 0.2


@dataclass
class PipelineResult:
    cluster_model: ClusterModel
    model: CsmilModel
    history: TrainHistory
    assignments: List[ClusterAssignment]


def inner_validation_split(bags: Sequence[Bag], seed: int) -> Tuple[List[Bag], List[Bag]]:
    """Stratified 80/20 split of training bags for early stopping"""
    rng = make_rng(seed, "inner-validation")
    fit: List[Bag] = []
    val: List[Bag] = []
    for label in (1, 0):
        members = sorted((b for b in bags if b.label == label), key=lambda b: b.id)
        n_val = min(max(1, round(INNER_VALIDATION_FRACTION * len(members))), len(members) - 1) if len(members) > 1 else 0
        held = set(rng.permutation(len(members))[:n_val].tolist())
        for i, bag in enumerate(members):
            (val if i in held else fit).append(bag)
    return sorted(fit, key=lambda b: b.id), sorted(val, key=lambda b: b.id)


def fit_pipeline(
    train_bags: Sequence[Bag],
    K: int,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    seed: int,
    clustering_cfg: Optional[ClusteringConfig] = None,
    val_bags: Optional[Sequence[Bag]] = None,
    on_cluster_fit: Optional[ClusterFitHook] = None,
) -> PipelineResult:
    """Global clustering on the training instances, local assignment, init, train"""
    clustering_cfg = clustering_cfg or ClusteringConfig(K=K)
    cluster_model = fit_on_bags(
        train_bags,
        K,
        derive_seed(seed, "cluster"),
        max_iter=clustering_cfg.max_iter,
        tol=clustering_cfg.tol,
        n_init=clustering_cfg.n_init,
        standardize=clustering_cfg.standardize,
        on_fit=on_cluster_fit,
    )
    assignments = assign_all(train_bags, cluster_model)
    model = init_model(K, train_bags[0].d, model_cfg, seed=derive_seed(seed, "init"))
    cfg = train_cfg.model_copy(update={"seed": derive_seed(seed, "train")})
    val_assignments = assign_all(val_bags, cluster_model) if val_bags else None
    model, history = train(
        train_bags, assignments, cfg, model, val_bags=val_bags or None, val_assignments=val_assignments
    )
    return PipelineResult(cluster_model=cluster_model, model=model, history=history, assignments=assignments)


def predict_bags(bags: Sequence[Bag], cluster_model: ClusterModel, model: CsmilModel) -> np.ndarray:
    """Positive-class probabilities, one per bag"""
    batch = pack_batch(bags, assign_all(bags, cluster_model))
    return forward_batch(batch, model).probs[:, 1]


@dataclass(frozen=True)
class FoldJob:
    dataset: Dataset
    folds: FoldAssignment
    fold: int
    K: int
    clustering: ClusteringConfig
    model: ModelConfig
    train: TrainConfig
    seed: int


def run_fold(job: FoldJob, on_cluster_fit: Optional[ClusterFitHook] = None) -> FoldResult:
    # sorted ids: results do not depend on manifest order
    bags = job.dataset.by_id()
    train_bags = [bags[i] for i in sorted(job.folds.train_ids(job.fold))]
    test_bags = [bags[i] for i in sorted(job.folds.test_ids(job.fold))]
    if not train_bags or not test_bags:
        raise PreconditionError(f"fold {job.fold} has {len(train_bags)} training and {len(test_bags)} test bags")

    fold_seed = derive_seed(job.seed, "fold", job.fold)
    if job.train.early_stop is not None:
        fit_bags, val_bags = inner_validation_split(train_bags, fold_seed)
    else:
        # held-out fold only feeds the monitoring columns of the history
        fit_bags, val_bags = train_bags, test_bags

    result = fit_pipeline(
        fit_bags,
        job.K,
        job.model,
        job.train,
        fold_seed,
        clustering_cfg=job.clustering.model_copy(update={"K": job.K}),
        val_bags=val_bags,
        on_cluster_fit=on_cluster_fit,
    )
    scores = predict_bags(test_bags, result.cluster_model, result.model)
    labels = [bag.label for bag in test_bags]
    report = safe_metrics(scores, labels)
    logger.info(
        f"Fold {job.fold}: acc={report.accuracy:.3f} f1={report.f1:.3f} auc={report.auc} "
        f"beta_l0={beta_l0(result.model.beta)}/{job.K}"
    )
    return FoldResult(
        fold=job.fold,
        report=report,
        bag_ids=[bag.id for bag in test_bags],
        labels=labels,
        scores=scores.tolist(),
        beta=result.model.beta.tolist(),
        beta_l0=beta_l0(result.model.beta),
        penalty=result.history.final.penalty,
        epochs_run=result.history.epochs_run,
    )


def _fold_jobs(
    dataset: Dataset,
    folds: FoldAssignment,
    train_cfg: TrainConfig,
    K: int,
    seed: int,
    clustering_cfg: Optional[ClusteringConfig],
    model_cfg: Optional[ModelConfig],
) -> List[FoldJob]:
    if K < 1:
        raise PreconditionError(f"K must be >= 1, got {K}")
    return [
        FoldJob(
            dataset=dataset,
            folds=folds,
            fold=f,
            K=K,
            clustering=clustering_cfg or ClusteringConfig(K=K),
            model=model_cfg or ModelConfig(),
            train=train_cfg,
            seed=seed,
        )
        for f in range(folds.n_folds)
    ]


def _assemble(K: int, gamma: float, results: Sequence[FoldResult]) -> CVReport:
    scores = [s for r in results for s in r.scores]
    labels = [y for r in results for y in r.labels]
    return CVReport(
        K=K,
        gamma=gamma,
        folds=list(results),
        mean=mean_report([r.report for r in results]),
        pooled=safe_metrics(scores, labels),
    )


def _run_grouped(groups: Sequence[List[FoldJob]], jobs: Optional[int], desc: str) -> List[List[FoldResult]]:
    """One process-pool pass over every fold of every group; results regrouped in order"""
    flat = [job for group in groups for job in group]
    results = run_jobs(run_fold, flat, jobs=jobs, desc=desc)
    grouped = []
    cursor = 0
    for group in groups:
        grouped.append(results[cursor : cursor + len(group)])
        cursor += len(group)
    return grouped


def cross_validate(
    dataset: Dataset,
    folds: FoldAssignment,
    train_cfg: TrainConfig,
    K: int,
    seed: int,
    clustering_cfg: Optional[ClusteringConfig] = None,
    model_cfg: Optional[ModelConfig] = None,
    jobs: Optional[int] = None,
    on_cluster_fit: Optional[ClusterFitHook] = None,
) -> CVReport:
    """Per fold: cluster the training bags, train, score the held-out bags"""
    fold_jobs = _fold_jobs(dataset, folds, train_cfg, K, seed, clustering_cfg, model_cfg)
    if on_cluster_fit is not None:
        # hooks are not picklable; run in-process
        results = [run_fold(job, on_cluster_fit) for job in fold_jobs]
    else:
        results = _run_grouped([fold_jobs], jobs, f"cv K={K}")[0]
    report = _assemble(K, train_cfg.gamma, results)
    logger.info(
        f"{folds.n_folds}-fold CV (K={K}, gamma={train_cfg.gamma}): "
        f"acc={report.mean.accuracy:.3f} f1={report.mean.f1:.3f} auc={report.mean.auc}"
    )
    return report


def plain_aggregation(train_cfg: TrainConfig) -> TrainConfig:
    """γ = 0 with β frozen at its initial ones"""
    return train_cfg.model_copy(update={"gamma": 0.0, "freeze_beta": True})


def majority_components(
    bags: Sequence[Bag], assignments: Sequence[ClusterAssignment], ground_truth: GroundTruth, K: int
) -> List[Optional[int]]:
    """Most frequent latent component per cluster (lowest id on ties, None when empty)"""
    if ground_truth is None:
        raise PreconditionError("ground truth is required to map clusters to latent components")
    tallies: List[Dict[int, int]] = [{} for _ in range(K)]
    for bag, assignment in zip(bags, assignments):
        if bag.id not in ground_truth.component_of_instance:
            raise PreconditionError(f"ground truth has no entry for bag {bag.id!r}")
        components = ground_truth.component_of_instance[bag.id]
        for cluster, component in zip(assignment.cluster_of_instance, components):
            tally = tallies[int(cluster)]
            tally[component] = tally.get(component, 0) + 1
    return [min(t, key=lambda c: (-t[c], c)) if t else None for t in tallies]


def ablate_clusters(
    dataset: Dataset,
    folds: FoldAssignment,
    train_cfg: TrainConfig,
    K: int,
    seed: int,
    drop_size: int = 1,
    sparse: bool = False,
    clustering_cfg: Optional[ClusteringConfig] = None,
    model_cfg: Optional[ModelConfig] = None,
    ground_truth: Optional[GroundTruth] = None,
    jobs: Optional[int] = None,
    on_cluster_fit: Optional[ClusterFitHook] = None,
) -> AblationReport:
    """
    Remove the instances of each cluster (or each drop_size-combination) from every
    bag and re-run cross-validation.

    The reference clustering over all instances is label-free and only names the
    clusters to drop, so a removed id means the same instances in every fold. It
    never reaches a trained model: each fold of the baseline and of every reduced
    dataset fits its own clustering on its training bags, reported to on_cluster_fit.
    """
    if K < 2:
        raise PreconditionError(f"ablation needs K >= 2, got {K}")
    if not 1 <= drop_size < K:
        raise PreconditionError(f"drop_size must be in [1, {K - 1}], got {drop_size}")
    cfg = train_cfg if sparse else plain_aggregation(train_cfg)
    clustering_cfg = (clustering_cfg or ClusteringConfig()).model_copy(update={"K": K})

    ordered = sorted(dataset.bags, key=lambda b: b.id)
    reference = fit_on_bags(
        ordered,
        K,
        derive_seed(seed, "ablation-reference"),
        max_iter=clustering_cfg.max_iter,
        tol=clustering_cfg.tol,
        n_init=clustering_cfg.n_init,
        standardize=clustering_cfg.standardize,
    )
    reference_assignments = assign_all(ordered, reference)
    majority = majority_components(ordered, reference_assignments, ground_truth, K) if ground_truth else None
    reference_counts = np.sum([a.counts for a in reference_assignments], axis=0)

    combos = list(itertools.combinations(range(K), drop_size))
    groups = [_fold_jobs(dataset, folds, cfg, K, seed, clustering_cfg, model_cfg)]
    excluded: List[int] = []
    for combo in combos:
        kept_bags = []
        for bag, assignment in zip(ordered, reference_assignments):
            rows = np.flatnonzero(~np.isin(assignment.cluster_of_instance, combo))
            if rows.size:
                kept_bags.append(bag.subset(rows))
        excluded.append(len(ordered) - len(kept_bags))
        reduced = Dataset(bags=tuple(kept_bags), dim=dataset.dim, name=f"{dataset.name}-without-{'+'.join(map(str, combo))}")
        groups.append(_fold_jobs(reduced, folds.restricted_to(reduced.ids), cfg, K, seed, clustering_cfg, model_cfg))

    if on_cluster_fit is not None:
        grouped = [[run_fold(job, on_cluster_fit) for job in group] for group in groups]
    else:
        grouped = _run_grouped(groups, jobs, f"ablation K={K}")
    baseline = _assemble(K, cfg.gamma, grouped[0])
    entries = []
    for combo, results, n_excluded in zip(combos, grouped[1:], excluded):
        variant = _assemble(K, cfg.gamma, results)
        entry = AblationEntry(
            removed=combo,
            report=variant.mean,
            delta_acc=variant.mean.accuracy - baseline.mean.accuracy,
            excluded_bags=n_excluded,
            majority_component=[majority[c] for c in combo] if majority else None,
        )
        entries.append(entry)
        logger.info(f"Removed cluster(s) {entry.key}: acc={variant.mean.accuracy:.3f} (delta {entry.delta_acc:+.3f}), excluded {n_excluded} bags")

    return AblationReport(
        K=K,
        drop_size=drop_size,
        sparse=sparse,
        baseline=baseline.mean,
        entries=entries,
        reference_counts=reference_counts.tolist(),
    )


def sweep_gamma(
    dataset: Dataset,
    folds: FoldAssignment,
    train_cfg: TrainConfig,
    K: int,
    seed: int,
    gamma_grid: Sequence[float] = DEFAULT_GAMMA_GRID,
    clustering_cfg: Optional[ClusteringConfig] = None,
    model_cfg: Optional[ModelConfig] = None,
    jobs: Optional[int] = None,
) -> SweepReport:
    if not gamma_grid:
        raise PreconditionError("gamma grid must not be empty")
    if any(g < 0 for g in gamma_grid):
        raise PreconditionError("gamma values must be >= 0")
    configs = [train_cfg.model_copy(update={"gamma": float(g)}) for g in gamma_grid]
    groups = [_fold_jobs(dataset, folds, cfg, K, seed, clustering_cfg, model_cfg) for cfg in configs]
    grouped = _run_grouped(groups, jobs, "gamma sweep")
    entries = [
        SweepEntry(value=float(g), cv=_assemble(K, float(g), results)) for g, results in zip(gamma_grid, grouped)
    ]
    for entry in entries:
        logger.info(f"gamma={entry.value}: auc={entry.cv.mean.auc} mean beta_l0={entry.cv.mean_beta_l0:.2f}")
    return SweepReport(param="gamma", entries=entries)


def sweep_k(
    dataset: Dataset,
    folds: FoldAssignment,
    train_cfg: TrainConfig,
    seed: int,
    k_grid: Sequence[int] = DEFAULT_K_GRID,
    gamma: Optional[float] = None,
    clustering_cfg: Optional[ClusteringConfig] = None,
    model_cfg: Optional[ModelConfig] = None,
    jobs: Optional[int] = None,
) -> SweepReport:
    if not k_grid:
        raise PreconditionError("K grid must not be empty")
    cfg = train_cfg if gamma is None else train_cfg.model_copy(update={"gamma": gamma})
    groups = [_fold_jobs(dataset, folds, cfg, int(K), seed, clustering_cfg, model_cfg) for K in k_grid]
    grouped = _run_grouped(groups, jobs, "K sweep")
    entries = [SweepEntry(value=int(K), cv=_assemble(int(K), cfg.gamma, results)) for K, results in zip(k_grid, grouped)]
    for entry in entries:
        logger.info(f"K={int(entry.value)}: auc={entry.cv.mean.auc}")
    return SweepReport(param="K", entries=entries)


def identify_selected_clusters(
    model: CsmilModel,
    bags: Sequence[Bag],
    assignments: Sequence[ClusterAssignment],
    ground_truth: Optional[GroundTruth],
) -> SelectionReport:
    """Clusters kept by β (β_k ≠ 0) scored against the planted informative components"""
    if ground_truth is None:
        raise PreconditionError("identify_selected_clusters needs the synthetic ground truth")
    majority = majority_components(bags, assignments, ground_truth, model.K)
    selected = np.flatnonzero(model.beta != 0.0).tolist()
    informative = [k for k, m in enumerate(majority) if m is not None and ground_truth.is_informative(m)]
    covered = {majority[k] for k in selected if k in informative}
    hits = [k for k in selected if k in informative]
    return SelectionReport(
        selected=selected,
        majority_component=majority,
        informative_clusters=informative,
        zero_background_clusters=[
            k for k, m in enumerate(majority) if model.beta[k] == 0.0 and m is not None and not ground_truth.is_informative(m)
        ],
        precision=len(hits) / len(selected) if selected else 0.0,
        recall=len(covered) / len(ground_truth.informative_components),
    )


def compare_with_abmil(
    dataset: Dataset,
    folds: FoldAssignment,
    train_cfg: TrainConfig,
    K: int,
    seed: int,
    clustering_cfg: Optional[ClusteringConfig] = None,
    model_cfg: Optional[ModelConfig] = None,
    jobs: Optional[int] = None,
) -> ComparisonReport:
    """csMIL next to the single-cluster attention baseline (K=1, β frozen at 1) on the same folds"""
    baseline_cfg = plain_aggregation(train_cfg)
    groups = [
        _fold_jobs(dataset, folds, train_cfg, K, seed, clustering_cfg, model_cfg),
        _fold_jobs(dataset, folds, baseline_cfg, 1, seed, clustering_cfg, model_cfg),
    ]
    csmil_results, abmil_results = _run_grouped(groups, jobs, "csMIL vs ABMIL")
    return ComparisonReport(
        csmil=_assemble(K, train_cfg.gamma, csmil_results),
        abmil=_assemble(1, 0.0, abmil_results),
    )


def sweep_rows(report: SweepReport) -> List[dict]:
    rows = []
    for entry in report.entries:
        value = int(entry.value) if report.param == "K" else entry.value
        for fold in entry.cv.folds:
            rows.append(
                {
                    "param": value,
                    "fold": fold.fold,
                    "acc": fold.report.accuracy,
                    "f1": fold.report.f1,
                    "auc": fold.report.auc,
                    "beta_l0": fold.beta_l0,
                }
            )
        rows.append(
            {
                "param": value,
                "fold": "mean",
                "acc": entry.cv.mean.accuracy,
                "f1": entry.cv.mean.f1,
                "auc": entry.cv.mean.auc,
                "beta_l0": entry.cv.mean_beta_l0,
            }
        )
    return rows


def export_sweep(report: SweepReport, path: Union[str, Path]) -> Path:
    return write_csv(sweep_rows(report), ["param", "fold", "acc", "f1", "auc", "beta_l0"], path)


def export_ablation(report: AblationReport, path: Union[str, Path]) -> Path:
    rows = [
        {
            "removed_cluster": "baseline",
            "acc": report.baseline.accuracy,
            "f1": report.baseline.f1,
            "auc": report.baseline.auc,
            "delta_acc": 0.0,
            "excluded_bags": 0,
        }
    ]
    rows.extend(
        {
            "removed_cluster": entry.key,
            "acc": entry.report.accuracy,
            "f1": entry.report.f1,
            "auc": entry.report.auc,
            "delta_acc": entry.delta_acc,
            "excluded_bags": entry.excluded_bags,
        }
        for entry in report.entries
    )
    return write_csv(rows, ["removed_cluster", "acc", "f1", "auc", "delta_acc", "excluded_bags"], path)


def export_roc(roc: Sequence[Tuple[float, float]], path: Union[str, Path]) -> Path:
    return write_csv([{"fpr": f, "tpr": t} for f, t in roc], ["fpr", "tpr"], path)
