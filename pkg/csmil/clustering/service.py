# csmil/clustering/service.py
import logging
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from csmil.core.errors import DataFormatError, DegenerateClusteringError, PreconditionError
from csmil.core.serialization import dump_json, load_json, write_csv
from csmil.data.schemas import Bag

from .schemas import ClusterAssignment, ClusterModel

logger = logging.getLogger(__name__)

BLOCK_ROWS = 4096


def squared_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """N × K squared Euclidean distances, evaluated in fixed row blocks"""
    out = np.empty((points.shape[0], centers.shape[0]))
    for start in range(0, points.shape[0], BLOCK_ROWS):
        block = points[start : start + BLOCK_ROWS]
        diff = block[:, None, :] - centers[None, :, :]
        out[start : start + BLOCK_ROWS] = np.einsum("nkd,nkd->nk", diff, diff)
    return out


def kmeans_plusplus(points: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n_points = points.shape[0]
    centers = np.empty((K, points.shape[1]))
    centers[0] = points[rng.integers(n_points)]
    closest = squared_distances(points, centers[:1])[:, 0]
    for k in range(1, K):
        total = closest.sum()
        if total <= 0:
            raise DegenerateClusteringError(f"cannot seed {K} distinct centers")
        index = rng.choice(n_points, p=closest / total)
        centers[k] = points[index]
        closest = np.minimum(closest, squared_distances(points, centers[k : k + 1])[:, 0])
    return centers


def _lloyd(
    points: np.ndarray, K: int, rng: np.random.Generator, max_iter: int, tol: float
) -> Tuple[np.ndarray, float, int, List[float]]:
    centers = kmeans_plusplus(points, K, rng)
    history: List[float] = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        distances = squared_distances(points, centers)
        labels = np.argmin(distances, axis=1)
        inertia = float(distances[np.arange(points.shape[0]), labels].sum())
        if history and inertia > history[-1] * (1 + 1e-12) + 1e-12:
            logger.warning(f"k-means inertia increased at iteration {iterations}: {history[-1]} -> {inertia}")
        history.append(inertia)

        new_centers = centers.copy()
        counts = np.bincount(labels, minlength=K)
        for k in np.flatnonzero(counts):
            new_centers[k] = points[labels == k].mean(axis=0)

        empty = np.flatnonzero(counts == 0)
        if empty.size:
            # re-seed each empty center at the point farthest from its own center
            own = distances[np.arange(points.shape[0]), labels].copy()
            for k in empty:
                far = int(np.argmax(own))
                new_centers[k] = points[far]
                own[far] = -1.0
            logger.debug(f"Re-seeded {empty.size} empty clusters at iteration {iterations}")

        shift = float(np.max(np.abs(new_centers - centers)))
        centers = new_centers
        logger.debug(f"k-means iteration {iterations}: inertia={inertia:.6g} shift={shift:.3g}")
        if shift < tol and not empty.size:
            break
    else:
        if empty.size:
            raise DegenerateClusteringError(f"empty-cluster repair did not settle within {max_iter} iterations")

    distances = squared_distances(points, centers)
    labels = np.argmin(distances, axis=1)
    inertia = float(distances[np.arange(points.shape[0]), labels].sum())
    history.append(inertia)
    return centers, inertia, iterations, history


def kmeans_global(
    all_embeddings: np.ndarray,
    K: int,
    seed: int,
    max_iter: int = 300,
    tol: float = 1e-6,
    n_init: int = 10,
    standardize: bool = False,
) -> ClusterModel:
    """Global clustering: Lloyd with k-means++ seeding, best of n_init restarts"""
    points = np.asarray(all_embeddings, dtype=np.float64)
    if points.ndim != 2:
        raise PreconditionError(f"expected an N×d matrix, got shape {points.shape}")
    if K < 1:
        raise PreconditionError(f"K must be >= 1, got {K}")
    if points.shape[0] < K:
        raise PreconditionError(f"need at least K={K} instances, got N={points.shape[0]}")
    if not np.all(np.isfinite(points)):
        raise DataFormatError("clustering input contains non-finite values")

    shift = scale = None
    if standardize:
        shift = points.mean(axis=0)
        scale = points.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        points = (points - shift) / scale

    if K > 1 and np.unique(points, axis=0).shape[0] < K:
        raise DegenerateClusteringError(f"fewer than K={K} distinct instances; empty-cluster repair cannot succeed")

    best = None
    for run, child in enumerate(np.random.SeedSequence(seed).spawn(n_init)):
        centers, inertia, iterations, history = _lloyd(points, K, np.random.default_rng(child), max_iter, tol)
        logger.debug(f"k-means restart {run}: inertia={inertia:.6g} after {iterations} iterations")
        if best is None or inertia < best[1]:
            best = (centers, inertia, iterations, history)

    centers, inertia, iterations, history = best
    logger.info(f"Global clustering: K={K}, N={points.shape[0]}, inertia={inertia:.6g}, iterations={iterations}")
    return ClusterModel(
        centers=centers,
        inertia=inertia,
        iterations_run=iterations,
        shift=shift,
        scale=scale,
        inertia_history=history,
    )


def assign_local(bag: Bag, model: ClusterModel) -> ClusterAssignment:
    """Nearest global center per instance; ties go to the lowest center index"""
    if bag.d != model.d:
        raise PreconditionError(f"bag {bag.id!r} has dimension {bag.d}, cluster model has {model.d}")
    distances = squared_distances(model.transform(bag.embeddings), model.centers)
    return ClusterAssignment(cluster_of_instance=np.argmin(distances, axis=1), K=model.K)


def assign_all(bags: Sequence[Bag], model: ClusterModel) -> List[ClusterAssignment]:
    return [assign_local(bag, model) for bag in bags]


def partition_bag(bag: Bag, assignment: ClusterAssignment) -> List[List[int]]:
    """K index lists (possibly empty), each in within-bag order"""
    if assignment.n != bag.n:
        raise PreconditionError(f"assignment covers {assignment.n} instances, bag {bag.id!r} has {bag.n}")
    labels = assignment.cluster_of_instance
    return [np.flatnonzero(labels == k).tolist() for k in range(assignment.K)]


def fit_on_bags(
    bags: Sequence[Bag],
    K: int,
    seed: int,
    max_iter: int = 300,
    tol: float = 1e-6,
    n_init: int = 10,
    standardize: bool = False,
    on_fit: Optional[Callable[[List[str]], None]] = None,
) -> ClusterModel:
    """kmeans_global on the pooled instances of the given bags"""
    if on_fit is not None:
        on_fit([bag.id for bag in bags])
    pooled = np.concatenate([bag.embeddings for bag in bags], axis=0)
    return kmeans_global(pooled, K, seed, max_iter=max_iter, tol=tol, n_init=n_init, standardize=standardize)


def save_cluster_model(model: ClusterModel, path: Union[str, Path]) -> Path:
    payload = {"K": model.K, "dim": model.d, "centers": model.centers}
    payload["inertia"] = model.inertia
    payload["iterations_run"] = model.iterations_run
    if model.shift is not None:
        payload["shift"] = model.shift
        payload["scale"] = model.scale
    return dump_json(payload, path)


def load_cluster_model(path: Union[str, Path]) -> ClusterModel:
    raw = load_json(path)
    try:
        centers = np.asarray(raw["centers"], dtype=np.float64)
        if centers.shape != (int(raw["K"]), int(raw["dim"])):
            raise DataFormatError(f"{path}: centers shape {centers.shape} != (K, dim)")
        return ClusterModel(
            centers=centers,
            inertia=float(raw.get("inertia", 0.0)),
            iterations_run=int(raw.get("iterations_run", 0)),
            shift=np.asarray(raw["shift"]) if "shift" in raw else None,
            scale=np.asarray(raw["scale"]) if "scale" in raw else None,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise DataFormatError(f"{path}: invalid cluster checkpoint: {e}")


def export_assignments(
    bags: Sequence[Bag], assignments: Sequence[ClusterAssignment], path: Union[str, Path]
) -> Path:
    rows = [
        {"bag_id": bag.id, "instance_index": j, "cluster_id": int(k)}
        for bag, assignment in zip(bags, assignments)
        for j, k in enumerate(assignment.cluster_of_instance)
    ]
    return write_csv(rows, ["bag_id", "instance_index", "cluster_id"], path)


def export_cluster_counts(
    bags: Sequence[Bag], assignments: Sequence[ClusterAssignment], path: Union[str, Path]
) -> Path:
    K = assignments[0].K if assignments else 0
    rows = []
    for bag, assignment in zip(bags, assignments):
        row = {"bag_id": bag.id, "label": bag.label}
        row.update({f"C_{k}": int(c) for k, c in enumerate(assignment.counts)})
        rows.append(row)
    return write_csv(rows, ["bag_id", "label"] + [f"C_{k}" for k in range(K)], path)
