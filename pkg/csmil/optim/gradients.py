# csmil/optim/gradients.py
import logging
from typing import Dict, List, Sequence, Tuple

import numpy as np

from csmil.clustering.schemas import ClusterAssignment
from csmil.core.errors import PreconditionError, StaleCacheError
from csmil.core.seeding import make_rng
from csmil.data.schemas import Bag
from csmil.model.batch import data_term, forward_batch, pack_batch
from csmil.model.schemas import BatchCache, CsmilModel, ModelConfig, PackedBatch
from csmil.model.service import init_model

from .schemas import GradientSet

logger = logging.getLogger(__name__)


def soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    """prox of t‖·‖₁: sign(v)·max(|v| − t, 0), with exact zeros"""
    if t < 0:
        raise PreconditionError(f"threshold must be >= 0, got {t}")
    v = np.asarray(v, dtype=np.float64)
    magnitude = np.abs(v)
    return np.where(magnitude > t, np.sign(v) * (magnitude - t), 0.0)


def backward(batch: PackedBatch, model: CsmilModel, cache: BatchCache) -> GradientSet:
    """Exact gradients of the data term Σ CE (no ℓ1 term) for every parameter"""
    if cache.batch_token != batch.token:
        raise StaleCacheError("forward cache belongs to a different batch")
    if cache.model_id != id(model) or cache.model_version != model.version:
        raise StaleCacheError(
            f"forward cache is stale (cache version {cache.model_version}, model version {model.version})"
        )

    grads = GradientSet.zeros_like(model)
    dlogits = cache.probs.copy()
    dlogits[np.arange(batch.M), batch.labels] -= 1.0

    grads.W = dlogits.T @ cache.z
    grads.b = dlogits.sum(axis=0)
    dz = dlogits @ model.W
    grads.beta = np.einsum("md,mkd->k", dz, cache.prototypes)

    if model.config.pooling == "mean":
        return grads

    for k, block in enumerate(batch.blocks):
        if block.empty or model.beta[k] == 0.0:
            continue
        h = model.head_index(k)
        head = model.head_for(k)
        alpha = cache.alphas[k]
        U = cache.activations[k]

        dproto = model.beta[k] * np.repeat(dz[block.bag_index], block.lengths, axis=0)
        dalpha = np.sum(block.X * dproto, axis=1)
        centred = dalpha - np.repeat(np.add.reduceat(alpha * dalpha, block.starts), block.lengths)
        dscores = alpha * centred

        grads.heads_w[h] += U.T @ dscores
        dpre = np.outer(dscores, head.w) * (1.0 - U * U)
        grads.heads_V[h] += dpre.T @ block.X

    return grads


def compare_gradients(
    model: CsmilModel, batch: PackedBatch, grads: GradientSet, h: float = 1e-6
) -> Tuple[float, Dict[str, float]]:
    """
    Central differences on every coordinate of the data term.
    Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
    """
    if h <= 0:
        raise PreconditionError(f"step h must be > 0, got {h}")
    analytic = grads.as_dict()
    worst_by_param: Dict[str, float] = {}
    for name, param in model.parameters():
        worst = 0.0
        target = analytic[name]
        for index in np.ndindex(param.shape):
            original = param[index]
            param[index] = original + h
            f_plus = data_term(batch, forward_batch(batch, model))
            param[index] = original - h
            f_minus = data_term(batch, forward_batch(batch, model))
            param[index] = original
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = float(target[index])
            error = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, error)
        worst_by_param[name] = worst
    return max(worst_by_param.values()), worst_by_param


def finite_diff_check(
    model: CsmilModel,
    bags: Sequence[Bag],
    assignments: Sequence[ClusterAssignment],
    h: float = 1e-6,
) -> float:
    """Worst relative error of backward() against central finite differences"""
    batch = pack_batch(bags, assignments)
    grads = backward(batch, model, forward_batch(batch, model))
    max_error, per_param = compare_gradients(model, batch, grads, h)
    logger.debug(f"Finite-difference check per parameter: {per_param}")
    return max_error


def random_gradcheck_problem(
    K: int, d: int, L: int, n_bags: int, n_instances: int, seed: int
) -> Tuple[CsmilModel, List[Bag], List[ClusterAssignment]]:
    """
    Small random model and bags for a finite-difference check.
    β is drawn at random (not ones) and, for K >= 2, the first bag sits
    entirely in cluster 0 so empty clusters are exercised.
    """
    rng = make_rng(seed, "gradcheck", K)
    model = init_model(K, d, ModelConfig(hidden_dim=L), seed=seed)
    model.beta[:] = rng.normal(size=K)
    model.bump()
    bags, assignments = [], []
    for i in range(n_bags):
        bags.append(Bag(id=f"g{i}", label=int(i % 2), embeddings=rng.normal(size=(n_instances, d))))
        clusters = np.zeros(n_instances, dtype=np.int64) if i == 0 else rng.integers(0, K, size=n_instances)
        assignments.append(ClusterAssignment(cluster_of_instance=clusters, K=K))
    return model, bags, assignments
