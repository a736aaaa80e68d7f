# csmil/model/service.py
import logging
from typing import List, Sequence, Tuple

import numpy as np

from csmil.clustering.schemas import ClusterAssignment
from csmil.clustering.service import partition_bag
from csmil.core.errors import PreconditionError
from csmil.core.seeding import make_rng
from csmil.data.schemas import Bag

from .schemas import AttentionHead, CsmilModel, ForwardCache, LossBreakdown, ModelConfig

logger = logging.getLogger(__name__)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def init_model(K: int, d: int, config: ModelConfig = None, seed: int = 0) -> CsmilModel:
    """β = 1; heads and classifier ~ U(−1/√fan_in, 1/√fan_in)"""
    config = config or ModelConfig()
    rng = make_rng(seed, "model-init")
    L = config.hidden_dim
    n_heads = 1 if config.shared_attention else K

    heads = []
    for _ in range(n_heads):
        V = rng.uniform(-1.0 / np.sqrt(d), 1.0 / np.sqrt(d), size=(L, d))
        w = rng.uniform(-1.0 / np.sqrt(L), 1.0 / np.sqrt(L), size=L)
        heads.append(AttentionHead(V=V, w=w))
    W = rng.uniform(-1.0 / np.sqrt(d), 1.0 / np.sqrt(d), size=(2, d))
    b = rng.uniform(-1.0 / np.sqrt(d), 1.0 / np.sqrt(d), size=2)
    return CsmilModel(heads=heads, beta=np.ones(K), W=W, b=b, config=config, seed=seed)


def attention_pool(cluster_embeddings: np.ndarray, head: AttentionHead) -> Tuple[np.ndarray, np.ndarray]:
    """α = softmax(wᵀ tanh(V h_n)) over the cluster's instances; prototype = Σ α_n h_n"""
    H = np.asarray(cluster_embeddings, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] < 1:
        raise PreconditionError("attention_pool needs at least one instance")
    logits = np.tanh(H @ head.V.T) @ head.w
    alpha = softmax(logits)
    return alpha, alpha @ H


def mean_pool(cluster_embeddings: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    H = np.asarray(cluster_embeddings, dtype=np.float64)
    alpha = np.full(H.shape[0], 1.0 / H.shape[0])
    return alpha, alpha @ H


def aggregate_bag(prototypes: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """z = Σ_k β_k z_k, summed in ascending k"""
    prototypes = np.asarray(prototypes, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if prototypes.ndim != 2 or prototypes.shape[0] != beta.shape[0]:
        raise PreconditionError(f"prototypes {prototypes.shape} do not match beta {beta.shape}")
    z = np.zeros(prototypes.shape[1])
    for k in range(beta.shape[0]):
        z = z + beta[k] * prototypes[k]
    return z


def classify(z: np.ndarray, model: CsmilModel) -> Tuple[np.ndarray, np.ndarray]:
    logits = model.W @ z + model.b
    return logits, softmax(logits)


def bag_forward(bag: Bag, assignment: ClusterAssignment, model: CsmilModel) -> ForwardCache:
    """partition → per-cluster pooling → zero prototype for empty clusters → aggregate → classify"""
    if assignment.K != model.K:
        raise PreconditionError(f"assignment has K={assignment.K}, model has K={model.K}")
    if bag.d != model.d:
        raise PreconditionError(f"bag {bag.id!r} has dimension {bag.d}, model has d={model.d}")

    prototypes = np.zeros((model.K, model.d))
    alphas: List = []
    for k, rows in enumerate(partition_bag(bag, assignment)):
        if not rows:
            alphas.append(None)
            continue
        members = bag.embeddings[rows]
        if model.config.pooling == "mean":
            alpha, prototype = mean_pool(members)
        else:
            alpha, prototype = attention_pool(members, model.head_for(k))
        alphas.append(alpha)
        prototypes[k] = prototype

    z = aggregate_bag(prototypes, model.beta)
    logits, probs = classify(z, model)
    return ForwardCache(alphas=alphas, prototypes=prototypes, z=z, logits=logits, probs=probs)


def cross_entropy(logits: np.ndarray, label: int) -> float:
    return float(-log_softmax(logits)[label])


def batch_loss(
    bags: Sequence[Bag], assignments: Sequence[ClusterAssignment], model: CsmilModel, gamma: float
) -> LossBreakdown:
    """Σ_i CE(p_i, Y_i) + γ‖β‖₁, summed over bags in order"""
    if gamma < 0:
        raise PreconditionError(f"gamma must be >= 0, got {gamma}")
    if len(bags) != len(assignments):
        raise PreconditionError(f"got {len(bags)} bags but {len(assignments)} assignments")
    data_term = 0.0
    for bag, assignment in zip(bags, assignments):
        cache = bag_forward(bag, assignment, model)
        data_term += cross_entropy(cache.logits, bag.label)
    penalty = float(gamma * np.sum(np.abs(model.beta)))
    return LossBreakdown(total=data_term + penalty, data_term=data_term, penalty=penalty)


def predict_proba(bags: Sequence[Bag], assignments: Sequence[ClusterAssignment], model: CsmilModel) -> np.ndarray:
    """Positive-class probability per bag"""
    return np.array([bag_forward(b, a, model).probs[1] for b, a in zip(bags, assignments)])
