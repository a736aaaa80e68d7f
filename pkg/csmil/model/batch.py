# csmil/model/batch.py
import itertools
from typing import List, Sequence

import numpy as np

from csmil.clustering.schemas import ClusterAssignment
from csmil.core.errors import PreconditionError
from csmil.data.schemas import Bag

from .schemas import BatchCache, ClusterBlock, CsmilModel, PackedBatch
from .service import log_softmax, softmax

_tokens = itertools.count(1)


def pack_batch(bags: Sequence[Bag], assignments: Sequence[ClusterAssignment]) -> PackedBatch:
    """Group every cluster's instances across bags so one batch is K matrix passes"""
    if len(bags) != len(assignments):
        raise PreconditionError(f"{len(bags)} bags but {len(assignments)} assignments")
    if not bags:
        raise PreconditionError("empty batch")
    K = assignments[0].K
    dim = bags[0].d

    rows: List[List[np.ndarray]] = [[] for _ in range(K)]
    lengths: List[List[int]] = [[] for _ in range(K)]
    owners: List[List[int]] = [[] for _ in range(K)]
    for i, (bag, assignment) in enumerate(zip(bags, assignments)):
        if assignment.K != K:
            raise PreconditionError("assignments disagree on K")
        if assignment.n != bag.n:
            raise PreconditionError(f"assignment covers {assignment.n} instances, bag {bag.id!r} has {bag.n}")
        if bag.d != dim:
            raise PreconditionError(f"bag {bag.id!r} has dimension {bag.d}, expected {dim}")
        labels = assignment.cluster_of_instance
        for k in np.unique(labels):
            members = bag.embeddings[labels == k]
            rows[k].append(members)
            lengths[k].append(members.shape[0])
            owners[k].append(i)

    blocks = []
    for k in range(K):
        if rows[k]:
            length = np.array(lengths[k], dtype=np.intp)
            starts = np.concatenate([[0], np.cumsum(length)[:-1]]).astype(np.intp)
            blocks.append(
                ClusterBlock(
                    X=np.concatenate(rows[k], axis=0),
                    starts=starts,
                    lengths=length,
                    bag_index=np.array(owners[k], dtype=np.intp),
                )
            )
        else:
            blocks.append(
                ClusterBlock(
                    X=np.zeros((0, dim)),
                    starts=np.zeros(0, dtype=np.intp),
                    lengths=np.zeros(0, dtype=np.intp),
                    bag_index=np.zeros(0, dtype=np.intp),
                )
            )

    return PackedBatch(
        labels=np.array([bag.label for bag in bags], dtype=np.int64),
        blocks=blocks,
        bag_ids=[bag.id for bag in bags],
        dim=dim,
        token=next(_tokens),
    )


def segment_softmax(scores: np.ndarray, block: ClusterBlock) -> np.ndarray:
    """Softmax of scores within each bag segment (max-subtracted per segment)"""
    peak = np.repeat(np.maximum.reduceat(scores, block.starts), block.lengths)
    e = np.exp(scores - peak)
    return e / np.repeat(np.add.reduceat(e, block.starts), block.lengths)


def forward_batch(batch: PackedBatch, model: CsmilModel) -> BatchCache:
    if batch.K != model.K:
        raise PreconditionError(f"batch has K={batch.K}, model has K={model.K}")
    if batch.dim != model.d:
        raise PreconditionError(f"batch has d={batch.dim}, model has d={model.d}")

    prototypes = np.zeros((batch.M, model.K, model.d))
    alphas: List = []
    activations: List = []
    for k, block in enumerate(batch.blocks):
        if block.empty:
            alphas.append(None)
            activations.append(None)
            continue
        if model.config.pooling == "mean":
            alpha = np.repeat(1.0 / block.lengths, block.lengths)
            activations.append(None)
        else:
            head = model.head_for(k)
            U = np.tanh(block.X @ head.V.T)
            alpha = segment_softmax(U @ head.w, block)
            activations.append(U)
        alphas.append(alpha)
        prototypes[block.bag_index, k] = np.add.reduceat(alpha[:, None] * block.X, block.starts, axis=0)

    z = np.zeros((batch.M, model.d))
    for k in range(model.K):
        z = z + model.beta[k] * prototypes[:, k]
    logits = z @ model.W.T + model.b
    return BatchCache(
        alphas=alphas,
        activations=activations,
        prototypes=prototypes,
        z=z,
        logits=logits,
        probs=softmax(logits, axis=1),
        model_version=model.version,
        batch_token=batch.token,
        model_id=id(model),
    )


def data_term(batch: PackedBatch, cache: BatchCache) -> float:
    """Σ_i −log p_i[Y_i]"""
    log_probs = log_softmax(cache.logits, axis=1)
    return float(-np.sum(log_probs[np.arange(batch.M), batch.labels]))
