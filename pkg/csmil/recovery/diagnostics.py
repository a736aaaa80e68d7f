# csmil/recovery/diagnostics.py
import itertools
import logging
from typing import Iterable, Optional

import numpy as np

from csmil.core.errors import PreconditionError
from csmil.core.seeding import make_rng

from .schemas import Diagnostics

logger = logging.getLogger(__name__)

MAX_ENUMERATION_K = 20
DOWNSAMPLE_COLUMNS = 12


def coherence(Z: np.ndarray) -> float:
    """max_{k≠l} |⟨Z_k, Z_l⟩| over unit-normalised columns"""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[1] < 2:
        raise PreconditionError("coherence needs at least two columns")
    norms = np.linalg.norm(Z, axis=0)
    unit = Z / np.where(norms > 0, norms, 1.0)
    gram = np.abs(unit.T @ unit)
    np.fill_diagonal(gram, 0.0)
    return float(gram.max())


def re_constant(Z: np.ndarray, s: int) -> float:
    """min over |S| = s of λ_min(Z_Sᵀ Z_S / M), by exhaustive enumeration"""
    Z = np.asarray(Z, dtype=np.float64)
    M, K = Z.shape
    if not 1 <= s <= K:
        raise PreconditionError(f"need 1 <= s <= K, got s={s}, K={K}")
    if K > MAX_ENUMERATION_K:
        raise PreconditionError(f"K={K} is too large to enumerate supports; down-sample to <= {MAX_ENUMERATION_K} columns")
    gram = Z.T @ Z / M
    kappa = np.inf
    for support in itertools.combinations(range(K), s):
        index = np.array(support)
        kappa = min(kappa, float(np.linalg.eigvalsh(gram[np.ix_(index, index)])[0]))
    return max(kappa, 0.0)


def kkt_residual(Z: np.ndarray, y: np.ndarray, beta: np.ndarray, gamma: float) -> float:
    """max_k dist(−(1/M) Z_kᵀ(Zβ − y), γ ∂|β_k|)"""
    M = Z.shape[0]
    g = -Z.T @ (Z @ beta - y) / M
    active = beta != 0.0
    residual = np.where(active, np.abs(g - gamma * np.sign(beta)), np.maximum(np.abs(g) - gamma, 0.0))
    return float(residual.max()) if residual.size else 0.0


def design_diagnostics(Z: np.ndarray, s_values: Iterable[int], seed: int = 0) -> Diagnostics:
    """Coherence on all columns; RE constants on at most a seeded subset of 12 columns"""
    Z = np.asarray(Z, dtype=np.float64)
    K = Z.shape[1]
    columns: Optional[list] = None
    sub = Z
    if K > MAX_ENUMERATION_K:
        columns = sorted(make_rng(seed, "diagnostics").choice(K, DOWNSAMPLE_COLUMNS, replace=False).tolist())
        sub = Z[:, columns]
        logger.info(f"K={K} too large for RE enumeration; using columns {columns}")
    kappa = {int(s): re_constant(sub, int(s)) for s in s_values if s <= sub.shape[1]}
    return Diagnostics(mu=coherence(Z), kappa_s=kappa, columns=columns)
