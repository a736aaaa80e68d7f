# csmil/recovery/lasso.py
import logging
from typing import Optional

import numpy as np

from csmil.core.errors import DataFormatError, PreconditionError
from csmil.optim.gradients import soft_threshold

from .schemas import LassoSolution

logger = logging.getLogger(__name__)


def lipschitz_constant(Z: np.ndarray, rel_tol: float = 1e-10, max_iter: int = 10000) -> float:
    """λ_max(ZᵀZ)/M by power iteration"""
    M, K = Z.shape
    gram = Z.T @ Z / M
    # fixed, non-symmetric start so sign-paired columns do not cancel
    v = np.linspace(1.0, 2.0, K)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(max_iter):
        w = gram @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        updated = float(v @ gram @ v)
        if abs(updated - estimate) <= rel_tol * abs(updated):
            return updated
        estimate = updated
    logger.warning(f"Power iteration did not reach relative tolerance {rel_tol}")
    return estimate


def lasso_objective(Z: np.ndarray, y: np.ndarray, beta: np.ndarray, gamma: float) -> float:
    """(1/2M)‖y − Zβ‖² + γ‖β‖₁"""
    residual = y - Z @ beta
    return float(residual @ residual / (2.0 * Z.shape[0]) + gamma * np.sum(np.abs(beta)))


def lasso_ista(
    Z: np.ndarray,
    y: np.ndarray,
    gamma: float,
    max_iter: int = 20000,
    tol: float = 1e-12,
    accelerated: bool = False,
    beta0: Optional[np.ndarray] = None,
) -> LassoSolution:
    """
    Proximal gradient for the Lasso, from β = 0 unless beta0 is given.
    Stops when the relative objective change drops below tol.
    With accelerated=True the FISTA momentum sequence is used; the plain
    ISTA objective never increases.
    """
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if gamma < 0:
        raise PreconditionError(f"gamma must be >= 0, got {gamma}")
    if Z.ndim != 2 or y.shape != (Z.shape[0],):
        raise PreconditionError(f"design {Z.shape} and response {y.shape} do not match")
    if not (np.all(np.isfinite(Z)) and np.all(np.isfinite(y))):
        raise DataFormatError("Lasso inputs contain non-finite values")

    M, K = Z.shape
    L = lipschitz_constant(Z)
    if L == 0.0:
        # Z = 0: the data term is constant and β = 0 is optimal
        zero = np.zeros(K)
        objective = lasso_objective(Z, y, zero, gamma)
        return LassoSolution(zero, 0, objective, True, 0.0, [objective])

    Zty = Z.T @ y / M
    gram = Z.T @ Z / M
    beta = np.zeros(K) if beta0 is None else np.array(beta0, dtype=np.float64)
    previous = beta.copy()
    point = beta.copy()
    t = 1.0
    objective = lasso_objective(Z, y, beta, gamma)
    history = [objective]
    converged = False
    iteration = 0

    for iteration in range(1, max_iter + 1):
        gradient = gram @ point - Zty
        beta = soft_threshold(point - gradient / L, gamma / L)
        updated = lasso_objective(Z, y, beta, gamma)
        history.append(updated)

        change = abs(objective - updated)
        objective = updated
        if change <= tol * max(abs(history[-2]), np.finfo(float).tiny):
            converged = True
            break

        if accelerated:
            t_next = (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0
            point = beta + ((t - 1.0) / t_next) * (beta - previous)
            t = t_next
        else:
            point = beta
        previous = beta

    logger.debug(
        f"{'FISTA' if accelerated else 'ISTA'}: {iteration} iterations, objective={objective:.12g}, "
        f"support size={np.count_nonzero(beta)}, converged={converged}"
    )
    return LassoSolution(
        beta_hat=beta,
        iterations=iteration,
        final_objective=objective,
        converged=converged,
        lipschitz=L,
        objective_history=history,
    )
