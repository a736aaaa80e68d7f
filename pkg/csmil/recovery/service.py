# csmil/recovery/service.py
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import linregress

from csmil.core.errors import PreconditionError
from csmil.core.serialization import write_csv
from csmil.core.tasks import run_jobs

from .lasso import lasso_ista
from .schemas import (
    PhaseRow,
    PhaseTable,
    RecoveryConfig,
    RecoveryProblem,
    ScalingConfig,
    ScalingFit,
    ScalingPoint,
    ScalingReport,
)

logger = logging.getLogger(__name__)

PHASE_COLUMNS = ["M", "s", "K", "sigma", "gamma", "trials", "success_rate", "mean_l2_error"]
ZERO_TOL = 1e-8


def gen_linear_problem(K: int, s: int, M: int, sigma: float, beta_min: float, seed: int) -> RecoveryProblem:
    """Gaussian design with columns of norm √M, random s-sparse β*, y = Zβ* + N(0, σ²)"""
    if not 1 <= s <= K:
        raise PreconditionError(f"need 1 <= s <= K, got s={s}, K={K}")
    if M < 1:
        raise PreconditionError(f"M must be >= 1, got {M}")
    if sigma < 0 or beta_min <= 0:
        raise PreconditionError("sigma must be >= 0 and beta_min > 0")

    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((M, K))
    Z *= np.sqrt(M) / np.linalg.norm(Z, axis=0)

    beta_star = np.zeros(K)
    support = np.sort(rng.choice(K, size=s, replace=False))
    magnitudes = rng.uniform(beta_min, 2.0 * beta_min, size=s)
    signs = rng.choice([-1.0, 1.0], size=s)
    beta_star[support] = signs * magnitudes

    y = Z @ beta_star
    noise = rng.standard_normal(M)
    if sigma > 0:
        y = y + sigma * noise
    return RecoveryProblem(Z=Z, y=y, beta_star=beta_star, sigma=sigma, beta_min=beta_min)


def support_recovered(beta_hat: np.ndarray, beta_star: np.ndarray, mode: str = "sign") -> bool:
    """Signs (or, in "set" mode, just the nonzero pattern) agree everywhere; |β̂_k| < 1e-8 counts as 0"""
    beta_hat = np.asarray(beta_hat, dtype=np.float64)
    beta_star = np.asarray(beta_star, dtype=np.float64)
    if beta_hat.shape != beta_star.shape:
        raise PreconditionError(f"length mismatch: {beta_hat.shape} vs {beta_star.shape}")
    estimated = np.where(np.abs(beta_hat) < ZERO_TOL, 0.0, np.sign(beta_hat))
    if mode == "set":
        return bool(np.array_equal(estimated != 0, beta_star != 0))
    return bool(np.array_equal(estimated, np.sign(beta_star)))


def gamma_rule(sigma: float, K: int, M: int) -> float:
    return 2.0 * sigma * math.sqrt(math.log(K) / M)


@dataclass(frozen=True)
class TrialJob:
    K: int
    s: int
    M: int
    sigma: float
    beta_min: float
    gamma: float
    seed: int
    accelerated: bool
    support_mode: str
    max_iter: int
    tol: float


def run_trial(job: TrialJob) -> Tuple[bool, float]:
    problem = gen_linear_problem(job.K, job.s, job.M, job.sigma, job.beta_min, job.seed)
    solution = lasso_ista(problem.Z, problem.y, job.gamma, job.max_iter, job.tol, job.accelerated)
    error = float(np.linalg.norm(solution.beta_hat - problem.beta_star))
    return support_recovered(solution.beta_hat, problem.beta_star, job.support_mode), error


def phase_transition(
    K: int,
    s: int,
    M_grid: Sequence[int],
    trials: int,
    sigma: float,
    seed: int,
    beta_min: float = 1.0,
    gamma: Optional[float] = None,
    accelerated: bool = True,
    support_mode: str = "sign",
    max_iter: int = 20000,
    tol: float = 1e-12,
    jobs: Optional[int] = None,
) -> PhaseTable:
    """Success rate and mean ℓ2 error of the Lasso over `trials` problems per M; trial t uses seed + t"""
    if not M_grid:
        raise PreconditionError("M_grid must not be empty")
    if trials < 1:
        raise PreconditionError(f"trials must be >= 1, got {trials}")

    items: List[TrialJob] = []
    gammas = []
    for M in M_grid:
        g = gamma_rule(sigma, K, M) if gamma is None else gamma
        gammas.append(g)
        items.extend(
            TrialJob(K, s, M, sigma, beta_min, g, seed + t, accelerated, support_mode, max_iter, tol)
            for t in range(trials)
        )
    outcomes = run_jobs(run_trial, items, jobs=jobs, desc=f"phase K={K} s={s}")

    table = PhaseTable(
        gamma_rule="override" if gamma is not None else "2*sigma*sqrt(log(K)/M)",
        support_mode=support_mode,
    )
    for i, (M, g) in enumerate(zip(M_grid, gammas)):
        chunk = outcomes[i * trials : (i + 1) * trials]
        successes = sum(1 for ok, _ in chunk if ok)
        row = PhaseRow(
            M=M,
            s=s,
            K=K,
            sigma=sigma,
            gamma=g,
            trials=trials,
            success_rate=successes / trials,
            mean_l2_error=float(np.mean([error for _, error in chunk])),
        )
        table.rows.append(row)
        logger.info(f"M={M}: success rate {row.success_rate:.3f}, mean l2 error {row.mean_l2_error:.3g}")
    return table


def run_phase(cfg: RecoveryConfig, seed: int, jobs: Optional[int] = None) -> PhaseTable:
    return phase_transition(
        cfg.K,
        cfg.s,
        cfg.M_grid,
        cfg.trials,
        cfg.sigma,
        seed,
        beta_min=cfg.beta_min,
        gamma=cfg.gamma,
        accelerated=cfg.accelerated,
        support_mode=cfg.support_mode,
        max_iter=cfg.max_iter,
        tol=cfg.tol,
        jobs=jobs,
    )


def minimal_m_for_success(table: PhaseTable, level: float = 0.9) -> Optional[int]:
    """Smallest M whose success rate reaches `level` and stays there for every larger M"""
    rows = sorted(table.rows, key=lambda r: r.M)
    minimal = None
    for row in reversed(rows):
        if row.success_rate < level:
            break
        minimal = row.M
    return minimal


def fit_scaling_law(points: Sequence[Tuple[float, float]]) -> ScalingFit:
    """Least-squares line M_min ≈ slope · (s log K) + intercept"""
    if len(points) < 2:
        raise PreconditionError("need at least two (s log K, M) points to fit a scaling law")
    x = np.array([p[0] for p in points], dtype=np.float64)
    y = np.array([p[1] for p in points], dtype=np.float64)
    if np.unique(x).size < 2:
        raise PreconditionError("scaling law needs at least two distinct s log K values")
    fit = linregress(x, y)
    return ScalingFit(slope=float(fit.slope), intercept=float(fit.intercept), r_squared=float(fit.rvalue**2))


def scaling_study(
    cfg: ScalingConfig,
    sigma: float,
    beta_min: float,
    seed: int,
    accelerated: bool = True,
    jobs: Optional[int] = None,
) -> ScalingReport:
    points: List[ScalingPoint] = []
    for s in cfg.s_values:
        for K in cfg.k_values:
            if s > K:
                continue
            table = phase_transition(K, s, cfg.M_grid, cfg.trials, sigma, seed, beta_min=beta_min, accelerated=accelerated, jobs=jobs)
            points.append(
                ScalingPoint(s=s, K=K, s_log_k=s * math.log(K), minimal_M=minimal_m_for_success(table, cfg.level))
            )
    usable = [(p.s_log_k, float(p.minimal_M)) for p in points if p.minimal_M is not None]
    fit = fit_scaling_law(usable) if len({x for x, _ in usable}) >= 2 else None
    if fit is None:
        logger.warning("Not enough (s, K) points reached the success level to fit a scaling law")
    else:
        logger.info(f"Scaling law: M_min = {fit.slope:.3g} * s log K + {fit.intercept:.3g} (r2={fit.r_squared:.3f})")
    return ScalingReport(points=points, fit=fit, level=cfg.level)


def error_bound_constant(table: PhaseTable) -> Optional[float]:
    """
    C′ in mean‖β̂ − β*‖₂ ≈ C′ σ √(s log K / M), least squares through the origin
    over the rows in the recovery regime (success rate ≥ 0.5, all rows if none).
    None when σ = 0 or K = 1.
    """
    rows = [r for r in table.rows if r.sigma > 0 and r.K > 1]
    if not rows:
        return None
    regime = [r for r in rows if r.success_rate >= 0.5] or rows
    rate = np.array([r.sigma * math.sqrt(r.s * math.log(r.K) / r.M) for r in regime])
    error = np.array([r.mean_l2_error for r in regime])
    return float(rate @ error / (rate @ rate))


def export_phase_table(table: PhaseTable, path: Union[str, Path]) -> Path:
    return write_csv([row.model_dump() for row in table.rows], PHASE_COLUMNS, path)
