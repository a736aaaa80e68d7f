# csmil/optim/trainer.py
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from csmil.clustering.schemas import ClusterAssignment
from csmil.core.errors import DivergenceError, PreconditionError
from csmil.core.seeding import make_rng
from csmil.core.serialization import write_csv
from csmil.data.schemas import Bag
from csmil.evaluation.metrics import safe_metrics
from csmil.evaluation.schemas import MetricReport
from csmil.model.batch import data_term, forward_batch, pack_batch
from csmil.model.schemas import BatchCache, CsmilModel, PackedBatch, beta_l0

from .gradients import backward, soft_threshold
from .schemas import EpochRecord, GradientSet, TrainConfig, TrainHistory

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ["epoch", "total", "data", "penalty", "beta_l0", "val_acc", "val_f1", "val_auc"]


class AdamState:
    """First/second moment estimates for the smooth parameters"""

    def __init__(self, model: CsmilModel, beta1: float, beta2: float, eps: float):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        for name, param in model.parameters():
            if name != "beta":
                self.m[name] = np.zeros_like(param)
                self.v[name] = np.zeros_like(param)

    def step(self, model: CsmilModel, grads: GradientSet, lr: float) -> None:
        self.step_count += 1
        correction1 = 1.0 - self.beta1**self.step_count
        correction2 = 1.0 - self.beta2**self.step_count
        named_grads = grads.as_dict()
        for name, param in model.parameters():
            if name == "beta":
                continue
            g = named_grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / correction1
            v_hat = self.v[name] / correction2
            param -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _sgd_step(model: CsmilModel, grads: GradientSet, lr: float) -> None:
    named_grads = grads.as_dict()
    for name, param in model.parameters():
        if name != "beta":
            param -= lr * named_grads[name]


def _prox_beta_step(model: CsmilModel, grad_beta: np.ndarray, lr: float, gamma: float) -> None:
    # β ← prox_{lr·γ‖·‖₁}(β − lr·∂data/∂β); zeros come out exact
    model.beta[:] = soft_threshold(model.beta - lr * grad_beta, lr * gamma)


def _batches(
    bags: Sequence[Bag], assignments: Sequence[ClusterAssignment], cfg: TrainConfig, epoch: int
) -> List[PackedBatch]:
    if cfg.batch_mode == "full" or cfg.batch_size >= len(bags):
        return [pack_batch(bags, assignments)]
    order = make_rng(cfg.seed, "minibatch", epoch).permutation(len(bags))
    batches = []
    for start in range(0, len(bags), cfg.batch_size):
        chunk = order[start : start + cfg.batch_size]
        batches.append(pack_batch([bags[i] for i in chunk], [assignments[i] for i in chunk]))
    return batches


def _check_finite(value: float, epoch: int, what: str) -> None:
    if not np.isfinite(value):
        raise DivergenceError(f"{what} became {value} at epoch {epoch}; lower the learning rates")


def _metric_value(report: MetricReport, metric: str) -> float:
    value = getattr(report, metric)
    return float("-inf") if value is None else value


def train(
    train_bags: Sequence[Bag],
    train_assignments: Sequence[ClusterAssignment],
    cfg: TrainConfig,
    init_model: CsmilModel,
    val_bags: Optional[Sequence[Bag]] = None,
    val_assignments: Optional[Sequence[ClusterAssignment]] = None,
) -> Tuple[CsmilModel, TrainHistory]:
    """
    Minimise Σ CE + γ‖β‖₁.
    Smooth parameters take Adam (or SGD) steps with lr_smooth; β takes a proximal
    gradient step with lr_beta. The initial model is not modified.
    """
    if not train_bags:
        raise PreconditionError("no training bags")
    if (val_bags is None) != (val_assignments is None):
        raise PreconditionError("val_bags and val_assignments must be given together")

    model = init_model.copy()
    adam = AdamState(model, cfg.adam.beta1, cfg.adam.beta2, cfg.adam.eps) if cfg.optimizer == "adam" else None
    full_batch = pack_batch(train_bags, train_assignments)
    val_batch = pack_batch(val_bags, val_assignments) if val_bags else None

    history = TrainHistory()
    best_score = float("-inf")
    best_model: Optional[CsmilModel] = None
    since_best = 0
    step = 0
    reusable: Optional[BatchCache] = None

    logger.info(
        f"Training {len(train_bags)} bags for up to {cfg.epochs} epochs "
        f"(K={model.K}, gamma={cfg.gamma}, optimizer={cfg.optimizer}, schedule={cfg.schedule})"
    )
    for epoch in range(1, cfg.epochs + 1):
        batches = [full_batch] if cfg.batch_mode == "full" else _batches(train_bags, train_assignments, cfg, epoch)
        for batch in batches:
            cache = reusable if reusable is not None and reusable.batch_token == batch.token else forward_batch(batch, model)
            reusable = None
            _check_finite(data_term(batch, cache), epoch, "training loss")
            grads = backward(batch, model, cache)
            if not grads.is_finite():
                raise DivergenceError(f"non-finite gradient at epoch {epoch}")
            if cfg.grad_clip is not None:
                norm = grads.global_norm()
                if norm > cfg.grad_clip:
                    grads.scale(cfg.grad_clip / norm)

            update_beta = not cfg.freeze_beta and (cfg.schedule == "joint" or step % 2 == 0)
            update_smooth = cfg.schedule == "joint" or step % 2 == 1 or cfg.freeze_beta
            if update_smooth:
                if adam is not None:
                    adam.step(model, grads, cfg.lr_smooth)
                else:
                    _sgd_step(model, grads, cfg.lr_smooth)
            if update_beta:
                _prox_beta_step(model, grads.beta, cfg.lr_beta, cfg.gamma)
            model.bump()
            step += 1

        # end-of-epoch objective on the full training set; reused by the next full-batch step
        reusable = forward_batch(full_batch, model)
        data = data_term(full_batch, reusable)
        _check_finite(data, epoch, "training loss")
        penalty = float(cfg.gamma * np.sum(np.abs(model.beta)))
        record = EpochRecord(epoch=epoch, total=data + penalty, data=data, penalty=penalty, beta_l0=beta_l0(model.beta))

        if val_batch is not None:
            val_probs = forward_batch(val_batch, model).probs[:, 1]
            report = safe_metrics(val_probs, val_batch.labels)
            record.val_acc, record.val_f1, record.val_auc = report.accuracy, report.f1, report.auc
            if cfg.early_stop is not None:
                score = _metric_value(report, cfg.early_stop.metric)
                if score > best_score:
                    best_score, best_model, since_best = score, model.copy(), 0
                    history.best_epoch = epoch
                else:
                    since_best += 1

        history.records.append(record)
        logger.debug(
            f"epoch {epoch}: total={record.total:.6g} data={data:.6g} penalty={penalty:.3g} "
            f"beta_l0={record.beta_l0} val_auc={record.val_auc}"
        )
        if cfg.early_stop is not None and val_batch is not None and since_best >= cfg.early_stop.patience:
            history.stopped_early = True
            logger.info(f"Early stop at epoch {epoch}; best epoch {history.best_epoch}")
            break

    if best_model is not None:
        model = best_model
    logger.info(
        f"Finished after {history.epochs_run} epochs: loss={history.final.total:.6g}, "
        f"beta_l0={beta_l0(model.beta)}/{model.K}"
    )
    return model, history


def export_history(history: TrainHistory, path: Union[str, Path]) -> Path:
    return write_csv([record.model_dump() for record in history.records], HISTORY_COLUMNS, path)
