# csmil/model/checkpoint.py
import logging
from pathlib import Path
from typing import Union

import numpy as np
from pydantic import ValidationError

from csmil.core.errors import DataFormatError
from csmil.core.serialization import dump_json, load_json

from .schemas import AttentionHead, CsmilModel, ModelConfig

logger = logging.getLogger(__name__)


def checkpoint_payload(model: CsmilModel) -> dict:
    return {
        "K": model.K,
        "d": model.d,
        "L": model.L,
        "beta": model.beta,
        "heads": [{"V": head.V, "w": head.w} for head in model.heads],
        "W": model.W,
        "b": model.b,
        "config": model.config.model_dump(),
        "seed": model.seed,
    }


def save_checkpoint(model: CsmilModel, path: Union[str, Path]) -> Path:
    return dump_json(checkpoint_payload(model), path)


def model_from_payload(raw: dict, source: str = "checkpoint") -> CsmilModel:
    try:
        config = ModelConfig.model_validate(raw.get("config", {"hidden_dim": raw["L"]}))
        model = CsmilModel(
            heads=[AttentionHead(V=np.asarray(h["V"], dtype=np.float64), w=np.asarray(h["w"], dtype=np.float64)) for h in raw["heads"]],
            beta=np.asarray(raw["beta"], dtype=np.float64),
            W=np.asarray(raw["W"], dtype=np.float64),
            b=np.asarray(raw["b"], dtype=np.float64),
            config=config,
            seed=int(raw.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError, ValidationError) as e:
        raise DataFormatError(f"{source}: invalid model checkpoint: {e}")
    if (model.K, model.d, model.L) != (int(raw["K"]), int(raw["d"]), int(raw["L"])):
        raise DataFormatError(f"{source}: declared K/d/L do not match parameter shapes")
    return model


def load_checkpoint(path: Union[str, Path]) -> CsmilModel:
    model = model_from_payload(load_json(path), source=str(path))
    logger.info(f"Loaded checkpoint {path}: K={model.K}, d={model.d}, L={model.L}")
    return model
