# csmil/core/run_config.py
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from csmil.clustering.schemas import ClusteringConfig
from csmil.core.errors import ConfigurationError
from csmil.core.serialization import load_json
from csmil.data.schemas import SynthConfig
from csmil.evaluation.schemas import DEFAULT_GAMMA_GRID, DEFAULT_K_GRID
from csmil.model.schemas import ModelConfig
from csmil.optim.schemas import TrainConfig
from csmil.recovery.schemas import RecoveryConfig

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "csmil.run/1"


class CVConfig(BaseModel):
    n_folds: int = Field(5, ge=2)


class SweepConfig(BaseModel):
    gamma_grid: List[float] = Field(default_factory=lambda: list(DEFAULT_GAMMA_GRID))
    k_grid: List[int] = Field(default_factory=lambda: list(DEFAULT_K_GRID))
    gamma: Optional[float] = Field(None, ge=0)  # γ for the K sweep; train.gamma when unset


class AblationConfig(BaseModel):
    drop_size: int = Field(1, ge=1)
    sparse: bool = False


class GradcheckConfig(BaseModel):
    seeds: int = Field(20, ge=1)
    K_values: List[int] = Field(default_factory=lambda: [1, 2, 3])
    d: int = Field(3, ge=1)
    hidden_dim: int = Field(2, ge=1)
    n_bags: int = Field(2, ge=1)
    instances_per_bag: int = Field(4, ge=1)
    h: float = Field(1e-6, gt=0)
    threshold: float = Field(1e-4, gt=0)


class PathsConfig(BaseModel):
    manifest: Optional[str] = None
    folds: Optional[str] = None
    ground_truth: Optional[str] = None
    checkpoint: Optional[str] = None
    cluster_model: Optional[str] = None


class RunConfig(BaseModel):
    """Everything one command needs; one JSON/YAML document"""

    model_config = ConfigDict(extra="forbid", protected_namespaces=())

    schema_version: Literal["csmil.run/1"] = SCHEMA_VERSION
    seed: int = Field(0, ge=0, le=2**64 - 1)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    clustering: ClusteringConfig = Field(default_factory=ClusteringConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    cv: CVConfig = Field(default_factory=CVConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    ablation: AblationConfig = Field(default_factory=AblationConfig)
    recovery: RecoveryConfig = Field(default_factory=RecoveryConfig)
    gradcheck: GradcheckConfig = Field(default_factory=GradcheckConfig)
    paths: PathsConfig = Field(default_factory=PathsConfig)


def _read_document(path: Path) -> Dict[str, Any]:
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    if path.suffix.lower() in (".yml", ".yaml"):
        try:
            raw = yaml.safe_load(path.read_text(encoding="utf-8"))
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
            raise ConfigurationError(f"{path}: invalid YAML{where}: {getattr(e, 'problem', e)}")
    else:
        raw = load_json(path)
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    return raw


def apply_override(raw: Dict[str, Any], override: str) -> None:
    """`a.b.c=value`; the value is parsed as YAML so numbers, booleans and lists keep their types"""
    key, sep, text = override.partition("=")
    if not sep or not key.strip():
        raise ConfigurationError(f"--set expects key=value, got {override!r}")
    try:
        value = yaml.safe_load(text) if text.strip() else None
    except yaml.YAMLError as e:
        raise ConfigurationError(f"--set {key}: cannot parse value {text!r}: {e}")
    node = raw
    parts = key.strip().split(".")
    for part in parts[:-1]:
        child = node.get(part)
        if child is None:
            child = node[part] = {}
        elif not isinstance(child, dict):
            raise ConfigurationError(f"--set {key}: {part!r} is not a section")
        node = child
    node[parts[-1]] = value


def format_validation_error(e: ValidationError) -> str:
    lines = [f"  {'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()]
    return "invalid run configuration:\n" + "\n".join(lines)


def load_run_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Sequence[str] = (),
    seed: Optional[int] = None,
) -> RunConfig:
    raw: Dict[str, Any] = _read_document(Path(path)) if path else {}
    for override in overrides:
        apply_override(raw, override)
    if seed is not None:
        raw["seed"] = seed
    try:
        config = RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigurationError(format_validation_error(e))
    logger.debug(f"Run configuration: {config.model_dump()}")
    return config
