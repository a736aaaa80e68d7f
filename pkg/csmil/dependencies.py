# csmil/dependencies.py
import argparse
import logging
from pathlib import Path
from typing import Optional

from csmil.core.errors import ConfigurationError
from csmil.core.run_config import RunConfig
from csmil.data.schemas import Dataset, FoldAssignment, GroundTruth
from csmil.data.service import load_dataset, load_folds, load_ground_truth, split_folds

logger = logging.getLogger(__name__)

GROUND_TRUTH_NAME = "ground_truth.json"


def get_run(args: argparse.Namespace) -> RunConfig:
    return args.run


def get_out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def get_K(args: argparse.Namespace) -> int:
    K = getattr(args, "K", None)
    return int(K) if K is not None else args.run.clustering.K


def _manifest_path(args: argparse.Namespace) -> Path:
    manifest = getattr(args, "manifest", None) or args.run.paths.manifest
    if not manifest:
        raise ConfigurationError("no dataset given: pass --manifest or set paths.manifest")
    path = Path(manifest)
    if not path.is_file():
        raise ConfigurationError(f"manifest not found: {path}")
    return path


def get_dataset(args: argparse.Namespace) -> Dataset:
    return load_dataset(_manifest_path(args))


def get_folds(args: argparse.Namespace, dataset: Dataset) -> FoldAssignment:
    run = get_run(args)
    if run.paths.folds:
        if not Path(run.paths.folds).is_file():
            raise ConfigurationError(f"folds file not found: {run.paths.folds}")
        return load_folds(run.paths.folds, dataset)
    return split_folds(dataset, run.cv.n_folds, run.seed)


def get_ground_truth(args: argparse.Namespace) -> Optional[GroundTruth]:
    """Configured sidecar, else ground_truth.json next to the manifest, else None"""
    run = get_run(args)
    if run.paths.ground_truth:
        if not Path(run.paths.ground_truth).is_file():
            raise ConfigurationError(f"ground truth file not found: {run.paths.ground_truth}")
        return load_ground_truth(run.paths.ground_truth)
    sibling = _manifest_path(args).parent / GROUND_TRUTH_NAME
    if sibling.is_file():
        return load_ground_truth(sibling)
    return None
