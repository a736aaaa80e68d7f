# csmil/data/router.py
import argparse
import logging

from csmil.core.routing import CommandRouter
from csmil.data.service import save_dataset, save_folds, save_ground_truth, split_folds
from csmil.data.synthetic import generate_synthetic
from csmil.dependencies import get_out_dir, get_run

logger = logging.getLogger(__name__)

router = CommandRouter(tags=["data"])


@router.command("synth", help="Generate a planted-cluster synthetic dataset")
def cmd_synth(args: argparse.Namespace) -> int:
    run = get_run(args)
    out = get_out_dir(args)
    cfg = run.synth.model_copy(update={"seed": run.seed})
    dataset, truth = generate_synthetic(cfg)
    manifest = save_dataset(dataset, out)
    save_ground_truth(truth, out / "ground_truth.json")
    save_folds(split_folds(dataset, run.cv.n_folds, run.seed), out / "folds.json")
    logger.info(f"Synthetic dataset written to {manifest}")
    return 0
