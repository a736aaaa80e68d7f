# csmil/clustering/router.py
import argparse
import logging

from csmil.clustering.service import (
    assign_all,
    export_assignments,
    export_cluster_counts,
    fit_on_bags,
    save_cluster_model,
)
from csmil.core.routing import CommandRouter, arg
from csmil.dependencies import get_dataset, get_K, get_out_dir, get_run

logger = logging.getLogger(__name__)

router = CommandRouter(tags=["clustering"])


@router.command(
    "cluster",
    help="Global k-means over every instance, then local assignment per bag",
    arguments=[
        arg("--manifest", help="dataset manifest (default: paths.manifest)"),
        arg("--K", type=int, help="number of clusters (default: clustering.K)"),
    ],
)
def cmd_cluster(args: argparse.Namespace) -> int:
    run = get_run(args)
    out = get_out_dir(args)
    dataset = get_dataset(args)
    cfg = run.clustering
    model = fit_on_bags(
        dataset.bags,
        get_K(args),
        run.seed,
        max_iter=cfg.max_iter,
        tol=cfg.tol,
        n_init=cfg.n_init,
        standardize=cfg.standardize,
    )
    assignments = assign_all(dataset.bags, model)
    save_cluster_model(model, out / "centers.json")
    export_assignments(dataset.bags, assignments, out / "assignments.csv")
    export_cluster_counts(dataset.bags, assignments, out / "cluster_counts.csv")
    return 0
