# csmil/optim/router.py
import argparse
import logging

from csmil.clustering.service import export_assignments, save_cluster_model
from csmil.core.routing import CommandRouter, arg
from csmil.core.seeding import derive_seed
from csmil.core.serialization import dump_json
from csmil.dependencies import get_dataset, get_ground_truth, get_K, get_out_dir, get_run
from csmil.evaluation.service import fit_pipeline, identify_selected_clusters
from csmil.model.checkpoint import save_checkpoint
from csmil.optim.gradients import finite_diff_check, random_gradcheck_problem
from csmil.optim.trainer import export_history

logger = logging.getLogger(__name__)

router = CommandRouter(tags=["optim"])


@router.command(
    "train",
    help="Cluster all bags, then train csMIL on them",
    arguments=[
        arg("--manifest", help="dataset manifest (default: paths.manifest)"),
        arg("--K", type=int, help="number of clusters (default: clustering.K)"),
    ],
)
def cmd_train(args: argparse.Namespace) -> int:
    run = get_run(args)
    out = get_out_dir(args)
    dataset = get_dataset(args)
    K = get_K(args)
    result = fit_pipeline(
        list(dataset.bags),
        K,
        run.model,
        run.train,
        run.seed,
        clustering_cfg=run.clustering.model_copy(update={"K": K}),
    )
    save_checkpoint(result.model, out / "checkpoint.json")
    save_cluster_model(result.cluster_model, out / "centers.json")
    export_assignments(dataset.bags, result.assignments, out / "assignments.csv")
    export_history(result.history, out / "history.csv")

    truth = get_ground_truth(args)
    if truth is not None:
        selection = identify_selected_clusters(result.model, dataset.bags, result.assignments, truth)
        dump_json(selection, out / "selection.json")
        logger.info(f"Selected clusters {selection.selected}: recall={selection.recall:.2f} precision={selection.precision:.2f}")
    return 0


@router.command("gradcheck", help="Compare analytic gradients with central finite differences")
def cmd_gradcheck(args: argparse.Namespace) -> int:
    run = get_run(args)
    out = get_out_dir(args)
    cfg = run.gradcheck
    rows = []
    worst = 0.0
    for K in cfg.K_values:
        for i in range(cfg.seeds):
            seed = derive_seed(run.seed, "gradcheck", K, i)
            model, bags, assignments = random_gradcheck_problem(
                K, cfg.d, cfg.hidden_dim, cfg.n_bags, cfg.instances_per_bag, seed
            )
            error = finite_diff_check(model, bags, assignments, cfg.h)
            rows.append({"K": K, "seed": seed, "max_rel_error": error})
            worst = max(worst, error)
    passed = worst < cfg.threshold
    dump_json({"h": cfg.h, "threshold": cfg.threshold, "max_rel_error": worst, "passed": passed, "runs": rows}, out / "gradcheck.json")
    print(f"max_rel_error={worst:.3e}")
    if not passed:
        logger.error(f"Gradient check failed: {worst:.3e} >= {cfg.threshold:.1e}")
        return 3
    return 0
