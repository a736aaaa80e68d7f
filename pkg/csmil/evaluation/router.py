# csmil/evaluation/router.py
import argparse
import logging

from csmil.core.routing import CommandRouter, arg
from csmil.core.serialization import dump_json
from csmil.dependencies import get_dataset, get_folds, get_ground_truth, get_K, get_out_dir, get_run
from csmil.evaluation.plots import render_bar_plot, render_line_plot
from csmil.evaluation.schemas import SweepReport
from csmil.evaluation.service import (
    ablate_clusters,
    compare_with_abmil,
    export_ablation,
    export_roc,
    export_sweep,
    sweep_gamma,
    sweep_k,
)

logger = logging.getLogger(__name__)

router = CommandRouter(tags=["evaluation"])

DATASET_ARGS = [
    arg("--manifest", help="dataset manifest (default: paths.manifest)"),
    arg("--K", type=int, help="number of clusters (default: clustering.K)"),
]


def _plot_sweep(report: SweepReport, path, log_x: bool) -> None:
    series = [
        ("AUC", [(e.value, e.cv.mean.auc) for e in report.entries if e.cv.mean.auc is not None]),
        ("accuracy", [(e.value, e.cv.mean.accuracy) for e in report.entries]),
    ]
    render_line_plot(
        series, path, title=f"{report.param} sweep", x_label=report.param, y_label="fold mean", log_x=log_x, y_range=(0.0, 1.0)
    )


@router.command("eval", help="Cross-validate csMIL next to the single-cluster attention baseline", arguments=DATASET_ARGS)
def cmd_eval(args: argparse.Namespace) -> int:
    run = get_run(args)
    out = get_out_dir(args)
    dataset = get_dataset(args)
    folds = get_folds(args, dataset)
    comparison = compare_with_abmil(
        dataset, folds, run.train, get_K(args), run.seed, run.clustering, run.model, jobs=args.jobs
    )
    dump_json(comparison, out / "report.json")
    series = []
    for name, filename, cv in (("csMIL", "roc.csv", comparison.csmil), ("ABMIL", "roc_abmil.csv", comparison.abmil)):
        if cv.pooled is not None and cv.pooled.roc:
            export_roc(cv.pooled.roc, out / filename)
            series.append((f"{name} (AUC {cv.pooled.auc:.3f})", cv.pooled.roc))
    if series:
        render_line_plot(
            series, out / "roc.svg", title="Out-of-fold ROC", x_label="false positive rate",
            y_label="true positive rate", y_range=(0.0, 1.0), diagonal=True,
        )
    logger.info(
        f"csMIL: acc={comparison.csmil.mean.accuracy:.3f} auc={comparison.csmil.mean.auc}; "
        f"ABMIL: acc={comparison.abmil.mean.accuracy:.3f} auc={comparison.abmil.mean.auc}"
    )
    return 0


@router.command("ablate", help="Leave-clusters-out ablation", arguments=DATASET_ARGS)
def cmd_ablate(args: argparse.Namespace) -> int:
    run = get_run(args)
    out = get_out_dir(args)
    dataset = get_dataset(args)
    report = ablate_clusters(
        dataset,
        get_folds(args, dataset),
        run.train,
        get_K(args),
        run.seed,
        drop_size=run.ablation.drop_size,
        sparse=run.ablation.sparse,
        clustering_cfg=run.clustering,
        model_cfg=run.model,
        ground_truth=get_ground_truth(args),
        jobs=args.jobs,
    )
    dump_json(report, out / "ablation.json")
    export_ablation(report, out / "ablation.csv")
    render_bar_plot(
        [(entry.key, entry.delta_acc) for entry in report.entries],
        out / "ablation.svg",
        title="Accuracy change per removed cluster",
        y_label="delta accuracy",
    )
    return 0


@router.command("sweep-gamma", help="Cross-validate over a grid of sparsity weights", arguments=DATASET_ARGS)
def cmd_sweep_gamma(args: argparse.Namespace) -> int:
    run = get_run(args)
    out = get_out_dir(args)
    dataset = get_dataset(args)
    report = sweep_gamma(
        dataset, get_folds(args, dataset), run.train, get_K(args), run.seed,
        gamma_grid=run.sweep.gamma_grid, clustering_cfg=run.clustering, model_cfg=run.model, jobs=args.jobs,
    )
    dump_json(report, out / "sweep.json")
    export_sweep(report, out / "sweep.csv")
    _plot_sweep(report, out / "sweep.svg", log_x=all(g > 0 for g in report.grid))
    return 0


@router.command("sweep-k", help="Cross-validate over a grid of cluster counts", arguments=[DATASET_ARGS[0]])
def cmd_sweep_k(args: argparse.Namespace) -> int:
    run = get_run(args)
    out = get_out_dir(args)
    dataset = get_dataset(args)
    report = sweep_k(
        dataset, get_folds(args, dataset), run.train, run.seed,
        k_grid=run.sweep.k_grid, gamma=run.sweep.gamma, clustering_cfg=run.clustering, model_cfg=run.model, jobs=args.jobs,
    )
    dump_json(report, out / "sweep.json")
    export_sweep(report, out / "sweep.csv")
    _plot_sweep(report, out / "sweep.svg", log_x=False)
    return 0
