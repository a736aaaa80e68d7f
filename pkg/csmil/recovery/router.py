# csmil/recovery/router.py
import argparse
import logging

from csmil.core.routing import CommandRouter
from csmil.core.serialization import dump_json
from csmil.dependencies import get_out_dir, get_run
from csmil.evaluation.plots import render_line_plot
from csmil.recovery.diagnostics import design_diagnostics
from csmil.recovery.service import (
    error_bound_constant,
    export_phase_table,
    gen_linear_problem,
    minimal_m_for_success,
    run_phase,
    scaling_study,
)

logger = logging.getLogger(__name__)

router = CommandRouter(tags=["recovery"])


@router.command("recover", help="Lasso support-recovery phase transition in the number of bags M")
def cmd_recover(args: argparse.Namespace) -> int:
    run = get_run(args)
    out = get_out_dir(args)
    cfg = run.recovery

    table = run_phase(cfg, run.seed, jobs=args.jobs)
    export_phase_table(table, out / "phase.csv")
    dump_json(
        {
            "table": table,
            "minimal_M_90": minimal_m_for_success(table, 0.9),
            "error_bound_constant": error_bound_constant(table),
        },
        out / "phase.json",
    )
    render_line_plot(
        [(f"K={cfg.K}, s={cfg.s}", [(row.M, row.success_rate) for row in table.rows])],
        out / "phase.svg",
        title="Support recovery",
        x_label="M",
        y_label="success rate",
        y_range=(0.0, 1.0),
    )

    # design diagnostics on one problem at the largest M
    problem = gen_linear_problem(cfg.K, cfg.s, max(cfg.M_grid), cfg.sigma, cfg.beta_min, run.seed)
    diagnostics = design_diagnostics(problem.Z, range(1, cfg.s + 1), seed=run.seed)
    dump_json({"mu": diagnostics.mu, "kappa_s": diagnostics.kappa_s, "columns": diagnostics.columns}, out / "diagnostics.json")

    if cfg.scaling is not None:
        scaling = scaling_study(cfg.scaling, cfg.sigma, cfg.beta_min, run.seed, cfg.accelerated, jobs=args.jobs)
        dump_json(scaling, out / "scaling.json")
    return 0
