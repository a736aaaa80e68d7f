# csmil/router.py (Main Router)
from csmil.clustering.router import router as clustering_router
from csmil.core.routing import CommandRouter
from csmil.data.router import router as data_router
from csmil.evaluation.router import router as evaluation_router
from csmil.optim.router import router as optim_router
from csmil.recovery.router import router as recovery_router

cli_router = CommandRouter()

cli_router.include_router(data_router)            # synth
cli_router.include_router(clustering_router)      # cluster
cli_router.include_router(optim_router)           # train, gradcheck
cli_router.include_router(evaluation_router)      # eval, ablate, sweep-gamma, sweep-k
cli_router.include_router(recovery_router)        # recover
