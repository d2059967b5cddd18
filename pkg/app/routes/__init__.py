from .design import router as design_router
from .estimate import router as estimate_router
from .run import router as run_router
from .bounds import router as bounds_router

__all__ = [
    "design_router",
    "estimate_router",
    "run_router",
    "bounds_router",
]
