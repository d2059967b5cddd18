"""
Lasso-OD - identificação do melhor braço em bandits lineares esparsos.
API HTTP espelhando os subcomandos design, estimate, run e bounds da CLI.
"""
import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from app.config import get_settings, setup_logging
from app.exceptions import BanditError
from app.routes import (
    bounds_router,
    design_router,
    estimate_router,
    run_router,
)

logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    setup_logging()
    logger.info("%s iniciado.", get_settings().app_name)
    yield


app = FastAPI(
    title="Lasso-OD - Bandits lineares esparsos",
    description="Desenhos ótimos, Lasso limiarizado, algoritmos de orçamento fixo e limites de erro.",
    version="0.1.0",
    lifespan=lifespan,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(design_router)
app.include_router(estimate_router)
app.include_router(run_router)
app.include_router(bounds_router)


@app.exception_handler(BanditError)
async def bandit_error_handler(request: Request, exc: BanditError):
    # Subclasses de ValueError são entrada inválida (422).
    status = 422 if isinstance(exc, ValueError) else 400
    logger.warning("%s %s: %s", request.method, request.url.path, exc)
    return JSONResponse(status_code=status, content={"detail": str(exc)})


@app.get("/")
async def root():
    return {
        "app": get_settings().app_name,
        "docs": "/docs",
        "health": "/health",
    }


@app.get("/health")
async def health():
    return {"status": "ok"}
