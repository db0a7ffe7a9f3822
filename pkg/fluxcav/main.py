"""
FastAPI service for flux-tunable transmon calibration and cavity spectroscopy.

Exposes the forward model, the current planner, spectrum slices and the
resonator fit over HTTP, with the same error objects the CLI prints.
"""

import logging
import time
from contextlib import asynccontextmanager
from typing import AsyncGenerator

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware

from fluxcav.config import settings
from fluxcav.core.exceptions import setup_exception_handlers
from fluxcav.core.logging import setup_logging
from fluxcav.routers import health, model, planning, resonator, spectrum

setup_logging()
logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(application: FastAPI) -> AsyncGenerator[None, None]:
    """Log startup configuration and shutdown."""
    logger.info("🚀 Starting %s API server...", settings.APP_NAME)
    logger.info(
        "📊 E_c default %.3f GHz, condition limit %.1e, %d worker threads",
        settings.DEFAULT_CHARGING_ENERGY_GHZ, settings.CONDITION_LIMIT, settings.WORKERS
    )
    application.state.started_at = time.time()
    yield
    logger.info("🛑 Shutting down %s API server...", settings.APP_NAME)


app = FastAPI(
    title="fluxcav API",
    description="Transmon flux calibration, frequency planning and cavity spectroscopy",
    version=settings.APP_VERSION,
    docs_url="/api/docs" if settings.ENVIRONMENT == "development" else None,
    redoc_url="/api/redoc" if settings.ENVIRONMENT == "development" else None,
    lifespan=lifespan
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.ALLOWED_ORIGINS,
    allow_credentials=True,
    allow_methods=["GET", "POST", "OPTIONS"],
    allow_headers=["*"],
)

setup_exception_handlers(app)


@app.middleware("http")
async def log_requests(request: Request, call_next):
    """Log all HTTP requests with timing information."""
    start_time = time.time()
    logger.info(
        "📥 %s %s - Client: %s",
        request.method,
        request.url.path,
        request.client.host if request.client else "unknown"
    )

    response = await call_next(request)

    process_time = time.time() - start_time
    logger.info(
        "📤 %s %s - Status: %d - Time: %.3fs",
        request.method,
        request.url.path,
        response.status_code,
        process_time
    )
    response.headers["X-Process-Time"] = str(process_time)
    return response


app.include_router(health.router, prefix="/api/v1", tags=["health"])
app.include_router(model.router, prefix="/api/v1", tags=["model"])
app.include_router(planning.router, prefix="/api/v1", tags=["planning"])
app.include_router(spectrum.router, prefix="/api/v1", tags=["spectrum"])
app.include_router(resonator.router, prefix="/api/v1", tags=["resonator"])


@app.get("/")
async def root():
    """API metadata and status."""
    return {
        "name": "fluxcav API",
        "version": settings.APP_VERSION,
        "docs": "/api/docs" if settings.ENVIRONMENT == "development" else None,
        "status": "operational"
    }
