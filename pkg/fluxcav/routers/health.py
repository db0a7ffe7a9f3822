"""
Health check router.

Liveness and status endpoints for load balancers and monitoring.
"""

import os
import platform
import time
from typing import Any, Dict

import numpy as np
from fastapi import APIRouter, Depends
from pydantic import BaseModel

from fluxcav.config import Settings, get_settings
from fluxcav.services.eigensolver import HermitianMatrix, eigh

router = APIRouter()

_startup_time = time.time()


class HealthStatus(BaseModel):
    """Health check response model."""
    status: str
    timestamp: float
    version: str
    environment: str
    uptime: float
    checks: Dict[str, Any]


@router.get("/health", response_model=HealthStatus)
async def health_check(settings: Settings = Depends(get_settings)):
    """
    Health check with a numerical self-test.

    Status is "degraded" when the linear-algebra backend fails the self-test.
    """
    current_time = time.time()
    checks = {
        "numerics": _check_numerics(),
        "runtime": {
            "status": "ok",
            "python_version": platform.python_version(),
            "numpy_version": np.__version__,
            "worker_threads": settings.WORKERS,
        },
    }
    status = "healthy"
    if any(check.get("status") == "error" for check in checks.values()):
        status = "degraded"

    return HealthStatus(
        status=status,
        timestamp=current_time,
        version=settings.APP_VERSION,
        environment=settings.ENVIRONMENT,
        uptime=current_time - _startup_time,
        checks=checks
    )


@router.get("/health/simple")
async def simple_health_check():
    """Basic status for load balancer monitoring."""
    return {
        "status": "ok",
        "timestamp": time.time()
    }


@router.get("/health/live")
async def liveness_check():
    """Verify the process is alive and responding."""
    return {
        "status": "alive",
        "timestamp": time.time(),
        "pid": os.getpid()
    }


def _check_numerics() -> Dict[str, Any]:
    try:
        values, _ = eigh(HermitianMatrix(values=[[0.0, 1.0], [1.0, 0.0]]))
        if np.allclose(values, [-1.0, 1.0], atol=1e-12):
            return {"status": "ok", "message": "Eigensolver self-test passed"}
        return {"status": "error", "message": f"Eigensolver self-test returned {values.tolist()}"}
    except Exception as e:
        return {"status": "error", "message": f"Eigensolver self-test failed: {e}"}
