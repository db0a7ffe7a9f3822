"""
Resonator router: internal and external Q from a posted reflection trace.
"""

import logging
from typing import List

import numpy as np
from fastapi import APIRouter
from pydantic import BaseModel, Field

from fluxcav.core.exceptions import DimensionMismatch
from fluxcav.services.resonator_fit import ReflectionTrace, ResonatorFitResult, fit_reflection, loaded_q

logger = logging.getLogger(__name__)
router = APIRouter()


class TraceRequest(BaseModel):
    """Reflection trace as separate real and imaginary parts."""
    frequencies: List[float] = Field(..., description="GHz, strictly increasing")
    s11_real: List[float]
    s11_imag: List[float]


class ResonatorResponse(BaseModel):
    result: ResonatorFitResult
    q_loaded: float


@router.post("/resonator/fit", response_model=ResonatorResponse)
def fit(request: TraceRequest):
    """Fit the background-scaled reflection model to the trace."""
    if not len(request.frequencies) == len(request.s11_real) == len(request.s11_imag):
        raise DimensionMismatch(
            "frequencies, s11_real and s11_imag must have equal length",
            actual=[len(request.frequencies), len(request.s11_real), len(request.s11_imag)],
        )
    trace = ReflectionTrace(
        frequencies=request.frequencies,
        s11=np.asarray(request.s11_real) + 1j * np.asarray(request.s11_imag),
    )
    logger.info("🔍 Fitting %d-point reflection trace", len(request.frequencies))
    result = fit_reflection(trace)
    return ResonatorResponse(result=result, q_loaded=loaded_q(result))
