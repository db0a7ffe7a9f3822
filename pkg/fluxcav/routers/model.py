"""
Forward-model router: transmon frequency against flux.
"""

import logging
from typing import List

from fastapi import APIRouter
from pydantic import BaseModel, Field

from fluxcav.services.core_model import TransmonParams, max_frequency, transmon_frequency

logger = logging.getLogger(__name__)
router = APIRouter()


class FrequencyRequest(BaseModel):
    """Transmon parameters and fluxes to evaluate."""
    params: TransmonParams
    fluxes: List[float] = Field(..., min_length=1, description="Flux in units of the flux quantum")


class FrequencyResponse(BaseModel):
    """Frequencies at each flux."""
    frequencies: List[float] = Field(..., description="GHz")
    max_frequency: float = Field(..., description="Zero-flux frequency, GHz")


@router.post("/model/frequency", response_model=FrequencyResponse)
def frequency(request: FrequencyRequest):
    """Evaluate the transmon frequency law over a list of fluxes."""
    values = transmon_frequency(request.params, request.fluxes)
    return FrequencyResponse(frequencies=[float(v) for v in values], max_frequency=max_frequency(request.params))
