"""
Spectrum router: qubit-like lines of the coupled cavity-qubit system at one
bias point.
"""

import logging
from typing import List

from fastapi import APIRouter
from pydantic import BaseModel, Field

from fluxcav.services.core_model import BiasPoint
from fluxcav.services.spectrum_engine import (
    SpectrumSlice,
    SystemModel,
    TwoExcitationMarker,
    spectrum_slice,
    two_excitation_markers,
)

logger = logging.getLogger(__name__)
router = APIRouter()


class SliceRequest(BaseModel):
    """System model and the bias point to evaluate."""
    model: SystemModel
    currents: List[float] = Field(..., description="mA per coil")
    marker_tolerance: float = Field(default=0.01, gt=0, description="GHz")


class SliceResponse(BaseModel):
    slice: SpectrumSlice
    markers: List[TwoExcitationMarker] = Field(default_factory=list)


@router.post("/spectrum/slice", response_model=SliceResponse)
def slice_at_bias(request: SliceRequest):
    """Diagonalize the single-excitation Hamiltonian at one bias point."""
    bias = BiasPoint(currents=request.currents)
    return SliceResponse(
        slice=spectrum_slice(request.model, bias),
        markers=two_excitation_markers(request.model, bias, request.marker_tolerance),
    )
