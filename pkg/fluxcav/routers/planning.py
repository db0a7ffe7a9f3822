"""
Planning router: coil currents for target frequencies, forward verification
and hold-and-sweep schedules.
"""

import logging
from typing import Dict, List, Optional

import numpy as np
from fastapi import APIRouter
from pydantic import BaseModel, Field

from fluxcav.services.core_model import (
    BiasPoint,
    FluxMap,
    TransmonParams,
    currents_for_targets,
    fluxes_from_currents,
    plan_schedule,
    predicted_frequencies,
)

logger = logging.getLogger(__name__)
router = APIRouter()


class CalibratedSystem(BaseModel):
    """Flux map plus one TransmonParams per qubit."""
    flux_map: FluxMap
    params: List[TransmonParams] = Field(..., min_length=1)


class CurrentsRequest(CalibratedSystem):
    targets: List[float] = Field(..., description="GHz per qubit")
    condition_limit: Optional[float] = Field(default=None, gt=0)


class CurrentsResponse(BaseModel):
    currents: List[float] = Field(..., description="mA per coil")
    fluxes: List[float] = Field(..., description="Flux per qubit at the planned currents")
    predicted: List[float] = Field(..., description="GHz per qubit at the planned currents")


class VerifyRequest(CalibratedSystem):
    currents: List[List[float]] = Field(..., min_length=1, description="Bias points, mA per coil")


class VerifyResponse(BaseModel):
    predicted: List[List[float]] = Field(..., description="GHz per qubit for each bias point")


class ScheduleRequest(CalibratedSystem):
    held: Dict[int, float] = Field(..., description="qubit index -> held frequency, GHz")
    swept_qubit: int = Field(..., ge=0)
    start: float = Field(..., description="GHz")
    stop: float = Field(..., description="GHz")
    points: int = Field(default=30, ge=2, le=10000)
    condition_limit: Optional[float] = Field(default=None, gt=0)


class ScheduleResponse(BaseModel):
    targets: List[List[float]]
    currents: List[List[float]]


@router.post("/planning/currents", response_model=CurrentsResponse)
def plan_currents(request: CurrentsRequest):
    """Solve for the coil currents that put every qubit at its target."""
    bias = currents_for_targets(request.flux_map, request.params, request.targets, request.condition_limit)
    return CurrentsResponse(
        currents=bias.currents,
        fluxes=fluxes_from_currents(request.flux_map, bias).tolist(),
        predicted=predicted_frequencies(request.flux_map, request.params, bias).tolist(),
    )


@router.post("/planning/verify", response_model=VerifyResponse)
def verify(request: VerifyRequest):
    """Predicted qubit frequencies at each bias point."""
    predicted = [
        predicted_frequencies(request.flux_map, request.params, BiasPoint(currents=currents)).tolist()
        for currents in request.currents
    ]
    return VerifyResponse(predicted=predicted)


@router.post("/planning/schedule", response_model=ScheduleResponse)
def schedule(request: ScheduleRequest):
    """Hold some qubits fixed while one moves linearly between two frequencies."""
    biases = plan_schedule(
        request.flux_map,
        request.params,
        request.held,
        request.swept_qubit,
        request.start,
        request.stop,
        request.points,
        request.condition_limit,
    )
    swept = np.linspace(request.start, request.stop, request.points)
    targets = [
        [request.held.get(i, float(f)) for i in range(request.flux_map.n_qubits)]
        for f in swept
    ]
    return ScheduleResponse(targets=targets, currents=[b.currents for b in biases])
