"""
Damped Gauss-Newton (Levenberg-Marquardt) least squares.

Shared by crosstalk calibration and resonator fitting. The damping term is
scaled by diag(J^T J) so parameters of very different magnitude (a resonance
frequency next to a log quality factor) step sensibly together.
"""

import logging
from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from fluxcav.config import get_settings
from fluxcav.core.exceptions import NoConvergence

logger = logging.getLogger(__name__)

ResidualFunction = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]


class LeastSquaresOptions(BaseModel):
    """Damping schedule and stopping rules."""

    max_iterations: Optional[int] = Field(None, description="Defaults to FIT_MAX_ITERATIONS")
    tolerance: Optional[float] = Field(None, description="Relative cost change; defaults to FIT_TOLERANCE")
    gradient_tolerance: float = 1e-12
    initial_damping: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 3.0
    max_damping: float = 1e16


class LeastSquaresResult(BaseModel):
    """Minimizer, final residuals and Jacobian, and the accepted-cost history."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    x: np.ndarray
    residuals: np.ndarray
    jacobian: np.ndarray
    cost: float
    iterations: int
    cost_history: List[float]
    reason: str

    def covariance(self) -> np.ndarray:
        """Parameter covariance s^2 (J^T J)^-1, with s^2 the reduced cost."""
        m, p = self.jacobian.shape
        dof = max(m - p, 1)
        return (self.cost / dof) * np.linalg.pinv(self.jacobian.T @ self.jacobian)


def _cost(residuals: np.ndarray) -> float:
    value = float(residuals @ residuals)
    return value if np.isfinite(value) else np.inf


def levenberg_marquardt(
    fun: ResidualFunction,
    x0: np.ndarray,
    options: Optional[LeastSquaresOptions] = None
) -> LeastSquaresResult:
    """
    Minimize sum(r(x)^2) where fun(x) returns (r, dr/dx).

    A trial step is accepted only when it lowers the cost, so accepted costs
    never increase. Damping is multiplied by damping_up on rejection and
    divided by damping_down on acceptance.

    Raises:
        NoConvergence: iteration cap reached
    """
    options = options or LeastSquaresOptions()
    settings = get_settings()
    max_iterations = options.max_iterations or settings.FIT_MAX_ITERATIONS
    tolerance = options.tolerance if options.tolerance is not None else settings.FIT_TOLERANCE

    x = np.asarray(x0, dtype=float).copy()
    residuals, jacobian = fun(x)
    cost = _cost(residuals)
    history = [cost]
    damping = options.initial_damping

    for iteration in range(1, max_iterations + 1):
        gradient = jacobian.T @ residuals
        if np.linalg.norm(gradient) < options.gradient_tolerance:
            return _finish(x, residuals, jacobian, cost, iteration - 1, history, "gradient")

        normal = jacobian.T @ jacobian
        scaling = np.diag(normal).copy()
        scaling[scaling <= 0.0] = max(float(scaling.max()), 1.0) * 1e-12

        while True:
            try:
                step = np.linalg.solve(normal + damping * np.diag(scaling), -gradient)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                trial = x + step
                trial_residuals, trial_jacobian = fun(trial)
                trial_cost = _cost(trial_residuals)
                if trial_cost < cost:
                    damping = max(damping / options.damping_down, 1e-15)
                    break
            damping *= options.damping_up
            if damping > options.max_damping:
                # No descent direction left at this precision
                return _finish(x, residuals, jacobian, cost, iteration - 1, history, "stagnated")

        relative_change = (cost - trial_cost) / max(cost, np.finfo(float).tiny)
        x, residuals, jacobian, cost = trial, trial_residuals, trial_jacobian, trial_cost
        history.append(cost)
        logger.debug("LM iteration %d: cost %.6e, damping %.1e", iteration, cost, damping)

        if relative_change < tolerance or cost == 0.0:
            return _finish(x, residuals, jacobian, cost, iteration, history, "cost")

    logger.error("❌ Least squares hit the iteration cap (%d)", max_iterations)
    raise NoConvergence(max_iterations, cost)


def _finish(x, residuals, jacobian, cost, iterations, history, reason) -> LeastSquaresResult:
    logger.debug("LM finished after %d iterations (%s), cost %.6e", iterations, reason, cost)
    return LeastSquaresResult(
        x=x,
        residuals=residuals,
        jacobian=jacobian,
        cost=cost,
        iterations=iterations,
        cost_history=history,
        reason=reason,
    )
