"""
Exception handling and custom exceptions for fluxcav.

This module provides the exception hierarchy shared by the library, the CLI
and the HTTP service. Every exception carries a machine-readable error code,
an HTTP status code, a CLI exit code and a details dict, and renders to the
same standardized error object on both surfaces.
"""

import logging
import traceback
from typing import Any, Dict, Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import ValidationError
from starlette.exceptions import HTTPException as StarletteHTTPException

from fluxcav.config import settings

logger = logging.getLogger(__name__)


class FluxCavException(Exception):
    """Base exception class for fluxcav."""

    def __init__(
        self,
        message: str,
        status_code: int = 500,
        error_code: str = "INTERNAL_ERROR",
        details: Optional[Dict[str, Any]] = None,
        exit_code: int = 1
    ):
        self.message = message
        self.status_code = status_code
        self.error_code = error_code
        self.details = details or {}
        self.exit_code = exit_code
        super().__init__(self.message)


class ValidationException(FluxCavException):
    """Exception for invalid input documents or parameters."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            status_code=422,
            error_code="VALIDATION_ERROR",
            details=details,
            exit_code=2
        )


class DataFormatException(FluxCavException):
    """Exception for unreadable or malformed CSV/JSON files."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(
            message=message,
            status_code=400,
            error_code="DATA_FORMAT_ERROR",
            details={"path": path} if path else None,
            exit_code=3
        )


class DimensionMismatch(FluxCavException):
    """Exception for vectors and matrices whose sizes disagree."""

    def __init__(self, message: str, expected: Any = None, actual: Any = None):
        super().__init__(
            message=message,
            status_code=400,
            error_code="DIMENSION_MISMATCH",
            details={"expected": expected, "actual": actual},
            exit_code=4
        )


class TargetUnreachable(FluxCavException):
    """Exception for a target frequency outside a qubit's tunable range."""

    def __init__(self, target: float, lower: float, upper: float, qubit: Optional[int] = None):
        where = f" for qubit {qubit}" if qubit is not None else ""
        super().__init__(
            message=f"Target {target:.6f} GHz unreachable{where}: range is [{lower:.6f}, {upper:.6f}] GHz",
            status_code=422,
            error_code="TARGET_UNREACHABLE",
            details={"qubit": qubit, "target": target, "lower": lower, "upper": upper},
            exit_code=5
        )


class SingularMatrix(FluxCavException):
    """Exception for a crosstalk matrix too ill-conditioned to invert."""

    def __init__(self, condition_number: float, limit: float):
        super().__init__(
            message=f"Mutual inductance matrix is singular (condition number {condition_number:.3e} > {limit:.1e})",
            status_code=422,
            error_code="SINGULAR_MATRIX",
            details={"condition_number": condition_number, "limit": limit},
            exit_code=6
        )


class NotHermitian(FluxCavException):
    """Exception for a matrix that is not conjugate-symmetric."""

    def __init__(self, deviation: float):
        super().__init__(
            message=f"Matrix is not Hermitian (max |H - H^dagger| = {deviation:.3e})",
            status_code=400,
            error_code="NOT_HERMITIAN",
            details={"deviation": deviation},
            exit_code=7
        )


class ZeroDetuning(FluxCavException):
    """Exception for a dispersive shift evaluated on resonance."""

    def __init__(self):
        super().__init__(
            message="Dispersive shift is undefined at zero detuning",
            status_code=400,
            error_code="ZERO_DETUNING",
            exit_code=8
        )


class InvalidRange(FluxCavException):
    """Exception for degenerate sweep or probe ranges."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            status_code=400,
            error_code="INVALID_RANGE",
            details=details,
            exit_code=9
        )


class InsufficientData(FluxCavException):
    """Exception for fits whose data cannot determine every parameter."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            status_code=422,
            error_code="INSUFFICIENT_DATA",
            details=details,
            exit_code=10
        )


class NoConvergence(FluxCavException):
    """Exception for fits that hit the iteration cap."""

    def __init__(self, iterations: int, cost: float):
        super().__init__(
            message=f"Fit did not converge within {iterations} iterations (cost {cost:.3e})",
            status_code=422,
            error_code="NO_CONVERGENCE",
            details={"iterations": iterations, "cost": cost},
            exit_code=11
        )


class ZeroMutual(FluxCavException):
    """Exception for a flux period requested from a zero mutual inductance."""

    def __init__(self, qubit: int, coil: int):
        super().__init__(
            message=f"Mutual inductance between qubit {qubit} and coil {coil} is zero",
            status_code=422,
            error_code="ZERO_MUTUAL",
            details={"qubit": qubit, "coil": coil},
            exit_code=12
        )


class NoResonanceFound(FluxCavException):
    """Exception for reflection traces without a resonance dip."""

    def __init__(self, message: str = "No resonance dip found in trace"):
        super().__init__(
            message=message,
            status_code=422,
            error_code="NO_RESONANCE_FOUND",
            exit_code=13
        )


class EmptyMap(FluxCavException):
    """Exception for spectroscopy maps without bias or probe points."""

    def __init__(self, message: str = "Spectroscopy map is empty"):
        super().__init__(
            message=message,
            status_code=400,
            error_code="EMPTY_MAP",
            exit_code=14
        )


class AmbiguousTracking(FluxCavException):
    """Exception for peaks claimed by more than one track."""

    def __init__(self, column: int, frequency: float):
        super().__init__(
            message=f"Ambiguous track continuation at column {column} near {frequency:.6f} GHz",
            status_code=422,
            error_code="AMBIGUOUS_TRACKING",
            details={"column": column, "frequency": frequency},
            exit_code=15
        )


def create_error_response(
    status_code: int,
    message: str,
    error_code: str = "UNKNOWN_ERROR",
    details: Optional[Dict[str, Any]] = None,
    request_id: Optional[str] = None
) -> Dict[str, Any]:
    """
    Create standardized error response.

    Args:
        status_code: HTTP status code
        message: Error message
        error_code: Internal error code
        details: Additional error details
        request_id: Request ID for tracking

    Returns:
        Dict containing standardized error response
    """
    error_response = {
        "error": {
            "code": error_code,
            "message": message,
            "status_code": status_code
        }
    }

    if details:
        error_response["error"]["details"] = details

    if request_id:
        error_response["error"]["request_id"] = request_id

    return error_response


def from_validation_error(error: ValidationError, message: str = "Validation error") -> ValidationException:
    """Wrap a pydantic ValidationError raised by a domain-type invariant."""
    messages = [
        f"{'.'.join(str(part) for part in e['loc'])}: {e['msg']}" if e.get("loc") else e["msg"]
        for e in error.errors(include_url=False, include_context=False, include_input=False)
    ]
    return ValidationException(message, details={"validation_errors": messages})


def error_from_exception(exc: FluxCavException) -> Dict[str, Any]:
    """Standardized error object for a fluxcav exception, with the CLI exit code."""
    response = create_error_response(
        status_code=exc.status_code,
        message=exc.message,
        error_code=exc.error_code,
        details=exc.details
    )
    response["error"]["exit_code"] = exc.exit_code
    return response


async def fluxcav_exception_handler(
    request: Request,
    exc: FluxCavException
) -> JSONResponse:
    """
    Handle fluxcav custom exceptions.

    Args:
        request: FastAPI request object
        exc: fluxcav exception instance

    Returns:
        JSONResponse with error details
    """
    request_id = getattr(request.state, "request_id", None)

    if exc.status_code >= 500:
        logger.error(
            "Internal error: %s - Status: %d - Details: %s",
            exc.message, exc.status_code, exc.details
        )
    else:
        logger.warning(
            "Client error: %s - Status: %d",
            exc.message, exc.status_code
        )

    return JSONResponse(
        status_code=exc.status_code,
        content=create_error_response(
            status_code=exc.status_code,
            message=exc.message,
            error_code=exc.error_code,
            details=exc.details,
            request_id=request_id
        )
    )


async def http_exception_handler(
    request: Request,
    exc: HTTPException
) -> JSONResponse:
    """Handle FastAPI HTTP exceptions."""
    request_id = getattr(request.state, "request_id", None)

    logger.warning(
        "HTTP exception: %s - Status: %d",
        exc.detail, exc.status_code
    )

    return JSONResponse(
        status_code=exc.status_code,
        content=create_error_response(
            status_code=exc.status_code,
            message=str(exc.detail),
            error_code="HTTP_ERROR",
            request_id=request_id
        )
    )


async def validation_exception_handler(
    request: Request,
    exc: RequestValidationError
) -> JSONResponse:
    """
    Handle request validation exceptions, including domain-type invariants
    raised while parsing request bodies.
    """
    request_id = getattr(request.state, "request_id", None)

    logger.warning("Validation error: %s", exc.errors())

    return JSONResponse(
        status_code=422,
        content=create_error_response(
            status_code=422,
            message="Validation error",
            error_code="VALIDATION_ERROR",
            details={"validation_errors": [str(e.get("msg", e)) for e in exc.errors()]},
            request_id=request_id
        )
    )


async def domain_validation_handler(
    request: Request,
    exc: ValidationError
) -> JSONResponse:
    """Handle domain-type invariants violated while a request is being served."""
    return await fluxcav_exception_handler(request, from_validation_error(exc))


async def general_exception_handler(
    request: Request,
    exc: Exception
) -> JSONResponse:
    """
    Handle unexpected exceptions.

    Args:
        request: FastAPI request object
        exc: Exception instance

    Returns:
        JSONResponse with generic error message
    """
    request_id = getattr(request.state, "request_id", None)

    logger.error(
        "Unhandled exception: %s",
        exc,
        exc_info=True
    )

    # Don't expose internal errors in production
    if settings.ENVIRONMENT == "production":
        message = "An internal error occurred"
        details = None
    else:
        message = str(exc)
        details = {"traceback": traceback.format_exc()}

    return JSONResponse(
        status_code=500,
        content=create_error_response(
            status_code=500,
            message=message,
            error_code="INTERNAL_ERROR",
            details=details,
            request_id=request_id
        )
    )


def setup_exception_handlers(app: FastAPI) -> None:
    """
    Setup exception handlers for the FastAPI application.

    Args:
        app: FastAPI application instance
    """
    app.add_exception_handler(FluxCavException, fluxcav_exception_handler)
    app.add_exception_handler(HTTPException, http_exception_handler)
    app.add_exception_handler(StarletteHTTPException, http_exception_handler)
    app.add_exception_handler(RequestValidationError, validation_exception_handler)
    app.add_exception_handler(ValidationError, domain_validation_handler)
    app.add_exception_handler(Exception, general_exception_handler)

    logger.info("🛡️  Exception handlers configured")
