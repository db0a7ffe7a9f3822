"""
Cyclic Jacobi eigensolver for small complex Hermitian matrices.

Each rotation first removes the phase of the pivot element, then applies the
real Jacobi rotation that annihilates it. Sweeps run over all (p, q) pairs in
row order until the off-diagonal Frobenius norm drops below
tolerance * ||H||_F.
"""

import logging
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from fluxcav.core.exceptions import DimensionMismatch, NoConvergence, NotHermitian

logger = logging.getLogger(__name__)

MAX_DIMENSION = 16
HERMITIAN_TOLERANCE = 1e-12
MAX_SWEEPS = 60


class HermitianMatrix(BaseModel):
    """Conjugate-symmetric square matrix of dimension at most 16."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def check_hermitian(cls, v) -> np.ndarray:
        matrix = np.array(v, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionMismatch("Hermitian matrix must be square", actual=list(matrix.shape))
        if matrix.shape[0] > MAX_DIMENSION:
            raise DimensionMismatch("matrix dimension exceeds limit", expected=MAX_DIMENSION, actual=matrix.shape[0])
        deviation = float(np.max(np.abs(matrix - matrix.conj().T))) if matrix.size else 0.0
        scale = max(1.0, float(np.max(np.abs(matrix)))) if matrix.size else 1.0
        if deviation > HERMITIAN_TOLERANCE * scale:
            raise NotHermitian(deviation)
        matrix.setflags(write=False)
        return matrix

    @property
    def dimension(self) -> int:
        return self.values.shape[0]


def _off_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a - np.diag(np.diag(a))))


def _rotate(a: np.ndarray, v: np.ndarray, p: int, q: int) -> None:
    """Annihilate a[p, q] in place and accumulate the rotation into v."""
    apq = a[p, q]
    magnitude = abs(apq)
    phase = apq / magnitude
    app, aqq = a[p, p].real, a[q, q].real

    theta = (aqq - app) / (2.0 * magnitude)
    t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c

    # Columns of the 2x2 unitary acting on (p, q)
    u = np.array([[c, s], [-s * phase.conjugate(), c * phase.conjugate()]])
    idx = [p, q]
    a[:, idx] = a[:, idx] @ u
    a[idx, :] = u.conj().T @ a[idx, :]
    v[:, idx] = v[:, idx] @ u

    a[p, q] = a[q, p] = 0.0
    a[p, p] = a[p, p].real
    a[q, q] = a[q, q].real


def eigh(h: HermitianMatrix, tolerance: float = 1e-12) -> Tuple[np.ndarray, np.ndarray]:
    """
    Eigen-decomposition of a Hermitian matrix.

    Returns:
        (eigenvalues ascending, eigenvectors as columns)

    Raises:
        NoConvergence: off-diagonal norm still above tolerance after the sweep cap
    """
    a = np.array(h.values, dtype=complex)
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    scale = float(np.linalg.norm(a))
    threshold = tolerance * scale

    sweeps = 0
    while _off_norm(a) > threshold:
        if sweeps >= MAX_SWEEPS:
            raise NoConvergence(sweeps, _off_norm(a))
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) > 0.0:
                    _rotate(a, v, p, q)
        sweeps += 1

    eigenvalues = np.diag(a).real
    order = np.argsort(eigenvalues, kind="stable")
    logger.debug("Jacobi converged in %d sweeps (n=%d)", sweeps, n)
    return eigenvalues[order], v[:, order]
