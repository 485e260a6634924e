"""Small dense linear algebra on 3-vectors and stacked 3x3 blocks.

Vectors and matrices are plain ``numpy`` arrays of shape (3,) and (3, 3).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySystem

RANK_RTOL = 1e-8


def vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(3)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite vector {v}")
    return v


def skew(v) -> np.ndarray:
    """Return S with S @ w == cross(v, w)."""
    x, y, z = v
    return np.array([[0.0, -z, y],
                     [z, 0.0, -x],
                     [-y, x, 0.0]])


def cross(a, b) -> np.ndarray:
    ax, ay, az = a
    bx, by, bz = b
    return np.array([ay * bz - az * by,
                     az * bx - ax * bz,
                     ax * by - ay * bx])


@dataclass
class StackedSystem:
    """Overdetermined system built from 3-row blocks, ``A x = b``."""

    rows: list = field(default_factory=list)

    @property
    def sample_count(self) -> int:
        return len(self.rows)

    def append(self, coeff, rhs) -> None:
        coeff = np.asarray(coeff, dtype=float).reshape(3, 3)
        rhs = vec3(rhs)
        if not np.all(np.isfinite(coeff)):
            raise ValueError("non-finite coefficient block")
        self.rows.append((coeff, rhs))

    def matrices(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.rows:
            return np.zeros((0, 3)), np.zeros(0)
        A = np.concatenate([c for c, _ in self.rows], axis=0)
        b = np.concatenate([r for _, r in self.rows])
        return A, b


@dataclass(frozen=True)
class LeastSquaresResult:
    solution: np.ndarray
    rank: int
    residual_norm: float


def solve_least_squares(sys: StackedSystem, rtol: float = RANK_RTOL) -> LeastSquaresResult:
    """Minimum-norm least-squares solution of a stacked 3-unknown system.

    Singular values below ``rtol`` times the largest are treated as zero, so
    a rank-deficient system returns the minimizer with no component in the
    null space and ``rank < 3``.
    """
    if sys.sample_count == 0:
        raise EmptySystem("stacked system has no samples")
    A, b = sys.matrices()
    x, _, rank, _ = np.linalg.lstsq(A, b, rcond=rtol)
    residual = float(np.linalg.norm(A @ x - b))
    return LeastSquaresResult(solution=x, rank=int(rank), residual_norm=residual)
