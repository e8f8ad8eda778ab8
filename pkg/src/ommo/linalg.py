"""PSD regularity matrices with a maintained inverse.

Learners accumulate curvature information in a matrix ``A`` and need
``A^{-1} F`` every round. Rank-one growth is handled with the
Sherman-Morrison identity; every ``REFRESH_EVERY`` updates the inverse is
recomputed from scratch so rounding drift cannot build up.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

REFRESH_EVERY = 256
SYM_TOL = 1e-12
PSD_TOL = 1e-10
DENOM_FLOOR = 1e-14


class SingularMatrixError(np.linalg.LinAlgError):
    pass


@dataclass
class RegularityMatrix:
    A: np.ndarray
    A_inv: np.ndarray
    scalar: float | None = None  # set when A = scalar * I
    updates: int = 0

    @property
    def d(self) -> int:
        return self.A.shape[0]

    def solve(self, v) -> np.ndarray:
        """Return A^{-1} v using the maintained inverse."""
        v = np.asarray(v, dtype=float)
        if self.scalar is not None:
            return v / self.scalar
        return self.A_inv @ v

    def quad(self, v) -> float:
        v = np.asarray(v, dtype=float)
        return float(v @ self.A @ v)

    def inverse_residual(self) -> float:
        return float(np.max(np.abs(self.A @ self.A_inv - np.eye(self.d))))

    def copy(self) -> "RegularityMatrix":
        return RegularityMatrix(self.A.copy(), self.A_inv.copy(), self.scalar, self.updates)


def init_regularity(d: int, epsilon: float) -> RegularityMatrix:
    if d < 1:
        raise ValueError("dimension must be positive")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    eye = np.eye(d)
    return RegularityMatrix(epsilon * eye, eye / epsilon, scalar=float(epsilon))


def _direct_inverse(A: np.ndarray) -> np.ndarray:
    try:
        inv = np.linalg.inv(A)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("regularity matrix is singular") from exc
    if not np.all(np.isfinite(inv)):
        raise SingularMatrixError("regularity matrix inverse is not finite")
    return 0.5 * (inv + inv.T)


def rank_one_update(R: RegularityMatrix, v) -> RegularityMatrix:
    """A' = A + v v^T with the inverse updated by Sherman-Morrison."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size != R.d:
        raise ValueError(f"vector has dimension {v.size}, matrix has {R.d}")
    A_new = R.A + np.outer(v, v)
    updates = R.updates + 1
    w = R.A_inv @ v
    denom = 1.0 + float(v @ w)
    if denom <= DENOM_FLOOR or updates % REFRESH_EVERY == 0:
        inv = _direct_inverse(A_new)
    else:
        inv = R.A_inv - np.outer(w, w) / denom
        inv = 0.5 * (inv + inv.T)
    scalar = R.scalar if not np.any(v) else None
    return RegularityMatrix(A_new, inv, scalar, updates)


def scalar_update(R: RegularityMatrix, c: float) -> RegularityMatrix:
    """Replace A by c*I (not an accumulation)."""
    if not c > 0:
        raise ValueError("scalar regularity must be positive")
    eye = np.eye(R.d)
    return RegularityMatrix(c * eye, eye / c, scalar=float(c), updates=R.updates + 1)


def add_psd(R: RegularityMatrix, M) -> RegularityMatrix:
    """A' = A + M for a general PSD M.

    Low-rank M is applied as a chain of rank-one updates taken from its
    eigendecomposition; anything else triggers a direct inverse.
    """
    M = np.asarray(M, dtype=float)
    if M.shape != (R.d, R.d):
        raise ValueError(f"update has shape {M.shape}, expected {(R.d, R.d)}")
    if not np.any(M):
        return R.copy()
    if np.max(np.abs(M - M.T)) > SYM_TOL * max(1.0, np.max(np.abs(M))):
        raise ValueError("update matrix is not symmetric")
    M = 0.5 * (M + M.T)
    evals, evecs = np.linalg.eigh(M)
    if evals[0] < -PSD_TOL * max(1.0, evals[-1]):
        raise ValueError(f"update matrix has eigenvalue {evals[0]:.3e}")
    keep = evals > PSD_TOL * max(1.0, evals[-1])
    out = R.copy()
    if keep.sum() <= max(1, R.d // 2):
        for lam, vec in zip(evals[keep], evecs[:, keep].T):
            out = rank_one_update(out, np.sqrt(lam) * vec)
        # land exactly on A + M rather than the eigen-reconstruction
        out.A = R.A + M
        return out
    A_new = R.A + M
    return RegularityMatrix(A_new, _direct_inverse(A_new), None, R.updates + 1)


@dataclass(frozen=True)
class Split:
    sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes or any(s <= 0 for s in sizes):
            raise ValueError("split sizes must be positive integers")
        object.__setattr__(self, "sizes", sizes)

    @property
    def d(self) -> int:
        return sum(self.sizes)

    def slices(self) -> list[slice]:
        out, start = [], 0
        for s in self.sizes:
            out.append(slice(start, start + s))
            start += s
        return out


def block_split_matrix(F_value, split: Split | Sequence[int]) -> np.ndarray:
    """Block-diagonal matrix whose i-th block is F_i F_i^T."""
    if not isinstance(split, Split):
        split = Split(tuple(split))
    F_value = np.asarray(F_value, dtype=float).ravel()
    if F_value.size != split.d:
        raise ValueError(f"vector has dimension {F_value.size}, split covers {split.d}")
    M = np.zeros((split.d, split.d))
    for s in split.slices():
        M[s, s] = np.outer(F_value[s], F_value[s])
    return M


def block_update(R: RegularityMatrix, F_value, split: Split | Sequence[int]) -> RegularityMatrix:
    """A' = A + M_s(F), done as one rank-one update per block."""
    if not isinstance(split, Split):
        split = Split(tuple(split))
    F_value = np.asarray(F_value, dtype=float).ravel()
    if F_value.size != split.d or split.d != R.d:
        raise ValueError("split does not match the matrix dimension")
    out = R
    for s in split.slices():
        v = np.zeros(R.d)
        v[s] = F_value[s]
        if np.any(v):
            out = rank_one_update(out, v)
    return out


def is_psd(M, tol: float = PSD_TOL) -> bool:
    M = np.asarray(M, dtype=float)
    if np.max(np.abs(M - M.T)) > SYM_TOL * max(1.0, np.max(np.abs(M))):
        return False
    return bool(np.linalg.eigvalsh(0.5 * (M + M.T))[0] >= -tol)
