"""Topology-aware positional encoding from the fused connectivity.

Normalized Laplacian of the fused adjacency, cyclic-Jacobi eigendecomposition,
selection of eigenvectors for the smallest nonzero eigenvalues, and
concatenation onto the node embeddings. The encoding is a constant of the
current adjacency: no gradient flows through the eigendecomposition
(eigenvector derivatives are ill-conditioned at repeated eigenvalues).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .autodiff import Tensor, concat, constant
from .errors import ContractError, NumericalError, ShapeError

DEGREE_FLOOR = 1e-12
SIGN_FLOOR = 1e-8


def degree_matrix(abar: np.ndarray) -> np.ndarray:
    """Diagonal of D = diag(A 1): per-node sum of incident weights."""
    return np.asarray(abar, dtype=np.float64).sum(axis=1)


def normalized_laplacian(abar: np.ndarray) -> np.ndarray:
    """L = I - D^{-1/2} A D^{-1/2}; isolated nodes (degree < 1e-12) get a
    zero scaling entry, leaving L_ii = 1 for them."""
    a = np.asarray(abar, dtype=np.float64)
    deg = degree_matrix(a)
    inv_sqrt = np.where(deg < DEGREE_FLOOR, 0.0, 1.0 / np.sqrt(np.where(deg < DEGREE_FLOOR, 1.0, deg)))
    lap = np.eye(a.shape[0]) - inv_sqrt[:, None] * a * inv_sqrt[None, :]
    return 0.5 * (lap + lap.T)


def eig_symmetric(matrix: np.ndarray, tol: float = 1e-12,
                  max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues ascending and the matching orthonormal eigenvector
    columns. Convergence: off-diagonal Frobenius norm < tol within max_sweeps
    sweeps, else NumericalError.
    """
    a = np.array(matrix, dtype=np.float64, order="C")
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError(f"expected square matrix, got {a.shape}")
    if a.shape[0] == 0:
        raise ContractError("empty matrix")
    if np.abs(a - a.T).max() > 1e-10:
        raise ContractError("matrix is not symmetric within 1e-10")
    n = a.shape[0]
    vectors = np.eye(n, order="C")
    if n == 1:
        return a.reshape(1).copy(), vectors
    sweeps, off = kernels.jacobi_cycle(a, vectors, tol, max_sweeps)
    if off >= tol:
        raise NumericalError(
            f"Jacobi failed to converge: off-norm {off:.3e} after {sweeps} sweeps")
    values = np.diag(np.asarray(a)).copy()
    order = np.argsort(values, kind="stable")
    return values[order], np.asarray(vectors)[:, order]


@dataclass
class LaplacianPE:
    """Eigenvector coordinates for the smallest nonzero Laplacian eigenvalues.

    vectors holds N x d_pe coordinates (zero-padded when fewer than d_pe
    nonzero eigenvalues exist); eigenvalues holds only the actually selected
    values, ascending.
    """

    vectors: np.ndarray
    eigenvalues: np.ndarray


def _fix_signs(columns: np.ndarray) -> np.ndarray:
    """Deterministic sign: first component with |value| > 1e-8 made positive."""
    fixed = columns.copy()
    for j in range(fixed.shape[1]):
        col = fixed[:, j]
        significant = np.nonzero(np.abs(col) > SIGN_FLOOR)[0]
        if significant.size and col[significant[0]] < 0:
            fixed[:, j] = -col
    return fixed


def laplacian_pe(lap: np.ndarray, d_pe: int,
                 zero_threshold: float = 1e-8) -> LaplacianPE:
    """Skip every eigenvalue <= zero_threshold (all null vectors, one per
    connected component), take the next d_pe eigenvectors ascending, fix
    signs, and zero-pad missing columns."""
    if d_pe < 1:
        raise ContractError("d_pe must be >= 1")
    values, vectors = eig_symmetric(lap)
    keep = np.nonzero(values > zero_threshold)[0][:d_pe]
    n = lap.shape[0]
    coords = np.zeros((n, d_pe))
    if keep.size:
        coords[:, :keep.size] = _fix_signs(vectors[:, keep])
    return LaplacianPE(vectors=coords, eigenvalues=values[keep].copy())


def concat_pe(hbar: Tensor, pe: np.ndarray) -> Tensor:
    """Row-wise [H || P]. P is a constant of the current fused adjacency, so
    gradients flow into H only."""
    pe = np.asarray(pe, dtype=np.float64)
    if hbar.shape[-2] != pe.shape[-2]:
        raise ShapeError(
            f"row mismatch: embeddings {hbar.shape} vs encoding {pe.shape}")
    if pe.ndim < hbar.ndim:
        pe = np.broadcast_to(pe, hbar.shape[:-1] + (pe.shape[-1],))
    return concat([hbar, constant(pe)], axis=-1)
