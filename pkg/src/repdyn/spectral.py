"""Eigen/singular decompositions, top-k subspaces and subspace comparison."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGap, DimensionMismatch, NotDiagonalizable, NumericalFailure, ShapeMismatch

IMAG_TOL = 1e-10
EIG_RESIDUAL_TOL = 1e-8
MAX_EIGVEC_COND = 1e8
GAP_TOL = 1e-8


def _sign_fix(vectors: np.ndarray) -> np.ndarray:
    """Scale each column so that its largest-magnitude entry is real and positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    pivots = vectors[idx, np.arange(vectors.shape[1])]
    phase = pivots / np.where(np.abs(pivots) > 0, np.abs(pivots), 1.0)
    phase = np.where(np.abs(pivots) > 0, phase, 1.0)
    return vectors / phase


@dataclass(frozen=True, eq=False)
class SpectralSummary:
    """Full eigendecomposition and SVD of a square matrix.

    ``eigenvalues`` are sorted by descending real part, ties broken by
    descending magnitude. ``eigenvectors`` is real when the matrix is real
    diagonalizable and complex otherwise. ``left_singular[:, i]`` and
    ``right_singular[:, i]`` pair with ``singular_values[i]``.
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    singular_values: np.ndarray
    left_singular: np.ndarray
    right_singular: np.ndarray
    is_real_diagonalizable: bool

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def real_eigenvalues(self) -> np.ndarray:
        if not self.is_real_diagonalizable:
            raise NotDiagonalizable("matrix is not real diagonalizable")
        return self.eigenvalues.real


def decompose(P) -> SpectralSummary:
    """Eigendecomposition plus SVD of ``P`` with a deterministic sign convention.

    Symmetric inputs go through ``eigh`` so that repeated eigenvalues still
    yield an orthonormal eigenbasis. Singular vectors are sign-fixed on the
    left factor and the right factor is flipped along with it, so that
    ``U diag(s) V^T`` still reproduces ``P``.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ShapeMismatch(f"expected a square matrix, got {P.shape}")
    if not np.all(np.isfinite(P)):
        raise NumericalFailure("matrix has non-finite entries")
    n = P.shape[0]
    scale = max(np.linalg.norm(P), 1.0)

    if np.max(np.abs(P - P.T), initial=0.0) <= 1e-14 * scale:
        w, W = np.linalg.eigh((P + P.T) / 2)
        w = w.astype(complex)
        real_diag = True
    else:
        w, W = np.linalg.eig(P)
        real_diag = bool(np.max(np.abs(w.imag), initial=0.0) < IMAG_TOL)
        if real_diag:
            w = w.real.astype(complex)
            W = W.real
            norms = np.linalg.norm(W, axis=0)
            W = W / np.where(norms > 0, norms, 1.0)
            if np.linalg.cond(W) > MAX_EIGVEC_COND:
                real_diag = False
            else:
                recon = W @ np.diag(w.real) @ np.linalg.inv(W)
                real_diag = bool(np.linalg.norm(P - recon) < EIG_RESIDUAL_TOL * scale)
            if not real_diag:
                W = W.astype(complex)

    order = np.lexsort((-np.abs(w), -w.real))
    w = w[order]
    W = _sign_fix(W[:, order])
    if real_diag:
        W = np.real(W)
        w = w.real + 0j
        resid = np.linalg.norm(P @ W - W * w.real[None, :], axis=0)
        if np.any(resid > EIG_RESIDUAL_TOL * scale):
            raise NumericalFailure(f"eigenpair residual {resid.max():.3g}")

    U, s, Vt = np.linalg.svd(P)
    V = Vt.T
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(n)])
    signs[signs == 0] = 1.0
    U = U * signs
    V = V * signs
    if np.linalg.norm(P - (U * s) @ V.T) > 1e-8 * max(np.linalg.norm(P), 1e-300):
        raise NumericalFailure("SVD reconstruction residual too large")

    return SpectralSummary(
        matrix=P.copy(),
        eigenvalues=w,
        eigenvectors=W,
        singular_values=s,
        left_singular=U,
        right_singular=V,
        is_real_diagonalizable=real_diag,
    )


@dataclass(frozen=True, eq=False)
class Subspace:
    """Subspace represented by an orthonormal basis (columns)."""

    basis: np.ndarray

    def __post_init__(self):
        B = np.array(self.basis, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        k = B.shape[1]
        if np.max(np.abs(B.T @ B - np.eye(k)), initial=0.0) > 1e-10:
            raise ValueError("basis columns are not orthonormal")
        B.setflags(write=False)
        object.__setattr__(self, "basis", B)

    @classmethod
    def from_columns(cls, A) -> "Subspace":
        """Orthonormalize the columns of ``A`` (which must have full column rank)."""
        A = np.asarray(A, dtype=float)
        if A.ndim == 1:
            A = A[:, None]
        Q, R = np.linalg.qr(A)
        d = np.abs(np.diag(R))
        if d.size and d.min() <= 1e-12 * max(d.max(), 1e-300):
            raise NumericalFailure("columns are linearly dependent")
        return cls(Q)

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    @property
    def k(self) -> int:
        return self.basis.shape[1]

    @property
    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T


def top_k_subspace(summary: SpectralSummary, k: int, kind: str = "eigen") -> Subspace:
    """Span of the top ``k`` eigenvectors or left/right singular vectors."""
    n = summary.n
    if not 1 <= k <= n:
        raise DimensionMismatch(f"k={k} must lie in [1, {n}]")
    if kind == "eigen":
        if not summary.is_real_diagonalizable:
            raise NotDiagonalizable("eigen subspaces need a real-diagonalizable matrix")
        values = summary.eigenvalues.real
        vectors = summary.eigenvectors
    elif kind == "left_singular":
        values, vectors = summary.singular_values, summary.left_singular
    elif kind == "right_singular":
        values, vectors = summary.singular_values, summary.right_singular
    else:
        raise ValueError(f"unknown kind {kind!r}")
    if k < n and abs(values[k - 1] - values[k]) < GAP_TOL:
        raise DegenerateGap(f"gap {abs(values[k - 1] - values[k]):.3g} at position {k}")
    return Subspace.from_columns(vectors[:, :k])


def subspace_distance(A: Subspace, B: Subspace) -> float:
    """Frobenius distance between orthogonal projectors, in ``[0, sqrt(2k)]``."""
    if A.n != B.n or A.k != B.k:
        raise DimensionMismatch(f"subspaces of shape ({A.n},{A.k}) and ({B.n},{B.k})")
    return float(np.linalg.norm(A.projector - B.projector))


def is_invariant_subspace(P, S: Subspace, tol: float = 1e-8) -> tuple[bool, float]:
    """Return ``(residual < tol, residual)`` with residual ``|(I - SS^T) P S| / |P S|``."""
    P = np.asarray(P, dtype=float)
    if P.shape != (S.n, S.n):
        raise DimensionMismatch(f"matrix {P.shape} vs subspace in R^{S.n}")
    PS = P @ S.basis
    denom = np.linalg.norm(PS)
    if denom == 0:
        return True, 0.0
    resid = float(np.linalg.norm(PS - S.basis @ (S.basis.T @ PS)) / denom)
    return resid < tol, resid


def project_vector(S: Subspace, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (S.n,):
        raise DimensionMismatch(f"vector of shape {v.shape} vs subspace in R^{S.n}")
    return S.basis @ (S.basis.T @ v)


def orthogonal_complement(S: Subspace) -> Subspace:
    Q, _ = np.linalg.qr(np.hstack([S.basis, np.eye(S.n)]))
    return Subspace(Q[:, S.k:S.n])


def summary_to_dict(summary: SpectralSummary) -> dict:
    """JSON-ready dump: complex numbers as ``[re, im]`` pairs, matrices row-major."""
    def pairs(z):
        return [[float(c.real), float(c.imag)] for c in np.ravel(z)]

    W = summary.eigenvectors
    return {
        "n": summary.n,
        "is_real_diagonalizable": summary.is_real_diagonalizable,
        "eigenvalues": pairs(summary.eigenvalues),
        "eigenvectors": pairs(W) if np.iscomplexobj(W) else [float(x) for x in W.ravel()],
        "singular_values": [float(x) for x in summary.singular_values],
        "left_singular": [float(x) for x in summary.left_singular.ravel()],
        "right_singular": [float(x) for x in summary.right_singular.ravel()],
    }
