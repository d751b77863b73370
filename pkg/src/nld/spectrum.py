"""Weight-spectrum analysis: symmetrization, eigensolver, classification.

The damping behavior of a block is read off the eigenvalues of the
symmetric part of its weight matrix: the quadratic form z.T W z only sees
(W + W.T)/2, so the symmetrized spectrum carries the decay/growth story.

The eigensolver is a self-contained cyclic Jacobi iteration.  It is the
oracle every spectral claim in this package rests on, so it is written
from first principles and validated by reconstruction rather than by
comparison with another library.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, NonFiniteError

# Eigenvalues within this of zero count as zero in classification.
ZERO_TOL = 1e-12

# A positive eigenvalue above this counts as "large" for the unstable rule.
UNSTABLE_THRESHOLD = 1e-3

DEFAULT_TOP_K = 32


def symmetrize(W: np.ndarray) -> np.ndarray:
    """(W + W.T)/2, the part of W the quadratic form actually sees."""
    A = np.asarray(W, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"symmetrize needs a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NonFiniteError("symmetrize needs finite entries")
    return 0.5 * (A + A.T)


def composite_weight(W_Z: np.ndarray, W_g: np.ndarray) -> np.ndarray:
    """Product W_Z @ W_g of a factored weight; rank bounded by the inner dim."""
    A = np.asarray(W_Z, dtype=np.float64)
    B = np.asarray(W_g, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[0] or A.shape[0] != B.shape[1]:
        raise ValueError(f"factor shapes {A.shape} and {B.shape} do not compose to square")
    return A @ B


def eig_symmetric(A: np.ndarray, tol: float = 1e-12):
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi.

    Sweeps of plane rotations annihilate off-diagonal entries until the
    largest one falls below tol * ||A||_F.  Each rotation in the (p, q)
    plane solves a 2x2 subproblem exactly; the accumulated rotations give
    orthonormal eigenvectors.

    Returns (eigenvalues, eigenvectors): eigenvalues sorted descending
    (stable sort, so exact ties keep their pre-sort order), eigenvectors
    as columns matching that order.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"eig_symmetric needs a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NonFiniteError("eig_symmetric needs finite entries")
    if A.size and np.max(np.abs(A - A.T)) > 1e-12:
        raise ValueError("matrix is not symmetric within 1e-12; symmetrize first")

    n = A.shape[0]
    a = 0.5 * (A + A.T)  # exact symmetry so the update algebra is clean
    V = np.eye(n)
    fnorm = float(np.linalg.norm(a))
    if n == 1 or fnorm == 0.0:
        vals = np.diag(a).copy()
        order = np.argsort(-vals, kind="stable")
        return vals[order], V[:, order]
    thresh = tol * fnorm

    converged = False
    for _sweep in range(100):
        off = np.abs(a - np.diag(np.diag(a)))
        if float(off.max()) <= thresh:
            converged = True
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= thresh:
                    continue
                app = a[p, p]
                aqq = a[q, q]
                diff = aqq - app
                # Smaller-magnitude root of t^2 + 2*tau*t - 1 = 0 keeps the
                # rotation angle <= pi/4, which is what makes Jacobi stable.
                if abs(apq) < 1e-300 * abs(diff):
                    t = apq / diff
                else:
                    tau = diff / (2.0 * apq)
                    t = np.sign(tau) / (abs(tau) + np.hypot(1.0, tau)) if tau != 0.0 else 1.0
                c = 1.0 / np.hypot(1.0, t)
                s = t * c

                # Two-sided rotation: columns first, then rows.
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0

                vcol_p = V[:, p].copy()
                vcol_q = V[:, q].copy()
                V[:, p] = c * vcol_p - s * vcol_q
                V[:, q] = s * vcol_p + c * vcol_q
    if not converged:
        off = np.abs(a - np.diag(np.diag(a)))
        resid = float(off.max())
        if resid > thresh:
            raise ConvergenceError("jacobi sweeps exhausted", resid, 100)

    vals = np.diag(a).copy()
    order = np.argsort(-vals, kind="stable")
    return vals[order], V[:, order]


@dataclass(frozen=True)
class SpectrumReport:
    """Top-k symmetrized eigenvalues with sign counts and a damping verdict.

    classification is one of:
      damping_dominant  largest-magnitude kept eigenvalue is negative and
                        negatives outnumber positives
      unstable          kept eigenvalues above the large-positive threshold
                        outnumber all negatives
      mixed             everything else
    """

    eigenvalues: tuple
    num_positive: int
    num_negative: int
    max_abs: float
    top_k: int
    classification: str

    def to_json_dict(self) -> dict:
        return {
            "eigenvalues": list(self.eigenvalues),
            "classification": self.classification,
            "counts": {
                "positive": self.num_positive,
                "negative": self.num_negative,
                "zero": len(self.eigenvalues) - self.num_positive - self.num_negative,
            },
            "max_abs": self.max_abs,
            "top_k": self.top_k,
        }

    def to_csv(self) -> str:
        lines = ["index,value"]
        for idx, v in enumerate(self.eigenvalues):
            lines.append(f"{idx},{v!r}")
        return "\n".join(lines) + "\n"


def classify_spectrum(
    eigenvalues,
    zero_tol: float = ZERO_TOL,
    unstable_threshold: float = UNSTABLE_THRESHOLD,
) -> str:
    """Apply the damping classification rule to a kept eigenvalue list."""
    vals = np.asarray(eigenvalues, dtype=np.float64)
    num_pos = int(np.sum(vals > zero_tol))
    num_neg = int(np.sum(vals < -zero_tol))
    largest = vals[int(np.argmax(np.abs(vals)))] if vals.size else 0.0
    if largest < -zero_tol and num_neg > num_pos:
        return "damping_dominant"
    if int(np.sum(vals > unstable_threshold)) > num_neg:
        return "unstable"
    return "mixed"


def spectrum_report(
    W: np.ndarray,
    top_k: int = DEFAULT_TOP_K,
    zero_tol: float = ZERO_TOL,
    unstable_threshold: float = UNSTABLE_THRESHOLD,
) -> SpectrumReport:
    """Symmetrize, decompose, keep the top_k eigenvalues by value, classify."""
    if top_k < 1:
        raise ValueError("top_k must be at least 1")
    S = symmetrize(W)
    vals, _vecs = eig_symmetric(S)
    k = min(int(top_k), len(vals))
    kept = vals[:k]
    num_pos = int(np.sum(kept > zero_tol))
    num_neg = int(np.sum(kept < -zero_tol))
    max_abs = float(np.max(np.abs(kept))) if kept.size else 0.0
    return SpectrumReport(
        eigenvalues=tuple(float(v) for v in kept),
        num_positive=num_pos,
        num_negative=num_neg,
        max_abs=max_abs,
        top_k=k,
        classification=classify_spectrum(kept, zero_tol, unstable_threshold),
    )
