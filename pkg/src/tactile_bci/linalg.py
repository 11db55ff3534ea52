"""Dense symmetric eigenroutines written against numpy primitives only.

Provides the Cholesky / triangular-solve / cyclic-Jacobi stack used to
solve the generalized symmetric-definite eigenproblem without calling any
library eigensolver.
"""

from __future__ import annotations

import numpy as np


def cholesky_lower(a: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L L^T = a; raises if a is not positive definite."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    L = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - L[j, :j] @ L[j, :j]
        if d <= 0.0 or not np.isfinite(d):
            raise ValueError("matrix is not positive definite")
        L[j, j] = np.sqrt(d)
        L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def solve_lower(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Forward substitution for L x = b; b may be a vector or matrix."""
    b = np.asarray(b, dtype=float)
    vec = b.ndim == 1
    x = np.array(b if not vec else b[:, None], dtype=float)
    n = L.shape[0]
    for i in range(n):
        x[i] = (x[i] - L[i, :i] @ x[:i]) / L[i, i]
    return x[:, 0] if vec else x


def solve_upper(U: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Backward substitution for U x = b; b may be a vector or matrix."""
    b = np.asarray(b, dtype=float)
    vec = b.ndim == 1
    x = np.array(b if not vec else b[:, None], dtype=float)
    n = U.shape[0]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - U[i, i + 1:] @ x[i + 1:]) / U[i, i]
    return x[:, 0] if vec else x


def jacobi_eigh(a: np.ndarray, tol: float = 1e-13, max_sweeps: int = 100):
    """Cyclic Jacobi eigensolver for a symmetric matrix.

    Returns (eigenvalues descending, eigenvectors as columns). Each sweep
    annihilates every off-diagonal entry once; convergence is quadratic.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if not np.allclose(a, a.T, atol=1e-10 * max(1.0, np.abs(a).max())):
        raise ValueError("matrix must be symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    norm = np.linalg.norm(a)
    if norm == 0.0:
        return np.zeros(n), v

    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2) * 2.0)
        if off <= tol * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 if theta == 0.0 else np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
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
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq

    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def generalized_eigh(a: np.ndarray, b: np.ndarray):
    """Solve a v = lambda b v for symmetric a and positive-definite b.

    Whitens with the Cholesky factor of b, diagonalizes with Jacobi, and
    back-transforms so the returned columns satisfy V^T b V = I.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("matrices must share shape")
    L = cholesky_lower(b)
    y = solve_lower(L, a)          # L^-1 a
    w_mat = solve_lower(L, y.T)    # L^-1 a^T L^-T, a symmetric
    w_mat = 0.5 * (w_mat + w_mat.T)
    eigvals, u = jacobi_eigh(w_mat)
    vecs = solve_upper(L.T, u)
    return eigvals, vecs
