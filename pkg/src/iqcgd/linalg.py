"""Eigenvalues of small Hermitian matrices.

Sizes 1-3 use closed-form root formulas; larger matrices go through cyclic
Jacobi on the real symmetric embedding ``[[Re, -Im], [Im, Re]]``, which
carries every eigenvalue twice.
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels

JACOBI_TOL = 1e-12


def _eig2(h: np.ndarray) -> np.ndarray:
    a = h[0, 0].real
    d = h[1, 1].real
    b = abs(h[0, 1])
    mid = 0.5 * (a + d)
    rad = math.hypot(0.5 * (a - d), b)
    return np.array([mid - rad, mid + rad])


def _eig3(h: np.ndarray) -> np.ndarray:
    """Trigonometric cubic roots, then deflation on the most isolated root.

    The cubic alone loses ``sqrt(eps)`` accuracy at a double root; the
    Rayleigh quotient of the isolated root's eigenvector plus the 2x2 block on
    its orthogonal complement keeps full precision.
    """
    p1 = abs(h[0, 1]) ** 2 + abs(h[0, 2]) ** 2 + abs(h[1, 2]) ** 2
    diag = np.real(np.diag(h))
    q = diag.sum() / 3
    if p1 == 0.0:
        return np.sort(diag)
    p2 = float(((diag - q) ** 2).sum() + 2 * p1)
    p = math.sqrt(p2 / 6)
    b = (h - q * np.eye(3)) / p
    r = _det3_real(b) / 2
    r = min(1.0, max(-1.0, r))
    phi = math.acos(r) / 3
    hi = q + 2 * p * math.cos(phi)
    lo = q + 2 * p * math.cos(phi + 2 * math.pi / 3)
    mid = 3 * q - hi - lo
    iso = hi if hi - mid >= mid - lo else lo
    shifted = h - iso * np.eye(3)
    rows = [shifted[i] for i in range(3)]
    cands = [np.cross(rows[i], rows[j]) for i, j in ((0, 1), (0, 2), (1, 2))]
    v = max(cands, key=lambda c: float(np.vdot(c, c).real))
    nv = math.sqrt(float(np.vdot(v, v).real))
    if nv <= 1e-300:
        return np.sort(np.array([lo, mid, hi]))
    basis, _ = np.linalg.qr(np.column_stack([v / nv, np.eye(3)]))
    rest = basis[:, 1:3]
    iso = float(np.vdot(basis[:, 0], h @ basis[:, 0]).real)
    pair = _eig2(rest.conj().T @ h @ rest)
    return np.sort(np.array([iso, pair[0], pair[1]]))


def _det3_real(b: np.ndarray) -> float:
    det = (
        b[0, 0] * (b[1, 1] * b[2, 2] - b[1, 2] * b[2, 1])
        - b[0, 1] * (b[1, 0] * b[2, 2] - b[1, 2] * b[2, 0])
        + b[0, 2] * (b[1, 0] * b[2, 1] - b[1, 1] * b[2, 0])
    )
    return float(np.real(det))


def eigvalsh(h) -> np.ndarray:
    """Ascending eigenvalues of a Hermitian (or real symmetric) matrix."""
    h = np.atleast_2d(np.asarray(h))
    n = h.shape[0]
    if h.shape != (n, n):
        raise ValueError(f"expected a square matrix, got shape {h.shape}")
    h = 0.5 * (h + h.conj().T)
    if n == 1:
        return np.array([float(np.real(h[0, 0]))])
    if n == 2:
        return _eig2(h)
    if n == 3:
        return _eig3(h)
    if np.iscomplexobj(h) and np.any(h.imag != 0):
        re, im = h.real, h.imag
        embedded = np.block([[re, -im], [im, re]])
        return _kernels.jacobi_eigvalsh(embedded, JACOBI_TOL)[::2]
    return _kernels.jacobi_eigvalsh(np.real(h), JACOBI_TOL)


def max_eigenvalue(h) -> float:
    return float(eigvalsh(h)[-1])


def is_psd(h, tol: float = 0.0) -> bool:
    return float(eigvalsh(h)[0]) >= -tol


def is_nsd(h, tol: float = 0.0) -> bool:
    return max_eigenvalue(h) <= tol


def row_norms(a) -> np.ndarray:
    """Euclidean norm of each row, scaled first so tiny or huge entries do not under/overflow when squared."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    s = np.max(np.abs(a), axis=1)
    safe = np.where((s > 0) & np.isfinite(s), s, 1.0)
    out = safe * np.sqrt(np.sum((a / safe[:, None]) ** 2, axis=1))
    return np.where(np.isinf(s), np.inf, np.where(s == 0, 0.0, out))


def vector_norm(v) -> float:
    return float(row_norms(np.reshape(np.asarray(v, dtype=float), (1, -1)))[0])
