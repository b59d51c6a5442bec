"""Dissipation-inequality certificates for the gradient-descent loops.

The storage matrix is produced constructively from the stabilising solution
of a discrete Riccati equation (the KYP correspondence), then checked
independently by eigenvalues. By rotational symmetry the storage acts per
coordinate, so only a 1x1 (sector) or 2x2 (off-by-one) block is searched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import freqcert, rates
from .iqc import BlockIqc, LtiSystem, gd_plant, noise_augment, off_by_one_matrix, sector_matrix
from .linalg import eigvalsh
from .rates import ProblemSpec

LMI_MARGIN = 1e-6


@dataclass(frozen=True)
class DissipationResult:
    holds: bool
    max_eigenvalue: float
    min_p_eigenvalue: float

    def __bool__(self) -> bool:
        return self.holds


@dataclass(frozen=True)
class DissipationCertificate:
    P: np.ndarray
    M: BlockIqc
    system: LtiSystem
    rho: float
    lam: float
    gamma: float | None
    max_eigenvalue: float


def lmi_matrix(sys: LtiSystem, M: BlockIqc, rho: float, P) -> np.ndarray:
    """``[[A'PA - rho^2 P, A'PB], [B'PA, B'PB]] + M``."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    A, B = sys.A, sys.B
    top = np.hstack([A.T @ P @ A - rho**2 * P, A.T @ P @ B])
    bot = np.hstack([B.T @ P @ A, B.T @ P @ B])
    out = np.vstack([top, bot]) + M.matrix
    return 0.5 * (out + out.T)


def dissipation_verify(sys: LtiSystem, M: BlockIqc, rho: float, P, tol: float = 1e-9) -> DissipationResult:
    """``P > 0`` and the dissipation LMI ``<= tol`` (relative to ``|M|``)."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if not np.allclose(P, P.T, atol=1e-12 * max(1.0, np.abs(P).max())):
        return DissipationResult(False, np.inf, -np.inf)
    p_min = float(eigvalsh(P)[0])
    top = float(eigvalsh(lmi_matrix(sys, M, rho, P))[-1])
    scale = max(1.0, float(np.abs(M.matrix).max()))
    return DissipationResult(p_min > 0 and top <= tol * scale, top, p_min)


def riccati_storage(sys: LtiSystem, M: BlockIqc, rho: float, margin: float = LMI_MARGIN) -> np.ndarray | None:
    """Minimal storage ``P`` for ``M + margin*|M| I`` via the stabilising Riccati solution.

    Requires the input block of ``M`` to be negative definite. Returns
    ``None`` when the Riccati equation has no stabilising solution (the
    frequency condition fails or is tight).
    """
    ns = sys.n_state
    eta = margin * max(1.0, float(np.abs(M.matrix).max()))
    Mm = M.matrix + eta * np.eye(M.matrix.shape[0])
    Q, S, R = Mm[:ns, :ns], Mm[ns:, :ns], Mm[ns:, ns:]
    if eigvalsh(R)[-1] >= 0:
        return None
    r2 = rho * rho
    try:
        X = scipy.linalg.solve_discrete_are(sys.A / rho, sys.B / rho, -Q / r2, -R / r2, s=-S.T / r2)
    except (np.linalg.LinAlgError, ValueError):
        return None
    if not np.all(np.isfinite(X)):
        return None
    P = -0.5 * (X + X.T)
    return P


def _sector_candidates(spec: ProblemSpec, rho: float) -> list[float]:
    if spec.delta == 0:
        return [0.0]
    iv = freqcert.sector_lambda_interval(spec, rho, tol=0.0)
    if iv is None:
        return []
    lo, hi = iv
    best = freqcert._best_lambda(spec, rho, iv)
    return [best] + [lo + (hi - lo) * f for f in (0.5, 0.25, 0.75, 0.1, 0.9)]


def _offbyone_candidates(spec: ProblemSpec, rho: float) -> list[tuple[float, float]]:
    lam0 = freqcert.lambda_star_offbyone(spec)
    gam0 = freqcert.gamma_star(spec)
    lam_hi = 2 / spec.delta**2
    out = [(lam0, gam0)]
    for fl in (1.0, 0.9, 1.1, 0.75, 1.25, 0.5, 1.5):
        for fg in (1.0, 0.8, 1.2, 0.6, 0.4, 0.2, 0.0):
            lam = lam0 * fl
            gam = min(max(gam0 * fg, 0.0), rho * rho)
            if 0 < lam < lam_hi:
                out.append((lam, gam))
    return out


def dissipation_search_scalar(spec: ProblemSpec, rho: float, kind: str = "sector",
                              margin: float = LMI_MARGIN) -> DissipationCertificate | None:
    """Search a per-coordinate storage certifying rate ``rho``.

    ``kind`` is ``"sector"`` (scalar storage over ``x``) or ``"offbyone"``
    (2x2 storage over ``(x, v)``). Multipliers are drawn from the exact
    feasible interval (sector) or a neighbourhood of the closed-form pair
    (off-by-one).
    """
    if kind == "sector":
        base = sector_matrix(np.eye(1), spec.m, spec.L)
        if spec.delta == 0:
            sys = gd_plant(spec.alpha)
            cands = [(0.0, None)] if rates.rho_gd_noisy(spec) <= rho else []
        else:
            sys = freqcert.noisy_sector_system(spec)
            cands = [(lam, None) for lam in _sector_candidates(spec, rho)]
    elif kind == "offbyone":
        if spec.delta == 0:
            raise ValueError("off-by-one dissipation search needs delta > 0")
        sys = freqcert.noisy_offbyone_system(spec)
        if rho < rates.rho_gd_noisy(spec) - rates.BRANCH_TOL:
            cands = []
        else:
            cands = _offbyone_candidates(spec, rho)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    for lam, gam in cands:
        if kind == "offbyone":
            M = noise_augment(off_by_one_matrix(np.eye(1), spec.m, spec.L, gam), spec.delta, lam)
        elif spec.delta > 0:
            M = noise_augment(base, spec.delta, lam)
        else:
            M = base
        P = riccati_storage(sys, M, rho, margin)
        if P is None:
            continue
        res = dissipation_verify(sys, M, rho, P, tol=0.0)
        if res.holds:
            return DissipationCertificate(P, M, sys, rho, lam, gam, res.max_eigenvalue)
    return None


def expand_storage(P, n: int) -> np.ndarray:
    """Per-coordinate storage block lifted to ``n`` dimensions."""
    return np.kron(np.atleast_2d(P), np.eye(n))
