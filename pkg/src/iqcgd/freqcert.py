"""Frequency-domain certificates for (inexact) gradient descent.

Popov-function evaluation, sampled FDI checks, the endpoint polynomials of
the noisy sector and off-by-one conditions, exact feasibility in the
S-procedure multiplier, rate bisection, rho-Schur tests and minimal-stability
witnesses.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import rates
from .iqc import (
    BlockIqc,
    LtiSystem,
    add_noise_channel,
    augment_off_by_one,
    gd_plant,
    noise_augment,
    off_by_one_matrix,
    sector_matrix,
)
from .linalg import eigvalsh, max_eigenvalue
from .rates import ProblemSpec

SCHEMA_VERSION = "v1"
ENDPOINT_RTOL = 1e-9
BISECTION_TOL = 1e-10
CONCAVITY_GRID = 65
EPSILON_GRID = tuple([0.0] + [2.0**-j for j in range(0, 41)])


class EigenvalueOnCircleError(ValueError):
    """The requested frequency is an eigenvalue of ``A``."""


class CertificateKind(str, enum.Enum):
    SECTOR_NOISELESS = "SectorNoiseless"
    SECTOR_NOISY = "SectorNoisy"
    OFF_BY_ONE_NOISY = "OffByOneNoisy"


@dataclass(frozen=True)
class MinimalStabilityWitness:
    """Linear feedback ``u = N_scalar * C x`` perturbed by ``epsilon``."""

    n_scalar: float
    epsilon: float


@dataclass(frozen=True)
class Certificate:
    rho: float
    lam: float
    kind: CertificateKind
    endpoint_values: tuple[float, float]
    witness: MinimalStabilityWitness
    gamma: float | None = None
    spec: ProblemSpec | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind is not CertificateKind.SECTOR_NOISELESS and self.spec is not None and self.spec.delta > 0:
            if not 0 <= self.lam < 2 / self.spec.delta**2:
                raise ValueError(f"lambda={self.lam} outside [0, 2/delta^2)")
        if self.kind is CertificateKind.OFF_BY_ONE_NOISY:
            if self.gamma is None or not 0 <= self.gamma <= self.rho**2 * (1 + 1e-12):
                raise ValueError(f"gamma={self.gamma} outside [0, rho^2]")

    @property
    def divergent(self) -> bool:
        return self.rho >= 1

    def to_dict(self) -> dict:
        return {
            "version": SCHEMA_VERSION,
            "rho": self.rho,
            "lambda": self.lam,
            "gamma": self.gamma,
            "kind": self.kind.value,
            "endpoints": [self.endpoint_values[0], self.endpoint_values[1]],
            "witness": {"N_scalar": self.witness.n_scalar, "epsilon": self.witness.epsilon},
        }


@dataclass(frozen=True)
class PopovSample:
    z: complex
    value: np.ndarray


@dataclass(frozen=True)
class FdiResult:
    holds: bool
    worst_z: complex
    worst_value: float

    def __bool__(self) -> bool:
        return self.holds


# -- Popov function and sampled FDI -------------------------------------------------


def transfer(sys: LtiSystem, z: complex) -> np.ndarray:
    """``(zI - A)^{-1} B`` with an explicit singularity check."""
    ns = sys.n_state
    zi_a = z * np.eye(ns) - sys.A
    scale = max(1.0, float(np.abs(sys.A).max()), abs(z)) ** ns
    if abs(np.linalg.det(zi_a)) <= 1e-12 * scale:
        raise EigenvalueOnCircleError(f"z={z} is an eigenvalue of A")
    return np.linalg.solve(zi_a, sys.B.astype(complex))


def popov_value(sys: LtiSystem, M: BlockIqc, z: complex) -> np.ndarray:
    """Hermitian ``[G(z); I]^* M [G(z); I]`` with ``G = (zI - A)^{-1} B``."""
    g = transfer(sys, z)
    stacked = np.vstack([g, np.eye(sys.n_input)])
    val = stacked.conj().T @ M.matrix @ stacked
    return 0.5 * (val + val.conj().T)


def popov_sample(sys: LtiSystem, M: BlockIqc, z: complex) -> PopovSample:
    return PopovSample(complex(z), popov_value(sys, M, z))


def fdi_sampled(sys: LtiSystem, M: BlockIqc, rho: float, n_samples: int = 256,
                tol: float = 1e-9) -> FdiResult:
    """Check ``Pi(conj z, z) <= tol`` at equispaced points of ``|z| = rho``.

    ``n_samples`` is rounded up to even so that both real points are visited.
    """
    if n_samples < 16:
        raise ValueError("n_samples must be at least 16")
    if rho <= 0:
        raise ValueError("rho must be positive")
    n_samples += n_samples % 2
    worst_z, worst = complex(rho), -math.inf
    for j in range(n_samples):
        z = rho * np.exp(2j * math.pi * j / n_samples)
        try:
            val = max_eigenvalue(popov_value(sys, M, z))
        except EigenvalueOnCircleError:
            continue
        if val > worst:
            worst_z, worst = complex(z), val
    return FdiResult(worst <= tol, worst_z, worst)


def noisy_fdi_value(sys: LtiSystem, M: BlockIqc, delta: float, lam: float, z: complex) -> np.ndarray:
    """Schur-complement form of the FDI for ``M(delta, lam)`` with noise through ``B``."""
    n = sys.n_input
    g = transfer(sys, z)
    T = lam * (1 - delta**2) * np.eye(n) - M.R
    t_inv = np.linalg.inv(T)
    ts = t_inv @ M.S
    kernel = np.block([[M.S.T @ ts + M.Q, ts.T], [ts, t_inv - np.eye(n) / lam]])
    stacked = np.vstack([g, lam * np.eye(n)])
    val = stacked.conj().T @ kernel @ stacked
    return 0.5 * (val + val.conj().T)


# -- sector (circle criterion) polynomials ------------------------------------------


def f_sector(t: float, lam: float, spec: ProblemSpec) -> float:
    """Endpoint polynomial of the noisy sector FDI (``t = +-rho``)."""
    m, L, a, d = spec.m, spec.L, spec.alpha, spec.delta
    return (
        -a * a * (L - m) ** 2
        + 2 * m * L * a * a * lam * (1 - d * d)
        + 2 * a * lam * (m + L) * (t - 1)
        + lam * (2 - d * d * lam) * (t - 1) ** 2
    )


def f_sector_circle(t: float, rho: float, lam: float, spec: ProblemSpec) -> float:
    """Noisy sector FDI on ``|z| = rho`` as a function of ``t = Re z``.

    Affine in ``t``; coincides with :func:`f_sector` at ``t = +-rho`` and
    equals ``-|z-1|^2 (2 + lam(1-delta^2))`` times the generic FDI value.
    """
    m, L, a, d = spec.m, spec.L, spec.alpha, spec.delta
    return (
        -a * a * (L - m) ** 2
        + 2 * m * L * a * a * lam * (1 - d * d)
        + 2 * a * lam * (m + L) * (t - 1)
        + lam * (2 - d * d * lam) * (rho * rho + 1 - 2 * t)
    )


def sector_noiseless_endpoint(t: float, spec: ProblemSpec) -> float:
    """``(t - 1 + L alpha)(t - 1 + m alpha)``, the noiseless endpoint value."""
    return (t - 1 + spec.L * spec.alpha) * (t - 1 + spec.m * spec.alpha)


def sector_endpoint_squares(lam: float, spec: ProblemSpec) -> tuple[float, float]:
    """Closed-form ``f_sector`` at ``1 - alpha m(1-delta)`` and ``1 - alpha L(1+delta)``."""
    m, L, a, d = spec.m, spec.L, spec.alpha, spec.delta
    return (
        -a * a * (L + m * (d * d * lam - d * lam - 1)) ** 2,
        -a * a * (m + L * (d * d * lam + d * lam - 1)) ** 2,
    )


def endpoint_scale(spec: ProblemSpec, lam: float) -> float:
    return spec.alpha**2 * spec.L**2 * (1 + abs(lam))


def _quadratic_coeffs_sector(t: float, spec: ProblemSpec) -> tuple[float, float, float]:
    """``f_sector(t, lam) = c0 + c1 lam + c2 lam^2``."""
    m, L, a, d = spec.m, spec.L, spec.alpha, spec.delta
    s = t - 1
    c0 = -a * a * (L - m) ** 2
    c1 = 2 * m * L * a * a * (1 - d * d) + 2 * a * (m + L) * s + 2 * s * s
    c2 = -d * d * s * s
    return c0, c1, c2


def _nonneg_set(c0: float, c1: float, c2: float, lo: float, hi: float) -> tuple[float, float] | None:
    """Interval of ``lam in [lo, hi]`` with ``c0 + c1 lam + c2 lam^2 >= 0``, for ``c2 <= 0``."""
    if c2 == 0:
        if c1 == 0:
            return (lo, hi) if c0 >= 0 else None
        root = -c0 / c1
        iv = (max(lo, root), hi) if c1 > 0 else (lo, min(hi, root))
    else:
        disc = c1 * c1 - 4 * c2 * c0
        if disc < 0:
            return None
        sq = math.sqrt(disc)
        # c2 < 0: nonnegative between the roots
        r1 = (-c1 + sq) / (2 * c2)
        r2 = (-c1 - sq) / (2 * c2)
        iv = (max(lo, min(r1, r2)), min(hi, max(r1, r2)))
    return iv if iv[0] <= iv[1] else None


def sector_lambda_interval(spec: ProblemSpec, rho: float, tol: float = ENDPOINT_RTOL) -> tuple[float, float] | None:
    """Exact set of multipliers in ``[0, 2/delta^2]`` making both endpoint values
    ``>= -tol * alpha^2 L^2 (1 + lam)``."""
    d = spec.delta
    hi = 2 / d**2
    tau = tol * spec.alpha**2 * spec.L**2
    iv: tuple[float, float] | None = (0.0, hi)
    for t in (rho, -rho):
        c0, c1, c2 = _quadratic_coeffs_sector(t, spec)
        part = _nonneg_set(c0 + tau, c1 + tau, c2, 0.0, hi)
        if part is None:
            return None
        iv = (max(iv[0], part[0]), min(iv[1], part[1]))
        if iv[0] > iv[1]:
            return None
    return iv


def _best_lambda(spec: ProblemSpec, rho: float, iv: tuple[float, float]) -> float:
    """Maximise the smaller endpoint value over the feasible interval."""
    lo, hi = iv
    cands = {lo, hi, 0.5 * (lo + hi)}
    cp = _quadratic_coeffs_sector(rho, spec)
    cm = _quadratic_coeffs_sector(-rho, spec)
    for c in (cp, cm):
        if c[2] != 0:
            cands.add(-c[1] / (2 * c[2]))
    dc = [cp[i] - cm[i] for i in range(3)]
    if dc[2] != 0:
        disc = dc[1] ** 2 - 4 * dc[2] * dc[0]
        if disc >= 0:
            sq = math.sqrt(disc)
            cands.update({(-dc[1] + sq) / (2 * dc[2]), (-dc[1] - sq) / (2 * dc[2])})
    elif dc[1] != 0:
        cands.add(-dc[0] / dc[1])
    best, best_val = lo, -math.inf
    for lam in cands:
        if not lo <= lam <= hi:
            continue
        val = min(f_sector(rho, lam, spec), f_sector(-rho, lam, spec))
        if val > best_val:
            best, best_val = lam, val
    return best


# -- rho-Schur and minimal stability -----------------------------------------------


def schur_test(A2, rho: float) -> bool:
    """Both eigenvalues of a real 2x2 matrix strictly inside ``|z| < rho``."""
    A2 = np.asarray(A2, dtype=float)
    if A2.shape != (2, 2):
        raise ValueError("schur_test expects a 2x2 matrix")
    a1 = -(A2[0, 0] + A2[1, 1]) / rho
    a0 = (A2[0, 0] * A2[1, 1] - A2[0, 1] * A2[1, 0]) / rho**2
    return abs(a0) < 1 and abs(a1) < 1 + a0


def is_rho_schur(A, rho: float) -> bool:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape == (1, 1):
        return abs(A[0, 0]) < rho
    if A.shape == (2, 2):
        return schur_test(A, rho)
    return bool(np.max(np.abs(np.linalg.eigvals(A))) < rho)


def minimal_stability_witness(sys: LtiSystem, M: BlockIqc, rho: float, delta: float = 0.0, *,
                              m: float, tol: float = 1e-9) -> MinimalStabilityWitness | None:
    """Feedback ``N = m C`` and the smallest grid ``epsilon`` giving a rho-Schur loop.

    ``sys`` carries only the gradient input; for noisy constraints the noise
    is set to zero along the witness, which keeps the constraint form
    nonnegative for every multiplier. ``delta`` is accepted for that case and
    does not change the search.
    """
    if not 0 <= delta < 1:
        raise ValueError("delta must lie in [0, 1)")
    r_scale = max(1.0, float(np.abs(M.R).max()))
    # the frequency condition is only equivalent to the constraint when R is nonsingular
    if abs(np.linalg.det(M.R / r_scale)) <= 1e-12:
        return None
    N = m * sys.C
    form = M.Q + M.S.T @ N + N.T @ M.S + N.T @ M.R @ N
    if eigvalsh(form)[0] < -tol * max(1.0, float(np.abs(M.matrix).max())):
        return None
    r_norm = float(np.linalg.norm(M.R, 2))
    eps_max = 2 / r_norm if r_norm > 0 else math.inf
    n_in = sys.n_input
    for eps in EPSILON_GRID:
        if eps > eps_max:
            continue
        closed = sys.A + sys.B @ (np.eye(n_in) + eps * M.R) @ N + eps * sys.B @ M.S
        if is_rho_schur(closed, rho):
            return MinimalStabilityWitness(m, eps)
    return None


# -- noiseless and noisy sector certification ---------------------------------------


def certify_sector_noiseless(spec: ProblemSpec, rho: float) -> Certificate | None:
    vals = (sector_noiseless_endpoint(rho, spec), sector_noiseless_endpoint(-rho, spec))
    tol = ENDPOINT_RTOL * endpoint_scale(spec, 0.0)
    if min(vals) < -tol:
        return None
    witness = minimal_stability_witness(gd_plant(spec.alpha), sector_matrix(np.eye(1), spec.m, spec.L), rho, m=spec.m)
    if witness is None:
        return None
    return Certificate(rho, 0.0, CertificateKind.SECTOR_NOISELESS, vals, witness, spec=spec)


def certify_sector_noisy(spec: ProblemSpec, rho: float) -> Certificate | None:
    """Decide the noisy circle criterion at rate ``rho`` exactly in the multiplier."""
    if spec.delta == 0:
        return certify_sector_noiseless(spec, rho)
    if rho <= 0:
        raise ValueError("rho must be positive")
    iv = sector_lambda_interval(spec, rho)
    if iv is None:
        return None
    lam = _best_lambda(spec, rho, iv)
    if lam <= 0 or lam >= 2 / spec.delta**2:
        return None
    M = noise_augment(sector_matrix(np.eye(1), spec.m, spec.L), spec.delta, lam)
    witness = minimal_stability_witness(gd_plant(spec.alpha), sector_matrix(np.eye(1), spec.m, spec.L),
                                        rho, spec.delta, m=spec.m)
    if witness is None or not M.r_is_nsd():
        return None
    vals = (f_sector(rho, lam, spec), f_sector(-rho, lam, spec))
    return Certificate(rho, lam, CertificateKind.SECTOR_NOISY, vals, witness, spec=spec)


def _bisect_rate(certify, lo: float, hi: float, tol: float = BISECTION_TOL) -> Certificate | None:
    cert = certify(lo)
    if cert is not None:
        return cert
    top = certify(hi)
    if top is None:
        return None
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        cert = certify(mid)
        if cert is None:
            lo = mid
        else:
            hi, top = mid, cert
    return top


def rho_star_sector(spec: ProblemSpec) -> Certificate | None:
    """Least certifiable rate over the sector class, by bisection from the quadratic lower bound."""
    lo = rates.rho_gd_noisy(spec)
    hi = max(2.0, lo + 1.0)
    return _bisect_rate(lambda r: certify_sector_noisy(spec, r), lo, hi)


# -- off-by-one (Jury-Lee) certification --------------------------------------------


def f_offbyone(t: float, rho: float, lam: float, gamma: float, spec: ProblemSpec) -> float:
    """Endpoint polynomial of the noisy off-by-one FDI (``t = +-rho``)."""
    m, L, a, d = spec.m, spec.L, spec.alpha, spec.delta
    return (
        -a * a * ((L - m) ** 2 - 2 * m * L * lam * (1 - d * d)) * rho**2
        - gamma**2 * (t - 1 + L * a) ** 2
        + 2 * lam * a * rho**2 * (L + m) * (t - 1)
        + lam * rho**2 * (2 - lam * d * d) * (t - 1) ** 2
        - 2 * a * gamma * ((L - m) - m * lam * (1 - d * d)) * (1 - a * L - t) * t
        + 2 * lam * gamma * ((1 - a * L) * t - rho**2) * (t - 1)
    )


def f_offbyone_circle(t: float, rho: float, lam: float, gamma: float, spec: ProblemSpec) -> float:
    """Noisy off-by-one FDI on ``|z| = rho`` as a function of ``t = Re z``.

    Quadratic in ``t`` with leading coefficient ``4 lam gamma (1 - alpha L)``;
    coincides with :func:`f_offbyone` at ``t = +-rho``.
    """
    m, L, a, d = spec.m, spec.L, spec.alpha, spec.delta
    r2 = rho * rho
    c = 1 - a * L
    abs_shift2 = r2 - 2 * c * t + c * c  # |z - 1 + L alpha|^2
    abs_zm1 = r2 + 1 - 2 * t  # |z - 1|^2
    re_cross = c * t - r2  # Re((1 - alpha L - z) conj z)
    re_z2 = 2 * t * t - r2
    re_last = c * re_z2 - (c + r2) * t + r2  # Re(((1 - alpha L) z - rho^2)(z - 1))
    return (
        -a * a * ((L - m) ** 2 - 2 * m * L * lam * (1 - d * d)) * r2
        - gamma**2 * abs_shift2
        + 2 * lam * a * r2 * (L + m) * (t - 1)
        + lam * r2 * (2 - lam * d * d) * abs_zm1
        - 2 * a * gamma * ((L - m) - m * lam * (1 - d * d)) * re_cross
        + 2 * lam * gamma * re_last
    )


def offbyone_endpoint_square(lam: float, gamma: float, spec: ProblemSpec) -> float:
    """Closed form of ``f_offbyone`` at ``t = rho = 1 - alpha m (1 - delta)``."""
    m, L, a, d = spec.m, spec.L, spec.alpha, spec.delta
    r = 1 - a * m * (1 - d)
    return -a * a * (r * (L - m * (1 + d * lam - d * d * lam)) - gamma * (L - m * (1 - d))) ** 2


def lambda_star_offbyone(spec: ProblemSpec) -> float:
    return (2 - spec.alpha * (spec.L + spec.m)) / spec.delta**2


def gamma_star(spec: ProblemSpec) -> float:
    k, d = spec.kappa, spec.delta
    r = 1 - spec.alpha * spec.m * (1 - d)
    return r * (k - 1 + (k + 1) * (d - r)) / ((k - (1 - d)) * d)


def circle_concave(spec: ProblemSpec, rho: float, lam: float, gamma: float,
                   n: int = CONCAVITY_GRID) -> bool:
    """Nonpositive second differences of the off-by-one circle form on ``[-rho, rho]``."""
    ts = np.linspace(-rho, rho, n)
    vals = np.array([f_offbyone_circle(t, rho, lam, gamma, spec) for t in ts])
    second = vals[2:] - 2 * vals[1:-1] + vals[:-2]
    scale = endpoint_scale(spec, lam) * (1 + gamma)
    return bool(np.all(second <= 1e-12 * scale))


@dataclass(frozen=True)
class OffByOneAttempt:
    """Diagnostics for the closed-form multipliers, inside or outside the proven window."""

    rho: float
    lam: float
    gamma: float
    endpoint_values: tuple[float, float]
    lambda_ok: bool
    gamma_ok: bool
    concave: bool
    in_window: bool
    scale: float = 1.0

    @property
    def endpoints_ok(self) -> bool:
        return min(self.endpoint_values) >= -ENDPOINT_RTOL * self.scale

    @property
    def certifies(self) -> bool:
        return self.lambda_ok and self.gamma_ok and self.concave and self.endpoints_ok


def offbyone_attempt(spec: ProblemSpec) -> OffByOneAttempt:
    rho = rates.rho_gd_noisy(spec)
    lam = lambda_star_offbyone(spec)
    gam = gamma_star(spec)
    return OffByOneAttempt(
        rho, lam, gam,
        (f_offbyone(rho, rho, lam, gam, spec), f_offbyone(-rho, rho, lam, gam, spec)),
        lambda_ok=0 < lam < 2 / spec.delta**2,
        gamma_ok=0 < gam < rho**2,
        concave=circle_concave(spec, rho, lam, gam),
        in_window=rates.in_strongly_convex_window(spec),
        scale=endpoint_scale(spec, lam),
    )


def offbyone_system(spec: ProblemSpec) -> LtiSystem:
    """Augmented GD plant ``(x, v)`` with gradient input only."""
    return augment_off_by_one(gd_plant(spec.alpha), spec.L)


def noisy_offbyone_system(spec: ProblemSpec) -> LtiSystem:
    """Augmented plant with inputs ``(u, e)``; the noise does not drive ``v``."""
    return add_noise_channel(offbyone_system(spec), plant_states=1)


def noisy_sector_system(spec: ProblemSpec) -> LtiSystem:
    return add_noise_channel(gd_plant(spec.alpha))


def certify_strongly_convex(spec: ProblemSpec, experimental: bool = False) -> Certificate | None:
    """Certificate over strongly convex functions.

    Inside ``1/L <= alpha <= 2/((1+delta)L + (1-delta)m)`` and above the
    small-step threshold this is the off-by-one certificate at the sharp
    rate; elsewhere it falls back to the sector certificate. With
    ``experimental`` the closed-form multipliers are also tried outside the
    window (no theorem backs such a certificate).
    """
    if spec.delta == 0:
        return rho_star_sector(spec)
    in_window = rates.in_strongly_convex_window(spec)
    above_small = spec.alpha > max(rates.alpha_minus(spec.m, spec.L, spec.delta), 0.0) + rates.BRANCH_TOL
    if not above_small or not (in_window or experimental):
        return rho_star_sector(spec)
    att = offbyone_attempt(spec)
    if not att.certifies:
        return rho_star_sector(spec) if not in_window else None
    M = off_by_one_matrix(np.eye(1), spec.m, spec.L, att.gamma)
    witness = minimal_stability_witness(offbyone_system(spec), M, att.rho, spec.delta, m=spec.m)
    if witness is None:
        return None
    return Certificate(att.rho, att.lam, CertificateKind.OFF_BY_ONE_NOISY, att.endpoint_values,
                       witness, gamma=att.gamma, spec=spec)


def certify(spec: ProblemSpec, function_class: rates.FunctionClass | str,
            experimental: bool = False) -> Certificate | None:
    """Smallest certified rate for the class (dispatch used by the CLI and sweeps)."""
    if rates.FunctionClass(function_class) is rates.FunctionClass.STRONGLY_CONVEX:
        return certify_strongly_convex(spec, experimental)
    return rho_star_sector(spec)


def certify_at(spec: ProblemSpec, function_class: rates.FunctionClass | str, rho: float,
               experimental: bool = False) -> Certificate | None:
    """Decision version: is ``rho`` certified for the class?

    An off-by-one certificate at the sharp rate covers every larger rate;
    sector certificates are recomputed at ``rho`` itself.
    """
    best = certify(spec, function_class, experimental)
    if best is None or rho < best.rho - rates.BRANCH_TOL:
        return None
    if best.kind is CertificateKind.OFF_BY_ONE_NOISY:
        return best
    return certify_sector_noisy(spec, max(rho, best.rho))
