"""Inexact gradient descent against a zoo of test functions and noise adversaries.

One-dimensional functions run through the compiled kernel when available;
everything else uses the vectorised Python loop below. All runs are pure
functions of (function, policy, seed).
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _kernels, rates
from .iqc import BlockIqc, Trajectory, noise_augment, off_by_one_matrix, sector_matrix
from .linalg import row_norms, vector_norm
from .rates import ProblemSpec

DEFAULT_SEED = 0
BURN_IN = 20
NOISE_SLACK = 1e-15


# -- test functions -----------------------------------------------------------------


class FunctionKind(str, enum.Enum):
    QUADRATIC_GAIN = "QuadraticGain"
    DIAGONAL_QUADRATIC = "DiagonalQuadratic"
    SLOPE_ZIGZAG = "SlopeZigzag"
    GAIN_OSCILLATOR = "GainOscillator"


class TestFunction:
    """Gradient oracle with minimiser ``x_star``; only gradients are ever needed."""

    __test__ = False  # not a pytest class
    kind: FunctionKind

    def __init__(self, m: float, L: float, x_star=None, dim: int = 1):
        if not 0 < m < L:
            raise ValueError("need 0 < m < L")
        self.m = float(m)
        self.L = float(L)
        self.dim = int(dim)
        self.x_star = np.zeros(self.dim) if x_star is None else np.asarray(x_star, dtype=float).reshape(self.dim)

    def grad(self, x) -> np.ndarray:
        y = np.asarray(x, dtype=float).reshape(self.dim) - self.x_star
        return self._grad_shifted(y)

    def _grad_shifted(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def kernel_args(self):
        """``(kind, params, breaks, slopes, values)`` for the scalar kernel, or ``None``."""
        return None

    @property
    def strongly_convex(self) -> bool:
        return True

    def label(self) -> str:
        return self.kind.value

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.label()})"


class QuadraticGain(TestFunction):
    """``(k/2)|x - x*|^2`` with ``k`` in ``[m, L]``."""

    kind = FunctionKind.QUADRATIC_GAIN

    def __init__(self, k: float, m: float, L: float, x_star=None, dim: int = 1):
        super().__init__(m, L, x_star, dim)
        if not m <= k <= L:
            raise ValueError(f"gain {k} outside [{m}, {L}]")
        self.k = float(k)

    def _grad_shifted(self, y):
        return self.k * y

    def kernel_args(self):
        if self.dim != 1:
            return None
        empty = np.zeros(1)
        return _kernels.GRAD_QUADRATIC, np.array([self.k]), empty, empty, empty

    def label(self) -> str:
        return f"QuadraticGain(k={self.k:g})"


class DiagonalQuadratic(TestFunction):
    kind = FunctionKind.DIAGONAL_QUADRATIC

    def __init__(self, spectrum: Sequence[float], m: float, L: float, x_star=None):
        spectrum = np.asarray(spectrum, dtype=float)
        super().__init__(m, L, x_star, len(spectrum))
        if np.any(spectrum < m) or np.any(spectrum > L):
            raise ValueError("spectrum must lie in [m, L]")
        self.spectrum = spectrum

    def _grad_shifted(self, y):
        return self.spectrum * y

    def label(self) -> str:
        return f"DiagonalQuadratic({','.join(f'{s:g}' for s in self.spectrum)})"


def geometric_breakpoints(ratio: float = 1.5, lo: int = -1700, hi: int = 1700) -> np.ndarray:
    pos = ratio ** np.arange(lo, hi, dtype=float)
    return np.concatenate([-pos[::-1], pos])


class SlopeZigzag(TestFunction):
    """1-D gradient, continuous and piecewise linear with slopes alternating in ``{m, L}``.

    The derivative stays in ``[m, L]``, so the function is in the strongly
    convex class; default breakpoints are geometric so the zigzag persists
    at every scale around the minimiser.
    """

    kind = FunctionKind.SLOPE_ZIGZAG

    def __init__(self, m: float, L: float, breakpoints=None, x_star=None, first_slope: str = "L"):
        super().__init__(m, L, x_star, 1)
        b = geometric_breakpoints() if breakpoints is None else np.asarray(breakpoints, dtype=float)
        # the origin is always a breakpoint, so g(0) = 0 exactly
        b = np.unique(np.append(b, 0.0))
        a, c = (L, m) if first_slope == "L" else (m, L)
        j0 = int(np.flatnonzero(b == 0.0)[0])
        slopes = np.empty(b.size + 1)
        for j in range(b.size + 1):
            # alternate by distance from the origin, same slope on both sides of 0
            r = j - j0 - 1 if j > j0 else j0 - j
            slopes[j] = a if r % 2 == 0 else c
        vals = np.zeros(b.size)
        for j in range(j0 + 1, b.size):
            vals[j] = vals[j - 1] + slopes[j] * (b[j] - b[j - 1])
        for j in range(j0 - 1, -1, -1):
            vals[j] = vals[j + 1] - slopes[j + 1] * (b[j + 1] - b[j])
        self.breaks, self.slopes, self.values = b, slopes, vals
        self.first_slope = first_slope

    def _grad_shifted(self, y):
        return np.array([self._eval(float(y[0]))])

    def _eval(self, t: float) -> float:
        b, s, v = self.breaks, self.slopes, self.values
        j = int(np.searchsorted(b, t, side="right"))
        if j < b.size and (j == 0 or t < 0):
            return v[j] + s[j] * (t - b[j])
        return v[j - 1] + s[j] * (t - b[j - 1])

    def label(self) -> str:
        return f"SlopeZigzag(first={self.first_slope})"

    def kernel_args(self):
        return _kernels.GRAD_ZIGZAG, np.zeros(1), self.breaks, self.slopes, self.values


class GainOscillator(TestFunction):
    """``g(x) = x (c + r sin(omega log(1 + x^2)))`` with gain in ``[m, L]``.

    Sector-bounded for every ``omega``; the local slope leaves ``[m, L]``
    once ``omega`` is large, so the function is not strongly convex.
    """

    kind = FunctionKind.GAIN_OSCILLATOR

    def __init__(self, m: float, L: float, omega: float = 50.0, x_star=None):
        super().__init__(m, L, x_star, 1)
        self.omega = float(omega)

    def _grad_shifted(self, y):
        t = float(y[0])
        gain = 0.5 * (self.L + self.m) + 0.5 * (self.L - self.m) * math.sin(self.omega * math.log1p(t * t))
        return np.array([t * gain])

    def kernel_args(self):
        empty = np.zeros(1)
        return _kernels.GRAD_OSCILLATOR, np.array([self.m, self.L, self.omega]), empty, empty, empty

    @property
    def strongly_convex(self) -> bool:
        return False

    def label(self) -> str:
        return f"GainOscillator(omega={self.omega:g})"


# -- noise policies -----------------------------------------------------------------


class NoiseKind(str, enum.Enum):
    ZERO = "zero"
    SCALED_PLUS = "plus"
    SCALED_MINUS = "minus"
    RANDOM_SPHERE = "sphere"
    GREEDY = "greedy"


_KERNEL_POLICY = {
    NoiseKind.ZERO: _kernels.POLICY_ZERO,
    NoiseKind.SCALED_PLUS: _kernels.POLICY_PLUS,
    NoiseKind.SCALED_MINUS: _kernels.POLICY_MINUS,
    NoiseKind.RANDOM_SPHERE: _kernels.POLICY_SPHERE,
    NoiseKind.GREEDY: _kernels.POLICY_GREEDY,
}


@dataclass(frozen=True)
class NoisePolicy:
    kind: NoiseKind
    delta: float
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if not 0 <= self.delta < 1:
            raise ValueError("delta must lie in [0, 1)")


def greedy_noise(y, grad, alpha: float, delta: float) -> np.ndarray:
    """Noise in the ball ``|e| <= delta |grad|`` maximising the next distance to the minimiser.

    ``y`` is the current offset ``x - x*``. Ties (``w = 0``) break along the
    first coordinate.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    grad = np.atleast_1d(np.asarray(grad, dtype=float))
    bound = delta * vector_norm(grad)
    w = y - alpha * grad
    nw = vector_norm(w)
    if nw == 0.0:
        e = np.zeros_like(y)
        e[0] = bound
        return e
    return -bound * (w / nw)


# -- the iteration ------------------------------------------------------------------


def _sphere_directions(rng: np.random.Generator, steps: int, dim: int) -> np.ndarray:
    if dim == 1:
        return rng.choice(np.array([-1.0, 1.0]), size=(steps + 1, 1))
    d = rng.standard_normal((steps + 1, dim))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def run_inexact_gd(f: TestFunction, x0, alpha: float, policy: NoisePolicy, steps: int,
                   use_kernel: bool = True) -> Trajectory:
    """``x(k+1) = x(k) - alpha (grad f(x(k)) + e(k))`` with ``|e(k)| <= delta |grad f(x(k))|``.

    Returns ``steps + 1`` states (fewer when the iterate leaves the radius
    ``1e12`` around the minimiser, flagged ``diverged``), together with
    gradients, noise and the off-by-one memory ``v``.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x0 = np.asarray(x0, dtype=float).reshape(f.dim)
    rng = np.random.default_rng(policy.seed)
    dirs = _sphere_directions(rng, steps, f.dim) if policy.kind is NoiseKind.RANDOM_SPHERE else None
    args = f.kernel_args() if use_kernel else None
    if args is not None:
        kind, params, breaks, slopes, values = args
        signs = dirs[:, 0] if dirs is not None else np.zeros(1)
        x, u, e, v, n = _kernels.gd_run_scalar(
            kind, params, breaks, slopes, values, float(x0[0]), float(f.x_star[0]), float(alpha),
            _KERNEL_POLICY[policy.kind], float(policy.delta), signs, int(steps), f.L,
        )
        x, u, e, v = (a[:n, None] for a in (x, u, e, v))
    else:
        x, u, e, v, n = _run_python(f, x0, alpha, policy, steps, dirs)
    meta = {"function": f.label(), "policy": policy.kind.value, "delta": policy.delta,
            "seed": policy.seed, "alpha": alpha}
    return Trajectory(x, u, e=e, v=v, x_star=f.x_star, diverged=n < steps + 1, meta=meta)


def _run_python(f: TestFunction, x0, alpha, policy, steps, dirs):
    dim = f.dim
    x = np.zeros((steps + 1, dim))
    u = np.zeros((steps + 1, dim))
    e = np.zeros((steps + 1, dim))
    v = np.zeros((steps + 1, dim))
    xk = x0.copy()
    d = policy.delta
    n = 0
    for k in range(steps + 1):
        y = xk - f.x_star
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > _kernels.DIVERGENCE_RADIUS:
            break
        g = f._grad_shifted(y)
        if policy.kind is NoiseKind.ZERO:
            ek = np.zeros(dim)
        elif policy.kind is NoiseKind.SCALED_PLUS:
            ek = d * g
        elif policy.kind is NoiseKind.SCALED_MINUS:
            ek = -d * g
        elif policy.kind is NoiseKind.RANDOM_SPHERE:
            ek = d * vector_norm(g) * dirs[k]
        else:
            ek = greedy_noise(y, g, alpha, d)
        x[k], u[k], e[k] = xk, g, ek
        if k < steps:
            v[k + 1] = f.L * y - g
        n = k + 1
        xk = xk - alpha * (g + ek)
    return x[:n], u[:n], e[:n], v[:n], n


def noise_bound_holds(traj: Trajectory, delta: float) -> bool:
    if traj.e is None:
        return True
    en = row_norms(traj.e)
    gn = row_norms(traj.u)
    # subnormal products round to within half the smallest subnormal
    floor = np.finfo(float).smallest_subnormal
    return bool(np.all(en <= delta * gn * (1 + NOISE_SLACK) + floor))


# -- rates from trajectories --------------------------------------------------------


@dataclass(frozen=True)
class RateEstimate:
    rate: float
    hit_minimiser: bool = False
    diverged: bool = False


def empirical_rate(traj: Trajectory, burn_in: int = BURN_IN) -> RateEstimate:
    """``max_k (|x(k) - x*| / |x(b) - x*|)^(1/(k-b))`` over ``k > b = burn_in``."""
    dist = traj.distance
    if traj.diverged:
        tail = dist[min(burn_in, len(dist) - 1):]
        base = tail[0] if tail[0] > 0 else 1.0
        ks = np.arange(1, len(tail))
        est = float(np.max((tail[1:] / base) ** (1.0 / ks))) if ks.size else math.inf
        return RateEstimate(max(est, 1.0), diverged=True)
    if len(dist) <= burn_in + 10:
        raise ValueError(f"need more than burn_in + 10 = {burn_in + 10} steps, got {len(dist) - 1}")
    base = dist[burn_in]
    if base == 0.0:
        return RateEstimate(0.0, hit_minimiser=True)
    tail = dist[burn_in + 1:]
    ks = np.arange(1, len(tail) + 1, dtype=float)
    ratios = tail / base
    if np.any(ratios == 0.0):
        ratios = ratios[: int(np.flatnonzero(ratios == 0.0)[0])]
        ks = ks[: len(ratios)]
        if ratios.size == 0:
            return RateEstimate(0.0, hit_minimiser=True)
        return RateEstimate(float(np.max(ratios ** (1.0 / ks))), hit_minimiser=True)
    return RateEstimate(float(np.max(ratios ** (1.0 / ks))))


def empirical_constant(traj: Trajectory, rho: float) -> float:
    """``max_k |x(k) - x*| / (rho^k |x(0) - x*|)``, computed in log space."""
    dist = traj.distance
    if dist[0] == 0:
        return 0.0
    with np.errstate(divide="ignore"):
        logs = np.log(dist) - np.log(dist[0]) - np.arange(len(dist)) * math.log(rho)
    return float(np.exp(np.max(logs)))


# -- lower-bound witnesses -----------------------------------------------------------


@dataclass(frozen=True)
class Witness:
    trajectory: Trajectory
    rate: float
    branch: str


def lower_bound_witness(spec: ProblemSpec, x0: float = 1.0, steps: int = 200) -> Witness:
    """Quadratic plus ``e = +-delta grad`` runs; returns the slower exactly linear one."""
    runs = [
        ("L", QuadraticGain(spec.L, spec.m, spec.L), NoiseKind.SCALED_PLUS, abs(1 - (1 + spec.delta) * spec.alpha * spec.L)),
        ("m", QuadraticGain(spec.m, spec.m, spec.L), NoiseKind.SCALED_MINUS, abs(1 - (1 - spec.delta) * spec.alpha * spec.m)),
    ]
    best = None
    for branch, f, kind, rate in runs:
        traj = run_inexact_gd(f, [x0], spec.alpha, NoisePolicy(kind, spec.delta), steps)
        if best is None or rate > best.rate:
            best = Witness(traj, rate, branch)
    return best


# -- Lyapunov decay along trajectories ----------------------------------------------


@dataclass(frozen=True)
class LyapunovResult:
    holds: bool
    first_violation: int | None
    max_residual: float

    def __bool__(self) -> bool:
        return self.holds


def lyapunov_decay_check(traj: Trajectory, M_aug: BlockIqc, rho: float, P, rtol: float = 1e-8) -> LyapunovResult:
    """Check the storage inequalities implied by the dissipation LMI along ``traj``.

    With ``V = <P xi, xi>`` over the constraint's state ``xi`` and
    ``sigma(k)`` the constraint form at step ``k``, verifies for every ``k``

    * ``V(k+1) <= rho^2 V(k) - sigma(k)`` (one step), and
    * ``V(K) <= rho^(2K) V(0) - T(K-1)`` with ``T`` the rescaled partial sums.

    together with ``V(k) >= 0``. ``P`` may be the per-coordinate block; it is
    lifted to the trajectory dimension.
    """
    xi = traj.state_for(M_aug)
    w = traj.input_for(M_aug)
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if P.shape[0] != xi.shape[1]:
        P = np.kron(P, np.eye(xi.shape[1] // P.shape[0]))
    V = np.einsum("ki,ij,kj->k", xi, P, xi)
    sigma = M_aug.form(xi, w)
    p_norm = float(np.abs(P).max())
    m_norm = float(np.abs(M_aug.matrix).max())
    sq = np.sum(xi * xi, axis=1) + np.sum(w * w, axis=1)
    r2 = rho * rho
    resid_step = V[1:] - r2 * V[:-1] + sigma[:-1]
    tiny = np.finfo(float).tiny
    tol_step = rtol * (p_norm * (sq[1:] + sq[:-1]) + m_norm * sq[:-1]) + tiny
    # V(K) - rho^(2K) V(0) + T(K-1) obeys D(K+1) = rho^2 D(K) + step residual,
    # so the cumulative defect is a rescaled partial sum and never overflows
    resid_cum = _kernels.rescaled_partial_sums(resid_step, r2)
    tol_cum = _kernels.rescaled_partial_sums(tol_step, r2)
    neg = np.minimum(V, 0.0)
    tol_pos = rtol * p_norm * sq + tiny
    bad_pos = V < -tol_pos
    bad = np.flatnonzero(bad_pos[:-1] | (resid_step > tol_step) | (resid_cum > tol_cum) | bad_pos[1:])
    worst = float(max(np.max(resid_step - tol_step, initial=-np.inf),
                      np.max(resid_cum - tol_cum, initial=-np.inf),
                      np.max(-neg - tol_pos, initial=-np.inf)))
    if bad.size:
        return LyapunovResult(False, int(bad[0]), worst)
    return LyapunovResult(True, None, worst)


def constraint_for(spec: ProblemSpec, kind: str, lam: float, gamma: float | None, dim: int = 1) -> BlockIqc:
    """Noise-augmented constraint matrix in ``dim`` dimensions."""
    eye = np.eye(dim)
    if kind == "offbyone":
        base = off_by_one_matrix(eye, spec.m, spec.L, gamma)
    else:
        base = sector_matrix(eye, spec.m, spec.L)
    if spec.delta == 0:
        return base
    return noise_augment(base, spec.delta, lam)


# -- zoo and batched soundness runs -------------------------------------------------


def zoo(spec: ProblemSpec, function_class: rates.FunctionClass | str) -> list[TestFunction]:
    """Standard test functions for a class; the sector zoo adds the non-convex oscillator."""
    m, L = spec.m, spec.L
    funcs: list[TestFunction] = [
        QuadraticGain(m, m, L),
        QuadraticGain(L, m, L),
        QuadraticGain(0.5 * (m + L), m, L),
        SlopeZigzag(m, L),
        SlopeZigzag(m, L, first_slope="m"),
        DiagonalQuadratic([m, L], m, L),
        DiagonalQuadratic(np.linspace(m, L, 4), m, L),
    ]
    if rates.FunctionClass(function_class) is rates.FunctionClass.SECTOR:
        funcs.append(GainOscillator(m, L, omega=50.0))
    return funcs


def policies(delta: float, seed: int = DEFAULT_SEED) -> list[NoisePolicy]:
    return [NoisePolicy(k, delta, seed) for k in NoiseKind]


@dataclass(frozen=True)
class SoundnessRun:
    function: str
    policy: str
    start: int
    seed: int
    empirical_rate: float
    certified_rate: float
    diverged: bool
    noise_ok: bool

    @property
    def sound(self) -> bool:
        if self.certified_rate >= 1:
            return True
        return self.noise_ok and not self.diverged and self.empirical_rate <= self.certified_rate + 1e-3


def random_starts(dim: int, n: int, seed: int, scale: float = 1.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((n, dim))
    return scale * pts / np.linalg.norm(pts, axis=1, keepdims=True) * rng.uniform(0.5, 2.0, size=(n, 1))


def _soundness_job(job):
    f, policy, start_idx, x0, alpha, steps, rho = job
    traj = run_inexact_gd(f, x0, alpha, policy, steps)
    est = empirical_rate(traj)
    return SoundnessRun(f.label(), policy.kind.value, start_idx, policy.seed, est.rate, rho,
                        traj.diverged, noise_bound_holds(traj, policy.delta))


def soundness_runs(spec: ProblemSpec, rho: float, combos: Iterable[tuple[TestFunction, NoisePolicy]],
                   n_starts: int = 10, steps: int = 500, seed: int = DEFAULT_SEED,
                   workers: int = 1) -> list[SoundnessRun]:
    """Simulate each (function, policy) from ``n_starts`` seeded starts.

    Results come back in submission order regardless of ``workers``.
    """
    jobs = []
    for ci, (f, pol) in enumerate(combos):
        starts = random_starts(f.dim, n_starts, seed + 7919 * ci)
        for si, x0 in enumerate(starts):
            run_pol = NoisePolicy(pol.kind, pol.delta, pol.seed + si)
            jobs.append((f, run_pol, si, f.x_star + x0, spec.alpha, steps, rho))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_soundness_job, jobs))
    return [_soundness_job(j) for j in jobs]
