"""Quadratic constraints over LTI feedback loops.

Block matrices for the sector, off-by-one and noise-augmented constraints,
rescaled partial sums along trajectories, and sample-based membership tests
for the sector and strongly convex function classes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .linalg import max_eigenvalue, row_norms

MEMBERSHIP_RTOL = 1e-9


def _as_matrix(a) -> np.ndarray:
    return np.atleast_2d(np.asarray(a, dtype=float))


def _frozen(a) -> np.ndarray | None:
    if a is None:
        return None
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LtiSystem:
    """``x(k+1) = A x(k) + B u(k)`` with output ``y = C x``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A, B, C = _as_matrix(self.A), _as_matrix(self.B), _as_matrix(self.C)
        ns = A.shape[0]
        if A.shape != (ns, ns):
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != ns:
            raise ValueError(f"B has {B.shape[0]} rows, A has {ns}")
        if C.shape[1] != ns:
            raise ValueError(f"C has {C.shape[1]} columns, A has {ns}")
        if not np.any(B):
            raise ValueError("B must be nonzero")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n_state(self) -> int:
        return self.A.shape[0]

    @property
    def n_input(self) -> int:
        return self.B.shape[1]


def gd_plant(alpha: float, n: int = 1) -> LtiSystem:
    """Gradient descent as a feedback loop: A = I, B = -alpha I, C = I."""
    eye = np.eye(n)
    return LtiSystem(eye, -alpha * eye, eye)


def augment_off_by_one(sys: LtiSystem, L: float) -> LtiSystem:
    """Append the memory state ``v(k+1) = L C x(k) - u(k)``."""
    ns, n = sys.n_state, sys.C.shape[0]
    if sys.n_input != n:
        raise ValueError("off-by-one augmentation needs as many inputs as outputs")
    A = np.block([[sys.A, np.zeros((ns, n))], [L * sys.C, np.zeros((n, n))]])
    B = np.vstack([sys.B, -np.eye(n)])
    C = np.hstack([sys.C, np.zeros((n, n))])
    return LtiSystem(A, B, C)


def add_noise_channel(sys: LtiSystem, plant_states: int | None = None) -> LtiSystem:
    """Input matrix ``[B, B_e]`` for ``x(k+1) = A x + B u + B_e e``.

    The noise perturbs the same channels as ``u`` restricted to the first
    ``plant_states`` rows; the off-by-one memory is driven by the exact
    gradient only, so pass the plant dimension for augmented systems.
    """
    Be = sys.B.copy()
    if plant_states is not None:
        Be[plant_states:] = 0.0
    return LtiSystem(sys.A, np.hstack([sys.B, Be]), sys.C)


@dataclass(frozen=True)
class BlockIqc:
    """Symmetric constraint matrix ``[[Q, S^T], [S, R]]`` over (state, input)."""

    Q: np.ndarray
    S: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q, S, R = _as_matrix(self.Q), _as_matrix(self.S), _as_matrix(self.R)
        if Q.shape[0] != Q.shape[1] or R.shape[0] != R.shape[1]:
            raise ValueError("Q and R must be square")
        if S.shape != (R.shape[0], Q.shape[0]):
            raise ValueError(f"S must be {R.shape[0]}x{Q.shape[0]}, got {S.shape}")
        if not (np.allclose(Q, Q.T, atol=1e-12) and np.allclose(R, R.T, atol=1e-12)):
            raise ValueError("Q and R must be symmetric")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "R", R)

    @property
    def dims(self) -> tuple[int, int]:
        return self.Q.shape[0], self.R.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return np.block([[self.Q, self.S.T], [self.S, self.R]])

    def r_is_nsd(self, tol: float = 0.0) -> bool:
        """Whether the input block is negative semidefinite."""
        return max_eigenvalue(self.R) <= tol

    def form(self, x, u) -> np.ndarray:
        """Quadratic form at rows of ``x`` (states) and ``u`` (inputs)."""
        x = np.atleast_2d(x)
        u = np.atleast_2d(u)
        return (
            np.einsum("ki,ij,kj->k", x, self.Q, x)
            + 2 * np.einsum("ki,ij,kj->k", u, self.S, x)
            + np.einsum("ki,ij,kj->k", u, self.R, u)
        )


def sector_matrix(C, m: float, L: float) -> BlockIqc:
    """Constraint ``<L y - u, u - m y> >= 0`` with ``y = C x``."""
    if not m < L:
        raise ValueError("sector IQC needs m < L")
    C = _as_matrix(C)
    n = C.shape[0]
    return BlockIqc(-2 * L * m * C.T @ C, (L + m) * C, -2 * np.eye(n))


def sector_matrix_factored(C, m: float, L: float) -> np.ndarray:
    """Same matrix assembled as ``[C_w D_w]^T M_w [C_w D_w]``."""
    C = _as_matrix(C)
    n = C.shape[0]
    eye = np.eye(n)
    cw_dw = np.block([[L * C, -eye], [-m * C, eye]])
    mw = np.block([[np.zeros((n, n)), eye], [eye, np.zeros((n, n))]])
    return cw_dw.T @ mw @ cw_dw


def off_by_one_matrix(C, m: float, L: float, gamma: float) -> BlockIqc:
    """Off-by-one constraint over the augmented state ``(x, v)`` and input ``u``."""
    if gamma < 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    if not m < L:
        raise ValueError("off-by-one IQC needs m < L")
    C = _as_matrix(C)
    n, ns = C.shape
    Q = np.block([
        [-2 * L * m * C.T @ C, m * gamma * C.T],
        [m * gamma * C, np.zeros((n, n))],
    ])
    S = np.hstack([(L + m) * C, -gamma * np.eye(n)])
    return BlockIqc(Q, S, -2 * np.eye(n))


def off_by_one_matrix_factored(C, m: float, L: float, gamma: float) -> np.ndarray:
    C = _as_matrix(C)
    n = C.shape[0]
    eye = np.eye(n)
    zero = np.zeros((n, n))
    cw_dw = np.block([[L * C, -gamma * eye, -eye], [-m * C, zero, eye]])
    mw = np.block([[zero, eye], [eye, zero]])
    return cw_dw.T @ mw @ cw_dw


def noise_augment(M: BlockIqc, delta: float, lam: float) -> BlockIqc:
    """Fold ``|e| <= delta |u|`` into ``M`` with S-procedure weight ``lam``.

    The result acts on inputs ``(u, e)``. Check ``r_is_nsd()`` on the result
    for the admissibility bound ``R + lam delta^2 I <= 0``.
    """
    if not 0 <= delta < 1:
        raise ValueError("delta must lie in [0, 1)")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    ns, n = M.dims
    R = np.block([
        [M.R + lam * delta**2 * np.eye(n), np.zeros((n, n))],
        [np.zeros((n, n)), -lam * np.eye(n)],
    ])
    S = np.vstack([M.S, np.zeros((n, ns))])
    return BlockIqc(M.Q, S, R)


@dataclass(frozen=True)
class Trajectory:
    """Rows are time steps. ``x`` is in original coordinates; ``x_star`` is the minimiser."""

    x: np.ndarray
    u: np.ndarray
    e: np.ndarray | None = None
    v: np.ndarray | None = None
    x_star: np.ndarray | None = None
    diverged: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        x = _frozen(np.asarray(self.x, dtype=float).reshape(len(self.x), -1))
        u = _frozen(np.asarray(self.u, dtype=float).reshape(len(self.u), -1))
        if u.shape[0] != x.shape[0]:
            raise ValueError("x and u must share length")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "u", u)
        for name in ("e", "v"):
            arr = getattr(self, name)
            if arr is not None:
                arr = _frozen(np.asarray(arr, dtype=float).reshape(len(arr), -1))
                if arr.shape[0] != x.shape[0]:
                    raise ValueError(f"{name} must share length with x")
                object.__setattr__(self, name, arr)
        xs = np.zeros(x.shape[1]) if self.x_star is None else np.asarray(self.x_star, dtype=float).reshape(-1)
        object.__setattr__(self, "x_star", _frozen(xs))

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def shifted(self) -> np.ndarray:
        """States relative to the minimiser."""
        return self.x - self.x_star

    @property
    def distance(self) -> np.ndarray:
        return row_norms(self.shifted)

    def state_for(self, M: BlockIqc) -> np.ndarray:
        ns, _ = M.dims
        y = self.shifted
        if ns == y.shape[1]:
            return y
        if self.v is not None and ns == y.shape[1] + self.v.shape[1]:
            return np.hstack([y, self.v])
        raise ValueError(f"trajectory state does not match a {ns}-dimensional constraint")

    def input_for(self, M: BlockIqc) -> np.ndarray:
        _, ni = M.dims
        if ni == self.u.shape[1]:
            return self.u
        if self.e is not None and ni == self.u.shape[1] + self.e.shape[1]:
            return np.hstack([self.u, self.e])
        raise ValueError(f"trajectory input does not match a {ni}-dimensional constraint")


def offbyone_memory(y: np.ndarray, u: np.ndarray, L: float) -> np.ndarray:
    """``v(0) = 0, v(k+1) = L y(k) - u(k)``."""
    v = np.zeros_like(np.asarray(y, dtype=float))
    v[1:] = L * y[:-1] - u[:-1]
    return v


def iqc_summands(traj: Trajectory, M: BlockIqc) -> np.ndarray:
    return M.form(traj.state_for(M), traj.input_for(M))


def iqc_partial_sums(traj: Trajectory, M: BlockIqc, rho: float, rescaled: bool = True) -> np.ndarray:
    """Partial sums of the rho-weighted constraint along ``traj``.

    With ``rescaled`` (default) returns ``T_N = rho^(2N) S_N``, which has the
    sign of ``S_N`` and cannot overflow; otherwise ``S_N`` itself.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    t = _kernels.rescaled_partial_sums(iqc_summands(traj, M), rho * rho)
    if rescaled:
        return t
    with np.errstate(over="ignore"):
        return t * rho ** (-2.0 * np.arange(len(t)))


def in_iqc(traj: Trajectory, M: BlockIqc, rho: float, atol: float = 0.0) -> bool:
    return bool(np.all(iqc_partial_sums(traj, M, rho) >= -atol))


@dataclass(frozen=True)
class MembershipResult:
    holds: bool
    worst_violation: float
    witness: tuple | None = None

    def __bool__(self) -> bool:
        return self.holds


GradEval = Callable[[np.ndarray], np.ndarray]


def _rows(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    return pts.reshape(len(pts), -1)


def sector_membership_check(grad_eval: GradEval, sample_points, m: float, L: float,
                            x_star=None) -> MembershipResult:
    """Check ``<m(x - x*) - g(x), L(x - x*) - g(x)> <= 0`` on samples.

    Violations are measured relative to ``L^2 |x - x*|^2``.
    """
    pts = _rows(sample_points)
    xs = np.zeros(pts.shape[1]) if x_star is None else np.asarray(x_star, dtype=float).reshape(-1)
    worst, witness = -np.inf, None
    for p in pts:
        y = p - xs
        g = np.asarray(grad_eval(p), dtype=float).reshape(-1)
        scale = L * L * float(y @ y)
        val = float((m * y - g) @ (L * y - g))
        rel = val / scale if scale > 0 else (np.inf if float(g @ g) > 0 else 0.0)
        if rel > worst:
            worst, witness = rel, (p,)
    return MembershipResult(worst <= MEMBERSHIP_RTOL, worst, witness if worst > MEMBERSHIP_RTOL else None)


def monotone_membership_check(grad_eval: GradEval, sample_pairs, m: float, L: float) -> MembershipResult:
    """Check ``<g(x)-g(y)-m(x-y), g(x)-g(y)-L(x-y)> <= 0`` on sampled pairs."""
    worst, witness = -np.inf, None
    for a, b in sample_pairs:
        a = np.asarray(a, dtype=float).reshape(-1)
        b = np.asarray(b, dtype=float).reshape(-1)
        d = a - b
        dg = np.asarray(grad_eval(a), dtype=float).reshape(-1) - np.asarray(grad_eval(b), dtype=float).reshape(-1)
        scale = L * L * float(d @ d)
        if scale == 0:
            continue
        rel = float((dg - m * d) @ (dg - L * d)) / scale
        if rel > worst:
            worst, witness = rel, (a, b)
    return MembershipResult(worst <= MEMBERSHIP_RTOL, worst, witness if worst > MEMBERSHIP_RTOL else None)


def find_offbyone_violation(grad_eval: GradEval, m: float, L: float, rho: float, gamma: float,
                            rng: np.random.Generator, n_trials: int = 2000, length: int = 4,
                            scale: float = 2.0) -> tuple[Trajectory, int] | None:
    """Search random sequences for a negative off-by-one partial sum.

    Returns the offending trajectory (with memory ``v``) and the first index
    where the rescaled partial sum drops below zero, or ``None``.
    """
    M = off_by_one_matrix(np.eye(1), m, L, gamma)
    for _ in range(n_trials):
        x = scale * rng.standard_normal((length, 1))
        u = np.array([np.asarray(grad_eval(p), dtype=float).reshape(-1) for p in x])
        traj = Trajectory(x, u, v=offbyone_memory(x, u, L))
        t = iqc_partial_sums(traj, M, rho)
        tol = MEMBERSHIP_RTOL * L * L * float(np.max(np.sum(x * x, axis=1)))
        bad = np.flatnonzero(t < -tol)
        if bad.size:
            return traj, int(bad[0])
    return None
