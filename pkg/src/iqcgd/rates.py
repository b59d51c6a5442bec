"""Closed-form rates, step-size thresholds and regime dispatch for inexact GD."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

# Absolute tolerance for step-size branch comparisons; ties go to the exact branch.
BRANCH_TOL = 1e-12


class FunctionClass(str, enum.Enum):
    SECTOR = "sector"
    STRONGLY_CONVEX = "strongly-convex"


class RegimeKind(str, enum.Enum):
    NOISELESS_SECTOR = "NoiselessSector"
    PROP1_SMALL_STEP = "Prop1SmallStep"
    PROP1_LARGE_STEP = "Prop1LargeStep"
    PROP2_INTERIOR = "Prop2Interior"
    PROP3_STRONGLY_CONVEX = "Prop3StronglyConvex"
    UNCERTIFIABLE = "Uncertifiable"


@dataclass(frozen=True)
class ProblemSpec:
    """Class moduli ``(m, L)``, step size ``alpha`` and relative noise level ``delta``."""

    m: float
    L: float
    alpha: float
    delta: float = 0.0

    def __post_init__(self):
        for name in ("m", "L", "alpha", "delta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not 0 < self.m < self.L:
            raise ValueError(f"need 0 < m < L, got m={self.m}, L={self.L}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0 <= self.delta < 1:
            raise ValueError(f"delta must lie in [0, 1), got {self.delta}")

    @property
    def kappa(self) -> float:
        return self.L / self.m

    def with_(self, **changes) -> "ProblemSpec":
        fields = dict(m=self.m, L=self.L, alpha=self.alpha, delta=self.delta)
        fields.update(changes)
        return ProblemSpec(**fields)


@dataclass(frozen=True)
class RateRegime:
    kind: RegimeKind
    certified_rho: float

    @property
    def converges(self) -> bool:
        return self.certified_rho < 1


def _check_moduli(m: float, L: float) -> None:
    if not 0 < m < L:
        raise ValueError(f"need 0 < m < L, got m={m}, L={L}")


def rho_gd(m: float, L: float, alpha: float) -> float:
    """Noiseless worst-case rate ``max(1 - alpha*m, alpha*L - 1)``."""
    _check_moduli(m, L)
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    return max(1 - alpha * m, alpha * L - 1)


def rho_gd_noisy(spec: ProblemSpec) -> float:
    """Quadratic lower bound on any certifiable rate at noise level ``delta``."""
    m, L, a, d = spec.m, spec.L, spec.alpha, spec.delta
    return max(1 - (1 - d) * a * m, (1 + d) * a * L - 1)


def alpha_minus(m: float, L: float, delta: float) -> float:
    _check_moduli(m, L)
    return (2 / (L + m) - delta / m) / (1 - delta)


def alpha_plus(m: float, L: float, delta: float) -> float:
    _check_moduli(m, L)
    return (2 / (L + m) + delta / L) / (1 + delta)


def alpha_sharp(m: float, L: float, delta: float) -> float:
    """Step size minimising ``rho_gd_noisy`` over all ``alpha > 0``."""
    _check_moduli(m, L)
    return 2 / ((1 + delta) * L + (1 - delta) * m)


def prop2_rate(spec: ProblemSpec) -> float:
    """Rate certified over the sector class away from the exact branches.

    Only defined for ``alpha < 2/(L+m)``, where the radicand is positive.
    """
    m, L, a, d = spec.m, spec.L, spec.alpha, spec.delta
    if a >= 2 / (L + m):
        raise ValueError(f"prop2_rate needs alpha < 2/(L+m) = {2 / (L + m)!r}, got {a!r}")
    radicand = 1 - 2 * a * L * m / (L + m) + a * d**2 * (L + m - 2 * a * L * m) / (2 - a * (L + m))
    return math.sqrt(radicand)


def prop3_sharp_rate(m: float, L: float, delta: float) -> float:
    _check_moduli(m, L)
    k = L / m
    return ((1 + delta) * k - (1 - delta)) / ((1 + delta) * k + (1 - delta))


def in_strongly_convex_window(spec: ProblemSpec, tol: float = BRANCH_TOL) -> bool:
    """``1/L <= alpha <= 2/((1+delta)L + (1-delta)m)`` up to ``tol``."""
    return 1 / spec.L - tol <= spec.alpha <= alpha_sharp(spec.m, spec.L, spec.delta) + tol


def prop1_branch(spec: ProblemSpec, tol: float = BRANCH_TOL) -> RegimeKind | None:
    """Which exact sector branch applies, if any (small step wins ties)."""
    m, L, d = spec.m, spec.L, spec.delta
    if d < 2 / (spec.kappa + 1) and spec.alpha <= alpha_minus(m, L, d) + tol:
        return RegimeKind.PROP1_SMALL_STEP
    if spec.alpha >= alpha_plus(m, L, d) - tol:
        return RegimeKind.PROP1_LARGE_STEP
    return None


def classify_regime(spec: ProblemSpec, function_class: FunctionClass | str) -> RateRegime:
    function_class = FunctionClass(function_class)
    if spec.delta == 0:
        return RateRegime(RegimeKind.NOISELESS_SECTOR, rho_gd(spec.m, spec.L, spec.alpha))
    if function_class is FunctionClass.STRONGLY_CONVEX and in_strongly_convex_window(spec):
        return RateRegime(RegimeKind.PROP3_STRONGLY_CONVEX, rho_gd_noisy(spec))
    branch = prop1_branch(spec)
    if branch is not None:
        return RateRegime(branch, rho_gd_noisy(spec))
    if spec.alpha < 2 / (spec.L + spec.m):
        return RateRegime(RegimeKind.PROP2_INTERIOR, max(prop2_rate(spec), rho_gd_noisy(spec)))
    return RateRegime(RegimeKind.UNCERTIFIABLE, math.inf)
