"""Pure-Python implementations of the hot loops.

Mirrors ``_core.pyx`` function for function; used when the compiled
extension is unavailable or ``IQCGD_PURE_PYTHON`` is set.
"""

import math

import numpy as np

GRAD_QUADRATIC = 0
GRAD_ZIGZAG = 1
GRAD_OSCILLATOR = 2

POLICY_ZERO = 0
POLICY_PLUS = 1
POLICY_MINUS = 2
POLICY_SPHERE = 3
POLICY_GREEDY = 4

DIVERGENCE_RADIUS = 1e12


def rescaled_partial_sums(summands, rho2):
    """T_N = rho2 * T_{N-1} + sigma_N, the partial sums scaled by rho^(2N)."""
    summands = np.asarray(summands, dtype=float)
    out = np.empty_like(summands)
    acc = 0.0
    for i in range(summands.shape[0]):
        acc = rho2 * acc + summands[i]
        out[i] = acc
    return out


def jacobi_eigvalsh(a, tol=1e-12, max_sweeps=64):
    """Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations (ascending)."""
    a = np.array(a, dtype=float)
    n = a.shape[0]
    for _ in range(max_sweeps):
        off = 0.0
        diag = 0.0
        for p in range(n):
            diag += a[p, p] * a[p, p]
            for q in range(p + 1, n):
                off += a[p, q] * a[p, q]
        if off <= tol * tol * max(diag, 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
    return np.sort(np.diag(a).copy())


def _grad_1d(kind, y, params, breaks, slopes, values):
    if kind == GRAD_QUADRATIC:
        return params[0] * y
    if kind == GRAD_ZIGZAG:
        # slopes[j] applies on [breaks[j-1], breaks[j]); values[j] = g(breaks[j]).
        # Anchor at the endpoint nearer the origin so g stays relatively accurate near 0.
        j = int(np.searchsorted(breaks, y, side="right"))
        if j < len(breaks) and (j == 0 or y < 0):
            return values[j] + slopes[j] * (y - breaks[j])
        return values[j - 1] + slopes[j] * (y - breaks[j - 1])
    m, L, omega = params[0], params[1], params[2]
    gain = 0.5 * (L + m) + 0.5 * (L - m) * math.sin(omega * math.log1p(y * y))
    return y * gain


def gd_run_scalar(kind, params, breaks, slopes, values, x0, xstar, alpha, policy,
                  delta, signs, steps, L):
    """Inexact GD on a 1-D test function.

    Returns ``(x, u, e, v, n)``: arrays of length ``steps + 1`` of which the
    first ``n`` entries are valid (``n < steps + 1`` only on divergence).
    """
    x = np.zeros(steps + 1)
    u = np.zeros(steps + 1)
    e = np.zeros(steps + 1)
    v = np.zeros(steps + 1)
    xk = x0
    n = 0
    for k in range(steps + 1):
        y = xk - xstar
        if not math.isfinite(y) or abs(y) > DIVERGENCE_RADIUS:
            break
        g = _grad_1d(kind, y, params, breaks, slopes, values)
        bound = delta * abs(g)
        if policy == POLICY_ZERO:
            ek = 0.0
        elif policy == POLICY_PLUS:
            ek = delta * g
        elif policy == POLICY_MINUS:
            ek = -delta * g
        elif policy == POLICY_SPHERE:
            ek = bound * signs[k]
        else:
            w = y - alpha * g
            if w > 0:
                ek = -bound
            elif w < 0:
                ek = bound
            else:
                ek = bound
        x[k] = xk
        u[k] = g
        e[k] = ek
        if k + 1 <= steps:
            v[k + 1] = L * y - g
        n = k + 1
        xk = xk - alpha * (g + ek)
    return x, u, e, v, n
