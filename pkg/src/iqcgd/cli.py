"""``iqcgd`` command line: certify, sweep, simulate, verify.

Exit codes: 0 success, 1 usage or runtime error, 2 not certifiable,
3 verification failure.
"""

from __future__ import annotations

import argparse
import itertools
import math
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dissipation, freqcert, io, rates, sim
from .iqc import gd_plant, off_by_one_matrix, sector_matrix
from .linalg import eigvalsh
from .rates import FunctionClass, ProblemSpec, RegimeKind

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_CERTIFIABLE = 2
EXIT_VERIFY_FAILED = 3

DISSIPATION_OFFSET = 1e-3
CLOSED_FORM_TOL = 1e-6
TIGHT_GAP_TOL = 1e-9
SWEEP_HEADER = ("m", "L", "alpha", "delta", "class", "regime", "rho_certified", "lambda", "gamma",
                "rho_witnessed", "gap")
TIGHT_REGIMES = {RegimeKind.NOISELESS_SECTOR, RegimeKind.PROP1_SMALL_STEP, RegimeKind.PROP1_LARGE_STEP,
                 RegimeKind.PROP3_STRONGLY_CONVEX}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# -- shared helpers -----------------------------------------------------------------


def _alpha(m: float, L: float, alpha: float | None, frac: float | None) -> float:
    if (alpha is None) == (frac is None):
        raise UsageError("give exactly one of --alpha and --alpha-frac")
    return alpha if alpha is not None else frac * 2.0 / (L + m)


def _spec_from_args(a) -> ProblemSpec:
    try:
        return ProblemSpec(a.m, a.L, _alpha(a.m, a.L, a.alpha, a.alpha_frac), a.delta)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _spec_dict(spec: ProblemSpec, cls: FunctionClass) -> dict:
    return {"m": spec.m, "L": spec.L, "alpha": spec.alpha, "delta": spec.delta, "class": cls.value}


def _add_spec_flags(p: argparse.ArgumentParser, cls_default: str | None = None) -> None:
    p.add_argument("--m", type=float, required=True, help="strong convexity / lower sector bound")
    p.add_argument("--L", type=float, required=True, help="smoothness / upper sector bound")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--alpha", type=float, help="step size")
    g.add_argument("--alpha-frac", type=float, help="step size as a multiple of 2/(L+m)")
    p.add_argument("--delta", type=float, default=0.0, help="relative gradient error bound")
    p.add_argument("--class", dest="cls", choices=[c.value for c in FunctionClass],
                   default=cls_default, required=cls_default is None)


def _cert_kind(cert: freqcert.Certificate) -> str:
    return "offbyone" if cert.kind is freqcert.CertificateKind.OFF_BY_ONE_NOISY else "sector"


def _emit(obj) -> None:
    sys.stdout.write(io.dumps17(obj) + "\n")


# -- certify ------------------------------------------------------------------------


def cmd_certify(a) -> int:
    spec = _spec_from_args(a)
    cls = FunctionClass(a.cls)
    regime = rates.classify_regime(spec, cls)
    out = {"version": io.SCHEMA_VERSION, "spec": _spec_dict(spec, cls), "regime": regime.kind.value}
    if a.rho is not None:
        if not a.rho > 0:
            raise UsageError("--rho must be positive")
        cert = freqcert.certify_at(spec, cls, a.rho, a.experimental)
        out.update(mode="decision", rho_query=a.rho)
    else:
        cert = freqcert.certify(spec, cls, a.experimental)
        out.update(mode="optimize")
    out["certified"] = cert is not None
    out["divergent"] = bool(cert is not None and cert.divergent)
    out["certificate"] = cert.to_dict() if cert is not None else None
    _emit(out)
    if cert is None:
        if a.rho is None:
            print("not certifiable: no rate below the search ceiling passes", file=sys.stderr)
        return EXIT_NOT_CERTIFIABLE
    return EXIT_OK


# -- sweep --------------------------------------------------------------------------

_LINSPACE = re.compile(r"^linspace\(\s*([^,]+),\s*([^,]+),\s*(\d+)\s*\)$")


def parse_values(text: str) -> list[float]:
    """``0.1, 0.2`` or ``linspace(a, b, n)`` (endpoints included)."""
    text = text.strip()
    mt = _LINSPACE.match(text)
    try:
        if mt:
            n = int(mt.group(3))
            if n < 1:
                raise UsageError("linspace needs n >= 1")
            return [float(v) for v in np.linspace(float(mt.group(1)), float(mt.group(2)), n)]
        vals = [float(t) for t in re.split(r"[,\s]+", text.strip("[]")) if t]
    except ValueError as exc:
        raise UsageError(f"bad value list {text!r}") from exc
    if not vals:
        raise UsageError("empty value list")
    return vals


@dataclass
class SweepConfig:
    m_values: list[float] = field(default_factory=lambda: [1.0])
    L_values: list[float] = field(default_factory=lambda: [10.0])
    alpha_values: list[float] | None = None
    alpha_frac_values: list[float] | None = None
    delta_values: list[float] = field(default_factory=lambda: [0.0])
    classes: list[FunctionClass] = field(default_factory=lambda: [FunctionClass.SECTOR])
    output: str | None = None
    seed: int = sim.DEFAULT_SEED
    workers: int = 1

    def specs(self):
        """Grid points in lexicographic order of (m, L, alpha, delta, class) indices."""
        alphas = self.alpha_values if self.alpha_values is not None else self.alpha_frac_values
        if alphas is None:
            raise UsageError("sweep needs alpha or alpha_frac values")
        if self.alpha_values is not None and self.alpha_frac_values is not None:
            raise UsageError("give alpha or alpha_frac values, not both")
        out = []
        for m, L, a, d, c in itertools.product(self.m_values, self.L_values, alphas, self.delta_values, self.classes):
            alpha = a if self.alpha_values is not None else a * 2.0 / (L + m)
            try:
                out.append((ProblemSpec(m, L, alpha, d), c))
            except ValueError as exc:
                raise UsageError(f"invalid grid point m={m} L={L} alpha={alpha} delta={d}: {exc}") from exc
        return out


_CONFIG_KEYS = {"m": "m_values", "L": "L_values", "alpha": "alpha_values", "alpha_frac": "alpha_frac_values",
                "delta": "delta_values"}


def read_sweep_config(path: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from exc
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


def build_sweep_config(a) -> SweepConfig:
    raw = read_sweep_config(a.config) if a.config else {}
    for key in ("m", "L", "alpha", "alpha_frac", "delta", "class", "output", "seed", "workers"):
        flag = getattr(a, key if key != "class" else "cls", None)
        if flag is not None:
            raw[key] = flag
    unknown = set(raw) - set(_CONFIG_KEYS) - {"class", "output", "seed", "workers"}
    if unknown:
        raise UsageError(f"unknown sweep keys: {', '.join(sorted(unknown))}")
    cfg = SweepConfig()
    for key, attr in _CONFIG_KEYS.items():
        if key in raw:
            setattr(cfg, attr, parse_values(str(raw[key])))
    if "class" in raw:
        try:
            cfg.classes = [FunctionClass(c) for c in re.split(r"[,\s]+", str(raw["class"]).strip()) if c]
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    cfg.output = raw.get("output")
    try:
        cfg.seed = int(raw.get("seed", cfg.seed))
        cfg.workers = int(raw.get("workers", cfg.workers))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if cfg.workers < 1:
        raise UsageError("workers must be >= 1")
    return cfg


def sweep_row(job) -> list:
    spec, cls = job
    regime = rates.classify_regime(spec, cls)
    cert = freqcert.certify(spec, cls)
    witnessed = sim.lower_bound_witness(spec).rate
    rho = cert.rho if cert is not None else None
    return [spec.m, spec.L, spec.alpha, spec.delta, cls.value, regime.kind.value, rho,
            cert.lam if cert is not None else None, cert.gamma if cert is not None else None,
            witnessed, rho - witnessed if rho is not None else None]


def run_sweep(cfg: SweepConfig) -> list[list]:
    jobs = cfg.specs()
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as ex:
            return list(ex.map(sweep_row, jobs))
    return [sweep_row(j) for j in jobs]


def cmd_sweep(a) -> int:
    cfg = build_sweep_config(a)
    rows = run_sweep(cfg)
    if cfg.output and cfg.output != "-":
        try:
            with open(cfg.output, "w", newline="") as fh:
                io.write_csv(fh, SWEEP_HEADER, rows)
        except OSError as exc:
            print(f"cannot write {cfg.output}: {exc}", file=sys.stderr)
            return EXIT_USAGE
    else:
        io.write_csv(sys.stdout, SWEEP_HEADER, rows)
    return EXIT_OK


# -- simulate -----------------------------------------------------------------------

FUNCTIONS = ("quadratic", "diagonal", "zigzag", "oscillator")


def make_function(a, spec: ProblemSpec) -> sim.TestFunction:
    try:
        if a.function == "quadratic":
            k = spec.L if a.k is None else a.k
            return sim.QuadraticGain(k, spec.m, spec.L, dim=a.dim)
        if a.function == "diagonal":
            spectrum = parse_values(a.spectrum) if a.spectrum else [spec.m, spec.L]
            return sim.DiagonalQuadratic(spectrum, spec.m, spec.L)
        if a.function == "zigzag":
            return sim.SlopeZigzag(spec.m, spec.L)
        return sim.GainOscillator(spec.m, spec.L, a.omega)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_simulate(a) -> int:
    spec = _spec_from_args(a)
    f = make_function(a, spec)
    cls = FunctionClass(a.cls) if a.cls else (FunctionClass.STRONGLY_CONVEX if f.strongly_convex
                                               else FunctionClass.SECTOR)
    if cls is FunctionClass.STRONGLY_CONVEX and not f.strongly_convex:
        raise UsageError(f"{f.label()} is not strongly convex")
    if a.steps <= sim.BURN_IN + 10:
        raise UsageError(f"--steps must exceed {sim.BURN_IN + 10}")
    x0 = np.array(parse_values(a.x0)) if a.x0 else np.ones(f.dim)
    if x0.size != f.dim:
        raise UsageError(f"--x0 needs {f.dim} components")
    policy = sim.NoisePolicy(a.policy, spec.delta, a.seed)
    traj = sim.run_inexact_gd(f, f.x_star + x0, spec.alpha, policy, a.steps)
    est = sim.empirical_rate(traj)
    cert = freqcert.certify(spec, cls)
    certified = cert.rho if cert is not None else None
    if certified is None or certified >= 1:
        sound = True
    else:
        sound = (not traj.diverged) and est.rate <= certified + 1e-3
    ref = certified if certified is not None and certified > 0 else max(est.rate, 1e-300)
    try:
        with open(a.out, "w", newline="") as fh:
            io.write_trajectory_csv(fh, traj)
    except OSError as exc:
        print(f"cannot write {a.out}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _emit({
        "version": io.SCHEMA_VERSION,
        "spec": _spec_dict(spec, cls),
        "function": f.label(),
        "policy": policy.kind.value,
        "seed": a.seed,
        "steps": len(traj) - 1,
        "empirical_rate": est.rate,
        "hit_minimiser": est.hit_minimiser,
        "diverged": traj.diverged,
        "certified_rate": certified,
        "sound": sound,
        "empirical_constant": sim.empirical_constant(traj, ref),
        "noise_bound_ok": sim.noise_bound_holds(traj, spec.delta),
    })
    return EXIT_OK


# -- verify -------------------------------------------------------------------------


@dataclass
class Stage:
    name: str
    passed: bool
    detail: str

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


def _stage_closed_form(spec, cls, cert) -> Stage:
    regime = rates.classify_regime(spec, cls)
    if not math.isfinite(regime.certified_rho):
        return Stage("closed_form", False, f"regime {regime.kind.value} has no closed form")
    err = abs(cert.rho - regime.certified_rho)
    return Stage("closed_form", err <= CLOSED_FORM_TOL,
                 f"{regime.kind.value}: certified {io.fmt17(cert.rho)} closed form {io.fmt17(regime.certified_rho)}")


def _stage_endpoints(spec, cert) -> Stage:
    rho, lam = cert.rho, cert.lam
    if cert.kind is freqcert.CertificateKind.OFF_BY_ONE_NOISY:
        vals = [freqcert.f_offbyone(t, rho, lam, cert.gamma, spec) for t in (rho, -rho)]
        concave = freqcert.circle_concave(spec, rho, lam, cert.gamma)
    elif cert.kind is freqcert.CertificateKind.SECTOR_NOISY:
        vals = [freqcert.f_sector(t, lam, spec) for t in (rho, -rho)]
        concave = True
    else:
        vals = [freqcert.sector_noiseless_endpoint(t, spec) for t in (rho, -rho)]
        concave = True
    tol = freqcert.ENDPOINT_RTOL * freqcert.endpoint_scale(spec, lam)
    ok = min(vals) >= -tol and concave
    return Stage("endpoints", ok, f"values {io.fmt17(vals[0])}, {io.fmt17(vals[1])}; concave {concave}")


def _stage_minimal_stability(spec, cert) -> Stage:
    if cert.kind is freqcert.CertificateKind.OFF_BY_ONE_NOISY:
        sys_ = freqcert.offbyone_system(spec)
        M = off_by_one_matrix(np.eye(1), spec.m, spec.L, cert.gamma)
    else:
        sys_ = gd_plant(spec.alpha)
        M = sector_matrix(np.eye(1), spec.m, spec.L)
    w = freqcert.minimal_stability_witness(sys_, M, cert.rho, spec.delta, m=spec.m)
    if w is None:
        return Stage("minimal_stability", False, "no rho-Schur closed loop found")
    return Stage("minimal_stability", True, f"N={io.fmt17(w.n_scalar)} epsilon={io.fmt17(w.epsilon)}")


def _lyapunov_functions(spec, cls) -> list[sim.TestFunction]:
    fs = [sim.QuadraticGain(spec.m, spec.m, spec.L), sim.SlopeZigzag(spec.m, spec.L)]
    if cls is FunctionClass.SECTOR:
        fs.append(sim.GainOscillator(spec.m, spec.L))
    else:
        fs.append(sim.DiagonalQuadratic([spec.m, spec.L], spec.m, spec.L))
    return fs


LYAPUNOV_POLICIES = (sim.NoiseKind.GREEDY, sim.NoiseKind.RANDOM_SPHERE, sim.NoiseKind.SCALED_MINUS)


def _stage_lyapunov(spec, cls, dc, kind, rho, seed, inject: bool) -> Stage:
    P = -dc.P if inject else dc.P
    for f in _lyapunov_functions(spec, cls):
        x0 = f.x_star + sim.random_starts(f.dim, 1, seed)[0]
        for pk in LYAPUNOV_POLICIES:
            traj = sim.run_inexact_gd(f, x0, spec.alpha, sim.NoisePolicy(pk, spec.delta, seed), 300)
            M = sim.constraint_for(spec, kind, dc.lam, dc.gamma, f.dim)
            res = sim.lyapunov_decay_check(traj, M, rho, P)
            if not res.holds:
                return Stage("lyapunov", False, f"{f.label()} / {pk.value}: violation at k={res.first_violation}")
    return Stage("lyapunov", True, f"{len(LYAPUNOV_POLICIES) * 3} runs of 300 steps")


def _stage_witness(spec, cls, cert) -> Stage:
    w = sim.lower_bound_witness(spec)
    gap = cert.rho - w.rate
    regime = rates.classify_regime(spec, cls)
    ok = gap >= -TIGHT_GAP_TOL and (regime.kind not in TIGHT_REGIMES or gap <= TIGHT_GAP_TOL)
    return Stage("witness", ok, f"witnessed {io.fmt17(w.rate)} ({w.branch}-branch), gap {io.fmt17(gap)}")


def run_verify(spec: ProblemSpec, cls: FunctionClass, seed: int = sim.DEFAULT_SEED,
               inject_fault: str | None = None) -> tuple[freqcert.Certificate | None, list[Stage]]:
    cert = freqcert.certify(spec, cls)
    if cert is None:
        return None, []
    stages = [_stage_closed_form(spec, cls, cert), _stage_endpoints(spec, cert),
              _stage_minimal_stability(spec, cert)]
    if not all(s.passed for s in stages):
        return cert, stages
    kind = _cert_kind(cert)
    rho = cert.rho + DISSIPATION_OFFSET
    dc = dissipation.dissipation_search_scalar(spec, rho, kind)
    if dc is None:
        stages.append(Stage("dissipation", False, f"no storage at rho={io.fmt17(rho)}"))
        return cert, stages
    stages.append(Stage("dissipation", True,
                        f"P eigenvalues {', '.join(io.fmt17(e) for e in eigvalsh(dc.P))}"))
    stages.append(_stage_lyapunov(spec, cls, dc, kind, rho, seed, inject_fault == "lyapunov"))
    if not stages[-1].passed:
        return cert, stages
    stages.append(_stage_witness(spec, cls, cert))
    return cert, stages


def cmd_verify(a) -> int:
    spec = _spec_from_args(a)
    cls = FunctionClass(a.cls)
    cert, stages = run_verify(spec, cls, a.seed, a.inject_fault)
    passed = cert is not None and all(s.passed for s in stages)
    _emit({
        "version": io.SCHEMA_VERSION,
        "spec": _spec_dict(spec, cls),
        "certificate": cert.to_dict() if cert is not None else None,
        "stages": [s.as_dict() for s in stages],
        "passed": passed,
    })
    if cert is None:
        print("not certifiable", file=sys.stderr)
        return EXIT_NOT_CERTIFIABLE
    if not passed:
        failed = next(s for s in stages if not s.passed)
        print(f"verification failed at stage: {failed.name}", file=sys.stderr)
        return EXIT_VERIFY_FAILED
    return EXIT_OK


# -- entry point --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="iqcgd", description="Convergence-rate certificates for inexact gradient descent.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("certify", help="certify a single spec")
    _add_spec_flags(c)
    c.add_argument("--rho", type=float, help="decision mode: is this rate certified?")
    c.add_argument("--experimental", action="store_true",
                   help="try strongly convex certificates outside the proven step-size window")
    c.set_defaults(func=cmd_certify)

    s = sub.add_parser("sweep", help="certify a parameter grid, CSV out")
    s.add_argument("config", nargs="?", help="key = value config file")
    s.add_argument("--m", help="value list")
    s.add_argument("--L", help="value list")
    s.add_argument("--alpha", help="value list")
    s.add_argument("--alpha-frac", dest="alpha_frac", help="value list, multiples of 2/(L+m)")
    s.add_argument("--delta", help="value list")
    s.add_argument("--class", dest="cls", help="sector, strongly-convex or both (comma separated)")
    s.add_argument("--output", help="CSV path (default stdout)")
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_sweep)

    m = sub.add_parser("simulate", help="run inexact gradient descent and compare with the certificate")
    _add_spec_flags(m, cls_default="")
    m.add_argument("--function", choices=FUNCTIONS, default="quadratic")
    m.add_argument("--k", type=float, help="quadratic gain (default L)")
    m.add_argument("--dim", type=int, default=1, help="quadratic dimension")
    m.add_argument("--spectrum", help="diagonal quadratic spectrum, value list")
    m.add_argument("--omega", type=float, default=50.0, help="oscillator frequency")
    m.add_argument("--policy", choices=[k.value for k in sim.NoiseKind], default="greedy")
    m.add_argument("--steps", type=int, default=500)
    m.add_argument("--seed", type=int, default=sim.DEFAULT_SEED)
    m.add_argument("--x0", help="start offset from the minimiser, value list (default all ones)")
    m.add_argument("--out", required=True, help="trajectory CSV path")
    m.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="end-to-end certificate check")
    _add_spec_flags(v)
    v.add_argument("--seed", type=int, default=sim.DEFAULT_SEED)
    v.add_argument("--inject-fault", choices=["lyapunov"], help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"iqcgd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # exit-code contract: never leak a traceback code
        print(f"iqcgd: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
