"""Seeded verification suites shared by the CLI and the acceptance tests.

Each suite returns a :class:`SuiteReport` of named checks with the worst
observed value and the threshold it is compared against.  All randomness
comes from a counter-based Philox stream keyed by ``(seed, suite)``.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import CellCoords, LatticeConfig, ReducedCoords, transverse_basis
from .potential import closed_lattice_sum, eval_closed_array, eval_series, local_normalized
from .quadrature import (
    AxisCap,
    Bump,
    RadialBump,
    Separable,
    TestFunction,
    allegretto_refinement,
    allegretto_terms,
    radial_witness_quotient,
    theorem35_check,
)
from .spectral import estimate_mu, ladder
from .supersolution import (
    calculus_at,
    f_ratio,
    lambda_lower,
    optimal_alpha,
    ratio_array,
    theta_array,
)

SUITES = ("identities", "supersolution", "allegretto", "sandwich", "local", "thm35")
EPS = np.finfo(float).eps


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "value": _num(self.value),
                "threshold": _num(self.threshold), "detail": self.detail}


@dataclass(frozen=True)
class SuiteReport:
    suite: str
    checks: list[Check]
    elapsed: float = field(default=0.0, compare=False)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> dict:
        return {"suite": self.suite, "passed": self.passed,
                "checks": [c.as_dict() for c in self.checks]}


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def rng_for(seed: int, stream: str) -> np.random.Generator:
    """Philox generator keyed by the seed and a per-suite stream label."""
    key = np.random.SeedSequence([int(seed) & (2 ** 64 - 1), *stream.encode()])
    return np.random.Generator(np.random.Philox(key))


def sample_cylinder(rng: np.random.Generator, cfg: LatticeConfig, n: int,
                    r_range: tuple[float, float] = (0.0, 1.0),
                    periods: float = 2.0) -> np.ndarray:
    """Cartesian points with axial coordinate in ``[-periods L, periods L]`` and
    distance to the axis uniform in ``r_range * R``."""
    d = cfg.d
    s = rng.uniform(-periods * cfg.period, periods * cfg.period, n)
    r = cfg.R * rng.uniform(r_range[0], r_range[1], n)
    basis = transverse_basis(d)  # (d-1, d) orthonormal rows
    g = rng.standard_normal((n, d - 1))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    direction = g @ basis
    return s[:, None] / math.sqrt(d) * np.ones(d) + r[:, None] * direction


def _reduced(x: np.ndarray, cfg: LatticeConfig) -> tuple[np.ndarray, np.ndarray]:
    from .geometry import reduced_coords_array
    return reduced_coords_array(x, cfg)


# ---------------------------------------------------------------------------

def closed_vs_series(d: int, samples: int = 10_000, seed: int = 0, R: float = 1.0,
                     tol: float = 1e-10) -> SuiteReport:
    """Closed form against the accelerated lattice series at random non-pole points."""
    cfg = LatticeConfig.normalized_config(d, R)
    x = sample_cylinder(rng_for(seed, f"potential-{d}"), cfg, samples)
    a, rho = _reduced(x, cfg)
    closed = eval_closed_array(a, rho, cfg)
    worst, worst_excess = 0.0, -math.inf
    for ai, ri, ci in zip(a.tolist(), rho.tolist(), closed.tolist()):
        sv = eval_series(ReducedCoords(ai, ri), cfg, tol).value
        diff = abs(ci - sv)
        excess = diff - (tol + 4 * EPS * abs(sv))
        if excess > worst_excess:
            worst_excess, worst = excess, diff
    return SuiteReport("potential", [Check(f"closed_vs_series_d{d}", worst_excess <= 0.0, worst_excess, 0.0,
                                           {"max_abs_diff_at_worst": worst, "samples": samples})])


def identities(cfg: LatticeConfig, samples: int = 1000, seed: int = 0,
               eps: float = 1e-4) -> SuiteReport:
    """Finite-difference audit of the derivatives of ``a`` and ``rho``."""
    x = sample_cylinder(rng_for(seed, "identities"), cfg, samples, r_range=(0.25, 1.0))
    max_err, min_order = 0.0, math.inf
    per_quantity: dict[str, float] = {}
    for p in x:
        rep = calculus_at(p, cfg, eps=eps)
        max_err = max(max_err, rep.fd_max_error)
        min_order = min(min_order, rep.fd_order)
        for k, v in rep.fd_errors.items():
            per_quantity[k] = max(per_quantity.get(k, 0.0), v)
    return SuiteReport("identities", [
        Check("fd_max_error", max_err <= 1e-6, max_err, 1e-6, {"eps": eps, "per_quantity": per_quantity}),
        Check("fd_order", min_order >= 1.9, min_order, 1.9),
    ])


def _phi_laplacian(x: np.ndarray, cfg: LatticeConfig, alpha: float, eps: float) -> np.ndarray:
    """Central-difference Laplacian of ``theta^alpha`` for each row of ``x``."""
    def phi(y):
        a, rho = _reduced(y, cfg)
        return theta_array(a, rho) ** alpha
    lap = -2.0 * cfg.d * phi(x)
    for i in range(cfg.d):
        e = np.zeros(cfg.d)
        e[i] = eps
        lap = lap + phi(x + e) + phi(x - e)
    return lap / (eps * eps)


def supersolution(cfg: LatticeConfig, samples: int = 10_000, seed: int = 0,
                  fd_samples: int = 300, eps: float = 1e-4) -> SuiteReport:
    """Pointwise certificate ``-Laplace(phi)/(V phi) >= lambda_lower`` plus a finite-difference audit.

    The audit compares the analytic ratio with the Richardson combination
    ``(4 L(eps) - L(2 eps))/3`` of central-difference Laplacians, at points
    whose reduced distance to every pole is at least 0.1 and whose distance
    to the axis is at least 5% of the radius.
    """
    d, R = cfg.d, cfg.R
    alpha = optimal_alpha(R, d)
    lam = lambda_lower(R, d)
    rng = rng_for(seed, "supersolution")
    x = sample_cylinder(rng, cfg, samples)
    a, rho = _reduced(x, cfg)
    pole = (np.abs(a - np.round(a)) < 1e-14) & (rho < 1e-14)
    ratio = ratio_array(a[~pole], rho[~pole], alpha, d)
    margin = float(np.min(ratio - lam))
    xf = sample_cylinder(rng, cfg, 4 * fd_samples, r_range=(0.05, 1.0))
    af, rf = _reduced(xf, cfg)
    keep = ((af - np.round(af)) ** 2 + rf ** 2) >= 0.01
    xf, af, rf = xf[keep][:fd_samples], af[keep][:fd_samples], rf[keep][:fd_samples]
    lap = (4.0 * _phi_laplacian(xf, cfg, alpha, eps) - _phi_laplacian(xf, cfg, alpha, 2 * eps)) / 3.0
    fd_ratio = -lap / (eval_closed_array(af, rf, cfg) * theta_array(af, rf) ** alpha)
    fd_err = float(np.max(np.abs(fd_ratio - ratio_array(af, rf, alpha, d))))
    return SuiteReport("supersolution", [
        Check("min_ratio_minus_lower", margin >= -1e-9, margin, -1e-9, {"alpha": alpha, "lower": lam}),
        Check("fd_ratio_match", fd_err <= 1e-6, fd_err, 1e-6, {"points": int(len(xf)), "eps": eps}),
    ])


def pole_limit(d: int, distance: float = 1e-3, directions: int = 64) -> SuiteReport:
    """Ratio with ``alpha = -(d-2)/4`` at reduced distance ``distance`` from the pole."""
    ang = np.linspace(0.0, math.pi, directions)
    a, rho = distance * np.cos(ang), distance * np.sin(ang)
    rho = np.maximum(rho, 1e-300)
    vals = ratio_array(a, rho, -(d - 2) / 4.0, d)
    err = float(np.max(np.abs(vals - (d - 2) ** 2 / 4.0)))
    return SuiteReport("pole_limit", [Check(f"pole_limit_d{d}", err <= 1e-4, err, 1e-4, {"distance": distance})])


def _random_separable(rng: np.random.Generator, cfg: LatticeConfig, window: float) -> Separable:
    L, R = cfg.period, cfg.R
    if rng.random() < 0.5:
        # touches the axis: keep the axial bump strictly between two poles
        k = int(rng.integers(math.floor(-window / L), math.ceil(window / L)))
        lo_cell, hi_cell = max(k * L, -window), min((k + 1) * L, window)
        span = hi_cell - lo_cell
        s0 = lo_cell + span * rng.uniform(0.05, 0.3)
        s1 = hi_cell - span * rng.uniform(0.05, 0.3)
        return Separable(Bump(s0, s1), AxisCap(R * rng.uniform(0.2, 1.0)))
    s0 = rng.uniform(-window, window * 0.8)
    s1 = min(window, s0 + rng.uniform(0.05, 1.0) * window)
    r0 = R * rng.uniform(0.02, 0.5)
    r1 = r0 + (R - r0) * rng.uniform(0.2, 1.0)
    return Separable(Bump(s0, s1), Bump(r0, r1))


def _random_radial(rng: np.random.Generator, cfg: LatticeConfig, window: float) -> RadialBump:
    L = cfg.period
    r_out = min(cfg.h / 2.0, cfg.R) * rng.uniform(0.3, 1.0)
    kmax = int(math.floor((window - r_out) / L))
    k = int(rng.integers(-kmax, kmax + 1)) if kmax > 0 else 0
    r_in = r_out * 10 ** rng.uniform(-6, math.log10(0.4))
    tau = (cfg.d - 2) / 2.0 * rng.uniform(0.02, 0.9)
    return RadialBump(k, r_in, r_out, tau)


def allegretto_pairs(cfg: LatticeConfig, count: int = 20, seed: int = 0) -> list[tuple[TestFunction, float]]:
    rng = rng_for(seed, "allegretto")
    alpha_opt = optimal_alpha(cfg.R, cfg.d)
    pairs = []
    for i in range(count):
        u = _random_radial(rng, cfg, 2 * cfg.period) if i % 4 == 3 else _random_separable(rng, cfg, 2 * cfg.period)
        alpha = alpha_opt if i % 5 == 0 else float(rng.uniform(-0.5, 0.2))
        pairs.append((u, alpha))
    return pairs


def allegretto(cfg: LatticeConfig, count: int = 20, seed: int = 0,
               rel: float = 1e-6, min_order: float = 2.0) -> SuiteReport:
    """Identity residual at default refinement and its decay on uniform meshes."""
    worst_rel, worst_order = 0.0, math.inf
    min_rhs = math.inf
    for u, alpha in allegretto_pairs(cfg, count, seed):
        t = allegretto_terms(u, alpha, cfg)
        scale = max(abs(t.lhs.value), abs(t.rhs.value))
        worst_rel = max(worst_rel, t.residual / scale)
        min_rhs = min(min_rhs, t.rhs.value)
        res = allegretto_refinement(u, alpha, cfg, levels=(2, 4, 8))
        # ignore levels already at rounding level
        floor = 1e-12 * scale
        if res[-2] > floor and res[-1] > floor:
            worst_order = min(worst_order, math.log2(res[-2] / res[-1]))
    return SuiteReport("allegretto", [
        Check("relative_residual", worst_rel <= rel, worst_rel, rel, {"pairs": count}),
        Check("refinement_order", worst_order >= min_order, worst_order, min_order),
        Check("rhs_nonnegative", min_rhs >= 0.0, min_rhs, 0.0),
    ])


def sandwich(cfg: LatticeConfig, sizes: Sequence[tuple[int, int]] = ((256, 128),),
             delta_factor: float = 1e-3, band: float = 0.05):
    """Finest-grid eigenvalue against ``[lambda_lower - 1e-6, (d-2)^2/4 (1 + band)]``."""
    delta = delta_factor * cfg.h
    est = estimate_mu(cfg, ladder(cfg, sizes, delta), band=band)
    checks = [
        Check("mu_hat_above_lower", est.lower_ok, est.mu_hat - est.lower, -1e-6,
              {"mu_hat": est.mu_hat, "lower": est.lower}),
        Check("mu_hat_below_upper_band", est.upper_ok, est.mu_hat - est.upper * (1 + band), 0.0,
              {"mu_hat": est.mu_hat, "upper": est.upper, "band": band}),
    ]
    if len(sizes) > 1:
        checks.append(Check("ladder_monotone", est.monotone, est.estimates[0].mu_hat - est.mu_hat, 0.0))
    return SuiteReport("sandwich", checks), est


def local(cfg: LatticeConfig, samples: int = 1000, seed: int = 0) -> SuiteReport:
    """``1 < V |x - a_0|^2 <= 1 + 4 pi^2 |x - a_0|^2 / (3 h^2)`` on the ball ``B_{h/2}(a_0)``."""
    rng = rng_for(seed, "local")
    d, h = cfg.d, cfg.h
    g = rng.standard_normal((samples, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = (h / 2.0) * rng.random(samples) ** (1.0 / d)
    x = g * rad[:, None]
    a, rho = _reduced(x, cfg)
    dist2 = np.sum(x * x, axis=1)
    vals = np.array([local_normalized(ReducedCoords(ai, ri), cfg, 0) for ai, ri in zip(a, rho)])
    lower_margin = float(np.min(vals - 1.0))
    upper_margin = float(np.min(1.0 + 4.0 * math.pi ** 2 * dist2 / (3.0 * h * h) - vals))
    return SuiteReport("local", [
        Check("strictly_above_one", lower_margin > -1e-12, lower_margin, -1e-12),
        Check("below_quadratic_bound", upper_margin >= 0.0, upper_margin, 0.0),
    ])


def thm35_functions(cfg: LatticeConfig, count: int = 50, seed: int = 0) -> list[TestFunction]:
    rng = rng_for(seed, "thm35")
    window = 2.0 * cfg.R
    return [_random_radial(rng, cfg, window) if i % 2 else _random_separable(rng, cfg, window)
            for i in range(count)]


def thm35(cfg: LatticeConfig, count: int = 50, seed: int = 0) -> SuiteReport:
    worst = math.inf
    for u in thm35_functions(cfg, count, seed):
        c = theorem35_check(u, cfg)
        worst = min(worst, (c.lhs - c.rhs + c.error) / max(c.rhs, 1e-300))
    return SuiteReport("thm35", [Check("lhs_minus_rhs_relative", worst >= 0.0, worst, 0.0, {"functions": count})])


def witness(d: int, tau: float = 0.01, r_in: float = 1e-6, cfg: LatticeConfig | None = None) -> SuiteReport:
    cfg = cfg or LatticeConfig.normalized_config(d, 1.0)
    r_out = min(cfg.h / 2.0, cfg.R)
    q = radial_witness_quotient(tau, r_in, r_out, d, cfg)
    target = (d - 2) ** 2 / 4.0 + (0.02 if d == 3 else 0.02 * (d - 2) ** 2)
    return SuiteReport("witness", [Check(f"witness_quotient_d{d}", q <= target, q, target,
                                         {"tau": tau, "r_in": r_in, "r_out": r_out})])


def run_suite(name: str, cfg: LatticeConfig, samples: int | None, seed: int,
              sizes: Sequence[tuple[int, int]] = ((256, 128),), delta_factor: float = 1e-3) -> SuiteReport:
    t0 = time.perf_counter()
    if name == "identities":
        rep = identities(cfg, samples or 1000, seed)
    elif name == "supersolution":
        rep = supersolution(cfg, samples or 10_000, seed)
    elif name == "allegretto":
        rep = allegretto(cfg, samples or 20, seed)
    elif name == "sandwich":
        rep, _ = sandwich(cfg, sizes, delta_factor)
    elif name == "local":
        rep = local(cfg, samples or 1000, seed)
    elif name == "thm35":
        rep = thm35(cfg, samples or 50, seed)
    else:
        raise KeyError(name)
    return SuiteReport(rep.suite, rep.checks, time.perf_counter() - t0)
