"""Closed-form calculus for the supersolution ``phi = theta^alpha`` and the
constants of the Hardy bounds.

``theta = e^{2 pi rho} + e^{-2 pi rho} - 2 cos(2 pi a)`` vanishes exactly at
the poles.  For ``dh = 1`` the ratio ``-Laplace(phi) / (V phi)`` is the
quadratic ``-2 alpha (d-2) - 4 pi alpha^2 f(a, rho)`` with
``0 <= f <= C1(R)`` on the cylinder, which gives the lower bound
``(d-2)^2 / (4 pi C1(R))`` at ``alpha = -(d-2) / (4 pi C1(R))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import LatticeConfig, ReducedCoords, reduced_coords_array
from .potential import RHO_SWITCH, PoleError, POLE_ATOL

__all__ = [
    "DimensionError",
    "SupersolutionParams",
    "CalculusReport",
    "CutoffSpec",
    "calculus_at",
    "analytic_calculus",
    "theta",
    "theta_array",
    "f_ratio",
    "ratio_neg_lap_phi_over_V_phi",
    "ratio_array",
    "C1",
    "g_rho_coth",
    "optimal_alpha",
    "lambda_lower",
    "theorem2_bounds",
    "theorem35_constant",
    "fd_check",
    "fd_order",
]


class DimensionError(ValueError):
    """Bound formulas need ``d >= 3``; at ``d = 2`` every constant is zero."""


def _require_d3(d: int) -> None:
    if int(d) != d or d < 3:
        raise DimensionError(f"bound formulas require integer d >= 3, got d={d!r}")


@dataclass(frozen=True)
class SupersolutionParams:
    alpha: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.alpha):
            raise ValueError("alpha must be finite")

    @classmethod
    def optimal(cls, R: float, d: int) -> "SupersolutionParams":
        return cls(optimal_alpha(R, d))


# ---------------------------------------------------------------------------
# finite differences

def fd_check(fn: Callable[[np.ndarray], float], p, eps: float) -> tuple[np.ndarray, float]:
    """Central-difference gradient and ``2d+1``-point Laplacian of ``fn`` at ``p``."""
    x = np.asarray(p, dtype=float)
    f0 = fn(x)
    n = x.shape[0]
    grad = np.empty(n)
    lap = 0.0
    for i in range(n):
        e = np.zeros(n)
        e[i] = eps
        fp, fm = fn(x + e), fn(x - e)
        grad[i] = (fp - fm) / (2.0 * eps)
        lap += fp - 2.0 * f0 + fm
    return grad, lap / (eps * eps)


def fd_order(err_coarse: float, err_fine: float, ratio: float = 2.0) -> float:
    """Observed convergence order from errors at steps ``ratio*eps`` and ``eps``."""
    if err_fine <= 0.0:
        return math.inf
    return math.log(err_coarse / err_fine) / math.log(ratio)


# ---------------------------------------------------------------------------
# calculus of a and rho

@dataclass(frozen=True)
class CalculusReport:
    grad_a: np.ndarray
    grad_rho: np.ndarray
    lap_a: float
    lap_rho: float
    norm2_grad_rho: float
    div_grad_rho_over_rho: float
    dot_grad_rho_grad_a: float
    fd_max_error: float
    fd_errors: dict
    fd_order: float


def analytic_calculus(x: np.ndarray, cfg: LatticeConfig) -> dict:
    """General-``h`` derivatives of ``a`` and ``rho`` at a Cartesian point."""
    d, h = cfg.d, cfg.h
    a, rho = (float(v) for v in reduced_coords_array(x, cfg))
    if rho <= 0.0:
        raise ValueError("derivatives of rho are singular on the axis (rho = 0)")
    dh, d2h2 = d * h, d * d * h * h
    grad_a = np.full(d, 1.0 / dh)
    grad_rho = (d * x - dh * a) / (d2h2 * rho)
    return {
        "a": a,
        "rho": rho,
        "grad_a": grad_a,
        "grad_rho": grad_rho,
        "lap_a": 0.0,
        "lap_rho": d * (d - 2) / (d2h2 * rho),
        "norm2_grad_rho": d / d2h2,
        "div_grad_rho_over_rho": d * (d - 3) / (d2h2 * rho * rho),
        "dot_grad_rho_grad_a": 0.0,
    }


def _fd_quantities(x: np.ndarray, cfg: LatticeConfig, eps: float) -> dict:
    a_fn = lambda y: float(reduced_coords_array(y, cfg)[0])
    rho_fn = lambda y: float(reduced_coords_array(y, cfg)[1])
    log_rho = lambda y: math.log(rho_fn(y))
    ga, la = fd_check(a_fn, x, eps)
    gr, lr = fd_check(rho_fn, x, eps)
    _, llog = fd_check(log_rho, x, eps)
    return {
        "grad_a": ga,
        "grad_rho": gr,
        "lap_a": la,
        "lap_rho": lr,
        "norm2_grad_rho": float(gr @ gr),
        # div(grad rho / rho) = Laplace(log rho)
        "div_grad_rho_over_rho": llog,
        "dot_grad_rho_grad_a": float(gr @ ga),
    }


_NONLINEAR = ("grad_rho", "lap_rho", "norm2_grad_rho", "div_grad_rho_over_rho")


def _errors(exact: dict, approx: dict) -> dict:
    out = {}
    for key, val in approx.items():
        out[key] = float(np.max(np.abs(np.asarray(val) - np.asarray(exact[key]))))
    return out


def calculus_at(p, cfg: LatticeConfig, eps: float = 1e-4, order_eps: float = 1e-2) -> CalculusReport:
    """Analytic derivatives of ``a`` and ``rho`` with a finite-difference audit.

    ``fd_max_error`` is the worst discrepancy at step ``eps``; ``fd_order``
    is the observed order of the nonlinear quantities between steps
    ``2*order_eps`` and ``order_eps``, where truncation dominates rounding.
    """
    x = np.asarray(p, dtype=float)
    if x.shape != (cfg.d,):
        raise ValueError(f"point has shape {x.shape}, expected ({cfg.d},)")
    exact = analytic_calculus(x, cfg)
    errs = _errors(exact, _fd_quantities(x, cfg, eps))
    coarse = _errors(exact, _fd_quantities(x, cfg, 2 * order_eps))
    fine = _errors(exact, _fd_quantities(x, cfg, order_eps))
    orders = [fd_order(coarse[k], fine[k]) for k in _NONLINEAR
              if coarse[k] > 1e3 * np.finfo(float).eps * (1 + abs(np.max(exact[k])))]
    return CalculusReport(
        grad_a=exact["grad_a"],
        grad_rho=exact["grad_rho"],
        lap_a=exact["lap_a"],
        lap_rho=exact["lap_rho"],
        norm2_grad_rho=exact["norm2_grad_rho"],
        div_grad_rho_over_rho=exact["div_grad_rho_over_rho"],
        dot_grad_rho_grad_a=exact["dot_grad_rho_grad_a"],
        fd_max_error=max(errs.values()),
        fd_errors=errs,
        fd_order=min(orders) if orders else math.inf,
    )


# ---------------------------------------------------------------------------
# theta, the ratio and its geometric factor

def theta_array(a, rho) -> np.ndarray:
    """``2 cosh(2 pi rho) - 2 cos(2 pi a)`` as ``4 (sinh^2(pi rho) + sin^2(pi a))``."""
    a = np.asarray(a, dtype=float)
    af = a - np.round(a)
    sh = np.sinh(math.pi * np.asarray(rho, dtype=float))
    sa = np.sin(math.pi * af)
    return 4.0 * (sh * sh + sa * sa)


def theta(c: ReducedCoords) -> float:
    return float(theta_array(c.a, c.rho))


def f_ratio(a, rho) -> np.ndarray:
    """``rho (e^{2 pi rho} + e^{-2 pi rho} + 2 cos 2 pi a) / (e^{2 pi rho} - e^{-2 pi rho})``.

    Rewritten as ``(sinh^2(pi rho) + cos^2(pi a)) * rho / (sinh(pi rho) cosh(pi rho))``;
    the axis value is ``cos^2(pi a) / pi``.
    """
    a = np.asarray(a, dtype=float)
    rho = np.asarray(rho, dtype=float)
    af = a - np.round(a)
    ca = np.cos(math.pi * af)
    pr = math.pi * rho
    t2 = pr * pr
    # rho / sinh(pi rho), Taylor below the switch
    inv_taylor = (1.0 / math.pi) * (1.0 - t2 / 6.0 + 7.0 * t2 * t2 / 360.0 - 31.0 * t2 ** 3 / 15120.0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        inv_direct = rho / np.sinh(pr)
        ros = np.where(rho < RHO_SWITCH, inv_taylor, inv_direct)
        sh = np.sinh(pr)
        near = (sh * sh + ca * ca) * ros / np.cosh(pr)
        far = rho * (np.tanh(pr) + ca * ca / (sh * np.cosh(pr)))
    return np.where(pr > 1.0, far, near)


def ratio_array(a, rho, alpha: float, d: int) -> np.ndarray:
    """Vectorised ``-Laplace(phi)/(V phi)``, no pole or normalisation checks."""
    return -2.0 * alpha * (d - 2) - 4.0 * math.pi * alpha * alpha * f_ratio(a, rho)


def ratio_neg_lap_phi_over_V_phi(c: ReducedCoords, params: SupersolutionParams,
                                 d: int | LatticeConfig) -> float:
    """``-Laplace(theta^alpha) / (V theta^alpha)`` at a non-pole point.

    Pass either ``d`` (the ``dh = 1`` lattice is implied) or a normalized
    :class:`LatticeConfig`.
    """
    if isinstance(d, LatticeConfig):
        if not d.normalized:
            raise ValueError("the ratio formula is stated for the dh = 1 lattice")
        d = d.d
    if c.rho <= POLE_ATOL and abs(c.a - round(c.a)) <= POLE_ATOL:
        raise PoleError("ratio is undefined at a pole; take the limit instead")
    return float(ratio_array(c.a, c.rho, params.alpha, d))


# ---------------------------------------------------------------------------
# constants

def g_rho_coth(rho) -> np.ndarray:
    """``rho coth(pi rho)``, increasing, with value ``1/pi`` at 0."""
    rho = np.asarray(rho, dtype=float)
    x = math.pi * rho
    x2 = x * x
    series = (1.0 + x2 / 3.0 - x2 * x2 / 45.0 + 2.0 * x2 ** 3 / 945.0) / math.pi
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = rho / np.tanh(x)
    return np.where(x < 1e-4, series, direct)


def C1(R: float, d: int) -> float:
    """``R sqrt(d) coth(pi R sqrt(d))``; tends to ``1/pi`` as ``R -> 0``."""
    if not R > 0:
        raise ValueError(f"R must be positive, got {R!r}")
    if int(d) != d or d < 1:
        raise ValueError(f"d must be a positive integer, got {d!r}")
    return float(g_rho_coth(R * math.sqrt(d)))


def optimal_alpha(R: float, d: int) -> float:
    _require_d3(d)
    return -(d - 2) / (4.0 * math.pi * C1(R, d))


def lambda_lower(R: float, d: int) -> float:
    """Hardy lower bound ``(d-2)^2 / (4 pi C1(R))``."""
    _require_d3(d)
    return (d - 2) ** 2 / (4.0 * math.pi * C1(R, d))


def theorem2_bounds(R: float, d: int) -> tuple[float, float]:
    _require_d3(d)
    return lambda_lower(R, d), (d - 2) ** 2 / 4.0


# ---------------------------------------------------------------------------
# explicit constant for C int u^2 + int |grad u|^2 >= (d-2)^2/4 int V u^2

@dataclass(frozen=True)
class CutoffSpec:
    """Radial cutoff ``g`` with ``g = 1`` on ``[0, h/8]`` and ``g = 0`` past ``h/4``.

    The transition is the quintic smoothstep in ``t = (r - h/8) / (h/8)``,
    which makes ``g`` C^2.
    """

    samples: int = 4096
    safety: float = 1.01

    @staticmethod
    def profile(r, h: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        r = np.asarray(r, dtype=float)
        w = h / 8.0
        t = np.clip((r - w) / w, 0.0, 1.0)
        g = 1.0 - t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)
        inside = (r > w) & (r < 2 * w)
        g1 = np.where(inside, -30.0 * t * t * (1.0 - t) ** 2 / w, 0.0)
        g2 = np.where(inside, -60.0 * t * (1.0 - t) * (1.0 - 2.0 * t) / (w * w), 0.0)
        return g, g1, g2

    def sup_xi_lap_xi(self, h: float, d: int, samples: int | None = None) -> float:
        """Sampled ``sup |xi Laplace(xi)|`` for ``xi(x) = g(|x - a_k|)`` in ``d`` dimensions."""
        n = self.samples if samples is None else samples
        r = np.linspace(h / 8.0, h / 4.0, n)
        g, g1, g2 = self.profile(r, h)
        return float(np.max(np.abs(g * (g2 + (d - 1) * g1 / r))))


def _floor_ratio(R: float, h: float) -> int:
    q = R / h
    k = round(q)
    return int(k) if abs(q - k) <= 1e-12 * max(1.0, q) else math.floor(q)


def theorem35_constant(cfg: LatticeConfig, cutoff: CutoffSpec | None = None) -> float:
    """``C = safety * sup|xi Laplace xi| + (d-2)^2/4 * (128 [R/h] / h^2 + pi^2 / (3 h^2))``."""
    _require_d3(cfg.d)
    cutoff = cutoff or CutoffSpec()
    h = cfg.h
    series = 128.0 * _floor_ratio(cfg.R, h) / (h * h) + math.pi ** 2 / (3.0 * h * h)
    return cutoff.safety * cutoff.sup_xi_lap_xi(h, cfg.d) + (cfg.d - 2) ** 2 / 4.0 * series
