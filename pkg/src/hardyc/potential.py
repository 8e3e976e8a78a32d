"""The lattice potential ``V(x) = sum_k 1/|x - k hbar|^2``.

Two independent evaluation routes are provided:

* :func:`eval_series` sums ``(1/(d h^2)) sum_k 1/((k-a)^2 + rho^2)`` directly,
  centred on the nearest pole, and closes the two discarded tails with an
  Euler-Maclaurin correction whose remainder is bounded rigorously.
* :func:`eval_closed` uses the residue-summed closed form
  ``pi/rho * sinh(2 pi rho) / (cosh(2 pi rho) - cos(2 pi a)) / (d h^2)``,
  rewritten with half-angle identities so that nothing cancels near the
  axis or near a pole.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geometry import LatticeConfig, ReducedCoords

__all__ = [
    "Method",
    "PotentialValue",
    "PoleError",
    "RHO_SWITCH",
    "DEFAULT_TOL",
    "tail_bound",
    "em_tail",
    "em_remainder_bound",
    "eval_series",
    "eval_closed",
    "closed_lattice_sum",
    "eval_closed_array",
    "local_normalized",
]

RHO_SWITCH = 1e-3
DEFAULT_TOL = 1e-10
POLE_ATOL = 1e-14

# Euler-Maclaurin order: corrections through B_8, remainder from the 8th derivative
_EM_ORDER = 4
_BERNOULLI = (1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0)
_ZETA_2P = 1.0040773561979443  # zeta(8)
_MIN_HALF_WIDTH = 4
_MAX_RAW_TERMS = 10_000_000


class Method(str, Enum):
    SERIES = "series"
    CLOSED = "closed"


class PoleError(ValueError):
    """Raised when a point coincides with a lattice pole."""


@dataclass(frozen=True)
class PotentialValue:
    value: float
    method: Method
    error_bound: float = 0.0
    terms_used: int = 0


def _frac_offset(a: float) -> tuple[int, float]:
    k0 = int(round(a))
    return k0, a - k0


def _check_not_pole(c: ReducedCoords) -> None:
    _, af = _frac_offset(c.a)
    if c.rho <= POLE_ATOL and abs(af) <= POLE_ATOL:
        raise PoleError(f"(a, rho) = ({c.a!r}, {c.rho!r}) is a pole of V")


def tail_bound(N: int, a: float, rho: float) -> float:
    """Crude integral-test bound on ``sum_{|k - k0| > N} 1/((k-a)^2 + rho^2)``.

    ``k0`` is the nearest integer to ``a`` and ``a* = a - k0``; the bound is
    ``2 / (N - |a*| - 1)``, independent of ``rho`` and decreasing in ``N``.
    """
    _, af = _frac_offset(a)
    if N < abs(af) + 2:
        raise ValueError(f"N={N} too small for offset {af}: need N >= |a*| + 2")
    return 2.0 / (N - abs(af) - 1.0)


def _q_poly(m: int, x: float, rho: float) -> float:
    # Im((x + i rho)^m) / rho, written without the division
    total = 0.0
    for j in range(1, m + 1, 2):
        sign = -1.0 if (j // 2) % 2 else 1.0
        total += sign * math.comb(m, j) * x ** (m - j) * rho ** (j - 1)
    return total


def _deriv(n: int, x: float, rho: float) -> float:
    """n-th derivative of ``t -> 1/(t^2 + rho^2)`` at ``t = x``."""
    return (-1) ** n * math.factorial(n) * _q_poly(n + 1, x, rho) / (x * x + rho * rho) ** (n + 1)


def em_tail(u: float, rho: float) -> float:
    """Euler-Maclaurin estimate of ``sum_{j >= 0} 1/((u + j)^2 + rho^2)`` for ``u > 0``."""
    if u <= 0:
        raise ValueError("tail start must be positive")
    integral = 1.0 / u if rho == 0.0 else math.atan2(rho, u) / rho
    parts = [integral, 0.5 / (u * u + rho * rho)]
    for i, b in enumerate(_BERNOULLI, start=1):
        parts.append(-b / math.factorial(2 * i) * _deriv(2 * i - 1, u, rho))
    return math.fsum(parts)


def em_remainder_bound(u: float) -> float:
    """Bound on the error of :func:`em_tail`, uniform in ``rho``."""
    p2 = 2 * _EM_ORDER
    return 2.0 * _ZETA_2P * math.factorial(p2) / ((2.0 * math.pi) ** p2 * u ** (p2 + 1))


def _half_width_for(tol_reduced: float, af: float) -> int:
    # both tails start at distance >= N + 1 - |a*|; each gets half the budget
    c = 2.0 * 2.0 * _ZETA_2P * math.factorial(2 * _EM_ORDER) / (2.0 * math.pi) ** (2 * _EM_ORDER)
    u_needed = (c / tol_reduced) ** (1.0 / (2 * _EM_ORDER + 1))
    return max(_MIN_HALF_WIDTH, math.ceil(u_needed + abs(af) - 1.0))


def eval_series(c: ReducedCoords, cfg: LatticeConfig, tol: float = DEFAULT_TOL,
                accelerate: bool = True) -> PotentialValue:
    """Truncated lattice sum with a rigorous bound on what was left out.

    Terms ``k0 - N .. k0 + N`` are summed exactly rounded (``math.fsum``).
    With ``accelerate`` the tails are added back by Euler-Maclaurin and
    ``error_bound`` bounds the Euler-Maclaurin remainder; without it the
    tails are dropped and ``error_bound`` is :func:`tail_bound`, which needs
    ``O(1/tol)`` terms.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol!r}")
    _check_not_pole(c)
    k0, af = _frac_offset(c.a)
    rho = c.rho
    tol_reduced = tol * cfg.dh2
    if accelerate:
        N = _half_width_for(tol_reduced, af)
    else:
        N = max(_MIN_HALF_WIDTH, math.ceil(2.0 / tol_reduced + abs(af) + 1.0))
        if N > _MAX_RAW_TERMS:
            raise ValueError(f"raw truncation would need N={N} terms; use accelerate=True")
    rho2 = rho * rho
    terms = [1.0 / (af * af + rho2)]
    for j in range(1, N + 1):
        terms.append(1.0 / ((j - af) ** 2 + rho2))
        terms.append(1.0 / ((j + af) ** 2 + rho2))
    if accelerate:
        u_right, u_left = N + 1 - af, N + 1 + af
        terms.append(em_tail(u_right, rho))
        terms.append(em_tail(u_left, rho))
        bound = em_remainder_bound(u_right) + em_remainder_bound(u_left)
    else:
        bound = tail_bound(N, af, rho)
    return PotentialValue(
        value=math.fsum(terms) / cfg.dh2,
        method=Method.SERIES,
        error_bound=bound / cfg.dh2,
        terms_used=2 * N + 1,
    )


def _sinh_over(x: np.ndarray) -> np.ndarray:
    """``sinh(pi x)/x`` with the removable point at 0 handled by Taylor."""
    x = np.asarray(x, dtype=float)
    t2 = (math.pi * x) ** 2
    taylor = math.pi * (1.0 + t2 / 6.0 * (1.0 + t2 / 20.0 * (1.0 + t2 / 42.0)))
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = np.sinh(math.pi * x) / x
    return np.where(x < RHO_SWITCH, taylor, direct)


def closed_lattice_sum(a, rho) -> np.ndarray:
    """``sum_k 1/((k-a)^2 + rho^2)`` in closed form (vectorised, no pole check).

    Equal to ``pi/rho * sinh(2 pi rho) / (cosh(2 pi rho) - cos(2 pi a))``,
    evaluated as ``pi cosh(pi rho) sinh(pi rho)/rho / (sinh^2(pi rho) + sin^2(pi a))``.
    """
    a = np.asarray(a, dtype=float)
    rho = np.asarray(rho, dtype=float)
    af = a - np.round(a)
    sa = np.sin(math.pi * af)
    pr = math.pi * rho
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        sh = np.sinh(pr)
        near = math.pi * np.cosh(pr) * _sinh_over(rho) / (sh * sh + sa * sa)
        # large rho: divide through by sinh^2 to stay finite
        far = math.pi / (rho * np.tanh(pr) * (1.0 + (sa / sh) ** 2))
    return np.where(pr > 1.0, far, near)


def eval_closed_array(a, rho, cfg: LatticeConfig) -> np.ndarray:
    """Vectorised closed form ``V(a, rho)``; poles evaluate to ``inf``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        v = closed_lattice_sum(a, rho) / cfg.dh2
    return np.where(np.isnan(v), np.inf, v)


def eval_closed(c: ReducedCoords, cfg: LatticeConfig) -> PotentialValue:
    _check_not_pole(c)
    value = float(closed_lattice_sum(c.a, c.rho)) / cfg.dh2
    return PotentialValue(value=value, method=Method.CLOSED)


def local_normalized(c: ReducedCoords, cfg: LatticeConfig, k: int) -> float:
    """``V(x) |x - a_k|^2`` for ``x`` in the punctured ball ``B_{h/2}(a_k)``."""
    dist2_reduced = (c.a - k) ** 2 + c.rho ** 2
    if dist2_reduced == 0.0:
        raise PoleError(f"point coincides with pole a_{k}")
    # |x - a_k|^2 < h^2/4  <=>  (a-k)^2 + rho^2 < 1/(4d)
    if not dist2_reduced * 4 * cfg.d < 1.0:
        raise ValueError(f"point is outside B_(h/2)(a_{k})")
    return float(closed_lattice_sum(c.a, c.rho)) * dist2_reduced
