"""Lattice configuration and coordinate maps for the axial pole lattice.

Poles sit at ``a_k = k * (h, ..., h)`` on the line ``x_1 = ... = x_d``.
Everything downstream depends on a point only through the reduced pair
``(a, rho)``: ``a`` is the axial lattice coordinate (poles at integers) and
``rho`` the scaled distance to the axis.  ``CellCoords`` ``(s, r)`` are the
same quantities in physical length units, ``(a, rho) = (s, r) / (h sqrt(d))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

__all__ = [
    "LatticeConfig",
    "ReducedCoords",
    "CellCoords",
    "reduced_coords",
    "reduced_coords_array",
    "norm_identity_residual",
    "in_cylinder",
    "embed",
    "transverse_basis",
]


@dataclass(frozen=True)
class LatticeConfig:
    """Dimension ``d``, pole spacing ``h`` and cylinder radius ``R``.

    Use :meth:`normalized` for the ``d*h = 1`` convention; ``h`` is then the
    double nearest to ``1/d`` and ``normalized`` is recorded so that the
    formulas that only hold under ``dh = 1`` can check it.
    """

    d: int
    h: float
    R: float
    normalized: bool = False

    def __post_init__(self) -> None:
        if int(self.d) != self.d or self.d < 2:
            raise ValueError(f"dimension must be an integer >= 2, got {self.d!r}")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValueError(f"spacing h must be positive, got {self.h!r}")
        if not (self.R > 0 and math.isfinite(self.R)):
            raise ValueError(f"radius R must be positive, got {self.R!r}")
        if self.normalized and self.h != float(Fraction(1, int(self.d))):
            raise ValueError("normalized config requires h == 1/d")

    @classmethod
    def normalized_config(cls, d: int, R: float) -> "LatticeConfig":
        return cls(d=int(d), h=float(Fraction(1, int(d))), R=float(R), normalized=True)

    @property
    def sqrt_d(self) -> float:
        return math.sqrt(self.d)

    @property
    def period(self) -> float:
        """Axial distance ``L = h sqrt(d)`` between consecutive poles."""
        return self.h * math.sqrt(self.d)

    @property
    def dh2(self) -> float:
        """The prefactor ``d h^2`` in ``|x - a_k|^2 = d h^2 ((k-a)^2 + rho^2)``."""
        return self.d * self.h * self.h

    @property
    def rho_max(self) -> float:
        """Reduced radius of the cylinder; equals ``R sqrt(d)`` when ``dh = 1``."""
        return self.R / self.period


@dataclass(frozen=True)
class ReducedCoords:
    a: float
    rho: float

    def __post_init__(self) -> None:
        if not self.rho >= 0:
            raise ValueError(f"rho must be >= 0, got {self.rho!r}")

    def is_pole(self, atol: float = 1e-14) -> bool:
        return self.rho <= atol and abs(self.a - round(self.a)) <= atol


@dataclass(frozen=True)
class CellCoords:
    s: float
    r: float

    def __post_init__(self) -> None:
        if not self.r >= 0:
            raise ValueError(f"r must be >= 0, got {self.r!r}")

    def reduced(self, cfg: LatticeConfig) -> ReducedCoords:
        L = cfg.period
        return ReducedCoords(self.s / L, self.r / L)


def _as_point(p, cfg: LatticeConfig) -> np.ndarray:
    x = np.asarray(p, dtype=float)
    if x.ndim != 1 or x.shape[0] != cfg.d:
        raise ValueError(f"point has shape {x.shape}, expected ({cfg.d},)")
    return x


def reduced_coords_array(x: np.ndarray, cfg: LatticeConfig) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`reduced_coords` over the last axis of ``x``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != cfg.d:
        raise ValueError(f"points have trailing dimension {x.shape[-1]}, expected {cfg.d}")
    d, h = cfg.d, cfg.h
    total = x.sum(axis=-1)
    a = total / (d * h)
    # centred form: d|x|^2 - (sum x)^2 = d * |x - mean|^2, no cancellation
    centred = x - (total / d)[..., None]
    rho2 = d * np.einsum("...i,...i->...", centred, centred) / (d * d * h * h)
    return a, np.sqrt(np.maximum(rho2, 0.0))


def reduced_coords(p, cfg: LatticeConfig) -> ReducedCoords:
    """Map a Cartesian point to ``(a, rho)``.

    ``a = sum(x) / (d h)`` and ``rho^2 = (d |x|^2 - (sum x)^2) / (d h)^2``.
    """
    x = _as_point(p, cfg)
    a, rho = reduced_coords_array(x, cfg)
    return ReducedCoords(float(a), float(rho))


def norm_identity_residual(p, cfg: LatticeConfig) -> float:
    """``| |x|^2 - d h^2 (rho^2 + a^2) |``; zero up to rounding."""
    x = _as_point(p, cfg)
    c = reduced_coords(x, cfg)
    return abs(float(x @ x) - cfg.dh2 * (c.rho * c.rho + c.a * c.a))


def in_cylinder(c: ReducedCoords, cfg: LatticeConfig) -> bool:
    """Closed-cylinder membership, ``rho <= R / (h sqrt(d))`` (``R sqrt(d)`` if ``dh = 1``)."""
    return c.rho <= cfg.rho_max


def transverse_basis(d: int) -> np.ndarray:
    """Orthonormal basis (rows) of the hyperplane orthogonal to ``(1,...,1)``."""
    if d < 2:
        raise ValueError("need d >= 2")
    # Helmert rows are exactly orthogonal to the axis and to each other
    rows = np.zeros((d - 1, d))
    for k in range(1, d):
        rows[k - 1, :k] = 1.0
        rows[k - 1, k] = -k
        rows[k - 1] /= math.sqrt(k * (k + 1))
    return rows


def embed(c: CellCoords, direction, cfg: LatticeConfig, tol: float = 1e-12) -> np.ndarray:
    """Cartesian point at axial arc length ``s`` and distance ``r`` along ``direction``."""
    u = np.asarray(direction, dtype=float)
    if u.shape != (cfg.d,):
        raise ValueError(f"direction has shape {u.shape}, expected ({cfg.d},)")
    if abs(float(u.sum())) / math.sqrt(cfg.d) > tol:
        raise ValueError("direction is not orthogonal to the cylinder axis")
    if abs(float(np.linalg.norm(u)) - 1.0) > tol:
        raise ValueError("direction is not a unit vector")
    return np.full(cfg.d, c.s / math.sqrt(cfg.d)) + c.r * u
