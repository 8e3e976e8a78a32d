"""Finite-element upper bounds for the Hardy constant on a periodic cell.

The trial space is continuous bilinear functions on a tensor grid over the
reduced half-plane cell ``[-L/2, L/2) x [0, R]`` (periodic in ``s``), zero at
``r = R`` and at nodes within ``delta`` of the pole at the origin.  The
smallest generalized eigenvalue of ``K u = mu M u``, with ``K`` the weighted
Dirichlet form and ``M`` the weighted ``V``-mass, is the minimum of the
Rayleigh quotient over that space.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from .geometry import LatticeConfig
from .potential import eval_closed_array
from .quadrature import Box, TestFunction, AdmissibilityError, sphere_area
from .supersolution import lambda_lower

__all__ = [
    "Grid2D",
    "GridError",
    "SymmetricSparseOperator",
    "EigEstimate",
    "EigenSolverError",
    "assemble",
    "smallest_eig",
    "dense_smallest_eig",
    "ladder",
    "estimate_mu",
    "MuEstimate",
    "delta_sweep",
    "sweep_R",
    "SweepRow",
    "Bilinear",
    "worker_count",
]

SIGMA = 1e-8
MAX_ASPECT = 32.0
MAX_ITER = 500
DEFAULT_TOL = 1e-10
UPPER_BAND = 0.05


class GridError(ValueError):
    pass


class EigenSolverError(RuntimeError):
    pass


def _inner_cell(R: float, n_r: int, kappa: float) -> float:
    if kappa == 0.0:
        return R / n_r
    return R * math.expm1(kappa / n_r) / math.expm1(kappa)


@dataclass(frozen=True)
class Grid2D:
    """Tensor grid: uniform in ``s`` and exponentially graded toward ``r = 0``.

    Radial nodes are ``R (e^{kappa j/n_r} - 1)/(e^kappa - 1)``, so grids
    sharing ``kappa`` nest under doubling of ``n_r``.
    """

    n_s: int
    n_r: int
    L: float
    R: float
    delta: float
    grading: float = 0.0

    def __post_init__(self) -> None:
        if self.n_s < 4 or self.n_r < 4:
            raise GridError("n_s and n_r must be >= 4")
        if self.n_s % 2:
            raise GridError("n_s must be even so that the pole is a node")
        if self.grading < 0:
            raise GridError("grading must be >= 0")
        h = self.L * self.L  # normalized lattice: L = h sqrt(d) with h = 1/d
        if not 0.0 < self.delta < min(h / 2.0, self.R) / 4.0:
            raise GridError(f"delta={self.delta} outside (0, min(h/2, R)/4)")
        aspect = self.max_aspect()
        if aspect > MAX_ASPECT * (1 + 1e-9):
            raise GridError(f"cell aspect ratio {aspect:.3g} exceeds {MAX_ASPECT}")

    @classmethod
    def for_config(cls, cfg: LatticeConfig, n_s: int, n_r: int, delta: float,
                   grading: float | None = None) -> "Grid2D":
        """Grid with the grading chosen so the innermost radial cell is ``delta/2``.

        If that would break the aspect bound against the axial spacing the
        innermost cell is widened to ``ds/32``.
        """
        if grading is None:
            grading = cls.grading_for(cfg.period, cfg.R, n_s, n_r, delta)
        return cls(n_s, n_r, cfg.period, cfg.R, delta, grading)

    @staticmethod
    def grading_for(L: float, R: float, n_s: int, n_r: int, delta: float) -> float:
        target = max(delta / 2.0, (L / n_s) / MAX_ASPECT)
        if R / n_r <= target:
            return 0.0
        return brentq(lambda k: _inner_cell(R, n_r, k) - target, 1e-12, 700.0, xtol=1e-14)

    @property
    def s_nodes(self) -> np.ndarray:
        """Axial nodes ``-L/2 .. L/2`` inclusive (the last one is periodic image of the first)."""
        return self.L * (np.arange(self.n_s + 1) / self.n_s - 0.5)

    @property
    def r_nodes(self) -> np.ndarray:
        xi = np.arange(self.n_r + 1) / self.n_r
        if self.grading == 0.0:
            return self.R * xi
        r = self.R * np.expm1(self.grading * xi) / math.expm1(self.grading)
        r[-1] = self.R
        return r

    def max_aspect(self) -> float:
        ds = self.L / self.n_s
        dr = np.diff(self.r_nodes)
        return float(max(ds / dr.min(), dr.max() / ds))

    def active_mask(self) -> np.ndarray:
        """Boolean mask over the ``n_s * (n_r + 1)`` periodic nodes."""
        S, Rr = np.meshgrid(self.s_nodes[:-1], self.r_nodes, indexing="ij")
        outer = np.zeros_like(Rr, dtype=bool)
        outer[:, -1] = True
        return (~outer & (S * S + Rr * Rr >= self.delta ** 2)).ravel()

    def contains(self, other: "Grid2D") -> bool:
        """True if every node of ``other`` is a node of this grid."""
        def sub(a, b):
            return all(np.min(np.abs(b - x)) <= 1e-12 * max(1.0, abs(x)) for x in a)
        return (math.isclose(self.L, other.L) and math.isclose(self.R, other.R)
                and sub(other.s_nodes, self.s_nodes) and sub(other.r_nodes, self.r_nodes))

    @property
    def label(self) -> str:
        return f"{self.n_s}x{self.n_r}"

    def as_dict(self) -> dict:
        return {"n_s": self.n_s, "n_r": self.n_r, "L": self.L, "R": self.R,
                "delta": self.delta, "grading": self.grading}


@dataclass(frozen=True)
class SymmetricSparseOperator:
    """Symmetric CSR matrix restricted to the active degrees of freedom."""

    matrix: sp.csr_matrix

    def __post_init__(self) -> None:
        asym = abs(self.matrix - self.matrix.T)
        if asym.nnz and asym.max() != 0.0:
            raise ValueError("operator is not exactly symmetric")

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, v):
        return self.matrix @ v

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


_Q1_LOCAL = ((0, 0), (1, 0), (0, 1), (1, 1))


def _element_matrices(grid: Grid2D, cfg: LatticeConfig):
    s, r = grid.s_nodes, grid.r_nodes
    ns, nr = grid.n_s, grid.n_r
    d, L = cfg.d, cfg.period
    S0, R0 = np.meshgrid(s[:-1], r[:-1], indexing="ij")
    HS, HR = np.meshgrid(np.diff(s), np.diff(r), indexing="ij")
    S0, R0, HS, HR = (x.ravel() for x in (S0, R0, HS, HR))
    xg, wg = np.polynomial.legendre.leggauss(3)
    xg, wg = (xg + 1.0) / 2.0, wg / 2.0
    ne = S0.size
    Ke = np.zeros((ne, 4, 4))
    Me = np.zeros((ne, 4, 4))
    omega = sphere_area(d - 2)
    for xa, wa in zip(xg, wg):
        for eb, wb in zip(xg, wg):
            sq, rq = S0 + xa * HS, R0 + eb * HR
            wt = omega * wa * wb * HS * HR * rq ** (d - 2)
            V = eval_closed_array(sq / L, rq / L, cfg)
            N = np.array([(1 - xa) * (1 - eb), xa * (1 - eb), (1 - xa) * eb, xa * eb])
            dNs = np.array([-(1 - eb), 1 - eb, -eb, eb])[:, None] / HS
            dNr = np.array([-(1 - xa), -xa, 1 - xa, xa])[:, None] / HR
            Ke += wt[:, None, None] * (np.einsum("pe,qe->epq", dNs, dNs) + np.einsum("pe,qe->epq", dNr, dNr))
            Me += (wt * V)[:, None, None] * np.outer(N, N)[None]
    ii, jj = np.meshgrid(np.arange(ns), np.arange(nr), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    nodes = np.stack([((ii + di) % ns) * (nr + 1) + (jj + dj) for di, dj in _Q1_LOCAL], axis=1)
    return Ke, Me, nodes


def _symmetrize(A: sp.spmatrix) -> sp.csr_matrix:
    # exact symmetry: element matrices are symmetric up to rounding in the sum order
    A = A.tocsr()
    A = ((A + A.T) * 0.5).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def assemble(grid: Grid2D, cfg: LatticeConfig) -> tuple[SymmetricSparseOperator, SymmetricSparseOperator]:
    """Weighted stiffness ``K`` and ``V``-mass ``M`` on the active nodes."""
    if not cfg.normalized:
        raise ValueError("assembly requires the normalized lattice (dh = 1)")
    if not (math.isclose(grid.L, cfg.period, rel_tol=1e-12) and math.isclose(grid.R, cfg.R, rel_tol=1e-12)):
        raise GridError("grid does not match the configuration's period and radius")
    if grid.delta >= grid.R:
        raise GridError("exclusion disk reaches the outer boundary")
    Ke, Me, nodes = _element_matrices(grid, cfg)
    if not np.all(np.isfinite(Me)):
        raise GridError("singular potential at a quadrature node")
    n = grid.n_s * (grid.n_r + 1)
    rows = np.repeat(nodes, 4, axis=1).ravel()
    cols = np.tile(nodes, (1, 4)).ravel()
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n))
    M = sp.coo_matrix((Me.ravel(), (rows, cols)), shape=(n, n))
    idx = np.flatnonzero(grid.active_mask())
    K = _symmetrize(K.tocsr()[idx][:, idx])
    M = _symmetrize(M.tocsr()[idx][:, idx])
    return SymmetricSparseOperator(K), SymmetricSparseOperator(M)


@dataclass(frozen=True)
class EigEstimate:
    mu_hat: float
    residual_norm: float
    grid: Grid2D | None
    iterations: int
    vector: np.ndarray | None = field(default=None, repr=False, compare=False)

    def as_dict(self) -> dict:
        return {"mu_hat": self.mu_hat, "residual_norm": self.residual_norm,
                "grid": self.grid.as_dict() if self.grid else None,
                "iterations": self.iterations}


def _as_csr(A) -> sp.csr_matrix:
    return A.matrix if isinstance(A, SymmetricSparseOperator) else sp.csr_matrix(A)


def smallest_eig(K, M, tol: float = DEFAULT_TOL, grid: Grid2D | None = None,
                 max_iter: int = MAX_ITER) -> EigEstimate:
    """Inverse iteration with ``(K + sigma M)^{-1} M`` and Rayleigh quotients of ``K``."""
    K, M = _as_csr(K), _as_csr(M)
    n = K.shape[0]
    if n == 0:
        raise EigenSolverError("no active degrees of freedom")
    try:
        lu = spla.splu((K + SIGMA * M).tocsc(), permc_spec="COLAMD")
    except RuntimeError as exc:
        raise EigenSolverError(f"factorization failed: {exc}") from exc
    v = np.ones(n)
    Mv = M @ v
    v /= math.sqrt(float(v @ Mv))
    mu = math.inf
    for it in range(1, max_iter + 1):
        w = lu.solve(M @ v)
        Mw = M @ w
        w /= math.sqrt(float(w @ Mw))
        Mw = M @ w
        Kw = K @ w
        mu = float(w @ Kw)  # w is M-normalized
        res = float(np.linalg.norm(Kw - mu * Mw) / np.linalg.norm(Mw))
        v = w
        if res <= tol:
            if not mu > 0:
                raise EigenSolverError(f"non-positive eigenvalue {mu}")
            return EigEstimate(mu, res, grid, it, v)
    raise EigenSolverError(f"inverse iteration did not reach tol={tol} in {max_iter} steps (residual {res:.3g})")


def dense_smallest_eig(K, M) -> float:
    """Reference smallest generalized eigenvalue from a dense symmetric solve.

    Solves the reciprocal pencil ``M x = nu K x`` so that the Cholesky factor
    is taken of ``K``; ``M`` carries the pole weight and is far worse
    conditioned.
    """
    Kd, Md = _as_csr(K).toarray(), _as_csr(M).toarray()
    n = Kd.shape[0]
    nu = sla.eigh(Md, Kd, eigvals_only=True, subset_by_index=[n - 1, n - 1])[0]
    return float(1.0 / nu)


def ladder(cfg: LatticeConfig, sizes: Sequence[tuple[int, int]], delta: float) -> list[Grid2D]:
    """Nested grids sharing the grading of the finest one."""
    sizes = list(sizes)
    fine_s, fine_r = sizes[-1]
    kappa = Grid2D.grading_for(cfg.period, cfg.R, fine_s, fine_r, delta)
    return [Grid2D.for_config(cfg, ns, nr, delta, grading=kappa) for ns, nr in sizes]


@dataclass(frozen=True)
class MuEstimate:
    estimates: list[EigEstimate]
    extrapolated: float
    order: float | None
    lower: float
    upper: float
    band: float
    lower_ok: bool
    upper_ok: bool
    monotone: bool

    @property
    def mu_hat(self) -> float:
        return self.estimates[-1].mu_hat

    @property
    def sandwich_ok(self) -> bool:
        return self.lower_ok and self.upper_ok

    def as_dict(self) -> dict:
        return {
            "estimates": [e.as_dict() for e in self.estimates],
            "mu_hat": self.mu_hat,
            "extrapolated": self.extrapolated,
            "order": self.order,
            "lower": self.lower,
            "upper": self.upper,
            "upper_band": self.band,
            "lower_ok": self.lower_ok,
            "upper_ok": self.upper_ok,
            "monotone": self.monotone,
            "sandwich_ok": self.sandwich_ok,
        }


def _richardson(values: Sequence[float]) -> tuple[float, float | None]:
    if len(values) == 1:
        return values[-1], None
    if len(values) == 2:
        p = 2.0
    else:
        d1, d2 = values[-3] - values[-2], values[-2] - values[-1]
        if d1 == 0 or d2 == 0 or d1 / d2 <= 1.0:
            return values[-1], None
        p = min(max(math.log2(d1 / d2), 1.0), 4.0)
    return values[-1] + (values[-1] - values[-2]) / (2.0 ** p - 1.0), p


def estimate_mu(cfg: LatticeConfig, grids: Sequence[Grid2D], tol: float = DEFAULT_TOL,
                band: float = UPPER_BAND, lower_slack: float = 1e-6,
                mono_slack: float = 1e-8) -> MuEstimate:
    """Eigenvalue estimates along a nested ladder with the sandwich verdict.

    The verdict tests the finest-grid value, which is a genuine upper bound on
    the periodic-cell problem, against ``[lower - slack, upper (1 + band)]``.
    """
    grids = list(grids)
    for coarse, fine in zip(grids[:-1], grids[1:]):
        if not fine.contains(coarse):
            raise GridError(f"grid {fine.label} does not contain {coarse.label}")
    ests = []
    for g in grids:
        K, M = assemble(g, cfg)
        ests.append(smallest_eig(K, M, tol, grid=g))
    mus = [e.mu_hat for e in ests]
    extrap, order = _richardson(mus)
    lower = lambda_lower(cfg.R, cfg.d)
    upper = (cfg.d - 2) ** 2 / 4.0
    mu = mus[-1]
    monotone = all(b <= a + mono_slack for a, b in zip(mus[:-1], mus[1:]))
    return MuEstimate(ests, extrap, order, lower, upper, band,
                      mu >= lower - lower_slack, mu <= upper * (1.0 + band), monotone)


def delta_sweep(cfg: LatticeConfig, n_s: int, n_r: int,
                factors: Sequence[float] = (4e-3, 2e-3, 1e-3),
                tol: float = DEFAULT_TOL) -> dict:
    """Estimates for shrinking exclusion radii ``delta = factor * h`` on one grid.

    The grading is fixed by the smallest delta so the trial spaces are nested
    and the estimates cannot increase.  The reported limit fits
    ``mu(delta) = mu_0 + c / log(L/delta)^2``, the decay expected from a
    logarithmic capacity correction.
    """
    deltas = [f * cfg.h for f in factors]
    kappa = Grid2D.grading_for(cfg.period, cfg.R, n_s, n_r, min(deltas))
    out = []
    for dl in deltas:
        g = Grid2D.for_config(cfg, n_s, n_r, dl, grading=kappa)
        K, M = assemble(g, cfg)
        out.append(smallest_eig(K, M, tol, grid=g))
    x = np.array([1.0 / math.log(cfg.period / dl) ** 2 for dl in deltas])
    y = np.array([e.mu_hat for e in out])
    A = np.stack([np.ones_like(x), x], axis=1)
    coef = np.linalg.lstsq(A, y, rcond=None)[0]
    return {"deltas": deltas, "estimates": out, "extrapolated": float(coef[0])}


def worker_count() -> int:
    """Worker cap from ``HARDYC_THREADS`` (default 1)."""
    import os
    raw = os.environ.get("HARDYC_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"HARDYC_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"HARDYC_THREADS must be a positive integer, got {raw!r}")
    return n


@dataclass(frozen=True)
class SweepRow:
    R: float
    lower: float
    mu_hat: float
    upper: float
    gap: float
    grid: str
    delta: float
    estimate: MuEstimate = field(repr=False, compare=False)


def sweep_R(d: int, R_list: Sequence[float], sizes: Sequence[tuple[int, int]] = ((256, 128),),
            delta_factor: float = 1e-3, tol: float = DEFAULT_TOL,
            workers: int | None = None) -> list[SweepRow]:
    """One row per radius; runs are independent and returned in input order."""
    R_list = [float(R) for R in R_list]
    if any(b >= a for a, b in zip(R_list[:-1], R_list[1:])):
        raise ValueError("R_list must be strictly decreasing")

    def run(R: float) -> SweepRow:
        cfg = LatticeConfig.normalized_config(d, R)
        delta = delta_factor * cfg.h
        est = estimate_mu(cfg, ladder(cfg, sizes, delta), tol)
        return SweepRow(R, est.lower, est.mu_hat, est.upper, est.upper - est.lower,
                        est.estimates[-1].grid.label, delta, est)

    n = workers or worker_count()
    if n == 1:
        return [run(R) for R in R_list]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(run, R_list))


@dataclass(frozen=True, eq=False)
class Bilinear(TestFunction):
    """Continuous bilinear interpolant of nodal values on one periodic cell."""

    grid: Grid2D
    coeffs: np.ndarray  # length n_s * (n_r + 1), periodic node numbering

    @classmethod
    def from_active(cls, grid: Grid2D, active_values: np.ndarray) -> "Bilinear":
        full = np.zeros(grid.n_s * (grid.n_r + 1))
        full[grid.active_mask()] = active_values
        return cls(grid, full)

    def values(self, s, r, cfg):
        g = self.grid
        s = np.asarray(s, float)
        r = np.asarray(r, float)
        sn, rn = g.s_nodes, g.r_nodes
        i = np.clip(np.searchsorted(sn, s, side="right") - 1, 0, g.n_s - 1)
        j = np.clip(np.searchsorted(rn, r, side="right") - 1, 0, g.n_r - 1)
        hs, hr = sn[i + 1] - sn[i], rn[j + 1] - rn[j]
        x, y = (s - sn[i]) / hs, (r - rn[j]) / hr
        c = self.coeffs.reshape(g.n_s, g.n_r + 1)
        ip = (i + 1) % g.n_s
        c00, c10, c01, c11 = c[i, j], c[ip, j], c[i, j + 1], c[ip, j + 1]
        u = c00 * (1 - x) * (1 - y) + c10 * x * (1 - y) + c01 * (1 - x) * y + c11 * x * y
        us = ((c10 - c00) * (1 - y) + (c11 - c01) * y) / hs
        ur = ((c01 - c00) * (1 - x) + (c11 - c10) * x) / hr
        return u, us, ur

    def support(self, cfg):
        g = self.grid
        return Box(-g.L / 2, g.L / 2, 0.0, g.R)

    def domains(self, cfg):
        g = self.grid
        return [(self.support(cfg), {"breaks_s": tuple(g.s_nodes), "breaks_r": tuple(g.r_nodes),
                                     "singular_points": ((0.0, 0.0),),
                                     "min_scale": 1e-6 * g.delta})]

    def check_admissible(self, cfg):
        c = self.coeffs.reshape(self.grid.n_s, self.grid.n_r + 1)
        if np.any(c[:, -1] != 0.0):
            raise AdmissibilityError("interpolant does not vanish at r = R")
        if c[self.grid.n_s // 2, 0] != 0.0:
            raise AdmissibilityError("interpolant does not vanish at the pole")
