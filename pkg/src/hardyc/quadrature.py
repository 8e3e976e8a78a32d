"""Axisymmetric quadrature on the cylinder and the energies of test functions.

Every shipped test function depends on the Cartesian point only through
``(s, r)``, so ``dx = omega_{d-2} r^{d-2} dr ds``.  Rectangles in ``(s, r)``
use composite tensor Gauss-Legendre with adaptive dyadic refinement.  Shells
centred on a pole are parametrised by ``(log t, psi)`` with ``t`` the distance
to the pole, which resolves ``t^-p`` behaviour down to any scale.

Test functions report *scaled* values ``u t^{(d-2)/2}`` and
``grad u t^{d/2}`` on shells (``t = 1`` on rectangles) so that integrands
stay finite even for supports reaching ``1e-80`` of a pole.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .geometry import LatticeConfig
from .potential import closed_lattice_sum, PoleError
from .supersolution import (
    f_ratio,
    lambda_lower,
    theorem35_constant,
    theta_array,
    CutoffSpec,
)

__all__ = [
    "Box",
    "PolarShell",
    "QuadratureResult",
    "sphere_area",
    "integrate_cell",
    "Bump",
    "AxisCap",
    "Tent",
    "Separable",
    "RadialBump",
    "Weighted",
    "Cutoff",
    "dirichlet_energy",
    "potential_energy",
    "mass",
    "rayleigh_quotient",
    "radial_witness_quotient",
    "witness_profile",
    "allegretto_terms",
    "allegretto_residual",
    "allegretto_refinement",
    "hardy_gap",
    "theorem35_check",
    "AdmissibilityError",
]

GAUSS_ORDER = 8
REL_TOL = 1e-8
MAX_LEVEL = 12


class AdmissibilityError(ValueError):
    """A test function violates the support conditions of the Hardy quotient."""


def sphere_area(n: int) -> float:
    """Surface measure of the unit ``n``-sphere in ``R^{n+1}`` (``omega_1 = 2 pi``)."""
    if n < 0:
        raise ValueError("sphere dimension must be >= 0")
    return 2.0 * math.pi ** ((n + 1) / 2.0) / math.gamma((n + 1) / 2.0)


@dataclass(frozen=True)
class Box:
    """Axial interval ``[s0, s1]`` times radial interval ``[r0, r1]``."""

    s0: float
    s1: float
    r0: float
    r1: float

    def __post_init__(self) -> None:
        if not (self.s1 > self.s0 and self.r1 > self.r0 and self.r0 >= 0):
            raise ValueError(f"degenerate or invalid box {self}")


@dataclass(frozen=True)
class PolarShell:
    """Half-annulus ``t0 <= |(s - center_s, r)| <= t1`` in the ``(s, r)`` half-plane."""

    center_s: float
    t0: float
    t1: float

    def __post_init__(self) -> None:
        if not (self.t1 > self.t0 > 0):
            raise ValueError(f"shell radii must satisfy 0 < t0 < t1, got {self}")


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    abs_error_estimate: float
    cells: int


@dataclass
class Nodes:
    """Quadrature nodes in physical coordinates plus the measure.

    ``tsc`` is the distance used to scale field values (1 on boxes).
    """

    s: np.ndarray
    r: np.ndarray
    tsc: np.ndarray
    measure: np.ndarray


_RULES: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    if order not in _RULES:
        x, w = leggauss(order)
        _RULES[order] = ((x + 1.0) / 2.0, w / 2.0)
    return _RULES[order]


def _box_nodes(rects: np.ndarray, d: int, order: int) -> Nodes:
    x, w = _rule(order)
    u0, u1, v0, v1 = rects.T
    du, dv = (u1 - u0)[:, None, None], (v1 - v0)[:, None, None]
    s = u0[:, None, None] + du * x[None, :, None]
    r = v0[:, None, None] + dv * x[None, None, :]
    s, r = np.broadcast_arrays(s, r)
    meas = sphere_area(d - 2) * (w[:, None] * w[None, :])[None] * du * dv * r ** (d - 2)
    return Nodes(s, r, np.ones_like(s), meas)


def _shell_nodes(center: float, rects: np.ndarray, d: int, order: int) -> Nodes:
    # u = log t, v = psi; ds dr = t^2 du dv and t^d is carried by the field scaling
    x, w = _rule(order)
    u0, u1, v0, v1 = rects.T
    du, dv = (u1 - u0)[:, None, None], (v1 - v0)[:, None, None]
    y = u0[:, None, None] + du * x[None, :, None]
    psi = v0[:, None, None] + dv * x[None, None, :]
    y, psi = np.broadcast_arrays(y, psi)
    t = np.exp(y)
    s = center + t * np.cos(psi)
    r = t * np.sin(psi)
    meas = sphere_area(d - 2) * (w[:, None] * w[None, :])[None] * du * dv * np.sin(psi) ** (d - 2)
    return Nodes(s, r, t, meas)


def _split(rects: np.ndarray) -> np.ndarray:
    u0, u1, v0, v1 = rects.T
    um, vm = 0.5 * (u0 + u1), 0.5 * (v0 + v1)
    kids = np.stack([
        np.stack([u0, um, v0, vm], 1),
        np.stack([um, u1, v0, vm], 1),
        np.stack([u0, um, vm, v1], 1),
        np.stack([um, u1, vm, v1], 1),
    ], 1)
    return kids.reshape(-1, 4)


def _tensor_partition(ubreaks: Sequence[float], vbreaks: Sequence[float]) -> np.ndarray:
    ub, vb = np.asarray(ubreaks, float), np.asarray(vbreaks, float)
    out = [(a, b, c, e) for a, b in zip(ub[:-1], ub[1:]) for c, e in zip(vb[:-1], vb[1:])]
    return np.asarray(out, dtype=float)


def _adaptive(node_fn: Callable[[np.ndarray], Nodes], integrand: Callable[[Nodes], np.ndarray],
              rects: np.ndarray, rel_tol: float, abs_tol: float, max_level: int,
              order: int) -> QuadratureResult:
    def q(rs: np.ndarray) -> np.ndarray:
        nodes = node_fn(rs)
        vals = integrand(nodes) * nodes.measure
        return vals.reshape(len(rs), -1).sum(axis=1)

    area = (rects[:, 1] - rects[:, 0]) * (rects[:, 3] - rects[:, 2])
    total_area = float(area.sum())
    if total_area <= 0:
        raise ValueError("zero-measure integration domain")
    coarse = q(rects)
    done_vals: list[np.ndarray] = []
    done_errs: list[np.ndarray] = []
    cells = 0
    for level in range(max_level + 1):
        kids = _split(rects)
        kid_q = q(kids)
        fine = kid_q.reshape(-1, 4).sum(axis=1)
        err = np.abs(fine - coarse)
        if not np.all(np.isfinite(fine)):
            raise FloatingPointError("non-finite integrand; is a singularity inside the domain?")
        est = math.fsum(np.concatenate(done_vals + [fine]).tolist())
        budget = max(rel_tol * abs(est), abs_tol)
        share = budget * (rects[:, 1] - rects[:, 0]) * (rects[:, 3] - rects[:, 2]) / total_area
        ok = err <= share if level < max_level else np.ones_like(err, dtype=bool)
        done_vals.append(fine[ok])
        done_errs.append(err[ok])
        cells += int(ok.sum()) * 4
        if ok.all():
            break
        bad = ~ok
        rects = kids.reshape(-1, 4, 4)[bad].reshape(-1, 4)
        coarse = kid_q.reshape(-1, 4)[bad].reshape(-1)
    value = math.fsum(np.concatenate(done_vals).tolist())
    error = math.fsum(np.concatenate(done_errs).tolist())
    return QuadratureResult(value, error, cells)


def _sorted_breaks(lo: float, hi: float, extra: Sequence[float]) -> list[float]:
    pts = sorted({lo, hi, *(float(b) for b in extra if lo < b < hi)})
    return pts


def _graded(lo: float, hi: float, point: float, min_scale: float) -> list[float]:
    # dyadic breakpoints accumulating at `point` (an endpoint or interior)
    out = {lo, hi}
    for side_lo, side_hi in ((lo, point), (point, hi)):
        width = side_hi - side_lo
        if width <= 0:
            continue
        k = 1
        while width / 2 ** k > min_scale:
            out.add(point - width / 2 ** k if side_hi == point else point + width / 2 ** k)
            k += 1
    return sorted(b for b in out if lo <= b <= hi)


def integrate_cell(f: Callable, domain: Box | PolarShell, d: int, *,
                   breaks_s: Sequence[float] = (), breaks_r: Sequence[float] = (),
                   singular_points: Sequence[tuple[float, float]] = (),
                   singularity_order: float | None = None,
                   min_scale: float | None = None,
                   rel_tol: float = REL_TOL, abs_tol: float = 0.0,
                   max_level: int = MAX_LEVEL, order: int = GAUSS_ORDER,
                   prescaled: bool = False) -> QuadratureResult:
    """``omega_{d-2} * iint f(s, r) r^{d-2} dr ds`` over a box or a pole shell.

    For a :class:`Box`, ``breaks_s``/``breaks_r`` split the domain where
    ``f`` is not smooth and ``singular_points`` trigger dyadic grading toward
    the given ``(s, r)`` corners down to ``min_scale``; if the integrand
    blows up like ``dist^-p`` there, pass ``singularity_order=p`` so that a
    non-integrable singularity is rejected instead of summed.  For a
    :class:`PolarShell`, ``breaks_r`` are radii about the centre, and
    ``prescaled=True`` declares that ``f`` already returns ``f * t^d`` (which
    stays finite where ``f`` alone would overflow).
    """
    if int(d) != d or d < 2:
        raise ValueError("d must be an integer >= 2")
    if singularity_order is not None:
        for _, pr in singular_points:
            # the measure near the point is t dt (off axis) or t^{d-1} dt (on axis)
            limit = d if pr == 0.0 else 2
            if singularity_order >= limit:
                raise ValueError(f"singularity of order {singularity_order} at r={pr} is not "
                                 f"integrable against r^{d - 2} dr ds (needs order < {limit})")
    if isinstance(domain, Box):
        sb = _sorted_breaks(domain.s0, domain.s1, breaks_s)
        rb = _sorted_breaks(domain.r0, domain.r1, breaks_r)
        for ps, pr in singular_points:
            if not (domain.s0 <= ps <= domain.s1 and domain.r0 <= pr <= domain.r1):
                continue
            scale = min_scale or 1e-6 * max(domain.s1 - domain.s0, domain.r1 - domain.r0)
            sb = sorted(set(sb) | set(_graded(domain.s0, domain.s1, ps, scale)))
            rb = sorted(set(rb) | set(_graded(domain.r0, domain.r1, pr, scale)))
        rects = _tensor_partition(sb, rb)
        node_fn = lambda rs: _box_nodes(rs, d, order)
        integrand = lambda n: f(n.s, n.r)
    elif isinstance(domain, PolarShell):
        tb = _sorted_breaks(domain.t0, domain.t1, breaks_r)
        ub = [math.log(t) for t in tb]
        rects = _tensor_partition(_unit_panels(ub), [0.0, math.pi / 2, math.pi])
        node_fn = lambda rs: _shell_nodes(domain.center_s, rs, d, order)
        if prescaled:
            integrand = lambda n: f(n.s, n.r)
        else:
            integrand = lambda n: f(n.s, n.r) * n.tsc ** d
    else:
        raise TypeError(f"unsupported domain {domain!r}")
    return _adaptive(node_fn, integrand, rects, rel_tol, abs_tol, max_level, order)


def _unit_panels(ub: Sequence[float]) -> list[float]:
    # log-radial panels of width <= 1 so Gauss starts resolved on long shells
    out = [ub[0]]
    for lo, hi in zip(ub[:-1], ub[1:]):
        n = max(1, math.ceil(hi - lo))
        out.extend(np.linspace(lo, hi, n + 1)[1:].tolist())
    return out


# ---------------------------------------------------------------------------
# one-dimensional profiles

@dataclass(frozen=True)
class Bump:
    """``(1 - y^2)^3`` with ``y`` mapping ``[lo, hi]`` to ``[-1, 1]``; C^2, zero outside."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not self.hi > self.lo:
            raise ValueError("bump needs lo < hi")

    def __call__(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        half = 0.5 * (self.hi - self.lo)
        y = (x - 0.5 * (self.lo + self.hi)) / half
        inside = np.abs(y) < 1.0
        q = np.where(inside, 1.0 - y * y, 0.0)
        return q ** 3, np.where(inside, -6.0 * y * q * q / half, 0.0)

    @property
    def breaks(self) -> tuple[float, ...]:
        return (self.lo, self.hi)

    @property
    def support(self) -> tuple[float, float]:
        return (self.lo, self.hi)


@dataclass(frozen=True)
class AxisCap:
    """``(1 - (r/r1)^2)^3`` on ``[0, r1]``: even in ``r``, hence smooth across the axis."""

    r1: float

    def __post_init__(self) -> None:
        if not self.r1 > 0:
            raise ValueError("cap radius must be positive")

    def __call__(self, r) -> tuple[np.ndarray, np.ndarray]:
        r = np.asarray(r, dtype=float)
        y = r / self.r1
        inside = y < 1.0
        q = np.where(inside, 1.0 - y * y, 0.0)
        return q ** 3, np.where(inside, -6.0 * y * q * q / self.r1, 0.0)

    @property
    def breaks(self) -> tuple[float, ...]:
        return (0.0, self.r1)

    @property
    def support(self) -> tuple[float, float]:
        return (0.0, self.r1)


@dataclass(frozen=True)
class Tent:
    """Piecewise-linear hat on ``[lo, hi]`` peaking at ``peak``; continuous only."""

    lo: float
    peak: float
    hi: float

    def __post_init__(self) -> None:
        if not self.lo < self.peak < self.hi:
            raise ValueError("tent needs lo < peak < hi")

    def __call__(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        up = (x >= self.lo) & (x <= self.peak)
        down = (x > self.peak) & (x <= self.hi)
        val = np.where(up, (x - self.lo) / (self.peak - self.lo),
                       np.where(down, (self.hi - x) / (self.hi - self.peak), 0.0))
        der = np.where(up, 1.0 / (self.peak - self.lo),
                       np.where(down, -1.0 / (self.hi - self.peak), 0.0))
        return val, der

    @property
    def breaks(self) -> tuple[float, ...]:
        return (self.lo, self.peak, self.hi)

    @property
    def support(self) -> tuple[float, float]:
        return (self.lo, self.hi)


@dataclass(frozen=True)
class Cutoff:
    """C^1 piecewise-cubic cutoff: 0 below ``r_in/2``, 1 on ``[r_in, r_out/2]``, 0 from ``r_out``."""

    r_in: float
    r_out: float

    def __post_init__(self) -> None:
        if not (0 < self.r_in < self.r_out / 2):
            raise ValueError("cutoff needs 0 < r_in < r_out/2")

    @staticmethod
    def _step(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return x * x * (3.0 - 2.0 * x), 6.0 * x * (1.0 - x)

    def __call__(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Returns ``eta`` and ``t * eta'`` (the log-derivative form)."""
        t = np.asarray(t, dtype=float)
        a, b = 0.5 * self.r_in, 0.5 * self.r_out
        rise = (t > a) & (t < self.r_in)
        fall = (t > b) & (t < self.r_out)
        x_rise = np.clip((t - a) / a, 0.0, 1.0)
        x_fall = np.clip((t - b) / b, 0.0, 1.0)
        s_rise, ds_rise = self._step(x_rise)
        s_fall, ds_fall = self._step(x_fall)
        eta = np.where(rise, s_rise, np.where(fall, 1.0 - s_fall,
                       np.where((t >= self.r_in) & (t <= b), 1.0, 0.0)))
        teta = np.where(rise, t * ds_rise / a, np.where(fall, -t * ds_fall / b, 0.0))
        return eta, teta

    @property
    def breaks(self) -> tuple[float, ...]:
        return (0.5 * self.r_in, self.r_in, 0.5 * self.r_out, self.r_out)


# ---------------------------------------------------------------------------
# test functions

class TestFunction:
    """Axisymmetric trial function ``u(s, r)`` with analytic first derivatives."""

    __test__ = False  # not a pytest class

    def scaled(self, s, r, tsc, cfg: LatticeConfig):
        """``(u tsc^{(d-2)/2}, u_s tsc^{d/2}, u_r tsc^{d/2})``."""
        u, us, ur = self.values(s, r, cfg)
        d = cfg.d
        lo, hi = tsc ** ((d - 2) / 2.0), tsc ** (d / 2.0)
        return u * lo, us * hi, ur * hi

    def values(self, s, r, cfg: LatticeConfig):
        raise NotImplementedError

    def support(self, cfg: LatticeConfig) -> Box:
        raise NotImplementedError

    def domains(self, cfg: LatticeConfig) -> list[tuple[Box | PolarShell, dict]]:
        """Integration domains covering the support, with breakpoint hints."""
        raise NotImplementedError

    def check_admissible(self, cfg: LatticeConfig) -> None:
        raise NotImplementedError

    def __mul__(self, c: float) -> "TestFunction":
        return _Scaled(self, float(c))

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class _Scaled(TestFunction):
    base: TestFunction
    factor: float

    def values(self, s, r, cfg):
        u, us, ur = self.base.values(s, r, cfg)
        return self.factor * u, self.factor * us, self.factor * ur

    def scaled(self, s, r, tsc, cfg):
        u, us, ur = self.base.scaled(s, r, tsc, cfg)
        return self.factor * u, self.factor * us, self.factor * ur

    def support(self, cfg):
        return self.base.support(cfg)

    def domains(self, cfg):
        return self.base.domains(cfg)

    def check_admissible(self, cfg):
        if self.factor == 0.0:
            raise AdmissibilityError("zero test function")
        self.base.check_admissible(cfg)


def _poles_in(s0: float, s1: float, cfg: LatticeConfig) -> list[int]:
    L = cfg.period
    return list(range(math.ceil(s0 / L), math.floor(s1 / L) + 1))


@dataclass(frozen=True, eq=False)
class Separable(TestFunction):
    """``u = p(s) w(r)`` with compactly supported profiles."""

    axial: Bump | Tent
    radial: Bump | Tent | AxisCap

    def values(self, s, r, cfg):
        p, dp = self.axial(s)
        w, dw = self.radial(r)
        return p * w, dp * w, p * dw

    def support(self, cfg):
        s0, s1 = self.axial.support
        r0, r1 = self.radial.support
        return Box(s0, s1, r0, r1)

    def domains(self, cfg):
        box = self.support(cfg)
        return [(box, {"breaks_s": self.axial.breaks, "breaks_r": self.radial.breaks})]

    def check_admissible(self, cfg):
        box = self.support(cfg)
        if box.r1 > cfg.R * (1 + 1e-12):
            raise AdmissibilityError(f"radial support {box.r1} exceeds R = {cfg.R}")
        if box.r0 <= 0.0:
            # touching the axis: the axial support must avoid every pole, with margin
            for k in _poles_in(box.s0, box.s1, cfg):
                raise AdmissibilityError(f"support contains pole a_{k}")


@dataclass(frozen=True, eq=False)
class RadialBump(TestFunction):
    """``u = eta(t) t^{-(d-2)/2 + tau}`` with ``t = |x - a_k|``."""

    k: int
    r_in: float
    r_out: float
    tau: float

    def __post_init__(self) -> None:
        Cutoff(self.r_in, self.r_out)

    @property
    def cutoff(self) -> Cutoff:
        return Cutoff(self.r_in, self.r_out)

    def center(self, cfg: LatticeConfig) -> float:
        return self.k * cfg.period

    def scaled(self, s, r, tsc, cfg):
        d = cfg.d
        beta = -(d - 2) / 2.0 + self.tau
        ds = np.asarray(s, float) - self.center(cfg)
        r = np.asarray(r, float)
        t = np.hypot(ds, r)
        eta, teta = self.cutoff(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            lt, ls = np.log(t), np.log(tsc)
            u = eta * np.exp(beta * lt + 0.5 * (d - 2) * ls)
            g = (beta * eta + teta) * np.exp((beta - 1.0) * lt + 0.5 * d * ls)
            us, ur = g * ds / t, g * r / t
        zero = eta == 0.0
        return (np.where(zero, 0.0, u), np.where(zero & (teta == 0), 0.0, us),
                np.where(zero & (teta == 0), 0.0, ur))

    def values(self, s, r, cfg):
        return self.scaled(s, r, np.ones_like(np.asarray(s, float)), cfg)

    def support(self, cfg):
        c = self.center(cfg)
        return Box(c - self.r_out, c + self.r_out, 0.0, self.r_out)

    def domains(self, cfg):
        shell = PolarShell(self.center(cfg), 0.5 * self.r_in, self.r_out)
        return [(shell, {"breaks_r": self.cutoff.breaks})]

    def check_admissible(self, cfg):
        limit = min(cfg.h / 2.0, cfg.R)
        if self.r_out > limit * (1 + 1e-12):
            raise AdmissibilityError(f"r_out={self.r_out} exceeds min(h/2, R)={limit}")
        if not 0.0 < self.tau < (cfg.d - 2) / 2.0:
            raise AdmissibilityError(f"tau must lie in (0, (d-2)/2), got {self.tau}")


def _grad_theta_over_theta(s, r, tsc, cfg: LatticeConfig):
    """``tsc * grad(theta)/theta`` in ``(s, r)``."""
    L = cfg.period
    a, rho = np.asarray(s) / L, np.asarray(r) / L
    th = theta_array(a, rho)
    ts = 4.0 * math.pi * np.sin(2.0 * math.pi * (a - np.round(a))) / L
    tr = 4.0 * math.pi * np.sinh(2.0 * math.pi * rho) / L
    return tsc * ts / th, tsc * tr / th, th


@dataclass(frozen=True, eq=False)
class Weighted(TestFunction):
    """``u = base * theta^alpha``."""

    base: TestFunction
    alpha: float

    def scaled(self, s, r, tsc, cfg):
        u, us, ur = self.base.scaled(s, r, tsc, cfg)
        gs, gr, th = _grad_theta_over_theta(s, r, tsc, cfg)
        phi = th ** self.alpha
        return u * phi, (us + self.alpha * gs * u) * phi, (ur + self.alpha * gr * u) * phi

    def values(self, s, r, cfg):
        return self.scaled(s, r, np.ones_like(np.asarray(s, float)), cfg)

    def support(self, cfg):
        return self.base.support(cfg)

    def domains(self, cfg):
        return self.base.domains(cfg)

    def check_admissible(self, cfg):
        self.base.check_admissible(cfg)


# ---------------------------------------------------------------------------
# energies

def _vt2(s, r, tsc, cfg: LatticeConfig) -> np.ndarray:
    """``V * tsc^2`` without forming ``V`` and ``tsc^2`` separately near a pole."""
    L = cfg.period
    S = closed_lattice_sum(np.asarray(s) / L, np.asarray(r) / L)
    return S * (tsc / L) ** 2


def _integrate(u: TestFunction, cfg: LatticeConfig, density, rel_tol: float, max_level: int,
               order: int = GAUSS_ORDER) -> QuadratureResult:
    total, err, cells = [], [], 0
    for dom, hints in u.domains(cfg):
        f = _DensityAdapter(u, cfg, density, dom)
        res = integrate_cell(f, dom, cfg.d, rel_tol=rel_tol, max_level=max_level,
                             order=order, prescaled=True, **hints)
        total.append(res.value)
        err.append(res.abs_error_estimate)
        cells += res.cells
    return QuadratureResult(math.fsum(total), math.fsum(err), cells)


class _DensityAdapter:
    # densities come out already multiplied by tsc^d on shells
    def __init__(self, u, cfg, density, dom):
        self.u, self.cfg, self.density = u, cfg, density
        self.shell = isinstance(dom, PolarShell)
        self.center = dom.center_s if self.shell else 0.0

    def __call__(self, s, r):
        if self.shell:
            tsc = np.hypot(s - self.center, r)
        else:
            tsc = np.ones_like(s)
        return self.density(self.u, s, r, tsc, self.cfg)


def _grad_density(u, s, r, tsc, cfg):
    _, us, ur = u.scaled(s, r, tsc, cfg)
    return us * us + ur * ur


def _pot_density(u, s, r, tsc, cfg):
    uu, _, _ = u.scaled(s, r, tsc, cfg)
    return _vt2(s, r, tsc, cfg) * uu * uu


def _mass_density(u, s, r, tsc, cfg):
    uu, _, _ = u.scaled(s, r, tsc, cfg)
    return uu * uu * tsc * tsc


def _admissible(u: TestFunction, cfg: LatticeConfig) -> None:
    u.check_admissible(cfg)


def dirichlet_energy(u: TestFunction, cfg: LatticeConfig, rel_tol: float = REL_TOL,
                     max_level: int = MAX_LEVEL) -> QuadratureResult:
    """``int |grad u|^2 dx`` from the analytic derivatives of ``u``."""
    _admissible(u, cfg)
    return _integrate(u, cfg, _grad_density, rel_tol, max_level)


def potential_energy(u: TestFunction, cfg: LatticeConfig, rel_tol: float = REL_TOL,
                     max_level: int = MAX_LEVEL) -> QuadratureResult:
    """``int V u^2 dx`` with ``V`` from the closed form."""
    _admissible(u, cfg)
    return _integrate(u, cfg, _pot_density, rel_tol, max_level)


def mass(u: TestFunction, cfg: LatticeConfig, rel_tol: float = REL_TOL,
         max_level: int = MAX_LEVEL) -> QuadratureResult:
    _admissible(u, cfg)
    return _integrate(u, cfg, _mass_density, rel_tol, max_level)


@dataclass(frozen=True)
class Quotient:
    value: float
    abs_error_estimate: float
    dirichlet: QuadratureResult
    potential: QuadratureResult

    def __float__(self) -> float:
        return self.value


def rayleigh_quotient(u: TestFunction, cfg: LatticeConfig, rel_tol: float = REL_TOL) -> Quotient:
    """``int |grad u|^2 / int V u^2``; an upper bound on the Hardy constant."""
    num = dirichlet_energy(u, cfg, rel_tol)
    den = potential_energy(u, cfg, rel_tol)
    if not den.value > 0:
        raise AdmissibilityError("degenerate test function: int V u^2 = 0")
    q = num.value / den.value
    err = q * (num.abs_error_estimate / abs(num.value) + den.abs_error_estimate / den.value) \
        if num.value else den.abs_error_estimate
    return Quotient(q, err, num, den)


# ---------------------------------------------------------------------------
# single-pole witness, 1D

def witness_profile(tau: float, r_in: float, r_out: float, d: int):
    """``(eta, beta)`` for ``u(t) = eta(t) t^beta``, ``beta = -(d-2)/2 + tau``."""
    return Cutoff(r_in, r_out), -(d - 2) / 2.0 + tau


def radial_witness_quotient(tau: float, r_in: float, r_out: float, d: int,
                            cfg: LatticeConfig | None = None, order: int = 24) -> float:
    """Single-pole Hardy quotient ``int |u'|^2 t^{d-1} / int u^2 t^{d-3}`` of the witness.

    With ``y = log t`` both integrals become ``int e^{2 tau y} (...)^2 dy`` and
    are evaluated on unit-width Gauss panels, so ``r_in`` may be tiny.
    Dominates the quotient against the full potential because
    ``V >= 1/|x - a_0|^2``.
    """
    if not 0 < r_in < r_out / 2:
        raise ValueError("need 0 < r_in < r_out / 2")
    if not 0 < tau < (d - 2) / 2:
        raise ValueError("need 0 < tau < (d-2)/2")
    if cfg is not None:
        limit = min(cfg.h / 2.0, cfg.R)
        if r_out > limit * (1 + 1e-12):
            raise ValueError(f"r_out={r_out} exceeds min(h/2, R)={limit}")
    eta_fn, beta = witness_profile(tau, r_in, r_out, d)
    x, w = _rule(order)
    ys = _unit_panels([math.log(b) for b in eta_fn.breaks])
    y_ref = math.log(r_out)
    num, den = [], []
    for lo, hi in zip(ys[:-1], ys[1:]):
        y = lo + (hi - lo) * x
        eta, teta = eta_fn(np.exp(y))
        wt = (hi - lo) * w * np.exp(2.0 * tau * (y - y_ref))
        num.append(float(np.sum(wt * (beta * eta + teta) ** 2)))
        den.append(float(np.sum(wt * eta * eta)))
    return math.fsum(num) / math.fsum(den)


# ---------------------------------------------------------------------------
# Allegretto-Huang identity

def _lhs_density(alpha):
    def density(u, s, r, tsc, cfg):
        uu, us, ur = u.scaled(s, r, tsc, cfg)
        L = cfg.period
        ratio = -2.0 * alpha * (cfg.d - 2) - 4.0 * math.pi * alpha * alpha * f_ratio(s / L, r / L)
        # Laplace(phi)/phi = -V * ratio
        return us * us + ur * ur - ratio * _vt2(s, r, tsc, cfg) * uu * uu
    return density


def _rhs_density(alpha):
    def density(u, s, r, tsc, cfg):
        uu, us, ur = u.scaled(s, r, tsc, cfg)
        gs, gr, _ = _grad_theta_over_theta(s, r, tsc, cfg)
        es, er = us - alpha * gs * uu, ur - alpha * gr * uu
        return es * es + er * er
    return density


@dataclass(frozen=True)
class AllegrettoTerms:
    lhs: QuadratureResult
    rhs: QuadratureResult

    @property
    def residual(self) -> float:
        return abs(self.lhs.value - self.rhs.value)

    @property
    def error_estimate(self) -> float:
        return self.lhs.abs_error_estimate + self.rhs.abs_error_estimate


def _require_normalized(cfg: LatticeConfig) -> None:
    if not cfg.normalized:
        raise ValueError("the phi = theta^alpha calculus is stated for the dh = 1 lattice")


def allegretto_terms(u: TestFunction, alpha: float, cfg: LatticeConfig,
                     rel_tol: float = REL_TOL, max_level: int = MAX_LEVEL,
                     order: int = GAUSS_ORDER) -> AllegrettoTerms:
    """Both sides of ``int |grad u|^2 + (Laplace phi/phi) u^2 = int phi^2 |grad(u/phi)|^2``."""
    _require_normalized(cfg)
    _admissible(u, cfg)
    lhs = _integrate(u, cfg, _lhs_density(alpha), rel_tol, max_level, order)
    rhs = _integrate(u, cfg, _rhs_density(alpha), rel_tol, max_level, order)
    return AllegrettoTerms(lhs, rhs)


def allegretto_residual(u: TestFunction, alpha: float, cfg: LatticeConfig,
                        rel_tol: float = REL_TOL) -> float:
    return allegretto_terms(u, alpha, cfg, rel_tol).residual


def _uniform_integral(u: TestFunction, cfg: LatticeConfig, density, m: int, order: int) -> float:
    # non-adaptive composite rule: m x m panels per smooth sub-domain
    parts = []
    for dom, hints in u.domains(cfg):
        f = _DensityAdapter(u, cfg, density, dom)
        if isinstance(dom, Box):
            sb = _sorted_breaks(dom.s0, dom.s1, hints.get("breaks_s", ()))
            rb = _sorted_breaks(dom.r0, dom.r1, hints.get("breaks_r", ()))
            rects = _tensor_partition(sb, rb)
            node_fn = lambda rs: _box_nodes(rs, cfg.d, order)
            g = lambda n: f(n.s, n.r)
        else:
            tb = _sorted_breaks(dom.t0, dom.t1, hints.get("breaks_r", ()))
            rects = _tensor_partition([math.log(t) for t in tb], [0.0, math.pi])
            node_fn = lambda rs, c=dom.center_s: _shell_nodes(c, rs, cfg.d, order)
            g = lambda n: f(n.s, n.r)
        for _ in range(int(math.log2(m))):
            rects = _split(rects)
        nodes = node_fn(rects)
        parts.append(math.fsum((g(nodes) * nodes.measure).ravel().tolist()))
    return math.fsum(parts)


def allegretto_refinement(u: TestFunction, alpha: float, cfg: LatticeConfig,
                          levels: Sequence[int] = (1, 2, 4, 8), order: int = 2) -> list[float]:
    """Residuals ``|LHS - RHS|`` on uniformly refined composite Gauss meshes."""
    _require_normalized(cfg)
    _admissible(u, cfg)
    out = []
    for m in levels:
        lhs = _uniform_integral(u, cfg, _lhs_density(alpha), m, order)
        rhs = _uniform_integral(u, cfg, _rhs_density(alpha), m, order)
        out.append(abs(lhs - rhs))
    return out


# ---------------------------------------------------------------------------
# inequality checks

def hardy_gap(u: TestFunction, lam: float, cfg: LatticeConfig,
              rel_tol: float = REL_TOL) -> tuple[float, float]:
    """``(int |grad u|^2 - lam int V u^2, error estimate)``."""
    num = dirichlet_energy(u, cfg, rel_tol)
    den = potential_energy(u, cfg, rel_tol)
    return num.value - lam * den.value, num.abs_error_estimate + abs(lam) * den.abs_error_estimate


@dataclass(frozen=True)
class Theorem35Check:
    lhs: float
    rhs: float
    error: float
    constant: float

    @property
    def passed(self) -> bool:
        return self.lhs >= self.rhs - self.error


def theorem35_check(u: TestFunction, cfg: LatticeConfig, cutoff: CutoffSpec | None = None,
                    rel_tol: float = REL_TOL) -> Theorem35Check:
    """``(C int u^2 + int |grad u|^2, (d-2)^2/4 int V u^2)`` for ``u`` in the window ``|s| <= 2R``."""
    box = u.support(cfg)
    window = 2.0 * cfg.R
    if box.s0 < -window * (1 + 1e-12) or box.s1 > window * (1 + 1e-12):
        raise AdmissibilityError(f"support [{box.s0}, {box.s1}] leaves the window |s| <= {window}")
    C = theorem35_constant(cfg, cutoff)
    m = mass(u, cfg, rel_tol)
    g = dirichlet_energy(u, cfg, rel_tol)
    p = potential_energy(u, cfg, rel_tol)
    k = (cfg.d - 2) ** 2 / 4.0
    lhs = C * m.value + g.value
    rhs = k * p.value
    err = C * m.abs_error_estimate + g.abs_error_estimate + k * p.abs_error_estimate
    return Theorem35Check(lhs, rhs, err, C)
