"""Acceptance gate: one test per criterion, each reporting a pass/fail line."""
import functools
import math
import time

import numpy as np
import pytest

from hardyc.geometry import LatticeConfig
from hardyc.spectral import Grid2D, GridError, assemble, dense_smallest_eig, smallest_eig, sweep_R
from hardyc.suites import (
    allegretto,
    closed_vs_series,
    identities,
    local,
    pole_limit,
    sandwich,
    supersolution,
    thm35,
    witness,
)
from hardyc.supersolution import lambda_lower

DIMS = (3, 4, 5)


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def describe(report) -> str:
    return "; ".join(f"{c.name}={c.value:.3g}" for c in report.checks)


def test_criterion_01_closed_form_matches_series(criterion):
    ok, lines = True, []
    for d in DIMS:
        rep, dt = timed(closed_vs_series, d, samples=10_000, seed=0)
        ok &= rep.passed and dt < 10.0
        lines.append(f"d={d} excess={rep.checks[0].value:.2e} t={dt:.1f}s")
    assert criterion(1, ok, ", ".join(lines))


def test_criterion_02_calculus_identities(criterion):
    rep, dt = timed(identities, LatticeConfig.normalized_config(3, 1.0), samples=1000, seed=0)
    assert criterion(2, rep.passed and dt < 5.0, f"{describe(rep)} t={dt:.1f}s")


def test_criterion_03_supersolution_certificate(criterion):
    t0 = time.perf_counter()
    ok, worst_margin, worst_fd = True, math.inf, 0.0
    for d in DIMS:
        for R in (0.25, 0.5, 1.0):
            rep = supersolution(LatticeConfig.normalized_config(d, R), samples=10_000, seed=0)
            ok &= rep.passed
            worst_margin = min(worst_margin, rep.checks[0].value)
            worst_fd = max(worst_fd, rep.checks[1].value)
    dt = time.perf_counter() - t0
    ok &= dt < 30.0
    assert criterion(3, ok, f"min margin={worst_margin:.3g} max fd err={worst_fd:.2e} t={dt:.1f}s")


def test_criterion_04_pole_limit(criterion):
    reps = [pole_limit(d, distance=1e-3) for d in DIMS]
    ok = all(r.passed for r in reps)
    assert criterion(4, ok, ", ".join(describe(r) for r in reps))


@functools.lru_cache(maxsize=None)
def _sweep(d, Rs):
    return sweep_R(d, list(Rs), [(256, 128)], 1e-3, 1e-10)


def test_criterion_05_sandwich(criterion):
    t0 = time.perf_counter()
    ok, lines = True, []
    est_small = None
    for R in (0.5, 0.25, 0.05):
        rep, est = sandwich(LatticeConfig.normalized_config(3, R), [(256, 128)], 1e-3, 0.05)
        ok &= rep.passed
        lines.append(f"R={R} mu_hat={est.mu_hat:.4f} in [{est.lower:.4f}, {0.25 * 1.05:.4f}]: "
                     f"{'ok' if rep.passed else 'no'}")
        if R == 0.05:
            est_small = est
    ok &= est_small.mu_hat >= 0.24404 - 1e-6
    dt = time.perf_counter() - t0
    ok &= dt < 300.0
    assert criterion(5, ok, "; ".join(lines) + f" t={dt:.1f}s")


def test_criterion_06_asymptotics(criterion):
    Rs = (1.0, 0.5, 0.25, 0.1, 0.05)
    rows = _sweep(3, Rs)
    gap_err = max(abs(r.gap - 0.25 * (1 - 1 / (math.pi * r.R * math.sqrt(3) / math.tanh(math.pi * r.R * math.sqrt(3)))))
                  for r in rows)
    mus = [r.mu_hat for r in rows]
    mono = all(b >= a - 1e-4 for a, b in zip(mus, mus[1:]))
    ok = gap_err <= 1e-12 and mono
    assert criterion(6, ok, f"gap err={gap_err:.1e} mu_hat={[round(m, 4) for m in mus]}")


def test_criterion_07_reverse_witness(criterion):
    t0 = time.perf_counter()
    reps = [witness(d, tau=0.01, r_in=1e-6) for d in DIMS]
    dt = time.perf_counter() - t0
    ok = all(r.passed for r in reps) and dt < 5.0
    detail = ", ".join(f"d={d} q={r.checks[0].value:.4f} target={r.checks[0].threshold:.4f}"
                       for d, r in zip(DIMS, reps))
    assert criterion(7, ok, f"{detail} t={dt:.1f}s")


def test_criterion_08_allegretto_identity(criterion):
    rep = allegretto(LatticeConfig.normalized_config(3, 0.5), count=20, seed=0)
    assert criterion(8, rep.passed, describe(rep))


def test_criterion_09_local_normalized_potential(criterion):
    reps = [local(LatticeConfig.normalized_config(d, 1.0), samples=1000, seed=0) for d in DIMS]
    assert criterion(9, all(r.passed for r in reps), " | ".join(describe(r) for r in reps))


def test_criterion_10_cutoff_constant_spot_check(criterion):
    cfg = LatticeConfig.normalized_config(3, 1.0)
    assert cfg.h == pytest.approx(1 / 3)
    rep = thm35(cfg, count=50, seed=0)
    assert criterion(10, rep.passed, describe(rep))


def _small_grids(cfg):
    for ns in range(4, 52, 2):
        for nr in range(4, 50):
            if ns * (nr + 1) > 400:
                break
            try:
                g = Grid2D.for_config(cfg, ns, nr, 1e-3 * cfg.h)
            except GridError:
                continue
            if int(g.active_mask().sum()) <= 200:
                yield g


def test_criterion_11_small_instance_oracle(criterion):
    worst, count = 0.0, 0
    for d, R in ((3, 0.5), (3, 0.05), (4, 1.0), (5, 0.25)):
        cfg = LatticeConfig.normalized_config(d, R)
        for g in _small_grids(cfg):
            K, M = assemble(g, cfg)
            ref = dense_smallest_eig(K, M)
            worst = max(worst, abs(smallest_eig(K, M).mu_hat - ref) / abs(ref))
            count += 1
    assert count > 0
    assert criterion(11, worst <= 1e-10, f"{count} grids, worst relative diff={worst:.1e}")


def test_lower_bound_literal_at_smallest_radius():
    assert lambda_lower(0.05, 3) == pytest.approx(0.2440088, abs=1e-7)
    assert np.isfinite(lambda_lower(0.05, 3))
