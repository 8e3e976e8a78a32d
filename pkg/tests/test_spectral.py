import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hardyc.geometry import LatticeConfig
from hardyc.potential import closed_lattice_sum
from hardyc.quadrature import AdmissibilityError, rayleigh_quotient
from hardyc.spectral import (
    Bilinear,
    Grid2D,
    GridError,
    assemble,
    delta_sweep,
    dense_smallest_eig,
    estimate_mu,
    ladder,
    smallest_eig,
    sweep_R,
)
from hardyc.supersolution import lambda_lower

CFG = LatticeConfig.normalized_config(3, 0.5)


def grid(cfg, ns, nr, factor=1e-3, **kw):
    return Grid2D.for_config(cfg, ns, nr, factor * cfg.h, **kw)


def test_grid_invariants():
    with pytest.raises(GridError):
        grid(CFG, 2, 8)
    with pytest.raises(GridError):
        grid(CFG, 8, 8, factor=0.2)  # delta >= min(h/2, R)/4
    with pytest.raises(GridError):
        Grid2D(8, 8, CFG.period, CFG.R, 1e-3 * CFG.h, grading=12.0)  # aspect > 32
    with pytest.raises(GridError):
        grid(CFG, 9, 8)
    g = grid(CFG, 64, 32)
    assert g.max_aspect() <= 32 * (1 + 1e-9)
    assert g.r_nodes[0] == 0.0 and g.r_nodes[-1] == CFG.R
    assert np.all(np.diff(g.r_nodes) > 0)


def test_innermost_cell_is_half_delta_when_aspect_allows():
    g = grid(CFG, 256, 128)
    assert g.r_nodes[1] == pytest.approx(g.delta / 2, rel=1e-10)
    coarse = grid(CFG, 16, 8)
    assert coarse.r_nodes[1] == pytest.approx(coarse.L / 16 / 32, rel=1e-10)


def test_ladder_grids_nest():
    g = ladder(CFG, [(16, 8), (32, 16), (64, 32)], 1e-3 * CFG.h)
    assert g[2].contains(g[1]) and g[1].contains(g[0]) and g[2].contains(g[0])
    assert not grid(CFG, 32, 16).contains(grid(CFG, 16, 8, grading=0.5))


def test_operators_are_exactly_symmetric():
    K, M = assemble(grid(CFG, 32, 16), CFG)
    assert abs(K.matrix - K.matrix.T).max() == 0.0
    assert abs(M.matrix - M.matrix.T).max() == 0.0


def test_constants_have_positive_energy():
    K, M = assemble(grid(CFG, 16, 8), CFG)
    one = np.ones(K.dimension)
    assert float(one @ (K @ one)) > 0
    assert float(one @ (M @ one)) > 0


def _dense_assembly(g, cfg):
    # element by element with scalar arithmetic and explicit periodic wrap
    s, r = g.s_nodes, g.r_nodes
    ns, nr = g.n_s, g.n_r
    n = ns * (nr + 1)
    K = np.zeros((n, n))
    M = np.zeros((n, n))
    xg = [0.5 - math.sqrt(0.15), 0.5, 0.5 + math.sqrt(0.15)]
    wg = [5 / 18, 8 / 18, 5 / 18]
    for i in range(ns):
        for j in range(nr):
            hs, hr = s[i + 1] - s[i], r[j + 1] - r[j]
            ids = [(i % ns) * (nr + 1) + j, ((i + 1) % ns) * (nr + 1) + j,
                   (i % ns) * (nr + 1) + j + 1, ((i + 1) % ns) * (nr + 1) + j + 1]
            for xa, wa in zip(xg, wg):
                for eb, wb in zip(xg, wg):
                    sq, rq = s[i] + xa * hs, r[j] + eb * hr
                    w = 2 * math.pi * wa * wb * hs * hr * rq
                    V = float(closed_lattice_sum(sq / cfg.period, rq / cfg.period)) / cfg.dh2
                    N = [(1 - xa) * (1 - eb), xa * (1 - eb), (1 - xa) * eb, xa * eb]
                    Ns = [-(1 - eb) / hs, (1 - eb) / hs, -eb / hs, eb / hs]
                    Nr = [-(1 - xa) / hr, -xa / hr, (1 - xa) / hr, xa / hr]
                    for p in range(4):
                        for q in range(4):
                            K[ids[p], ids[q]] += w * (Ns[p] * Ns[q] + Nr[p] * Nr[q])
                            M[ids[p], ids[q]] += w * V * N[p] * N[q]
    keep = g.active_mask()
    return K[np.ix_(keep, keep)], M[np.ix_(keep, keep)]


def test_assembly_matches_dense_oracle():
    g = grid(CFG, 8, 8)
    K, M = assemble(g, CFG)
    Kd, Md = _dense_assembly(g, CFG)
    assert np.max(np.abs(K.toarray() - Kd)) <= 1e-12 * np.max(np.abs(Kd))
    assert np.max(np.abs(M.toarray() - Md)) <= 1e-12 * np.max(np.abs(Md))


def test_assemble_errors():
    with pytest.raises(ValueError):
        assemble(grid(CFG, 8, 8), LatticeConfig(3, 0.3, 0.5))
    with pytest.raises(GridError):
        assemble(grid(CFG, 8, 8), LatticeConfig.normalized_config(3, 0.6))


def test_small_grid_matches_dense_eigensolve():
    K, M = assemble(grid(CFG, 8, 8), CFG)
    est = smallest_eig(K, M)
    ref = dense_smallest_eig(K, M)
    assert abs(est.mu_hat - ref) <= 1e-10 * (1 + ref)
    Kv, Mv = K @ est.vector, M @ est.vector
    assert np.linalg.norm(Kv - est.mu_hat * Mv) / np.linalg.norm(Mv) <= 1e-10
    assert est.residual_norm <= 1e-10 and est.mu_hat > 0


@settings(max_examples=25)
@given(st.integers(2, 6), st.integers(4, 12), st.sampled_from([(3, 0.5), (3, 0.05), (4, 1.0), (5, 0.25)]))
def test_dense_oracle_on_all_small_grids(half_ns, nr, dR):
    d, R = dR
    cfg = LatticeConfig.normalized_config(d, R)
    try:
        g = grid(cfg, 2 * half_ns, nr)
    except GridError:
        return
    K, M = assemble(g, cfg)
    if K.dimension > 200:
        return
    est = smallest_eig(K, M)
    ref = dense_smallest_eig(K, M)
    assert abs(est.mu_hat - ref) <= 1e-10 * abs(ref)


def test_nested_ladder_is_monotone():
    est = estimate_mu(CFG, ladder(CFG, [(16, 16), (32, 32), (64, 64)], 1e-3 * CFG.h))
    mus = [e.mu_hat for e in est.estimates]
    assert mus[0] >= mus[1] >= mus[2]
    assert est.monotone and est.lower_ok


def test_smaller_exclusion_never_raises_estimate():
    sw = delta_sweep(CFG, 64, 32)
    mus = [e.mu_hat for e in sw["estimates"]]
    assert mus[0] >= mus[1] >= mus[2]
    assert sw["extrapolated"] <= mus[-1]


def test_non_nested_sequence_rejected():
    with pytest.raises(GridError):
        estimate_mu(CFG, [grid(CFG, 16, 8), grid(CFG, 32, 16)])


def test_four_dimensional_estimate_inside_sandwich():
    cfg = LatticeConfig.normalized_config(4, 0.5)
    est = estimate_mu(cfg, ladder(cfg, [(128, 64)], 1e-3 * cfg.h))
    assert lambda_lower(0.5, 4) - 1e-6 <= est.mu_hat <= 1.05


def test_estimate_is_variational_upper_bound():
    g = grid(CFG, 16, 8)
    K, M = assemble(g, CFG)
    est = smallest_eig(K, M)
    u = Bilinear.from_active(g, est.vector)
    q = rayleigh_quotient(u, CFG)
    assert q.value <= est.mu_hat + 1e-10 + 1e-8
    assert q.value >= lambda_lower(CFG.R, 3) - q.abs_error_estimate


def test_bilinear_admissibility():
    g = grid(CFG, 8, 8)
    c = np.ones(g.n_s * (g.n_r + 1))
    with pytest.raises(AdmissibilityError):
        Bilinear(g, c).check_admissible(CFG)


def test_estimates_are_bit_identical_across_runs():
    g = grid(CFG, 64, 32)
    a = smallest_eig(*assemble(g, CFG))
    b = smallest_eig(*assemble(g, CFG))
    assert a.mu_hat == b.mu_hat and a.iterations == b.iterations
    assert np.array_equal(a.vector, b.vector)


def test_sweep_rows_and_thread_independence(monkeypatch):
    Rs = [1.0, 0.5, 0.25]
    monkeypatch.setenv("HARDYC_THREADS", "1")
    one = sweep_R(3, Rs, [(32, 16)])
    monkeypatch.setenv("HARDYC_THREADS", "3")
    many = sweep_R(3, Rs, [(32, 16)])
    assert [r.mu_hat for r in one] == [r.mu_hat for r in many]
    mus = [r.mu_hat for r in one]
    assert all(b >= a - 1e-4 for a, b in zip(mus, mus[1:]))
    for row in one:
        x = math.pi * row.R * math.sqrt(3)
        assert row.gap == pytest.approx(0.25 * (1 - 1 / (x / math.tanh(x))), abs=1e-12)


def test_sweep_requires_decreasing_radii():
    with pytest.raises(ValueError):
        sweep_R(3, [0.5, 1.0])


def test_bad_thread_setting(monkeypatch):
    monkeypatch.setenv("HARDYC_THREADS", "zero")
    with pytest.raises(ValueError):
        sweep_R(3, [0.5], [(16, 8)], workers=None)
