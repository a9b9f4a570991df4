import numpy as np
import pytest
from numpy.testing import assert_allclose

from klab.energy import rho_weight
from klab.errors import DomainError, GridMismatch
from klab.geometry import hyperbolic
from klab.modes import (ModeSolution, SolveConfig, integrate_mode, modes_table, residual_check, solve_modes,
                        sphere_eigenvalue, sphere_norms, sphere_volume, stencil_residual, transform_v, wronskian)
from klab.potential import free, manufactured_potential
from klab.profile import constant, expression_profile


def bessel_config(r_end=50.0, **kw):
    return SolveConfig(1.0, 1.0, r_end, initial={0: (np.sin(1.0), np.cos(1.0) - np.sin(1.0))}, **kw)


def test_sphere_constants():
    assert_allclose(sphere_volume(3), 4 * np.pi)
    assert_allclose(sphere_volume(2), 2 * np.pi)
    assert sphere_eigenvalue(2, 3) == 6.0


def test_spherical_bessel_oracle(e3):
    mode = integrate_mode(e3, free(1.0, 50.0), bessel_config(), 0)
    r = mode.grid
    exact = np.sin(r) / r
    exact_p = np.cos(r) / r - np.sin(r) / r ** 2
    # relative to the local amplitude 1/r, since sin r / r has zeros
    assert np.max(np.abs(mode.u - exact) * r) <= 1e-8
    assert np.max(np.abs(mode.up - exact_p) * r) <= 1e-8


def test_manufactured_round_trip():
    M = hyperbolic(3, r_max=25.0)
    u = expression_profile("exp(-r)", 1.0, 25.0)
    P = manufactured_potential(M, u, 1.0)
    cfg = SolveConfig(1.0, 1.0, 25.0, initial={0: (np.exp(-1.0), -np.exp(-1.0))})
    mode = integrate_mode(M, P, cfg, 0)
    assert_allclose(mode.u, np.exp(-mode.grid), rtol=1e-6)


def test_zero_initial_data_rejected(h3):
    cfg = SolveConfig(1.5, 1.0, 10.0)
    with pytest.raises(DomainError):
        integrate_mode(h3, free(1.0, 40.0), cfg, 0, initial=(0.0, 0.0))


def test_sphere_norm_bessel(e3):
    modes = solve_modes(e3, free(1.0, 50.0), bessel_config())
    norms = sphere_norms(e3, modes)
    r = norms.grid
    assert_allclose(norms.M2, 4 * np.pi * np.sin(r) ** 2, atol=1e-7)


def test_sphere_norms_add_over_modes(h3_modes, h3):
    total = sphere_norms(h3, h3_modes)
    parts = [sphere_norms(h3, [m]) for m in h3_modes]
    assert_allclose(total.M2, sum(p.M2 for p in parts), rtol=1e-14)
    assert_allclose(total.N2, sum(p.N2 for p in parts), rtol=1e-14)
    assert np.all(total.M2 >= 0) and np.all(total.N2 >= 0)


def test_grid_mismatch(h3):
    a = solve_modes(h3, free(1.0, 40.0), SolveConfig(1.5, 1.0, 10.0))
    b = solve_modes(h3, free(1.0, 40.0), SolveConfig(1.5, 1.0, 20.0))
    with pytest.raises(GridMismatch):
        sphere_norms(h3, a + b)


def test_radial_data_keeps_higher_modes_silent(h3):
    cfg = SolveConfig(1.5, 1.0, 20.0, l_max=3, initial={0: (1.0, 0.0), 1: (0.0, 0.0), 2: (0.0, 0.0)})
    modes = solve_modes(h3, free(1.0, 40.0), cfg)
    assert [m.l for m in modes] == [0]


def test_transform_identity(h3_modes):
    rho = rho_weight(0.0, 0.0, 1.0, 1.0, 40.0)
    for mv in transform_v(h3_modes, rho, 0.0):
        assert np.array_equal(mv.v, mv.source.u)
        assert np.array_equal(mv.vp, mv.source.up)


def test_transform_cancels_decay():
    r = np.linspace(1.0, 5.0, 9)
    u = np.exp(-r)
    mode = ModeSolution(0, 0.0, 3, 1.0, r, u, -u, u)
    rho = rho_weight(2.0, 0.0, 1.0, 1.0, 5.0)
    (mv,) = transform_v([mode], rho, 0.0)
    assert_allclose(mv.v, np.exp(-1.0), rtol=1e-14)
    assert_allclose(mv.vp, 0.0, atol=1e-15)


def test_transform_r_power():
    r = np.linspace(1.0, 5.0, 9)
    mode = ModeSolution(0, 0.0, 3, 1.0, r, np.ones_like(r), np.zeros_like(r), np.zeros_like(r))
    (mv,) = transform_v([mode], constant(0.0, 1.0, 5.0), 1.0)
    assert_allclose(mv.v, r)
    assert_allclose(mv.vp, 1.0)


def test_weighted_measure_consistency(h3, h3_modes):
    rho = rho_weight(2.0, 0.0, 1.0, 1.0, 40.0)
    vs = transform_v(h3_modes, rho, 0.0)
    r = vs[0].grid
    M2 = sphere_volume(3) * h3.f(r) ** 2 * np.exp(-2 * rho(r)) * sum(mv.v ** 2 for mv in vs)
    assert_allclose(M2, sphere_norms(h3, h3_modes).M2, rtol=1e-12)


def test_residual_manufactured():
    M = hyperbolic(3, r_max=25.0)
    u = expression_profile("exp(-r)", 1.0, 25.0)
    P = manufactured_potential(M, u, 1.0)
    cfg = SolveConfig(1.0, 1.0, 25.0, initial={0: (np.exp(-1.0), -np.exp(-1.0))})
    modes = solve_modes(M, P, cfg)
    rho = rho_weight(2.0, 0.0, 1.0, 1.0, 25.0)
    for m in (0.0, 1.0, 3.0):
        assert residual_check(M, P, rho, transform_v(modes, rho, m), 1.0, m) <= 1e-8


def test_residual_detects_perturbation(h3, h3_modes):
    P = free(1.0, 40.0)
    rho = rho_weight(2.0, 0.0, 1.0, 1.0, 40.0)
    vs = transform_v(h3_modes, rho, 1.0)
    assert residual_check(h3, P, rho, vs, 1.5, 1.0) <= 1e-8
    vs[1] = vs[1].with_values(1.01 * vs[1].v, vs[1].vp)
    assert residual_check(h3, P, rho, vs, 1.5, 1.0) > 1e-3


def test_residual_plain_equation(h3, h3_modes):
    rho = constant(0.0, 1.0, 40.0)
    assert residual_check(h3, free(1.0, 40.0), rho, transform_v(h3_modes, rho, 0.0), 1.5, 0.0) <= 1e-8


def test_stencil_residual_fine_uniform_grid(h3):
    grid = np.linspace(1.0, 5.0, 8001)
    cfg = SolveConfig(1.5, 1.0, 5.0, l_max=1, grid=grid)
    for mode in solve_modes(h3, free(1.0, 40.0), cfg):
        assert stencil_residual(h3, free(1.0, 40.0), mode) <= 1e-6


def test_abel_wronskian(e3):
    P = free(1.0, 50.0)
    cfg = SolveConfig(1.0, 1.0, 50.0)
    a = integrate_mode(e3, P, cfg, 0, initial=(1.0, 0.0))
    b = integrate_mode(e3, P, cfg, 0, initial=(0.0, 1.0))
    w = wronskian(e3, a, b)
    assert_allclose(w, w[0], rtol=1e-8)


def test_modes_table_long_format(h3_modes):
    t = modes_table(h3_modes)
    n = h3_modes[0].grid.size
    assert list(t) == ["r", "l", "u_l", "u_l_prime"]
    assert t["r"].size == 3 * n
    assert list(np.unique(t["l"])) == [0, 1, 2]


def test_parallel_solve_is_deterministic(h3):
    cfg = SolveConfig(1.5, 1.0, 40.0, l_max=4)
    a = solve_modes(h3, free(1.0, 40.0), cfg, jobs=1)
    b = solve_modes(h3, free(1.0, 40.0), cfg, jobs=4)
    for x, y in zip(a, b):
        assert np.array_equal(x.u, y.u) and np.array_equal(x.up, y.up)
