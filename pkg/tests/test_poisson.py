import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snlab.errors import NonConvergence
from snlab.fields import RadialWave
from snlab.oracle import fd_poisson_oracle, free_gaussian, normalize_gaussian
from snlab.poisson import default_rho, pr_adi_poisson, radial_poisson, rho_cycle, symmetrize_equator
from snlab.spectral import axisymmetric_grid, build_grid, planar_grid


def _gaussian_wave(n=256, L=100.0, a=50.0):
    g = build_grid(n, L)
    C = normalize_gaussian(6.0, a, 0.0, g)
    return RadialWave(g, free_gaussian(g.nodes, 0.0, 6.0, a, 0.0, C)), C


def test_radial_zero():
    g = build_grid(32, 10.0)
    assert np.all(radial_poisson(RadialWave(g, np.zeros(32))).values == 0)


def test_radial_manufactured():
    g = build_grid(32, 10.0)
    phi = radial_poisson(RadialWave(g, np.sqrt(2 * g.nodes)))
    assert np.abs(phi.values - (g.nodes - 10.0)).max() < 1e-10


def test_radial_matches_fd_oracle():
    w, C = _gaussian_wave()
    phi = radial_poisson(w).values
    dens = lambda r: np.abs(free_gaussian(r, 0.0, 6.0, 50.0, 0.0, C)) ** 2
    oracle = fd_poisson_oracle(dens, "radial", 10**4, 100.0, w.grid.nodes)
    assert np.abs(phi - oracle).max() < 1e-6


def test_radial_sign_and_coupling():
    w, _ = _gaussian_wave(128)
    phi = radial_poisson(w).values
    assert phi.max() <= 1e-12 and phi[-1] == 0.0
    assert np.allclose(radial_poisson(w, 2.5).values, 2.5 * phi, rtol=1e-12, atol=1e-16)


def test_pr_adi_zero_density():
    g = planar_grid(16, 10.0)
    phi, info = pr_adi_poisson(np.zeros(g.shape), g, return_info=True)
    assert np.all(phi.values == 0) and info.iterations == 1


def test_pr_adi_planar_manufactured():
    L = 10.0
    g = planar_grid(32, L)
    X, Y = g.coordinates
    exact = np.sin(np.pi * (X + L / 2) / L) * np.sin(np.pi * (Y + L / 2) / L)
    source = -2 * (np.pi / L) ** 2 * exact
    phi = pr_adi_poisson(source, g, tol=1e-10).values
    assert np.abs(phi - exact).max() < 1e-6


def test_pr_adi_axi_matches_radial():
    ag = axisymmetric_grid(48, 100.0, 16)
    R, _ = ag.coordinates
    g = ag.grid_a
    C = normalize_gaussian(6.0, 30.0, 0.0, g)
    u = free_gaussian(g.nodes, 0.0, 6.0, 30.0, 0.0, C)
    phi_r = radial_poisson(RadialWave(g, u)).values
    phi_a = pr_adi_poisson(np.abs(u[:, None] * np.ones(ag.shape)) ** 2, ag).values
    assert np.abs(phi_a - phi_r[:, None]).max() < 1e-5


def test_pr_adi_matches_fd_oracle_planar():
    L = 40.0
    g = planar_grid(48, L)
    X, Y = g.coordinates
    dens = lambda x, y: np.exp(-((x - 2) ** 2 + (y + 1) ** 2) / 18.0) / (18 * np.pi)
    phi = pr_adi_poisson(dens(X, Y), g).values
    oracle = fd_poisson_oracle(dens, "planar", 1024, L, (X, Y))
    assert np.abs(phi - oracle).max() < 1e-5


@settings(max_examples=10, deadline=None)
@given(alpha=st.floats(-3, 3), beta=st.floats(-3, 3), seed=st.integers(0, 2**31 - 1))
def test_pr_adi_linearity(alpha, beta, seed):
    rng = np.random.default_rng(seed)
    g = planar_grid(12, 10.0)
    d1, d2 = rng.random(g.shape), rng.random(g.shape)
    f = lambda d: pr_adi_poisson(d, g, tol=1e-11).values
    combo = f(alpha * d1 + beta * d2)
    assert np.abs(combo - alpha * f(d1) - beta * f(d2)).max() < 1e-8 * (1 + abs(alpha) + abs(beta))


def test_pr_adi_sign_and_symmetry(axi_ground_small):
    phi = axi_ground_small.potential.values
    assert phi.max() <= 1e-12
    assert np.array_equal(symmetrize_equator(axi_ground_small.potential).values, phi)


def test_pr_adi_residual_monotone_after_transient():
    g = planar_grid(24, 20.0)
    X, Y = g.coordinates
    d = np.exp(-(X**2 + Y**2) / 8.0)
    rho = default_rho(g)
    _, info = pr_adi_poisson(d, g, rho=rho, tol=1e-9, max_iter=20000, return_info=True)
    assert info.updates[-1] < info.updates[1]
    _, cyc = pr_adi_poisson(d, g, return_info=True)
    assert cyc.iterations < info.iterations
    assert cyc.relative_residual < 1e-6


def test_pr_adi_nonconvergence_carries_residual():
    g = planar_grid(16, 20.0)
    X, Y = g.coordinates
    with pytest.raises(NonConvergence) as exc:
        pr_adi_poisson(np.exp(-(X**2 + Y**2)), g, rho=1e-6, max_iter=5)
    assert exc.value.residual > 0 and len(exc.value.history) == 5


def test_rho_cycle_spans_spectrum():
    g = axisymmetric_grid(24, 100.0, 12)
    cyc = rho_cycle(g)
    assert len(cyc) > 1 and all(b > a for a, b in zip(cyc, cyc[1:]))
