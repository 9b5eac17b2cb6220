import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snlab.errors import InvalidArgument
from snlab.fields import RadialWave, probability
from snlab.oracle import (
    dense_gaussian_constant,
    fd_free_evolution,
    fd_poisson_oracle,
    free_gaussian,
    free_gaussian_2d,
    normalize_gaussian,
)
from snlab.spectral import build_grid


@settings(max_examples=30, deadline=None)
@given(t=st.floats(0, 50), sigma=st.floats(0.5, 10), a=st.floats(0, 60), v=st.floats(-1, 1))
def test_gaussian_vanishes_at_origin(t, sigma, a, v):
    assert abs(free_gaussian(0.0, t, sigma, a, v)) < 1e-14


def test_gaussian_t0_reduction():
    r = np.linspace(0, 80, 400)
    s, a = 6.0, 50.0
    expected = (np.exp(-((r - a) ** 2) / (2 * s * s)) - np.exp(-((r + a) ** 2) / (2 * s * s))) / math.sqrt(s)
    assert np.allclose(free_gaussian(r, 0.0, s, a, 0.0), expected, atol=1e-15, rtol=1e-13)


def test_gaussian_tail():
    assert abs(free_gaussian(50 + 20 * 6, 0.0, 6.0, 50.0, 0.5)) < 1e-12


def test_gaussian_solves_free_equation():
    # i u_t + u_rr = 0 probed by centred differences
    h = 1e-3
    for r in (30.0, 47.5, 55.0, 70.0):
        for t in (0.5, 3.0):
            f = lambda rr, tt: free_gaussian(rr, tt, 6.0, 50.0, 0.5)
            ut = (f(r, t + h) - f(r, t - h)) / (2 * h)
            urr = (f(r + h, t) - 2 * f(r, t) + f(r - h, t)) / h**2
            assert abs(1j * ut + urr) < 1e-5


def test_gaussian_against_fd_integration():
    u0 = lambda r: free_gaussian(r, 0.0, 6.0, 50.0, 0.5)
    r, u = fd_free_evolution(u0, 100.0, 1.0, n=4000)
    k = np.argmin(np.abs(r - 50.0))
    assert abs(u[k] - free_gaussian(r[k], 1.0, 6.0, 50.0, 0.5)) < 1e-6
    assert np.abs(u - free_gaussian(r, 1.0, 6.0, 50.0, 0.5)).max() < 1e-6


def test_normalisation():
    g = build_grid(256, 100.0)
    C = normalize_gaussian(6.0, 50.0, 0.0, g)
    w = RadialWave(g, free_gaussian(g.nodes, 0.0, 6.0, 50.0, 0.0, C))
    assert probability(w) == pytest.approx(1.0, abs=1e-10)
    assert abs(C - dense_gaussian_constant(6.0, 50.0, 0.0, 100.0)) < 1e-6
    # the constant does not depend on the scale of the input profile
    C2 = normalize_gaussian(6.0, 50.0, 0.0, g)
    assert C2 == C


def test_normalisation_degenerate():
    g = build_grid(16, 1.0)
    with pytest.raises(InvalidArgument):
        normalize_gaussian(0.01, 5000.0, 0.0, g)


def test_gaussian_2d_unit_probability():
    x = np.linspace(-40, 40, 801)
    X, Y = np.meshgrid(x, x, indexing="ij")
    for t in (0.0, 2.0):
        psi = free_gaussian_2d(X, Y, t, 4.0, 3.0, -2.0, 0.3, 0.1)
        p = np.trapezoid(np.trapezoid(np.abs(psi) ** 2, x, axis=1), x)
        assert p == pytest.approx(1.0, abs=1e-10)


def test_fd_poisson_zero_and_manufactured():
    pts = np.linspace(0, 10, 11)
    assert np.all(fd_poisson_oracle(lambda r: 0 * r, "radial", 1000, 10.0, pts) == 0)
    # u^2 = 2 r gives phi = r - L; the scheme is exact on quadratics in v
    out = fd_poisson_oracle(lambda r: 2 * r, "radial", 1000, 10.0, pts)
    assert np.abs(out - (pts - 10.0)).max() < 1e-9


def test_fd_poisson_self_convergence():
    dens = lambda r: np.exp(-((r - 20) ** 2) / 8.0) * r
    ref = fd_poisson_oracle(dens, "radial", 64000, 50.0, np.array([5.0, 20.0, 35.0]))
    e1 = np.abs(fd_poisson_oracle(dens, "radial", 1000, 50.0, np.array([5.0, 20.0, 35.0])) - ref).max()
    e2 = np.abs(fd_poisson_oracle(dens, "radial", 2000, 50.0, np.array([5.0, 20.0, 35.0])) - ref).max()
    assert 3.5 < e1 / e2 < 4.5


def test_fd_poisson_guards():
    with pytest.raises(InvalidArgument):
        fd_poisson_oracle(lambda r: r, "radial", 999, 1.0, [0.5])
    with pytest.raises(InvalidArgument):
        fd_poisson_oracle(lambda x, y: x, "planar", 2048, 1.0, ([0.0], [0.0]))
    with pytest.raises(InvalidArgument):
        fd_poisson_oracle(lambda x, y: x, "planar", 100, 1.0, ([0.0], [0.0]))
    with pytest.raises(InvalidArgument):
        fd_poisson_oracle(lambda r: r, "spherical", 1000, 1.0, [0.5])
