import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snlab.errors import InvalidArgument
from snlab.fields import (
    AxiWave,
    EvolutionConfig,
    Perturbation,
    PlanarWave,
    PotentialField,
    RadialWave,
    SpongeProfile,
    align_phase,
    inner_product,
    make_wave,
    normalized,
    perturb,
    probability,
    read_snapshot,
    sponge_value_planar,
    sponge_value_radial,
    write_snapshot,
)
from snlab.spectral import axisymmetric_grid, build_grid, planar_grid


def test_radial_sponge_examples():
    sp = SpongeProfile(1.0, 0.5)
    assert sponge_value_radial(100.0, sp, 100.0) == 1.0
    for b in (0.1, 0.5, 2.0):
        s = SpongeProfile(1.0, b)
        assert sponge_value_radial(100.0 - math.log(4) / b, s, 100.0) == pytest.approx(0.25, rel=1e-14)
    assert sponge_value_radial(0.0, sp, 100.0) == pytest.approx(math.exp(-50), rel=1e-14)
    with pytest.raises(InvalidArgument):
        sponge_value_radial(-1.0, sp, 100.0)
    with pytest.raises(InvalidArgument):
        sponge_value_radial(101.0, sp, 100.0)


def test_planar_sponge_examples():
    assert sponge_value_planar(0.0, 0.0) == pytest.approx(math.exp(-10), rel=1e-14)
    assert sponge_value_planar(20.0, 0.0) == 1.0
    assert sponge_value_planar(30.0, 40.0) == 1.0


def test_sponge_on_grid_matches_closed_form():
    g = build_grid(40, 100.0)
    sp = SpongeProfile(2.0, 0.1)
    s = sp.on_grid(g)
    assert np.all(s >= 0) and np.all(np.diff(s) >= 0) and s.max() <= max(sp.a, 1.0)
    assert np.allclose(s, [sponge_value_radial(r, sp, 100.0) for r in g.nodes], rtol=1e-14, atol=0)
    pg = planar_grid(16, 60.0)
    spp = SpongeProfile(variant="planar-radial")
    X, Y = pg.coordinates
    assert np.array_equal(spp.on_grid(pg), sponge_value_planar(X, Y))
    with pytest.raises(InvalidArgument):
        SpongeProfile(1.0, 0.5).on_grid(pg)
    with pytest.raises(InvalidArgument):
        SpongeProfile(-1.0, 0.5)
    with pytest.raises(InvalidArgument):
        SpongeProfile(variant="box")


def test_probability_examples():
    g = build_grid(32, 7.0)
    assert probability(RadialWave(g, np.zeros(32))) == 0.0
    u = np.sin(np.pi * g.nodes / 7.0)
    assert probability(RadialWave(g, u)) == pytest.approx(3.5, rel=1e-10)


def test_axi_probability_matches_radial():
    # a theta-independent u has the same probability as its radial profile
    ag = axisymmetric_grid(32, 7.0, 12)
    R, _ = ag.coordinates
    u = np.sin(np.pi * R / 7.0)
    assert probability(AxiWave(ag, u)) == pytest.approx(3.5, rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(phase=st.floats(-10, 10), seed=st.integers(0, 2**31 - 1))
def test_probability_phase_invariant(phase, seed):
    rng = np.random.default_rng(seed)
    g = planar_grid(10, 5.0)
    w = PlanarWave(g, rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))
    p0 = probability(w)
    p1 = probability(w.copy(w.values * np.exp(1j * phase)))
    assert abs(p0 - p1) <= 1e-13 * p0


def test_normalized_and_inner_product(rng):
    g = build_grid(24, 10.0)
    w = RadialWave(g, rng.standard_normal(24) + 1j * rng.standard_normal(24))
    n = normalized(w, 0.3)
    assert probability(n) == pytest.approx(0.3, rel=1e-13)
    assert inner_product(n, n).real == pytest.approx(0.3, rel=1e-13)
    with pytest.raises(InvalidArgument):
        normalized(RadialWave(g, np.zeros(24)))


def test_align_phase():
    v = np.array([0.1, -2j, 0.5])
    a = align_phase(v)
    assert a[1] == pytest.approx(2.0)
    assert np.allclose(np.abs(a), np.abs(v))


def test_wave_shape_checks():
    g = build_grid(10, 1.0)
    with pytest.raises(InvalidArgument):
        RadialWave(g, np.zeros(9))
    with pytest.raises(InvalidArgument):
        AxiWave(planar_grid(8, 1.0), np.zeros((8, 8)))
    with pytest.raises(InvalidArgument):
        PlanarWave(axisymmetric_grid(8, 1.0, 8), np.zeros((8, 8)))
    assert isinstance(make_wave(g, np.zeros(10)), RadialWave)


def test_evolution_config_validation():
    EvolutionConfig(dt=0.01, t_end=1.0)
    EvolutionConfig(dt=0.01, t_end=0.0)
    for bad in (
        dict(dt=-1.0, t_end=1.0),
        dict(dt=2.0, t_end=1.0),
        dict(dt=0.1, t_end=1.0, phi_tolerance=0.0),
        dict(dt=0.1, t_end=1.0, phi_max_iterations=0),
        dict(dt=0.1, t_end=1.0, output_every=0),
        dict(dt=0.1, t_end=1.0, phi_update="sometimes"),
        dict(dt=0.1, t_end=1.0, rho=-2.0),
    ):
        with pytest.raises(InvalidArgument):
            EvolutionConfig(**bad)
    cfg = EvolutionConfig(dt=0.25, t_end=1.0, phi_tolerance=1e-7)
    assert cfg.n_steps == 4
    assert cfg.phi_settings(1e-10, 50) == (1e-7, 50)


def test_perturbation_keeps_probability_and_boundaries(ground128):
    w = perturb(ground128.wave, Perturbation(1e-2, 1))
    assert probability(w) == pytest.approx(1.0, abs=1e-12)
    assert w.values[0] == 0 and w.values[-1] == 0
    g = ground128.wave.grid
    ratio = w.values[1:-1].real / ground128.wave.values[1:-1].real
    factor = 1.0 + 1e-2 * np.cos(np.pi * g.nodes[1:-1] / g.length)
    big = np.abs(ground128.wave.values[1:-1]) > 1e-6
    c = ratio[big] / factor[big]
    assert np.ptp(c) < 1e-9 and abs(c[0] - 1) < 1e-2


@pytest.mark.parametrize("grid", [build_grid(12, 3.0), axisymmetric_grid(10, 4.0, 9), planar_grid(9, 5.0, 11)])
def test_snapshot_roundtrip_bit_exact(tmp_path, rng, grid):
    shape = (grid.n_points,) if hasattr(grid, "n_points") else grid.shape
    w = make_wave(grid, rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    phi = PotentialField(grid, rng.standard_normal(shape) * 1e-7)
    path = tmp_path / "snap.txt"
    write_snapshot(path, w, phi, t=1.0 / 3.0, extra={"label": "x", "E": -0.1})
    w2, phi2, header = read_snapshot(path)
    assert np.array_equal(w2.values, w.values)
    assert np.array_equal(phi2.values, phi.values)
    assert float(header["t"]) == 1.0 / 3.0
    assert header["label"] == "x" and float(header["E"]) == -0.1
    assert type(w2) is type(w)
