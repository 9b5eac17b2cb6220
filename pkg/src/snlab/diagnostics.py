"""Observables, conservation checks, spectra and convergence estimates."""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass

import numpy as np

from .errors import BoundInapplicable, FitMeaningless, InvalidArgument
from .fields import AxiWave, RadialWave, probability
from .spectral import barycentric_interpolate

CSV_COLUMNS = ("t", "p_grid", "E_conserved", "E_functional", "J2", "probe_phase", "phi_iterations")


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    p_grid: float
    E_conserved: float
    E_functional: float
    J2: float
    probe_phase: float
    phi_iterations: int

    def __post_init__(self):
        values = astuple(self)
        if not all(math.isfinite(v) for v in values):
            raise InvalidArgument(f"non-finite diagnostics at t={self.t!r}")
        if not (0.0 <= self.p_grid <= 1.0 + 1e-6):
            raise InvalidArgument(
                f"on-grid probability {self.p_grid!r} outside [0, 1] at t={self.t!r}; the grid or dt is too coarse"
            )

    def as_row(self):
        return [format(v, ".17g") if isinstance(v, float) else str(v) for v in astuple(self)]


class ListSink:
    def __init__(self):
        self.records = []

    def __call__(self, record):
        self.records.append(record)


class CsvSink:
    """Appends records to a diagnostics CSV; writes the header when the file is new."""

    def __init__(self, path, append=False):
        self.path = path
        self._fh = open(path, "a" if append else "w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        if not append:
            self._writer.writerow(CSV_COLUMNS)

    def __call__(self, record):
        self._writer.writerow(record.as_row())
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_diagnostics(path):
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise InvalidArgument(f"unexpected diagnostics header in {path}")
        for row in reader:
            vals = [float(x) for x in row[:-1]] + [int(row[-1])]
            out.append(DiagnosticsRecord(*vals))
    return out


# --- energies ----------------------------------------------------------------


def _axi_derivatives(wave):
    g = wave.grid
    u = wave.values
    ur = g.grid_a.D1 @ u
    ut = u @ g.grid_b.D1.T
    r = g.grid_a.nodes
    ut_over_r = np.empty_like(ut)
    ut_over_r[1:] = ut[1:] / r[1:, None]
    # u_theta vanishes on the axis r = 0; its ratio with r is the r-derivative there
    ut_over_r[0] = (g.grid_a.D1 @ ut)[0]
    return ur, ut, ut_over_r


def _planar_gradient(wave):
    g = wave.grid
    return g.grid_a.D1 @ wave.values, wave.values @ g.grid_b.D1.T


def _integrals(wave, potential):
    """(kinetic, potential) integrals with the probability measure of the wave."""
    u = wave.values
    phi = 0.0 if potential is None else potential.values
    dens = np.abs(u) ** 2
    if isinstance(wave, RadialWave):
        g = wave.grid
        ur = g.D1 @ u
        return float(g.integrate(np.abs(ur) ** 2)), float(g.integrate(phi * dens))
    if isinstance(wave, AxiWave):
        g = wave.grid
        _, theta = g.coordinates
        w = 0.5 * np.sin(theta)
        ur, _, ut_r = _axi_derivatives(wave)
        kin = g.integrate(w * (np.abs(ur) ** 2 + np.abs(ut_r) ** 2))
        return float(kin), float(g.integrate(w * phi * dens))
    px, py = _planar_gradient(wave)
    g = wave.grid
    return float(g.integrate(np.abs(px) ** 2 + np.abs(py) ** 2)), float(g.integrate(phi * dens))


def conserved_energy(wave, potential):
    """Hamiltonian  int |grad psi|^2 + (1/2) phi |psi|^2."""
    kin, pot = _integrals(wave, potential)
    return kin + 0.5 * pot


def energy_functional(wave, potential):
    """Rayleigh quotient (int |grad psi|^2 + phi |psi|^2) / probability.

    Equals the eigenvalue of a stationary state of any probability; for a
    unit-probability state the denominator is 1.  Zero field gives 0.
    """
    p = probability(wave)
    if p == 0.0:
        return 0.0
    kin, pot = _integrals(wave, potential)
    return (kin + pot) / p


def angular_momentum_J2(wave):
    """int |d psi / d theta|^2 with the probability measure of the wave.

    Axisymmetric waves use the polar angle; planar waves the plane polar
    angle about the centre of the square, d/dtheta = x d/dy - y d/dx.
    """
    if isinstance(wave, RadialWave):
        return 0.0
    g = wave.grid
    if isinstance(wave, AxiWave):
        _, theta = g.coordinates
        ut = wave.values @ g.grid_b.D1.T
        return float(0.5 * g.integrate(np.sin(theta) * np.abs(ut) ** 2))
    x, y = g.coordinates
    px, py = _planar_gradient(wave)
    return float(g.integrate(np.abs(x * py - y * px) ** 2))


def stationary_residual(wave, potential, E, omega=0.0):
    """L2 norm of (-lap + phi - E - i omega (y d/dx - x d/dy)) psi over the interior.

    Uses the probability measure of the wave; boundary nodes carry the
    boundary conditions and are excluded.
    """
    u = wave.values
    phi = potential.values
    g = wave.grid
    if isinstance(wave, RadialWave):
        res = -(g.D2 @ u) + (phi - E) * u
        return float(math.sqrt(_interior_norm_1d(g, res)))
    if isinstance(wave, AxiWave):
        r = g.grid_a.nodes
        theta = g.grid_b.nodes
        cot = np.zeros_like(theta)
        cot[1:-1] = np.cos(theta[1:-1]) / np.sin(theta[1:-1])
        lt = u @ g.grid_b.D2.T + cot[None, :] * (u @ g.grid_b.D1.T)
        res = np.zeros_like(u)
        res[1:-1] = -(g.grid_a.D2 @ u)[1:-1] - lt[1:-1] / r[1:-1, None] ** 2 + ((phi - E) * u)[1:-1]
        res[:, [0, -1]] = 0.0
        _, th = g.coordinates
        return float(math.sqrt(0.5 * g.integrate(np.sin(th) * np.abs(res) ** 2)))
    x, y = g.coordinates
    px, py = _planar_gradient(wave)
    lap = g.grid_a.D2 @ u + u @ g.grid_b.D2.T
    res = -lap + (phi - E) * u - 1j * omega * (y * px - x * py)
    res[[0, -1], :] = 0.0
    res[:, [0, -1]] = 0.0
    return float(math.sqrt(g.integrate(np.abs(res) ** 2)))


def _interior_norm_1d(grid, res):
    res = np.array(res, copy=True)
    res[[0, -1]] = 0.0
    return grid.integrate(np.abs(res) ** 2)


# --- bound, spectra, orders, fits -----------------------------------------------


def residual_bound(E_initial, E_ground):
    """Lower bound (|E_initial| / |E_ground|)^(1/3) on the probability left in the ground state."""
    if not E_initial < 0:
        raise BoundInapplicable("the bound needs a negative initial energy")
    if not E_ground < 0:
        raise BoundInapplicable("the ground-state energy must be negative")
    return (abs(E_initial) / abs(E_ground)) ** (1.0 / 3.0)


def power_spectrum(series, dt, threshold=5.0):
    """Peaks of the DFT magnitude of a uniformly sampled complex series.

    Returns ``[(omega, amplitude), ...]`` sorted by frequency, where omega
    is signed angular frequency 2 pi k / (N dt) and a peak is a local
    maximum above ``threshold`` times the median magnitude.  A sample
    ``exp(i w t)`` produces a peak at +w.
    """
    x = np.asarray(series, dtype=complex)
    n = x.size
    if n < 64:
        raise InvalidArgument("power spectrum needs at least 64 samples")
    if not dt > 0:
        raise InvalidArgument("dt must be positive")
    # numpy's forward transform uses exp(-i...), so exp(+iwt) lands on +k
    mag = np.abs(np.fft.fftshift(np.fft.fft(x))) / n
    omega = 2 * np.pi * np.fft.fftshift(np.fft.fftfreq(n, d=dt))
    floor = threshold * np.median(mag)
    left = np.roll(mag, 1)
    right = np.roll(mag, -1)
    peaks = np.nonzero((mag > floor) & (mag >= left) & (mag > right))[0]
    return [(float(omega[k]), float(mag[k])) for k in peaks]


def richardson_order(O_h, O_h2, O_h4):
    """Order k from observables at steps h, h/2, h/4: q = (O_h - O_h4)/(O_h2 - O_h4) = 2^k + 1."""
    den = O_h2 - O_h4
    if abs(den) < 1e-15:
        raise InvalidArgument("observables already converged; the quotient is indeterminate")
    q = (O_h - O_h4) / den
    if not q > 1:
        raise InvalidArgument(f"Richardson quotient {q!r} does not correspond to a positive order")
    return math.log2(q - 1.0)


def rescaled_profile(ground_wave, p, nodes):
    """u_p(r) = p u_0(p r) at radii ``nodes``; zero where p r lies outside the ground grid."""
    g = ground_wave.grid
    s = p * np.asarray(nodes, dtype=float)
    out = np.zeros(s.shape, dtype=complex)
    inside = s <= g.length
    out[inside] = p * barycentric_interpolate(g, ground_wave.values, s[inside])
    return out


def fit_rescaled_ground(wave_final, ground):
    """Compare |u| with the rescaled ground state of the same probability.

    Returns ``(p, residual)`` with the relative L2 residual between the
    moduli.  ``ground`` is a stationary state (or a radial wave) of unit
    probability.
    """
    if not isinstance(wave_final, RadialWave):
        raise InvalidArgument("fit_rescaled_ground needs a radial wave")
    p = probability(wave_final)
    if p < 0.01:
        raise FitMeaningless(f"probability {p:.3g} is too small to fit")
    gw = getattr(ground, "wave", ground)
    target = np.abs(rescaled_profile(gw, p, wave_final.grid.nodes))
    diff = np.abs(wave_final.values) - target
    g = wave_final.grid
    return p, float(math.sqrt(g.integrate(diff**2) / g.integrate(target**2)))


class PhaseTracker:
    """Unwraps the phase of a sample series, assuming each jump is below pi."""

    def __init__(self, start=0.0, last=None):
        self.value = float(start)
        self.last = last

    def update(self, z):
        a = math.atan2(z.imag, z.real)
        if self.last is None:
            self.value = a
        else:
            d = a - self.last
            d = (d + math.pi) % (2 * math.pi) - math.pi
            self.value += d
        self.last = a
        return self.value
