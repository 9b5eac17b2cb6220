"""Field containers, sponge profiles, probability and the snapshot file format.

Conventions
-----------
Radial and axisymmetric waves store ``u = r psi``.  The 4*pi of the
spherical measure is absorbed into ``u`` so that a radial state of unit
probability has ``int_0^L |u|^2 dr = 1``; the axisymmetric measure is
``(1/2) int int |u|^2 sin(theta) dr dtheta`` for the same reason.  Planar
waves store ``psi`` on a centred square.

The Poisson equation carries a dimensionless coupling,
``laplacian(phi) = g |psi|^2``.  ``DEFAULT_COUPLING`` fixes the energy
scale so the lowest spherical state at L = 100 has eigenvalue -0.1592.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import InvalidArgument
from .spectral import AXISYMMETRIC, PLANAR, ChebyshevGrid1D, TensorGrid2D, build_grid

DEFAULT_COUPLING = 1.4614

RADIAL = "radial"
AXI = "axi"
PLANAR_KIND = "planar"


@dataclass(eq=False)
class RadialWave:
    grid: ChebyshevGrid1D
    values: np.ndarray
    kind = RADIAL

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=complex)
        if self.values.shape != (self.grid.n_points,):
            raise InvalidArgument("wave values do not match the grid")

    def copy(self, values=None):
        return replace(self, values=self.values.copy() if values is None else values)

    def boundary_error(self):
        return float(max(abs(self.values[0]), abs(self.values[-1])))


@dataclass(eq=False)
class AxiWave:
    grid: TensorGrid2D
    values: np.ndarray
    kind = AXI

    def __post_init__(self):
        if self.grid.kind != AXISYMMETRIC:
            raise InvalidArgument("AxiWave needs an axisymmetric grid")
        self.values = np.ascontiguousarray(self.values, dtype=complex)
        if self.values.shape != self.grid.shape:
            raise InvalidArgument("wave values do not match the grid")

    def copy(self, values=None):
        return replace(self, values=self.values.copy() if values is None else values)

    def boundary_error(self):
        v = self.values
        return float(max(np.abs(v[0]).max(), np.abs(v[-1]).max()))

    def pole_derivative_error(self):
        dtheta = self.values @ self.grid.grid_b.D1.T
        return float(max(np.abs(dtheta[:, 0]).max(), np.abs(dtheta[:, -1]).max()))


@dataclass(eq=False)
class PlanarWave:
    grid: TensorGrid2D
    values: np.ndarray
    kind = PLANAR_KIND

    def __post_init__(self):
        if self.grid.kind != PLANAR:
            raise InvalidArgument("PlanarWave needs a planar grid")
        self.values = np.ascontiguousarray(self.values, dtype=complex)
        if self.values.shape != self.grid.shape:
            raise InvalidArgument("wave values do not match the grid")

    def copy(self, values=None):
        return replace(self, values=self.values.copy() if values is None else values)

    def boundary_error(self):
        v = self.values
        return float(
            max(np.abs(v[0]).max(), np.abs(v[-1]).max(), np.abs(v[:, 0]).max(), np.abs(v[:, -1]).max())
        )


@dataclass(eq=False)
class PotentialField:
    grid: object
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float)


def make_wave(grid, values):
    if isinstance(grid, ChebyshevGrid1D):
        return RadialWave(grid, values)
    if grid.kind == AXISYMMETRIC:
        return AxiWave(grid, values)
    return PlanarWave(grid, values)


# --- sponges ---------------------------------------------------------------


@dataclass(frozen=True)
class SpongeProfile:
    """Absorbing layer strength s >= 0.

    ``radial``: s(r) = a exp(b (r - L)).
    ``planar-radial``: s(x, y) = min(cap, exp(rate (sqrt(x^2 + y^2) - radius))).
    """

    a: float = 1.0
    b: float = 0.5
    variant: str = "radial"
    cap: float = 1.0
    rate: float = 0.5
    radius: float = 20.0

    def __post_init__(self):
        if self.variant not in ("radial", "planar-radial"):
            raise InvalidArgument(f"unknown sponge variant {self.variant!r}")
        if self.variant == "radial" and (self.a <= 0 or self.b <= 0):
            raise InvalidArgument("sponge amplitude and rate must be positive")
        if self.variant == "planar-radial" and (self.cap <= 0 or self.rate <= 0):
            raise InvalidArgument("sponge cap and rate must be positive")

    def on_grid(self, grid):
        """Sponge values at every node of a 1D or 2D grid."""
        if isinstance(grid, ChebyshevGrid1D):
            r = grid.nodes
            return self.a * np.exp(self.b * (r - grid.length))
        A, B = grid.coordinates
        if grid.kind == AXISYMMETRIC:
            return self.a * np.exp(self.b * (A - grid.grid_a.length))
        if self.variant != "planar-radial":
            raise InvalidArgument("planar grids need a 'planar-radial' sponge")
        return sponge_value_planar(A, B, self.cap, self.rate, self.radius)


def sponge_value_radial(r, profile, L):
    if r < 0 or r > L:
        raise InvalidArgument(f"r={r!r} outside [0, {L!r}]")
    return profile.a * math.exp(profile.b * (r - L))


def sponge_value_planar(x, y, cap=1.0, rate=0.5, radius=20.0):
    rho = np.hypot(x, y)
    return np.minimum(cap, np.exp(rate * (rho - radius)))


# --- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class Perturbation:
    epsilon: float = 1e-3
    mode: int = 1


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float
    t_end: float
    # None selects the evolver's own default (spherical 1e-10 / 50, ADI 1e-8 / 30)
    phi_tolerance: Optional[float] = None
    phi_max_iterations: Optional[int] = None
    sponge: Optional[SpongeProfile] = None
    output_every: int = 10
    checkpoint_every: int = 0
    snapshot_every: int = 0
    perturbation: Optional[Perturbation] = None
    coupling: float = DEFAULT_COUPLING
    max_halvings: int = 4
    # ADI only
    phi_update: str = "iterated"
    poisson_tolerance: float = 1e-9
    poisson_max_iterations: int = 2000
    rho: Optional[float] = None

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidArgument("dt must be positive")
        if self.t_end < 0:
            raise InvalidArgument("t_end must be non-negative")
        if self.t_end > 0 and not self.dt < self.t_end:
            raise InvalidArgument("dt must be smaller than t_end")
        if self.phi_tolerance is not None and not self.phi_tolerance > 0:
            raise InvalidArgument("phi_tolerance must be positive")
        if not self.poisson_tolerance > 0:
            raise InvalidArgument("poisson_tolerance must be positive")
        if self.phi_max_iterations is not None and self.phi_max_iterations < 1:
            raise InvalidArgument("phi_max_iterations must be >= 1")
        if self.output_every < 1 or self.poisson_max_iterations < 1:
            raise InvalidArgument("output_every and poisson_max_iterations must be >= 1")
        if min(self.checkpoint_every, self.snapshot_every, self.max_halvings) < 0:
            raise InvalidArgument("checkpoint_every, snapshot_every and max_halvings must be >= 0")
        if self.rho is not None and not self.rho > 0:
            raise InvalidArgument("rho must be positive")
        if self.phi_update not in ("iterated", "lagged"):
            raise InvalidArgument(f"phi_update must be 'iterated' or 'lagged', got {self.phi_update!r}")

    def phi_settings(self, tolerance, iterations):
        """(tolerance, max iterations) with the given fallbacks for unset fields."""
        tol = tolerance if self.phi_tolerance is None else self.phi_tolerance
        its = iterations if self.phi_max_iterations is None else self.phi_max_iterations
        return tol, its

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))


# --- observables -------------------------------------------------------------


def probability(wave):
    v = np.abs(wave.values) ** 2
    if isinstance(wave, RadialWave):
        return float(wave.grid.integrate(v))
    if isinstance(wave, AxiWave):
        g = wave.grid
        _, theta = g.coordinates
        return float(0.5 * g.integrate(v * np.sin(theta)))
    return float(wave.grid.integrate(v))


def inner_product(a, b):
    """<a|b> with the same measure as ``probability``."""
    v = np.conj(a.values) * b.values
    if isinstance(a, RadialWave):
        return complex(a.grid.integrate(v))
    if isinstance(a, AxiWave):
        _, theta = a.grid.coordinates
        return complex(0.5 * a.grid.integrate(v * np.sin(theta)))
    return complex(a.grid.integrate(v))


def normalized(wave, target=1.0):
    p = probability(wave)
    if p == 0.0:
        raise InvalidArgument("cannot normalise a zero wave")
    return wave.copy(wave.values * math.sqrt(target / p))


def align_phase(values):
    """Rotate so the largest-magnitude sample is real and positive."""
    values = np.asarray(values)
    k = np.unravel_index(np.argmax(np.abs(values)), values.shape)
    z = values[k]
    return values * (abs(z) / z) if z != 0 else values


def perturb(wave, perturbation):
    """Multiply by a smooth, boundary-respecting factor and restore the probability.

    Radial: 1 + eps cos(mode pi r / L).  Axisymmetric: 1 + eps q^m
    exp(m (1 - q^2) / 2) cos(m theta) with q = 4 r / L and m = mode; r^m cos(m
    theta) is a polynomial in Cartesian coordinates, so psi stays smooth at the
    origin, and the envelope peaks at 1 for r = L/4.  A bare cos(m theta) would
    make psi discontinuous at r = 0 and excite stiff modes.  Odd modes are odd
    about the equator.  Planar: 1 + eps cos(mode pi (x + L/2) / L), odd in x for
    odd modes.
    """
    eps, mode = perturbation.epsilon, perturbation.mode
    if isinstance(wave, RadialWave):
        factor = 1.0 + eps * np.cos(mode * np.pi * wave.grid.nodes / wave.grid.length)
    elif isinstance(wave, AxiWave):
        r, theta = wave.grid.coordinates
        q = 4.0 * r / wave.grid.grid_a.length
        factor = 1.0 + eps * q**mode * np.exp(0.5 * mode * (1.0 - q * q)) * np.cos(mode * theta)
    else:
        x, _ = wave.grid.coordinates
        L = wave.grid.grid_a.length
        factor = 1.0 + eps * np.cos(mode * np.pi * (x + 0.5 * L) / L)
    p0 = probability(wave)
    return normalized(wave.copy(wave.values * factor), p0)


# --- snapshot format -----------------------------------------------------------


def _fmt(x):
    return format(float(x), ".17g")


def write_snapshot(path, wave, potential=None, t=0.0, extra=None):
    """Plain-text snapshot: one ``# key=value ...`` header line, extra ``# key=value`` lines, CSV rows."""
    header = {"kind": wave.kind}
    if isinstance(wave, RadialWave):
        header.update(n=wave.grid.n_points, L=_fmt(wave.grid.length))
        coords = [wave.grid.nodes]
    else:
        g = wave.grid
        header.update(n=g.grid_a.n_points, m=g.grid_b.n_points, L=_fmt(g.grid_a.length))
        A, B = g.coordinates
        coords = [A.ravel(), B.ravel()]
    header["t"] = _fmt(t)
    phi = np.zeros(wave.values.shape) if potential is None else potential.values
    lines = ["# " + " ".join(f"{k}={v}" for k, v in header.items())]
    for key, value in (extra or {}).items():
        if isinstance(value, float):
            value = _fmt(value)
        lines.append(f"# {key}={value}")
    vals = wave.values.ravel()
    ph = np.asarray(phi).ravel()
    for i in range(vals.size):
        row = [_fmt(c[i]) for c in coords]
        row += [_fmt(vals[i].real), _fmt(vals[i].imag), _fmt(ph[i])]
        lines.append(",".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_header(line):
    out = {}
    for token in line.lstrip("#").split():
        key, _, value = token.partition("=")
        out[key] = value
    return out


def read_snapshot(path):
    """Returns (wave, potential, header dict).  Values round-trip bit-exactly."""
    header = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                header.update(_parse_header(line))
            else:
                rows.append([float(x) for x in line.split(",")])
    data = np.array(rows)
    kind = header["kind"]
    n = int(header["n"])
    L = float(header["L"])
    if kind == RADIAL:
        grid = build_grid(n, L)
        values = data[:, 1] + 1j * data[:, 2]
        phi = data[:, 3]
        wave = RadialWave(grid, values)
    else:
        m = int(header["m"])
        from .spectral import axisymmetric_grid, planar_grid

        grid = axisymmetric_grid(n, L, m) if kind == AXI else planar_grid(n, L, m)
        values = (data[:, 2] + 1j * data[:, 3]).reshape(n, m)
        phi = data[:, 4].reshape(n, m)
        wave = make_wave(grid, values)
    return wave, PotentialField(wave.grid, phi), header
