"""Stationary states by self-consistent field iteration.

Each outer iteration solves a linear eigenproblem in a frozen potential,
picks one eigenfunction, recomputes the potential from it and
under-relaxes.  Selection is by node counts (or parity) on the first
iteration and by overlap with the previous iterate afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .diagnostics import angular_momentum_J2, stationary_residual
from .errors import AmbiguousBranch, BranchLost, InvalidArgument, NonConvergence, SelectionFailure
from .fields import (
    DEFAULT_COUPLING,
    AxiWave,
    PlanarWave,
    PotentialField,
    RadialWave,
    align_phase,
    normalized,
    read_snapshot,
    write_snapshot,
)
from .poisson import line_operators, pr_adi_poisson, radial_poisson, symmetrize_equator
from .spectral import AXISYMMETRIC, PLANAR, axisymmetric_grid, build_grid, planar_grid, reduce_dirichlet

DEFAULT_ALPHA = 0.5
LOWEST_MODES = 12


@dataclass
class StationaryState:
    wave: object
    potential: PotentialField
    energy: float
    J2: float = 0.0
    omega: float = 0.0
    label: str = ""
    iterations: int = 0
    history: list = field(default_factory=list, repr=False)


def default_radial_grid():
    return build_grid(256, 100.0)


def default_axi_grid():
    return axisymmetric_grid(40, 100.0, 20)


def default_planar_grid():
    return planar_grid(40, 60.0)


# --- helpers -------------------------------------------------------------------


def _sign_changes(values, rel=1e-3):
    # samples below rel * peak are tail round-off and carry no node
    v = np.asarray(values).real
    big = v[np.abs(v) > rel * np.abs(v).max()] if v.size and np.abs(v).max() > 0 else v[:0]
    return int(np.count_nonzero(np.diff(np.sign(big)) != 0))


def _fix_sign(values):
    """Real eigenvector with its largest-magnitude sample positive."""
    k = np.unravel_index(np.argmax(np.abs(values)), values.shape)
    return values if values[k].real >= 0 else -values


def _overlaps(vectors, previous):
    """|<v_j, prev>| / (|v_j| |prev|) for each column."""
    num = np.abs(vectors.conj().T @ previous)
    return num / (np.linalg.norm(vectors, axis=0) * np.linalg.norm(previous))


def _pick_by_overlap(vals, vecs, previous):
    ov = _overlaps(vecs, previous)
    order = np.argsort(ov)[::-1]
    best = order[0]
    if len(order) > 1 and ov[order[0]] - ov[order[1]] < 0.01 * ov[order[0]]:
        raise AmbiguousBranch(
            f"eigenfunctions {order[0]} (E={vals[order[0]].real:.6g}) and {order[1]} "
            f"(E={vals[order[1]].real:.6g}) overlap the previous iterate equally",
            candidates=[(float(vals[i].real), float(ov[i])) for i in order[:2]],
        )
    return best, float(ov[best])


def _near_eigs(H, shift, count):
    """Eigenpairs of dense H nearest ``shift``, deterministic start vector."""
    n = H.shape[0]
    count = min(count, n - 2)
    vals, vecs = spla.eigs(H, k=count, sigma=shift, v0=np.ones(n), tol=1e-13, maxiter=5000)
    order = np.argsort(vals.real)
    return vals[order], vecs[:, order]


# --- spherical -----------------------------------------------------------------


def spherical_stationary(
    k=0,
    grid=None,
    tol=1e-10,
    max_outer=500,
    alpha=DEFAULT_ALPHA,
    coupling=DEFAULT_COUPLING,
):
    """Spherical state with ``k`` interior nodes, unit probability."""
    grid = default_radial_grid() if grid is None else grid
    n = grid.n_points
    if k < 0 or k >= n / 4:
        raise InvalidArgument(f"k={k} is not resolvable with n={n}")
    r = grid.nodes
    A = -reduce_dirichlet(grid.D2, "both")
    phi = -1.0 / (1.0 + r)
    history = []
    for it in range(1, max_outer + 1):
        vals, vecs = sla.eig(A + np.diag(phi[1:-1]))
        real = np.abs(vals.imag) <= 1e-9 * np.maximum(1.0, np.abs(vals.real))
        order = [j for j in np.argsort(vals.real) if real[j] and vals[j].real < 0]
        pick = next((j for j in order if _sign_changes(vecs[:, j]) == k), None)
        if pick is None:
            raise SelectionFailure(f"no bound eigenfunction with {k} nodes")
        E = float(vals[pick].real)
        u = np.zeros(n, dtype=complex)
        u[1:-1] = _fix_sign(vecs[:, pick].real)
        wave = normalized(RadialWave(grid, u))
        new = radial_poisson(wave, coupling).values
        change = float(np.abs(new - phi).max())
        history.append(change)
        if change < tol:
            state = StationaryState(wave, PotentialField(grid, phi), E, 0.0, 0.0, f"spherical{k}", it, history)
            return state
        phi = (1.0 - alpha) * phi + alpha * new
    raise NonConvergence(
        f"spherical SCF did not converge in {max_outer} iterations (last change {history[-1]:.3e})",
        residual=history[-1],
        history=history,
    )


# --- two-dimensional eigenproblems -------------------------------------------------


class _Operator2D:
    """Interior unknowns and the frozen-potential Hamiltonian on a 2D grid."""

    def __init__(self, grid, omega=0.0):
        self.grid = grid
        self.ops = line_operators(grid)
        ops = self.ops
        n1, n2 = ops.interior_shape
        I2 = np.eye(n2)
        self.K = -(np.kron(ops.M1, I2) + np.kron(np.diag(ops.scale), ops.M2))
        if grid.kind == PLANAR and omega != 0.0:
            X, Y = (c[1:-1, 1:-1].ravel() for c in grid.coordinates)
            Dx = np.kron(grid.grid_a.D1[1:-1, 1:-1], np.eye(n2))
            Dy = np.kron(np.eye(n1), grid.grid_b.D1[1:-1, 1:-1])
            self.K = self.K - 1j * omega * (Y[:, None] * Dx - X[:, None] * Dy)
        self.shape = (n1, n2)

    def hamiltonian(self, phi_full):
        return self.K + np.diag(self.ops.interior(phi_full).ravel())

    def to_wave(self, vector):
        X = vector.reshape(self.shape)
        full = self.ops.to_full(X, dtype=complex)
        wave = AxiWave(self.grid, full) if self.grid.kind == AXISYMMETRIC else PlanarWave(self.grid, full)
        return normalized(wave)


def _classify_axi(wave):
    """(l, n): theta nodes along the row and r nodes along the column through the peak."""
    u = wave.values.real if np.abs(wave.values.imag).max() <= np.abs(wave.values.real).max() else wave.values.imag
    i, j = np.unravel_index(np.argmax(np.abs(u)), u.shape)
    return _sign_changes(u[i, :]), _sign_changes(u[:, j])


def _symmetrize_quadrants(phi):
    # the dipole's orientation is almost free in a square box; pinning the
    # potential's reflection symmetry keeps the iteration from rotating it
    v = phi.values
    v = 0.25 * (v + v[::-1, :] + v[:, ::-1] + v[::-1, ::-1])
    return PotentialField(phi.grid, v)


def _planar_x_odd(values):
    return 0.5 * (values - values[::-1, :])


def _scf_2d(grid, select_first, coupling, tol, max_outer, alpha, symmetrize, omega=0.0, start=None, label=""):
    op = _Operator2D(grid, omega)
    if start is None:
        R, _ = grid.coordinates
        dist = R if grid.kind == AXISYMMETRIC else np.hypot(*grid.coordinates)
        phi = -1.0 / (1.0 + dist)
        previous = None
    else:
        phi = np.array(start.potential.values, dtype=float)
        previous = op.ops.interior(start.wave.values).ravel()
        E = _rayleigh(op.hamiltonian(phi), previous)
    history = []
    for it in range(1, max_outer + 1):
        H = op.hamiltonian(phi)
        if previous is None:
            vals, vecs = _near_eigs(H, float(phi.min()) - 0.05, LOWEST_MODES)
            j, vector = select_first(op, vals, vecs)
        else:
            vals, vecs = _near_eigs(H, E, 6)
            j, ov = _pick_by_overlap(vals, vecs, previous)
            vector = vecs[:, j]
        E = float(vals[j].real)
        wave = op.to_wave(vector)
        if omega == 0.0:
            wave = wave.copy(_fix_sign(align_phase(wave.values)).real.astype(complex))
        else:
            wave = wave.copy(align_phase(wave.values))
        previous = op.ops.interior(wave.values).ravel()
        new = pr_adi_poisson(np.abs(wave.values) ** 2, grid, tol=min(1e-9, tol), coupling=coupling, initial=phi)
        if symmetrize is not None:
            new = symmetrize(new)
        change = float(np.abs(new.values - phi).max())
        history.append(change)
        if change < tol:
            J2 = angular_momentum_J2(wave)
            return StationaryState(wave, PotentialField(grid, phi), E, J2, omega, label, it, history)
        phi = (1.0 - alpha) * phi + alpha * new.values
    raise NonConvergence(
        f"SCF did not converge in {max_outer} iterations (last change {history[-1]:.3e})",
        residual=history[-1],
        history=history,
    )


def _rayleigh(H, v):
    return float((np.vdot(v, H @ v) / np.vdot(v, v)).real)


def axi_stationary(
    selector=(0, 0),
    grid=None,
    tol=1e-8,
    max_outer=300,
    alpha=DEFAULT_ALPHA,
    coupling=DEFAULT_COUPLING,
    label=None,
):
    """Axisymmetric state with ``selector = (l, n)`` nodal counts in theta and r."""
    grid = default_axi_grid() if grid is None else grid
    if grid.kind != AXISYMMETRIC:
        raise InvalidArgument("axi_stationary needs an axisymmetric grid")
    l_want, n_want = selector
    if l_want < 0 or n_want < 0:
        raise InvalidArgument("node counts must be non-negative")
    if l_want > grid.grid_b.n_points // 4 or n_want > grid.grid_a.n_points // 8:
        raise InvalidArgument(f"selector {selector} is not resolved by this grid")

    def first(op, vals, vecs):
        found = []
        for j in range(vecs.shape[1]):
            lq, nq = _classify_axi(op.to_wave(vecs[:, j]))
            found.append((float(vals[j].real), lq, nq))
            if (lq, nq) == (l_want, n_want):
                return j, vecs[:, j]
        raise SelectionFailure(f"no eigenfunction with (l, n) = {selector} among the lowest {len(found)}: {found}")

    return _scf_2d(grid, first, coupling, tol, max_outer, alpha, symmetrize_equator, label=label or f"l{l_want}n{n_want}")


def planar_dipole(grid=None, tol=1e-8, max_outer=300, alpha=DEFAULT_ALPHA, coupling=DEFAULT_COUPLING):
    """Lowest planar state odd in x, the seed for rotating continuation."""
    grid = default_planar_grid() if grid is None else grid
    if grid.kind != PLANAR:
        raise InvalidArgument("planar_dipole needs a planar grid")

    def first(op, vals, vecs):
        for j in range(vecs.shape[1]):
            full = op.to_wave(vecs[:, j]).values
            odd = _planar_x_odd(full)
            # degenerate x- and y-dipoles come out mixed; keep the x-odd part
            if np.linalg.norm(odd) > 0.5 * np.linalg.norm(full):
                return j, op.ops.interior(odd).ravel()
        raise SelectionFailure("no x-odd eigenfunction among the lowest modes")

    return _scf_2d(grid, first, coupling, tol, max_outer, alpha, _symmetrize_quadrants, label="dipole")


def rotating_stationary(
    omega_target,
    delta_omega=0.001,
    grid=None,
    tol=1e-8,
    max_outer=300,
    alpha=DEFAULT_ALPHA,
    coupling=DEFAULT_COUPLING,
    max_omega=0.02,
):
    """Rigidly rotating planar state by continuation in omega from the dipole."""
    if abs(omega_target) > max_omega:
        raise InvalidArgument(f"|omega| must be at most {max_omega}")
    if not delta_omega > 0:
        raise InvalidArgument("delta_omega must be positive")
    state = planar_dipole(grid, tol, max_outer, alpha, coupling)
    grid = state.wave.grid
    steps = int(math.ceil(abs(omega_target) / delta_omega - 1e-12))
    omegas = [omega_target * (i + 1) / steps for i in range(steps)]
    last_good = 0.0
    for omega in omegas:
        prev = state
        try:
            state = _scf_2d(grid, None, coupling, tol, max_outer, alpha, _symmetrize_quadrants, omega=omega, start=prev, label="rotating")
        except (NonConvergence, AmbiguousBranch) as exc:
            raise BranchLost(f"continuation failed at omega={omega:.6g}: {exc}", last_good) from exc
        ov = abs(np.vdot(prev.wave.values, state.wave.values)) / (
            np.linalg.norm(prev.wave.values) * np.linalg.norm(state.wave.values)
        )
        if ov < 0.5:
            raise BranchLost(f"overlap {ov:.3f} at omega={omega:.6g}", last_good)
        last_good = omega
    state.omega = float(omega_target)
    state.label = "rotating" if omega_target else "dipole"
    return state


def residual(state):
    return stationary_residual(state.wave, state.potential, state.energy, state.omega)


# --- persistence ------------------------------------------------------------------


def save_state(path, state):
    extra = {"E": float(state.energy), "J2": float(state.J2), "omega": float(state.omega), "label": state.label or "-"}
    write_snapshot(path, state.wave, state.potential, t=0.0, extra=extra)


def load_state(path):
    wave, potential, header = read_snapshot(path)
    label = header.get("label", "")
    return StationaryState(
        wave,
        potential,
        float(header.get("E", "nan")),
        float(header.get("J2", "0")),
        float(header.get("omega", "0")),
        "" if label == "-" else label,
    )
