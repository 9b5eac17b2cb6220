"""Poisson solvers for the potential.

Radial: (r phi)'' = g |u|^2 / r with r phi = 0 at both ends, solved directly
with the reduced spectral second-derivative matrix.

Axisymmetric and planar: Peaceman-Rachford ADI iteration started from zero.
The axisymmetric unknown is v = r phi and the operators are those of the
axisymmetric Laplacian, L1 = d^2/dr^2 and L2 = (1/r^2)(d^2/dtheta^2 +
cot(theta) d/dtheta); the planar ones are d^2/dx^2 and d^2/dy^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from .errors import NonConvergence, NumericalFailure
from .fields import PotentialField
from .spectral import AXISYMMETRIC, build_grid, neumann_extension, reduce_dirichlet


@lru_cache(maxsize=32)
def _radial_factor(n, L):
    grid = build_grid(n, L)
    D2 = reduce_dirichlet(grid.D2, "both")
    lu = sla.lu_factor(D2)
    if not np.all(np.isfinite(lu[0])) or np.min(np.abs(np.diag(lu[0]))) == 0.0:
        raise NumericalFailure("reduced second-derivative matrix is singular")
    return lu


def radial_poisson(wave, coupling=1.0):
    """Potential of a radial wave; phi(0) is the limit v'(0), phi(L) = 0."""
    grid = wave.grid
    r = grid.nodes
    n = grid.n_points
    source = coupling * np.abs(wave.values[1:-1]) ** 2 / r[1:-1]
    v = np.zeros(n)
    v[1:-1] = sla.lu_solve(_radial_factor(n, grid.length), source)
    phi = np.empty(n)
    phi[1:] = v[1:] / r[1:]
    phi[-1] = 0.0
    phi[0] = grid.D1[0] @ v
    return PotentialField(grid, phi)


def _real_eig(M):
    lam, V = np.linalg.eig(M)
    if np.abs(lam.imag).max() > 1e-8 * max(1.0, np.abs(lam.real).max()):
        raise NumericalFailure("operator is not real-diagonalisable")
    lam = lam.real
    V = V.real
    return lam, V, np.linalg.inv(V)


class LineOperators:
    """Split 2D operators on the interior unknowns, diagonalised per axis.

    ``L1 X = M1 @ X`` acts along axis 0; ``L2 X = s[:, None] * (X @ M2.T)``
    acts along axis 1 with a per-row scale ``s`` (1/r^2 for polar grids,
    ones for planar).  Shifted inverses of either operator reduce to
    elementwise division in the eigenbasis, so every line solve of a
    half-sweep is one matrix product.
    """

    def __init__(self, grid):
        self.grid = grid
        ga, gb = grid.grid_a, grid.grid_b
        self.axisymmetric = grid.kind == AXISYMMETRIC
        self.M1 = reduce_dirichlet(ga.D2, "both")
        self.r = ga.nodes[1:-1]
        if self.axisymmetric:
            E = neumann_extension(gb)
            theta = gb.nodes
            cot = np.zeros_like(theta)
            cot[1:-1] = np.cos(theta[1:-1]) / np.sin(theta[1:-1])
            self.M2 = ((gb.D2 + cot[:, None] * gb.D1) @ E)[1:-1]
            self.E = E
            self.scale = 1.0 / self.r**2
        else:
            self.M2 = reduce_dirichlet(gb.D2, "both")
            self.E = None
            self.scale = np.ones(ga.n_points - 2)
        self.lam1, self.W1, self.W1inv = _real_eig(self.M1)
        self.mu2, self.V2, self.V2inv = _real_eig(self.M2)
        if self.axisymmetric:
            # the l = 0 eigenvalue is exactly zero; keep round-off from
            # posing as a very slow mode
            self.mu2[np.abs(self.mu2) < 1e-10 * np.abs(self.mu2).max()] = 0.0
        self.V2T = self.V2.T.copy()
        self.V2invT = self.V2inv.T.copy()
        # eigenvalues of the per-row operator s_i * M2
        self.lam2 = self.scale[:, None] * self.mu2[None, :]

    @property
    def interior_shape(self):
        return (len(self.lam1), len(self.mu2))

    def apply_L1(self, X):
        return self.M1 @ X

    def apply_L2(self, X):
        return self.scale[:, None] * (X @ self.M2.T)

    def solve_L1(self, alpha, beta, R):
        """Solve (alpha - beta L1) Y = R."""
        C = self.W1inv @ R
        C = C / (alpha - beta * self.lam1)[:, None]
        return self.W1 @ C

    def solve_L2(self, alpha, beta, R):
        """Solve (alpha - beta L2) Y = R, row by row."""
        C = R @ self.V2invT
        C = C / (alpha - beta * self.lam2)
        return C @ self.V2T

    def interior(self, full):
        return full[1:-1, 1:-1]

    def to_full(self, X, dtype=None):
        shape = self.grid.shape
        out = np.zeros(shape, dtype=dtype or X.dtype)
        if self.axisymmetric:
            out[1:-1, :] = X @ self.E.T
        else:
            out[1:-1, 1:-1] = X
        return out

    def spectral_bounds(self):
        """Smallest and largest magnitude among the negative eigenvalues of L1, L2."""
        a = -self.lam1
        b = -self.lam2[self.lam2 < 0]
        lo = float(min(a.min(), b.min() if b.size else np.inf))
        hi = float(max(a.max(), b.max() if b.size else 0.0))
        return lo, hi


@lru_cache(maxsize=16)
def _line_operators(kind, n_a, L_a, n_b, L_b):
    from .spectral import TensorGrid2D

    return LineOperators(TensorGrid2D(build_grid(n_a, L_a), build_grid(n_b, L_b), kind))


def line_operators(grid):
    ga, gb = grid.grid_a, grid.grid_b
    return _line_operators(grid.kind, ga.n_points, ga.length, gb.n_points, gb.length)


def default_rho(grid):
    """Geometric mean of the extreme eigenvalue magnitudes of L1."""
    ops = line_operators(grid)
    a = -ops.lam1
    return float(math.sqrt(a.min() * a.max()))


def rho_cycle(grid, per_decade=2.0):
    """Geometric sequence of PR parameters spanning the spectrum of both operators."""
    lo, hi = line_operators(grid).spectral_bounds()
    count = max(1, int(math.ceil(per_decade * math.log10(hi / lo))))
    j = np.arange(count) + 0.5
    return tuple(float(x) for x in lo * (hi / lo) ** (j / count))


@dataclass
class PoissonInfo:
    iterations: int
    updates: list = field(default_factory=list)
    residual: float = 0.0
    relative_residual: float = 0.0
    rho: tuple = ()


def pr_adi_poisson(
    density,
    grid,
    rho=None,
    tol=1e-8,
    max_iter=2000,
    coupling=1.0,
    initial=None,
    return_info=False,
):
    """Peaceman-Rachford iteration for the potential on a 2D grid.

    ``density`` is |u|^2 on an axisymmetric grid (u = r psi) or |psi|^2 on
    a planar grid, sampled on the full grid.  Each iteration performs the
    two half-sweeps

        (rho - L1) X* = (rho + L2) X_k - f
        (rho - L2) X_{k+1} = (rho + L1) X* - f

    and stops once the sup-norm change of phi has stayed below
    ``tol * max(1, |phi|)`` for a full parameter cycle (or is exactly zero).
    The relative form matters on polar grids, where round-off near the
    axis leaves a floor of roughly 1e-9 |phi| in the update.  With
    ``rho=None`` the parameters cycle through ``rho_cycle(grid)``; a float
    gives the classical single-parameter iteration.
    """
    ops = line_operators(grid)
    density = np.asarray(density, dtype=float)
    f = coupling * ops.interior(density)
    if ops.axisymmetric:
        f = f / ops.r[:, None]
        to_phi = 1.0 / ops.r[:, None]
    else:
        to_phi = 1.0
    params = rho_cycle(grid) if rho is None else (float(rho),)
    if initial is None:
        X = np.zeros(ops.interior_shape)
    else:
        X = _phi_to_unknown(ops, initial)
    info = PoissonInfo(iterations=0, rho=params)
    # iterate on coefficients in the eigenbasis of the second operator, where
    # L2 is diagonal; applying it as a dense product near r = 0 leaves a
    # round-off floor far above tol
    lam1, lam2 = ops.lam1, ops.lam2
    W1, W1inv = ops.W1, ops.W1inv
    F = f @ ops.V2invT
    C = X @ ops.V2invT
    for k in range(max_iter):
        p = params[k % len(params)]
        Cs = W1 @ ((W1inv @ (p * C + lam2 * C - F)) / (p - lam1)[:, None])
        Cn = (p * Cs + ops.M1 @ Cs - F) / (p - lam2)
        Xn = Cn @ ops.V2T
        update = float(np.abs((Xn - X) * to_phi).max())
        scale = max(1.0, float(np.abs(Xn * to_phi).max()))
        info.updates.append(update)
        C, X = Cn, Xn
        info.iterations = k + 1
        if not np.isfinite(update):
            raise NonConvergence("PR-ADI iteration diverged", residual=update, history=info.updates)
        # a small update under one parameter says little about the others,
        # so the whole cycle has to agree
        window = info.updates[-len(params):]
        if update == 0.0 or (len(window) == len(params) and max(window) < tol * scale):
            break
    else:
        raise NonConvergence(
            f"PR-ADI did not converge in {max_iter} iterations (last update {info.updates[-1]:.3e})",
            residual=info.updates[-1],
            history=info.updates,
        )
    X = C @ ops.V2T
    L1X = ops.apply_L1(X)
    L2X = ops.apply_L2(X)
    res = np.abs(L1X + L2X - f).max()
    info.residual = max(info.updates[-len(params):])
    fmax = np.abs(f).max()
    info.relative_residual = float(res / fmax) if fmax > 0 else float(res)
    phi = PotentialField(grid, _unknown_to_phi(ops, X))
    return (phi, info) if return_info else phi


def _unknown_to_phi(ops, X):
    if not ops.axisymmetric:
        return ops.to_full(X)
    v = ops.to_full(X)  # v = r phi on the full grid; v(0) = v(L) = 0
    r = ops.grid.grid_a.nodes
    phi = np.zeros_like(v)
    phi[1:-1] = v[1:-1] / r[1:-1, None]
    phi[0] = ops.grid.grid_a.D1[0] @ v
    return phi


def _phi_to_unknown(ops, phi):
    phi = np.asarray(getattr(phi, "values", phi), dtype=float)
    X = ops.interior(phi)
    if ops.axisymmetric:
        X = X * ops.r[:, None]
    return X


def symmetrize_equator(phi):
    """Average phi(r, theta) with phi(r, pi - theta); theta nodes are mirror symmetric."""
    values = 0.5 * (phi.values + phi.values[:, ::-1])
    return PotentialField(phi.grid, values)
