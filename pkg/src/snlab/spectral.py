"""Chebyshev collocation on [0, L]: nodes, derivative matrices, quadrature.

Nodes are stored in ascending coordinate order, ``x_j = (L/2)(1 - cos(j*pi/(n-1)))``,
so index 0 is the left end.  All objects are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InvalidArgument

MIN_POINTS = 8

AXISYMMETRIC = "axisymmetric-polar"
PLANAR = "planar-cartesian"


def _reference_nodes(n):
    """Chebyshev-Lobatto points on [-1, 1] in classical (descending) order."""
    return np.cos(np.pi * np.arange(n) / (n - 1))


def _clenshaw_curtis(n):
    """Clenshaw-Curtis weights on [-1, 1] for n Lobatto points (Trefethen's clencurt)."""
    N = n - 1
    theta = np.pi * np.arange(n) / N
    w = np.zeros(n)
    v = np.ones(N - 1)
    interior = theta[1:-1]
    if N % 2 == 0:
        w[0] = w[-1] = 1.0 / (N * N - 1)
        for k in range(1, N // 2):
            v -= 2.0 * np.cos(2 * k * interior) / (4 * k * k - 1)
        v -= np.cos(N * interior) / (N * N - 1)
    else:
        w[0] = w[-1] = 1.0 / (N * N)
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * interior) / (4 * k * k - 1)
    w[1:-1] = 2.0 * v / N
    return w


def _barycentric_derivatives(x):
    """First and second derivative matrices on nodes x (barycentric form).

    Uses the Chebyshev-Lobatto barycentric weights and the negative-sum
    trick for the diagonals; the second derivative is formed directly
    rather than as D @ D.
    """
    n = len(x)
    c = np.ones(n)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(n)
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    ratio = c[:, None] / c[None, :]
    D1 = ratio / dx
    np.fill_diagonal(D1, 0.0)
    np.fill_diagonal(D1, -D1.sum(axis=1))
    D2 = 2.0 * D1 * (np.diag(D1)[:, None] - 1.0 / dx)
    np.fill_diagonal(D2, 0.0)
    np.fill_diagonal(D2, -D2.sum(axis=1))
    return D1, D2


@dataclass(frozen=True, eq=False)
class ChebyshevGrid1D:
    n_points: int
    length: float
    nodes: np.ndarray = field(repr=False)
    quad_weights: np.ndarray = field(repr=False)

    @cached_property
    def _derivatives(self):
        x = _reference_nodes(self.n_points)
        D1, D2 = _barycentric_derivatives(x)
        # r = (L/2)(1 - x): d/dr = -(2/L) d/dx
        scale = -2.0 / self.length
        D1 = D1 * scale
        D2 = D2 * scale * scale
        D1.setflags(write=False)
        D2.setflags(write=False)
        return D1, D2

    @property
    def D1(self):
        return self._derivatives[0]

    @property
    def D2(self):
        return self._derivatives[1]

    @property
    def interior(self):
        return self.nodes[1:-1]

    def integrate(self, values):
        return np.tensordot(self.quad_weights, values, axes=(0, 0))

    def interpolate(self, values, points):
        """Evaluate the collocation polynomial through ``values`` at ``points``."""
        return barycentric_interpolate(self, values, points)


def build_grid(n, L):
    """Chebyshev-Lobatto grid with n points on [0, L]."""
    if int(n) != n or n < MIN_POINTS:
        raise InvalidArgument(f"n must be an integer >= {MIN_POINTS}, got {n!r}")
    if not np.isfinite(L) or L <= 0:
        raise InvalidArgument(f"L must be positive, got {L!r}")
    n = int(n)
    L = float(L)
    nodes = 0.5 * L * (1.0 - _reference_nodes(n))
    nodes[0] = 0.0
    nodes[-1] = L
    weights = 0.5 * L * _clenshaw_curtis(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return ChebyshevGrid1D(n, L, nodes, weights)


def diff_matrix(grid, order):
    if order == 1:
        return grid.D1
    if order == 2:
        return grid.D2
    raise InvalidArgument(f"order must be 1 or 2, got {order!r}")


_ENDS = {"left": (0,), "right": (-1,), "both": (0, -1)}


def reduce_dirichlet(matrix, ends="both"):
    """Drop the rows and columns belonging to Dirichlet boundary nodes."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InvalidArgument(f"expected a square matrix, got shape {matrix.shape}")
    if ends not in _ENDS:
        raise InvalidArgument(f"ends must be one of {sorted(_ENDS)}, got {ends!r}")
    n = matrix.shape[0]
    keep = np.ones(n, dtype=bool)
    keep[list(_ENDS[ends])] = False
    return matrix[np.ix_(keep, keep)]


def neumann_extension(grid):
    """Matrix E (n x n-2) that fills both end values from interior ones.

    ``E @ f_interior`` is the full nodal vector whose spectral first
    derivative vanishes at both ends.  Used for the polar angle, where
    regularity on the axis requires d/dtheta = 0 at theta = 0 and pi.
    """
    D1 = grid.D1
    ends = [0, -1]
    B = D1[np.ix_(ends, ends)]
    C = D1[ends, 1:-1]
    P = -np.linalg.solve(B, C)
    E = np.vstack([P[0], np.eye(grid.n_points - 2), P[1]])
    E.setflags(write=False)
    return E


def barycentric_interpolate(grid, values, points):
    """Barycentric Lagrange interpolation from the grid nodes.

    ``values`` may carry trailing dimensions; interpolation acts on axis 0.
    """
    x = grid.nodes
    n = len(x)
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    w *= (-1.0) ** np.arange(n)
    points = np.atleast_1d(np.asarray(points, dtype=float))
    values = np.asarray(values)
    diff = points[:, None] - x[None, :]
    exact = diff == 0.0
    diff[exact] = 1.0
    kernel = w[None, :] / diff
    out = np.tensordot(kernel, values, axes=(1, 0)) / kernel.sum(axis=1).reshape(
        (-1,) + (1,) * (values.ndim - 1)
    )
    rows, cols = np.nonzero(exact)
    if rows.size:
        out[rows] = values[cols]
    return out


@dataclass(frozen=True, eq=False)
class TensorGrid2D:
    """Product grid; axis 0 is ``grid_a`` (r or x), axis 1 is ``grid_b`` (theta or y).

    Planar grids are centred: physical coordinates are the node values minus
    half the side length, so the origin sits in the middle of the square.
    """

    grid_a: ChebyshevGrid1D
    grid_b: ChebyshevGrid1D
    kind: str

    def __post_init__(self):
        if self.kind not in (AXISYMMETRIC, PLANAR):
            raise InvalidArgument(f"unknown grid kind {self.kind!r}")
        if self.kind == AXISYMMETRIC and abs(self.grid_b.length - np.pi) > 1e-14:
            raise InvalidArgument("axisymmetric grids need theta spanning [0, pi]")

    @property
    def shape(self):
        return (self.grid_a.n_points, self.grid_b.n_points)

    @cached_property
    def coordinates(self):
        a = self.grid_a.nodes
        b = self.grid_b.nodes
        if self.kind == PLANAR:
            a = a - 0.5 * self.grid_a.length
            b = b - 0.5 * self.grid_b.length
        A, B = np.meshgrid(a, b, indexing="ij")
        A.setflags(write=False)
        B.setflags(write=False)
        return A, B

    @cached_property
    def weights(self):
        """Tensor quadrature weights for the plain measure d(a) d(b)."""
        W = np.outer(self.grid_a.quad_weights, self.grid_b.quad_weights)
        W.setflags(write=False)
        return W

    @cached_property
    def theta_extension(self):
        return neumann_extension(self.grid_b)

    def integrate(self, values):
        return np.sum(self.weights * values)


def axisymmetric_grid(n_r, L, n_theta):
    return TensorGrid2D(build_grid(n_r, L), build_grid(n_theta, np.pi), AXISYMMETRIC)


def planar_grid(n, L, m=None):
    m = n if m is None else m
    return TensorGrid2D(build_grid(n, L), build_grid(m, L), PLANAR)
