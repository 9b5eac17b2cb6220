"""Independent reference solutions used to validate the spectral solvers.

Nothing here shares code with the main numerics beyond the grid type:
the Poisson oracle uses uniform second-order finite differences and the
free-evolution oracle uses fourth-order differences with classical RK4.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline, RectBivariateSpline
from scipy.linalg import solve_banded

from .errors import InvalidArgument

RADIAL_MIN_POINTS = 1000
PLANAR_MIN_POINTS = 200
PLANAR_MAX_POINTS = 1024


def free_gaussian(r, t, sigma, a, v, C=1.0):
    """Outgoing Gaussian shell solving i u_t = -u_rr with u(0, t) = 0.

    The packet is centred at r = a at t = 0 and moves with velocity v; its
    mirror image about r = 0 is subtracted so the origin stays a node.
    Vectorised over ``r``.
    """
    if not sigma > 0:
        raise InvalidArgument("sigma must be positive")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise InvalidArgument("r must be non-negative")
    s = sigma * sigma + 2j * t
    root = np.sqrt(s)  # principal branch; Re s > 0 keeps it continuous in t
    phase = -1j * v * v * t / 4.0
    plus = np.exp(-((r - v * t - a) ** 2) / (2 * s) + 1j * v * r / 2 + phase)
    minus = np.exp(-((r + v * t + a) ** 2) / (2 * s) - 1j * v * r / 2 + phase)
    out = C * math.sqrt(sigma) / root * (plus - minus)
    return out if out.ndim else complex(out)


def normalize_gaussian(sigma, a, v, grid):
    """Constant C giving the t = 0 packet unit probability on ``grid``."""
    u = free_gaussian(grid.nodes, 0.0, sigma, a, v, 1.0)
    norm = float(grid.integrate(np.abs(u) ** 2))
    if not norm > 0:
        raise InvalidArgument("Gaussian profile vanishes on this grid")
    return 1.0 / math.sqrt(norm)


def dense_gaussian_constant(sigma, a, v, L, n=10**6):
    """Same constant from a plain trapezoid rule on ``n`` uniform points."""
    r = np.linspace(0.0, L, n)
    u = free_gaussian(r, 0.0, sigma, a, v, 1.0)
    return 1.0 / math.sqrt(trapezoid(np.abs(u) ** 2, r))


def free_gaussian_2d(x, y, t, sigma, x0=0.0, y0=0.0, vx=0.0, vy=0.0):
    """Free planar packet for i psi_t = -(psi_xx + psi_yy), unit probability in the plane."""
    s = sigma * sigma + 2j * t

    def factor(z, z0, vz):
        return np.exp(-((z - vz * t - z0) ** 2) / (2 * s) + 1j * vz * z / 2 - 1j * vz * vz * t / 4) / np.sqrt(s)

    return sigma / math.sqrt(math.pi) * factor(np.asarray(x, float), x0, vx) * factor(np.asarray(y, float), y0, vy)


# --- Poisson ----------------------------------------------------------------


def _sample(density, *coords):
    values = density(*coords) if callable(density) else np.asarray(density, dtype=float)
    values = np.broadcast_to(np.asarray(values, dtype=float), coords[0].shape)
    return values


def fd_poisson_oracle(density, geometry, n_fine, L, points, coupling=1.0):
    """Finite-difference potential on a uniform fine grid, interpolated to ``points``.

    radial: ``density(r)`` is |u|^2; solves (r phi)'' = g density / r with
    r phi = 0 at 0 and L; ``points`` is an array of radii.
    planar: ``density(x, y)`` is |psi|^2 on the centred square of side L;
    solves the 5-point Laplacian with phi = 0 on the edge; ``points`` is a
    pair (x, y) of equal-shape arrays.
    """
    if geometry == "radial":
        if n_fine < RADIAL_MIN_POINTS:
            raise InvalidArgument(f"radial oracle needs n_fine >= {RADIAL_MIN_POINTS}")
        return _radial_fd(density, int(n_fine), float(L), np.asarray(points, float), coupling)
    if geometry == "planar":
        if n_fine > PLANAR_MAX_POINTS:
            raise InvalidArgument(f"planar oracle refuses more than {PLANAR_MAX_POINTS}^2 points")
        if n_fine < PLANAR_MIN_POINTS:
            raise InvalidArgument(f"planar oracle needs n_fine >= {PLANAR_MIN_POINTS} per side")
        return _planar_fd(density, int(n_fine), float(L), points, coupling)
    raise InvalidArgument(f"unknown geometry {geometry!r}")


def _radial_fd(density, n, L, points, coupling):
    r = np.linspace(0.0, L, n + 1)
    h = L / n
    ri = r[1:-1]
    rhs = coupling * _sample(density, ri) / ri * h * h
    ab = np.zeros((3, n - 1))
    ab[0, 1:] = 1.0
    ab[1, :] = -2.0
    ab[2, :-1] = 1.0
    v = np.zeros(n + 1)
    v[1:-1] = solve_banded((1, 1), ab, rhs)
    phi = np.empty(n + 1)
    phi[1:] = v[1:] / r[1:]
    # phi(0) = v'(0), one-sided second order
    phi[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h)
    return CubicSpline(r, phi)(points)


def _planar_fd(density, n, L, points, coupling):
    z = np.linspace(-L / 2, L / 2, n + 1)
    h = L / n
    m = n - 1
    X, Y = np.meshgrid(z[1:-1], z[1:-1], indexing="ij")
    rhs = coupling * _sample(density, X, Y).ravel() * h * h
    T = sp.diags([np.ones(m - 1), -2 * np.ones(m), np.ones(m - 1)], [-1, 0, 1])
    I = sp.identity(m)
    A = (sp.kron(T, I) + sp.kron(I, T)).tocsc()
    phi = np.zeros((n + 1, n + 1))
    phi[1:-1, 1:-1] = spla.spsolve(A, rhs).reshape(m, m)
    spline = RectBivariateSpline(z, z, phi, kx=3, ky=3)
    px, py = (np.asarray(p, float) for p in points)
    return spline.ev(px, py)


# --- brute-force free evolution -------------------------------------------------


def _d2_fourth_order(u, h):
    """Fourth-order centred second derivative with odd reflection at both ends."""
    ext = np.concatenate([[-u[2], -u[1]], u, [-u[-2], -u[-3]]])
    return (-ext[:-4] + 16 * ext[1:-3] - 30 * ext[2:-2] + 16 * ext[3:-1] - ext[4:]) / (12 * h * h)


def fd_free_evolution(u0, L, t_end, n=2000, dt=None):
    """Integrate i u_t = -u_rr with u = 0 at 0 and L by fourth-order FD and RK4.

    ``u0`` is a callable of r.  Returns (r, u(t_end)).
    """
    r = np.linspace(0.0, L, n + 1)
    h = L / n
    if dt is None:
        dt = 0.25 * h * h
    steps = max(1, int(math.ceil(t_end / dt)))
    dt = t_end / steps
    u = np.asarray(u0(r), dtype=complex)
    u[0] = u[-1] = 0.0

    def rhs(w):
        out = 1j * _d2_fourth_order(w, h)
        out[0] = out[-1] = 0.0
        return out

    for _ in range(steps):
        k1 = rhs(u)
        k2 = rhs(u + 0.5 * dt * k1)
        k3 = rhs(u + 0.5 * dt * k2)
        k4 = rhs(u + dt * k3)
        u = u + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return r, u
