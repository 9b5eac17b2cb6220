"""Crank-Nicolson evolution of the radial system with an absorbing sponge.

With u = r psi the scheme is

    2 (i - s) (u+ - u) / dt = -D2 u+ - D2 u + phi+ u+ + phi u

on the interior nodes, where s(r) >= 0 is the sponge.  The minus sign
makes the sponge layer a forward heat equation, u_t = s u_rr / (1 + s^2)
plus the Schrodinger part, which absorbs; with i + s it would run the
heat equation backwards and amplify round-off near r = L.  phi+ is found by
fixed-point iteration: solve with the current guess, recompute the
potential from the new u, repeat until the potential stops changing.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from . import _timeloop
from .errors import InvalidArgument, StepFailure
from .fields import PotentialField, RadialWave
from .poisson import radial_poisson
from .spectral import reduce_dirichlet

SELF_CONSISTENT = "self-consistent"
ZERO = "zero"
FIXED = "fixed"
POTENTIAL_MODES = (SELF_CONSISTENT, ZERO, FIXED)
PHI_TOLERANCE = 1e-10
PHI_MAX_ITERATIONS = 50


class SphericalEvolver(_timeloop.EvolverBase):
    """Radial wave, its potential and the time, advanced by ``cn_step``.

    ``potential_mode`` is ``self-consistent`` (default), ``zero`` (free
    evolution) or ``fixed`` (use ``fixed_potential`` at every step).
    """

    def __init__(
        self,
        wave,
        config,
        potential=None,
        potential_mode=SELF_CONSISTENT,
        fixed_potential=None,
        **state,
    ):
        if not isinstance(wave, RadialWave):
            raise InvalidArgument("SphericalEvolver needs a radial wave")
        if potential_mode not in POTENTIAL_MODES:
            raise InvalidArgument(f"potential_mode must be one of {POTENTIAL_MODES}")
        grid = wave.grid
        self.potential_mode = potential_mode
        if potential_mode == ZERO:
            potential = PotentialField(grid, np.zeros(grid.n_points))
        elif potential_mode == FIXED:
            if fixed_potential is None:
                raise InvalidArgument("fixed mode needs fixed_potential")
            potential = PotentialField(grid, np.asarray(getattr(fixed_potential, "values", fixed_potential), float))
        elif potential is None:
            potential = radial_poisson(wave, config.coupling)
        super().__init__(wave, config, potential, **state)
        self.D2 = reduce_dirichlet(grid.D2, "both")
        if config.sponge is None:
            self.sponge = np.zeros(grid.n_points - 2)
        else:
            self.sponge = config.sponge.on_grid(grid)[1:-1]

    def _attempt(self, values, phi, dt):
        cfg = self.config
        tol, max_it = cfg.phi_settings(PHI_TOLERANCE, PHI_MAX_ITERATIONS)
        c = 2.0 * (1j - self.sponge) / dt
        ui = values[1:-1]
        rhs = c * ui - self.D2 @ ui + phi[1:-1] * ui
        guess = phi
        out = np.zeros_like(values)
        change = np.inf
        for k in range(1, max_it + 1):
            A = self.D2 - np.diag(guess[1:-1]) + np.diag(c)
            out[1:-1] = sla.solve(A, rhs, check_finite=False)
            if self.potential_mode != SELF_CONSISTENT:
                return out, guess, k
            new = radial_poisson(RadialWave(self.grid, out), cfg.coupling).values
            change = float(np.abs(new - guess).max())
            guess = new
            if change < tol:
                return out, guess, k
        raise StepFailure(
            f"potential iteration did not converge at t={self.t:.6g} (dt={dt:.3g}, change {change:.3e})",
            residual=change,
        )

    def checkpoint_extra(self):
        return {"potential_mode": self.potential_mode}

    @classmethod
    def from_checkpoint(cls, path, config, fixed_potential=None):
        wave, potential, kwargs, header = cls.read_checkpoint(path)
        mode = header.get("potential_mode", SELF_CONSISTENT)
        if mode == FIXED and fixed_potential is None:
            fixed_potential = potential
        return cls(wave, config, potential, mode, fixed_potential, **kwargs)


def cn_step(evolver):
    """Advance one step; returns the number of linear solves used."""
    return evolver.step()


def evolve(evolver, sink=None, snapshot_dir=None, checkpoint_path=None):
    return _timeloop.run(evolver, sink, snapshot_dir, checkpoint_path)
