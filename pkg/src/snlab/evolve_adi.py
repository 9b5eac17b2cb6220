"""ADI evolution on axisymmetric and planar grids.

One step of size h, with a = h/2, is

    (1 - i a L1) S = (1 + i a L2) u
    (1 - i a L2) T = (1 + i a L1) S
    (1 + i a phi+ + a s) u+ = (1 - i a phi - a s) T

where the sponge s enters as the imaginary part of a complex potential
phi - i s.  The operators are those of the potential solver: u = r psi
with L1 = d^2/dr^2 and L2 = r^-2 (d^2/dtheta^2 + cot(theta) d/dtheta) on
polar grids, d^2/dx^2 and d^2/dy^2 on planar ones.  phi+ comes from a
fixed-point loop over the Peaceman-Rachford potential solve, or is lagged.
"""

from __future__ import annotations

import numpy as np

from . import _timeloop
from .errors import InvalidArgument, NonConvergence, StepFailure
from .fields import AxiWave, PlanarWave, PotentialField
from .poisson import line_operators, pr_adi_poisson

SELF_CONSISTENT = "self-consistent"
ZERO = "zero"
FIXED = "fixed"
POTENTIAL_MODES = (SELF_CONSISTENT, ZERO, FIXED)
PHI_TOLERANCE = 1e-8
PHI_MAX_ITERATIONS = 30


class AdiEvolver(_timeloop.EvolverBase):
    def __init__(
        self,
        wave,
        config,
        potential=None,
        potential_mode=SELF_CONSISTENT,
        fixed_potential=None,
        **state,
    ):
        if not isinstance(wave, (AxiWave, PlanarWave)):
            raise InvalidArgument("AdiEvolver needs an axisymmetric or planar wave")
        if potential_mode not in POTENTIAL_MODES:
            raise InvalidArgument(f"potential_mode must be one of {POTENTIAL_MODES}")
        grid = wave.grid
        self.ops = line_operators(grid)
        self.potential_mode = potential_mode
        self.geometry = "axi" if isinstance(wave, AxiWave) else "planar"
        shape = grid.shape
        if potential_mode == ZERO:
            potential = PotentialField(grid, np.zeros(shape))
        elif potential_mode == FIXED:
            if fixed_potential is None:
                raise InvalidArgument("fixed mode needs fixed_potential")
            potential = PotentialField(grid, np.asarray(getattr(fixed_potential, "values", fixed_potential), float))
        elif potential is None:
            potential = self._solve_potential(np.abs(wave.values) ** 2, None, config)
        super().__init__(wave, config, potential, **state)
        if config.sponge is None:
            self.sponge = np.zeros(self.ops.interior_shape)
        else:
            self.sponge = self.ops.interior(config.sponge.on_grid(grid))

    def _solve_potential(self, density, initial, config):
        return pr_adi_poisson(
            density,
            self.ops.grid,
            rho=config.rho,
            tol=config.poisson_tolerance,
            max_iter=config.poisson_max_iterations,
            coupling=config.coupling,
            initial=initial,
        )

    def _free_half_steps(self, X, a):
        ops = self.ops
        S = ops.solve_L1(1.0, 1j * a, X + 1j * a * ops.apply_L2(X))
        return ops.solve_L2(1.0, 1j * a, S + 1j * a * ops.apply_L1(S))

    def _attempt(self, values, phi, dt):
        cfg = self.config
        ops = self.ops
        a = 0.5 * dt
        T = self._free_half_steps(ops.interior(values), a)
        s = self.sponge
        rhs = (1.0 - 1j * a * ops.interior(phi) - a * s) * T

        def potential_step(guess):
            return ops.to_full(rhs / (1.0 + 1j * a * ops.interior(guess) + a * s), dtype=complex)

        if self.potential_mode != SELF_CONSISTENT:
            return potential_step(phi), phi, 1
        if cfg.phi_update == "lagged":
            out = potential_step(phi)
            return out, self._potential_or_fail(out, phi, dt).values, 1
        tol, max_it = cfg.phi_settings(PHI_TOLERANCE, PHI_MAX_ITERATIONS)
        guess = phi
        change = np.inf
        for k in range(1, max_it + 1):
            out = potential_step(guess)
            new = self._potential_or_fail(out, guess, dt).values
            change = float(np.abs(new - guess).max())
            guess = new
            if change < tol:
                return out, guess, k
        raise StepFailure(
            f"potential iteration did not converge at t={self.t:.6g} (dt={dt:.3g}, change {change:.3e})",
            residual=change,
        )

    def _potential_or_fail(self, values, guess, dt):
        try:
            return self._solve_potential(np.abs(values) ** 2, guess, self.config)
        except NonConvergence as exc:
            raise StepFailure(f"potential solve failed at t={self.t:.6g} (dt={dt:.3g}): {exc}", exc.residual) from exc

    def checkpoint_extra(self):
        return {"potential_mode": self.potential_mode}

    @classmethod
    def from_checkpoint(cls, path, config, fixed_potential=None):
        wave, potential, kwargs, header = cls.read_checkpoint(path)
        mode = header.get("potential_mode", SELF_CONSISTENT)
        if mode == FIXED and fixed_potential is None:
            fixed_potential = potential
        return cls(wave, config, potential, mode, fixed_potential, **kwargs)


def adi_step(evolver):
    """Advance one step; returns the number of potential solves used."""
    return evolver.step()


def evolve(evolver, sink=None, snapshot_dir=None, checkpoint_path=None):
    return _timeloop.run(evolver, sink, snapshot_dir, checkpoint_path)
