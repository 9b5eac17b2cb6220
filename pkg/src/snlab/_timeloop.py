"""Shared time-loop machinery: dt halving, records, snapshots, checkpoints."""

from __future__ import annotations

import os

import numpy as np

from .diagnostics import DiagnosticsRecord, PhaseTracker, angular_momentum_J2, conserved_energy, energy_functional
from .errors import StepFailure
from .fields import PotentialField, probability, read_snapshot, write_snapshot


class EvolverBase:
    """State (wave, potential, t, step) plus the generic step/record logic.

    Subclasses provide ``_attempt(values, phi, dt) -> (values, phi, iterations)``
    which raises StepFailure when its inner iteration fails.
    """

    def __init__(self, wave, config, potential, t=0.0, step=0, probe_index=None, phase=None):
        self.grid = wave.grid
        self.config = config
        self.current = wave
        self.potential = potential
        self.t = float(t)
        self.step_count = int(step)
        if probe_index is None:
            probe_index = np.unravel_index(int(np.argmax(np.abs(wave.values))), wave.values.shape)
        self.probe_index = tuple(int(i) for i in np.atleast_1d(probe_index))
        self.phase = phase or PhaseTracker()
        self.last_iterations = 0

    # -- stepping -------------------------------------------------------------

    def _advance(self, values, phi, dt, depth):
        try:
            return self._attempt(values, phi, dt)
        except StepFailure:
            if depth >= self.config.max_halvings:
                raise
            v1, p1, i1 = self._advance(values, phi, 0.5 * dt, depth + 1)
            v2, p2, i2 = self._advance(v1, p1, 0.5 * dt, depth + 1)
            return v2, p2, i1 + i2

    def step(self):
        values, phi, its = self._advance(self.current.values, self.potential.values, self.config.dt, 0)
        self.current = self.current.copy(values)
        self.potential = PotentialField(self.grid, phi)
        self.t += self.config.dt
        self.step_count += 1
        self.last_iterations = its
        return its

    # -- observables ------------------------------------------------------------

    def probe_value(self):
        return complex(self.current.values[self.probe_index])

    def record(self):
        wave, pot = self.current, self.potential
        return DiagnosticsRecord(
            t=self.t,
            p_grid=probability(wave),
            E_conserved=conserved_energy(wave, pot),
            E_functional=energy_functional(wave, pot),
            J2=angular_momentum_J2(wave),
            probe_phase=self.phase.update(self.probe_value()),
            phi_iterations=int(self.last_iterations),
        )

    # -- persistence --------------------------------------------------------------

    def checkpoint_extra(self):
        return {}

    def save_checkpoint(self, path):
        extra = {
            "step": self.step_count,
            "probe": ":".join(str(i) for i in self.probe_index),
            "phase_value": float(self.phase.value),
            "phase_last": "none" if self.phase.last is None else float(self.phase.last),
            "iterations": self.last_iterations,
            "rngstate": "none",
        }
        extra.update(self.checkpoint_extra())
        tmp = f"{path}.tmp"
        write_snapshot(tmp, self.current, self.potential, t=self.t, extra=extra)
        os.replace(tmp, path)

    @staticmethod
    def read_checkpoint(path):
        """Returns (wave, potential, keyword arguments for the constructor, header)."""
        wave, potential, header = read_snapshot(path)
        last = header.get("phase_last", "none")
        phase = PhaseTracker(float(header["phase_value"]), None if last == "none" else float(last))
        kwargs = dict(
            t=float(header["t"]),
            step=int(header["step"]),
            probe_index=tuple(int(i) for i in header["probe"].split(":")),
            phase=phase,
        )
        return wave, potential, kwargs, header


def run(evolver, sink=None, snapshot_dir=None, checkpoint_path=None):
    """Advance ``evolver`` to the configured end time.

    Emits a record at the start of a fresh run, after every
    ``output_every`` steps and at the final step.  Snapshots go to
    ``snapshot_dir`` every ``snapshot_every`` steps; a checkpoint is
    rewritten every ``checkpoint_every`` steps and again, before
    re-raising, when a step fails for good.
    """
    cfg = evolver.config
    total = cfg.n_steps
    emit = sink if sink is not None else (lambda record: None)
    if evolver.step_count == 0:
        emit(evolver.record())
        if snapshot_dir and cfg.snapshot_every:
            _snapshot(evolver, snapshot_dir)
    while evolver.step_count < total:
        try:
            evolver.step()
        except StepFailure:
            if checkpoint_path:
                evolver.save_checkpoint(checkpoint_path)
            raise
        k = evolver.step_count
        if k % cfg.output_every == 0 or k == total:
            emit(evolver.record())
        if snapshot_dir and cfg.snapshot_every and k % cfg.snapshot_every == 0:
            _snapshot(evolver, snapshot_dir)
        if checkpoint_path and cfg.checkpoint_every and k % cfg.checkpoint_every == 0:
            evolver.save_checkpoint(checkpoint_path)
    return evolver.current


def _snapshot(evolver, directory):
    path = os.path.join(directory, f"snapshot_{evolver.step_count:08d}.txt")
    write_snapshot(path, evolver.current, evolver.potential, t=evolver.t)
