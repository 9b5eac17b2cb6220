"""Command-line driver.

    snlab <command> --config <file> [--resume <dir>] [--workers N] [--serial]

Configuration files hold ``key = value`` lines grouped under ``[section]``
headers; ``#`` starts a comment.  Every key, its type and its default are
listed in ``SCHEMA``; unknown keys are errors.  Exit status: 0 success,
2 configuration error, 3 solver failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .diagnostics import (
    CSV_COLUMNS,
    CsvSink,
    conserved_energy,
    fit_rescaled_ground,
    power_spectrum,
    read_diagnostics,
    residual_bound,
)
from .errors import ConfigError, FitMeaningless, InvalidArgument, NonConvergence, SelectionFailure, SNError
from .fields import (
    EvolutionConfig,
    Perturbation,
    PlanarWave,
    RadialWave,
    SpongeProfile,
    inner_product,
    normalized,
    perturb,
    probability,
    read_snapshot,
    write_snapshot,
)
from .oracle import free_gaussian, free_gaussian_2d, normalize_gaussian
from .poisson import radial_poisson
from .spectral import axisymmetric_grid, build_grid, planar_grid

COMMANDS = (
    "stationary-spherical",
    "stationary-axi",
    "stationary-rotating",
    "evolve-spherical",
    "evolve-axi",
    "evolve-planar",
    "sweep-gaussian",
    "analyze",
)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

REQUIRED = object()


def _positive(x):
    return x > 0


def _non_negative(x):
    return x >= 0


# (type, default, check) per key; types: int, float, str, "floats", "float?" (may be "none")
SCHEMA = {
    "grid": {
        "n": (int, REQUIRED, lambda x: x >= 8),
        "L": (float, 100.0, _positive),
        "n_theta": (int, 20, lambda x: x >= 8),
        "m": (int, 0, _non_negative),
    },
    "physics": {
        "coupling": (float, 1.4614, _positive),
    },
    "evolution": {
        "dt": (float, REQUIRED, _positive),
        "t_end": (float, REQUIRED, _non_negative),
        "phi_tolerance": ("float?", None, _positive),
        "phi_max_iterations": ("int?", None, lambda x: x >= 1),
        "output_every": (int, 10, lambda x: x >= 1),
        "checkpoint_every": (int, 0, _non_negative),
        "snapshot_every": (int, 0, _non_negative),
        "max_halvings": (int, 4, _non_negative),
        "phi_update": (str, "iterated", lambda x: x in ("iterated", "lagged")),
        "poisson_tolerance": (float, 1e-9, _positive),
        "poisson_max_iterations": (int, 2000, lambda x: x >= 1),
        "rho": ("float?", None, _positive),
        "potential_mode": (str, "self-consistent", lambda x: x in ("self-consistent", "zero", "fixed")),
    },
    "sponge": {
        "kind": (str, "none", lambda x: x in ("none", "radial", "planar-radial")),
        "a": (float, 1.0, _positive),
        "b": (float, 0.5, _positive),
        "cap": (float, 1.0, _positive),
        "rate": (float, 0.5, _positive),
        "radius": (float, 20.0, _positive),
    },
    "perturbation": {
        "epsilon": (float, 0.0, _non_negative),
        "mode": (int, 1, lambda x: x >= 0),
    },
    "initial": {
        "source": (
            str,
            "gaussian",
            lambda x: x in ("gaussian", "gaussian2d", "ground", "excited", "state", "axi", "dipole", "rotating"),
        ),
        "path": (str, "", None),
        "sigma": (float, 6.0, _positive),
        "a": (float, 50.0, _non_negative),
        "v": (float, 0.0, None),
        "k": (int, 1, _non_negative),
        "l": (int, 1, _non_negative),
        "radial_nodes": (int, 0, _non_negative),
        "x0": (float, 0.0, None),
        "y0": (float, 0.0, None),
        "vx": (float, 0.0, None),
        "vy": (float, 0.0, None),
        "omega": (float, 0.005, None),
        "delta_omega": (float, 0.001, _positive),
    },
    "stationary": {
        "k": (int, 0, _non_negative),
        "l": (int, 0, _non_negative),
        "radial_nodes": (int, 0, _non_negative),
        "tol": ("float?", None, _positive),
        "max_outer": (int, 500, lambda x: x >= 1),
        "alpha": (float, 0.5, lambda x: 0 < x <= 1),
        "omega": (float, 0.005, None),
        "delta_omega": (float, 0.001, _positive),
    },
    "sweep": {
        "v_list": ("floats", None, None),
        "a_list": ("floats", None, None),
        "sigma_list": ("floats", None, None),
    },
    "analyze": {
        "input": (str, REQUIRED, None),
        "ground": (str, "", None),
        "series_dt": ("float?", None, _positive),
    },
    "output": {
        "dir": (str, "snlab-run", None),
    },
    "run": {
        "workers": ("int?", None, lambda x: x >= 1),
    },
}

# keys each command needs beyond defaults; sections outside this list are rejected for the command
COMMAND_SECTIONS = {
    "stationary-spherical": ("grid", "physics", "stationary", "output", "run"),
    "stationary-axi": ("grid", "physics", "stationary", "output", "run"),
    "stationary-rotating": ("grid", "physics", "stationary", "output", "run"),
    "evolve-spherical": ("grid", "physics", "evolution", "sponge", "perturbation", "initial", "output", "run"),
    "evolve-axi": ("grid", "physics", "evolution", "sponge", "perturbation", "initial", "output", "run"),
    "evolve-planar": ("grid", "physics", "evolution", "sponge", "perturbation", "initial", "output", "run"),
    "sweep-gaussian": ("grid", "physics", "evolution", "sponge", "initial", "sweep", "output", "run"),
    "analyze": ("analyze", "output", "run"),
}


@dataclass
class RunConfig:
    command: str
    values: dict
    lines: dict = field(default_factory=dict)
    source: str = ""

    def get(self, section, key):
        return self.values[section][key]

    def evolution_config(self):
        ev = self.values["evolution"]
        sp = self.values["sponge"]
        pert = self.values.get("perturbation", {"epsilon": 0.0, "mode": 1})
        sponge = None
        if sp["kind"] != "none":
            sponge = SpongeProfile(sp["a"], sp["b"], sp["kind"], sp["cap"], sp["rate"], sp["radius"])
        perturbation = Perturbation(pert["epsilon"], pert["mode"]) if pert["epsilon"] > 0 else None
        kwargs = {k: ev[k] for k in ev if k != "potential_mode"}
        try:
            return EvolutionConfig(
                sponge=sponge, perturbation=perturbation, coupling=self.values["physics"]["coupling"], **kwargs
            )
        except InvalidArgument as exc:
            raise ConfigError(str(exc), key=_guess_key(str(exc)), line=self.lines.get(("evolution", _guess_key(str(exc))))) from exc

    def resolved_text(self):
        out = [f"# snlab {__version__}", f"command = {self.command}"]
        for section in COMMAND_SECTIONS[self.command]:
            out.append(f"\n[{section}]")
            for key, value in self.values[section].items():
                out.append(f"{key} = {_format_value(value)}")
        return "\n".join(out) + "\n"


def _guess_key(message):
    for key in SCHEMA["evolution"]:
        if message.startswith(key):
            return key
    return None


def _format_value(value):
    if value is None:
        return "none"
    if isinstance(value, (list, tuple)):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _convert(kind, raw, key, line):
    text = raw.strip()
    try:
        if kind in ("float?", "int?"):
            if text.lower() == "none":
                return None
            kind = float if kind == "float?" else int
        if kind is int:
            return int(text)
        if kind is float:
            value = float(text)
            if not math.isfinite(value):
                raise ValueError
            return value
        if kind == "floats":
            items = [float(x) for x in text.replace(";", ",").split(",") if x.strip()]
            if not items:
                raise ValueError
            return items
        return text
    except ValueError:
        name = kind if isinstance(kind, str) else kind.__name__
        raise ConfigError(f"cannot read {text!r} as {name.rstrip('?')}", key=key, line=line) from None


def parse_config(path, command):
    """Read and validate a configuration file for ``command``."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    with open(path) as fh:
        text = fh.read()
    return parse_config_text(text, command, source=str(path))


def parse_config_text(text, command, source="<string>"):
    allowed = COMMAND_SECTIONS[command]
    section = "run"
    raw = {}
    lines = {}
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError("malformed section header", line=number)
            section = stripped[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", line=number)
            if section not in allowed:
                raise ConfigError(f"section [{section}] does not apply to {command}", line=number)
            continue
        if "=" not in stripped:
            raise ConfigError("expected 'key = value'", line=number)
        key, value = (s.strip() for s in stripped.split("=", 1))
        if section == "run" and key == "command":
            if value != command:
                raise ConfigError(f"file is for command {value!r}, not {command!r}", key=key, line=number)
            continue
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key in [{section}]", key=key, line=number)
        if (section, key) in lines:
            raise ConfigError(f"duplicate key (first on line {lines[(section, key)]})", key=key, line=number)
        kind, _, check = SCHEMA[section][key]
        converted = _convert(kind, value, key, number)
        if check is not None and converted is not None:
            ok = all(check(v) for v in converted) if isinstance(converted, list) else check(converted)
            if not ok:
                raise ConfigError(f"value {value!r} is out of range", key=key, line=number)
        raw[(section, key)] = converted
        lines[(section, key)] = number
    values = {}
    for sec in allowed:
        values[sec] = {}
        for key, (_, default, _) in SCHEMA[sec].items():
            if (sec, key) in raw:
                values[sec][key] = raw[(sec, key)]
            elif default is REQUIRED:
                if _required(command, sec, key):
                    raise ConfigError(f"missing required key in [{sec}]", key=key)
                values[sec][key] = None
            else:
                values[sec][key] = default
    cfg = RunConfig(command, values, lines, source)
    _validate(cfg)
    return cfg


def _required(command, section, key):
    if section == "grid" and key == "n":
        return command != "analyze"
    return True


def _validate(cfg):
    cmd = cfg.command
    if "evolution" in cfg.values:
        ev = cfg.values["evolution"]
        if ev["t_end"] > 0 and not ev["dt"] < ev["t_end"]:
            raise ConfigError("dt must be smaller than t_end", key="dt", line=cfg.lines.get(("evolution", "dt")))
        cfg.evolution_config()
    src = cfg.values.get("initial", {}).get("source")
    if src == "state" and not cfg.values["initial"]["path"]:
        raise ConfigError("initial source 'state' needs a path", key="path")
    if src == "state" and not os.path.exists(cfg.values["initial"]["path"]):
        raise ConfigError(f"state file {cfg.values['initial']['path']!r} does not exist", key="path",
                          line=cfg.lines.get(("initial", "path")))
    if cmd == "analyze" and not os.path.isdir(cfg.values["analyze"]["input"]):
        raise ConfigError("analyze input must be an existing run directory", key="input",
                          line=cfg.lines.get(("analyze", "input")))
    if cmd == "evolve-planar" and cfg.values["sponge"]["kind"] == "radial":
        raise ConfigError("planar runs need sponge kind planar-radial", key="kind", line=cfg.lines.get(("sponge", "kind")))
    if cmd in ("evolve-spherical", "sweep-gaussian") and cfg.values["sponge"]["kind"] == "planar-radial":
        raise ConfigError("radial runs need sponge kind radial", key="kind", line=cfg.lines.get(("sponge", "kind")))


def sweep_points(cfg):
    """(v, a, sigma) tuples, in list order, for a sweep-gaussian config."""
    init = cfg.values["initial"]
    sw = cfg.values["sweep"]
    vs = sw["v_list"] or [init["v"]]
    as_ = sw["a_list"] or [init["a"]]
    sigmas = sw["sigma_list"] or [init["sigma"]]
    return [(v, a, s) for s in sigmas for a in as_ for v in vs]


# --- building blocks ------------------------------------------------------------


def _grid_1d(cfg):
    g = cfg.values["grid"]
    return build_grid(g["n"], g["L"])


def _grid_2d(cfg, polar):
    g = cfg.values["grid"]
    if polar:
        return axisymmetric_grid(g["n"], g["L"], g["n_theta"])
    return planar_grid(g["n"], g["L"], g["m"] or None)


def _initial_radial(cfg, grid):
    from .stationary import load_state, spherical_stationary

    init = cfg.values["initial"]
    g = cfg.values["physics"]["coupling"]
    src = init["source"]
    if src == "gaussian":
        C = normalize_gaussian(init["sigma"], init["a"], init["v"], grid)
        wave = RadialWave(grid, free_gaussian(grid.nodes, 0.0, init["sigma"], init["a"], init["v"], C))
        return wave, None
    if src in ("ground", "excited"):
        k = 0 if src == "ground" else init["k"]
        st = spherical_stationary(k, grid, coupling=g)
        return st.wave, st.potential
    if src == "state":
        st = load_state(init["path"])
        if not isinstance(st.wave, RadialWave):
            raise ConfigError("state file does not hold a radial wave", key="path")
        return st.wave, st.potential
    raise ConfigError(f"source {src!r} does not apply to spherical runs", key="source",
                      line=cfg.lines.get(("initial", "source")))


def _initial_2d(cfg, grid):
    from .stationary import axi_stationary, load_state, planar_dipole, rotating_stationary

    init = cfg.values["initial"]
    g = cfg.values["physics"]["coupling"]
    src = init["source"]
    polar = cfg.command == "evolve-axi"
    if src == "state":
        st = load_state(init["path"])
        if st.wave.grid.shape != grid.shape:
            raise ConfigError("state file grid differs from [grid]", key="path")
        return st.wave, st.potential
    if polar and src in ("ground", "axi"):
        sel = (0, 0) if src == "ground" else (init["l"], init["radial_nodes"])
        st = axi_stationary(sel, grid, coupling=g)
        return st.wave, st.potential
    if not polar and src == "gaussian2d":
        X, Y = grid.coordinates
        values = free_gaussian_2d(X, Y, 0.0, init["sigma"], init["x0"], init["y0"], init["vx"], init["vy"])
        wave = normalized(PlanarWave(grid, values))
        wave.values[[0, -1], :] = 0.0
        wave.values[:, [0, -1]] = 0.0
        return wave, None
    if not polar and src == "dipole":
        st = planar_dipole(grid, coupling=g)
        return st.wave, st.potential
    if not polar and src == "rotating":
        st = rotating_stationary(init["omega"], init["delta_omega"], grid, coupling=g)
        return st.wave, st.potential
    raise ConfigError(f"source {src!r} does not apply to {cfg.command}", key="source",
                      line=cfg.lines.get(("initial", "source")))


# --- commands ----------------------------------------------------------------------


def _write_state(run_dir, state, name="state.txt"):
    from .stationary import save_state

    save_state(os.path.join(run_dir, name), state)


def _cmd_stationary(cfg, run_dir, args):
    from .stationary import axi_stationary, residual, rotating_stationary, spherical_stationary

    st = cfg.values["stationary"]
    common = dict(max_outer=st["max_outer"], alpha=st["alpha"], coupling=cfg.values["physics"]["coupling"])
    if st["tol"] is not None:
        common["tol"] = st["tol"]
    if cfg.command == "stationary-spherical":
        state = spherical_stationary(st["k"], _grid_1d(cfg), **common)
    elif cfg.command == "stationary-axi":
        state = axi_stationary((st["l"], st["radial_nodes"]), _grid_2d(cfg, True), **common)
    else:
        state = rotating_stationary(st["omega"], st["delta_omega"], _grid_2d(cfg, False), **common)
    _write_state(run_dir, state)
    with open(os.path.join(run_dir, "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "E", "J2", "omega", "probability", "residual", "iterations"])
        w.writerow([state.label, _f(state.energy), _f(state.J2), _f(state.omega), _f(probability(state.wave)),
                    _f(residual(state)), state.iterations])
    return EXIT_OK


def _f(x):
    return format(float(x), ".17g")


def _make_evolver(cfg, initial_wave, initial_potential, resume_path=None):
    from .evolve_adi import AdiEvolver
    from .evolve_spherical import SphericalEvolver

    ecfg = cfg.evolution_config()
    mode = cfg.values["evolution"]["potential_mode"]
    cls = SphericalEvolver if cfg.command in ("evolve-spherical", "sweep-gaussian") else AdiEvolver
    if resume_path:
        fixed = initial_potential if mode == "fixed" else None
        return cls.from_checkpoint(resume_path, ecfg, fixed_potential=fixed)
    wave = initial_wave
    if ecfg.perturbation is not None:
        wave = perturb(wave, ecfg.perturbation)
        initial_potential = None
    fixed = initial_potential if mode == "fixed" else None
    if mode == "fixed" and fixed is None:
        fixed = radial_poisson(wave, ecfg.coupling) if isinstance(wave, RadialWave) else None
        if fixed is None:
            raise ConfigError("potential_mode fixed needs an initial state with a potential", key="potential_mode")
    return cls(wave, ecfg, initial_potential, mode, fixed)


def _truncate_diagnostics(path, keep_rows):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise OSError(f"{path} is not a diagnostics file")
    if len(rows) - 1 < keep_rows:
        raise OSError(f"{path} has fewer rows than the checkpoint implies")
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows[: keep_rows + 1])


def _cmd_evolve(cfg, run_dir, args):
    from ._timeloop import run

    checkpoint = os.path.join(run_dir, "checkpoint.txt")
    diag = os.path.join(run_dir, "diagnostics.csv")
    snap_dir = os.path.join(run_dir, "snapshots")
    os.makedirs(snap_dir, exist_ok=True)
    if args.resume:
        if not os.path.exists(checkpoint):
            raise OSError(f"no checkpoint in {run_dir}")
        initial_potential = None
        if cfg.values["evolution"]["potential_mode"] == "fixed":
            _, initial_potential = _initial(cfg)
        evolver = _make_evolver(cfg, None, initial_potential, resume_path=checkpoint)
        out_every = evolver.config.output_every
        keep = 1 + evolver.step_count // out_every
        if evolver.step_count == evolver.config.n_steps and evolver.step_count % out_every:
            keep += 1
        _truncate_diagnostics(diag, keep)
        append = True
    else:
        wave, pot = _initial(cfg)
        evolver = _make_evolver(cfg, wave, pot)
        append = False
    limit = args.stop_after
    if limit is not None:
        cfg_full = evolver.config
        target = min(cfg_full.n_steps, evolver.step_count + limit)
        evolver.config = replace(cfg_full, t_end=target * cfg_full.dt)
    with CsvSink(diag, append=append) as sink:
        run(evolver, sink, snap_dir, checkpoint)
    if limit is not None and evolver.step_count < cfg.evolution_config().n_steps:
        evolver.save_checkpoint(checkpoint)
        return EXIT_OK
    evolver.save_checkpoint(checkpoint)
    write_snapshot(os.path.join(run_dir, "final.txt"), evolver.current, evolver.potential, t=evolver.t)
    return EXIT_OK


def _initial(cfg):
    if cfg.command == "evolve-spherical":
        grid = _grid_1d(cfg)
        return _initial_radial(cfg, grid)
    grid = _grid_2d(cfg, cfg.command == "evolve-axi")
    return _initial_2d(cfg, grid)


def _sweep_task(payload):
    """One sweep run; module-level so worker processes can import it."""
    from ._timeloop import run
    from .evolve_spherical import SphericalEvolver
    from .stationary import load_state

    cfg, (v, a, sigma), run_dir, E0, ground_path = payload

    ground = load_state(ground_path)
    grid = _grid_1d(cfg)
    C = normalize_gaussian(sigma, a, v, grid)
    wave = RadialWave(grid, free_gaussian(grid.nodes, 0.0, sigma, a, v, C))
    ecfg = cfg.evolution_config()
    ev = SphericalEvolver(wave, ecfg)
    E_initial = conserved_energy(wave, ev.potential)
    os.makedirs(run_dir, exist_ok=True)
    with CsvSink(os.path.join(run_dir, "diagnostics.csv")) as sink:
        run(ev, sink)
    p = probability(ev.current)
    bound = residual_bound(E_initial, E0) if E_initial < 0 else float("nan")
    try:
        _, fit = fit_rescaled_ground(ev.current, ground)
    except FitMeaningless:
        fit = float("nan")
    return [v, a, sigma, E_initial, p, bound, fit]


def _cmd_sweep(cfg, run_dir, args):
    from .stationary import save_state, spherical_stationary

    points = sweep_points(cfg)
    grid = _grid_1d(cfg)
    g = cfg.values["physics"]["coupling"]
    ground = spherical_stationary(0, grid, coupling=g)
    ground_path = os.path.join(run_dir, "ground.txt")
    save_state(ground_path, ground)
    E0 = conserved_energy(ground.wave, ground.potential)
    payloads = [
        (cfg, pt, os.path.join(run_dir, f"run_{i:03d}"), E0, ground_path) for i, pt in enumerate(points)
    ]
    workers = _workers(cfg, args)
    if workers == 1:
        rows = [_sweep_task(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_task, payloads))
    with open(os.path.join(run_dir, "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["v", "a", "sigma", "E_initial", "p_residual_at_t", "bound", "residual_fit"])
        for row in rows:
            w.writerow([_f(x) for x in row])
    if len(rows) != len(points):
        raise OSError("sweep lost runs")
    return EXIT_OK


def _workers(cfg, args):
    if args.serial:
        return 1
    if args.workers is not None:
        return max(1, args.workers)
    configured = cfg.values["run"]["workers"]
    return configured or os.cpu_count() or 1


def _cmd_analyze(cfg, run_dir, args):
    from .stationary import load_state

    an = cfg.values["analyze"]
    src = an["input"]
    records = read_diagnostics(os.path.join(src, "diagnostics.csv"))
    if not records:
        raise OSError("diagnostics file is empty")
    first, last = records[0], records[-1]
    rows = [("t_final", last.t), ("p_final", last.p_grid), ("E_initial", first.E_conserved),
            ("E_final", last.E_conserved), ("J2_initial", first.J2), ("J2_final", last.J2)]
    if len(records) > 1:
        ts = np.array([r.t for r in records])
        ph = np.array([r.probe_phase for r in records])
        slope = float(np.polyfit(ts, ph, 1)[0])
        rows.append(("probe_phase_slope", slope))
    ground = None
    if an["ground"]:
        ground = load_state(an["ground"])
        E0 = conserved_energy(ground.wave, ground.potential)
        rows.append(("E_ground", E0))
        if first.E_conserved < 0:
            rows.append(("bound", residual_bound(first.E_conserved, E0)))
    final_path = os.path.join(src, "final.txt")
    if ground is not None and os.path.exists(final_path):
        wave, _, _ = read_snapshot(final_path)
        if isinstance(wave, RadialWave):
            try:
                rows.append(("fit_residual", fit_rescaled_ground(wave, ground)[1]))
            except FitMeaningless:
                pass
    with open(os.path.join(run_dir, "analysis.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["quantity", "value"])
        for k, v in rows:
            w.writerow([k, _f(v)])
    snaps = sorted(os.listdir(os.path.join(src, "snapshots"))) if os.path.isdir(os.path.join(src, "snapshots")) else []
    if ground is not None and len(snaps) >= 64:
        series, times = [], []
        for name in snaps:
            wave, _, header = read_snapshot(os.path.join(src, "snapshots", name))
            series.append(inner_product(ground.wave, wave))
            times.append(float(header["t"]))
        dt = an["series_dt"] or float(np.mean(np.diff(times)))
        peaks = power_spectrum(np.array(series), dt)
        with open(os.path.join(run_dir, "spectrum.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["omega", "amplitude"])
            for om, amp in peaks:
                w.writerow([_f(om), _f(amp)])
    return EXIT_OK


HANDLERS = {
    "stationary-spherical": _cmd_stationary,
    "stationary-axi": _cmd_stationary,
    "stationary-rotating": _cmd_stationary,
    "evolve-spherical": _cmd_evolve,
    "evolve-axi": _cmd_evolve,
    "evolve-planar": _cmd_evolve,
    "sweep-gaussian": _cmd_sweep,
    "analyze": _cmd_analyze,
}


def build_parser():
    p = argparse.ArgumentParser(prog="snlab", description="Schrodinger-Newton solvers and experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="key = value configuration file")
    p.add_argument("--resume", metavar="DIR", help="continue the run in DIR from its checkpoint")
    p.add_argument("--workers", type=int, help="parallel workers for sweeps")
    p.add_argument("--serial", action="store_true", help="run everything in this process")
    p.add_argument("--output", metavar="DIR", help="run directory (overrides [output] dir)")
    p.add_argument("--stop-after", type=int, metavar="STEPS", help="stop after this many steps, leaving a checkpoint")
    p.add_argument("--version", action="version", version=f"snlab {__version__}")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config, args.command)
    except ConfigError as exc:
        print(f"snlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"snlab: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    run_dir = args.resume or args.output or cfg.values["output"]["dir"]
    try:
        os.makedirs(run_dir, exist_ok=True)
        if not args.resume:
            with open(os.path.join(run_dir, "config.resolved"), "w") as fh:
                fh.write(cfg.resolved_text())
    except OSError as exc:
        print(f"snlab: cannot prepare run directory: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        return HANDLERS[cfg.command](cfg, run_dir, args)
    except ConfigError as exc:
        code, kind = EXIT_CONFIG, "config error"
        err = exc
    except (NonConvergence, SelectionFailure) as exc:
        code, kind = EXIT_SOLVER, "solver failure"
        err = exc
    except OSError as exc:
        code, kind = EXIT_IO, "I/O error"
        err = exc
    except SNError as exc:
        code, kind = EXIT_SOLVER, "solver failure"
        err = exc
    print(f"snlab: {kind}: {err}", file=sys.stderr)
    try:
        with open(os.path.join(run_dir, "error.txt"), "w") as fh:
            fh.write(f"{kind}: {err}\n\n")
            fh.write("".join(traceback.format_exception(type(err), err, err.__traceback__)))
    except OSError:
        pass
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
