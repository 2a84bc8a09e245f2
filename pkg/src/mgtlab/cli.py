"""Configuration-driven experiment runner.

Configs are flat key = value files grouped in sections (configparser syntax);
see tests/data or the README for a template.  Verbs:

    mgtlab run <config>                      full pipeline, writes CSV + report
    mgtlab sweep <config> --axis A --values  one row per value, CSV table
    mgtlab spectrum <config>                 eigenvalues only
    mgtlab check <config>                    assumption diagnostics only

All floats are emitted with 17 significant digits, CSV files are UTF-8 with
LF endings, and identical configs (seeds included) reproduce identical bytes.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import analysis as ana
from . import assembly as asm
from . import evolution as evo
from . import geometry as geo
from ._stepping import HAVE_COMPILED
from .errors import ValidationError
from .model import derive_params, validate_stability_assumptions

SWEEP_AXES = ("eta", "gamma-scale", "dt", "resolution")


class ConfigError(ValidationError):
    """Config file problem, annotated with file/section/key context."""


def _fmt(x) -> str:
    return f"{float(x):.17g}"


@dataclass(frozen=True)
class ExperimentConfig:
    domain_kind: str = "interval"
    bounds: tuple = (0.0, 1.0)
    resolution: tuple = (100,)
    boundary_mode: str = "star"         # star | dirichlet
    x0: tuple | None = (-1.0,)
    tau: float = 1.0
    c: float = 1.0
    delta: float = 0.0
    eta: float = 1.0
    alpha_spec: tuple = ("critical", 0.0)   # constant v | cells (...) | critical s
    preset: str = "eigenmode"
    mode: int = 1
    seed: int | None = None
    amplitude: float = 1.0
    T: float = 10.0
    dt: float = 1e-3
    scheme: str = "midpoint"
    stride: int = 1
    identities: tuple = ()
    spectrum: bool = True
    decay_fit: bool = True
    fit_window: tuple = (0.2, 1.0)      # fractions of [0, T]
    datko: bool = False
    resolvent: tuple = ()
    dense_threshold: int = 3000
    out_dir: str = "out"
    dump_matrices: bool = False
    dump_mesh: bool = False
    dump_states: bool = False

    def validate(self) -> "ExperimentConfig":
        if self.domain_kind not in ("interval", "rectangle"):
            raise ConfigError(f"domain.kind must be interval|rectangle, got {self.domain_kind!r}")
        nb = 2 if self.domain_kind == "interval" else 4
        if len(self.bounds) != nb:
            raise ConfigError(f"domain.bounds needs {nb} numbers for {self.domain_kind}")
        if any(not np.isfinite(v) for v in self.bounds):
            raise ConfigError("domain.bounds must be finite")
        if min(self.resolution) < 2:
            raise ConfigError("domain.resolution must be >= 2 cells per direction")
        if self.boundary_mode not in ("star", "dirichlet"):
            raise ConfigError("boundary.mode must be star|dirichlet")
        if self.boundary_mode == "star":
            if self.x0 is None or len(self.x0) != (1 if self.domain_kind == "interval" else 2):
                raise ConfigError("boundary.x0 must give one coordinate per dimension")
        for name in ("tau", "c", "delta", "eta", "T", "dt", "amplitude"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if not 0 < self.dt <= self.T:
            raise ConfigError(f"need T >= dt > 0, got T={self.T}, dt={self.dt}")
        if self.scheme not in evo.SCHEMES:
            raise ConfigError(f"time.scheme must be one of {evo.SCHEMES}")
        if self.stride < 1:
            raise ConfigError("time.stride must be >= 1")
        if self.preset not in ("zero", "eigenmode", "bump"):
            raise ConfigError("initial.preset must be zero|eigenmode|bump")
        if self.preset == "bump" and self.seed is None:
            raise ConfigError("initial.seed is required for the bump preset")
        bad = set(self.identities) - set(ana.IDENTITIES)
        if bad:
            raise ConfigError(f"unknown identities {sorted(bad)}")
        if self.boundary_mode == "dirichlet" and any(
                w.startswith("hzmult") for w in self.identities):
            raise ConfigError("h-multiplier identities need boundary.mode = star (an x0)")
        if not (0.0 <= self.fit_window[0] < self.fit_window[1] <= 1.0):
            raise ConfigError("analysis.fit_window must be fractions 0 <= lo < hi <= 1")
        if any(lam <= 0 for lam in self.resolvent):
            raise ConfigError("analysis.resolvent probes must be positive")
        return self

    # -- model construction -------------------------------------------------

    def alpha_value(self):
        kind = self.alpha_spec[0]
        if kind == "constant":
            return self.alpha_spec[1]
        if kind == "cells":
            return np.asarray(self.alpha_spec[1], dtype=float)
        if kind == "critical":
            b = self.delta + self.tau * self.c**2
            return self.tau * self.c**2 / b + self.alpha_spec[1]
        raise ConfigError(f"unknown alpha spec {self.alpha_spec!r}")

    def build_params(self):
        return derive_params(self.tau, self.c, self.delta, self.eta, self.alpha_value())

    def build_mesh(self):
        return geo.build_mesh(self.domain_kind, self.bounds, self.resolution)

    def build_partition(self, mesh):
        if self.boundary_mode == "dirichlet":
            return geo.dirichlet_partition(mesh)
        return geo.partition_boundary(mesh, np.asarray(self.x0))


# ---------------------------------------------------------------------------
# config file I/O


def _parse_floats(text):
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def _parse_ints(text):
    return tuple(int(tok) for tok in text.replace(",", " ").split())


def load_config(path) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")

    def get(section, key, cast, default=None, required=False):
        if not parser.has_option(section, key):
            if required:
                raise ConfigError(f"{path}: missing [{section}] {key}")
            return default
        raw = parser.get(section, key).strip()
        try:
            return cast(raw)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"{path}: bad value for [{section}] {key} = {raw!r}: {exc}") from exc

    def as_bool(raw):
        lowered = raw.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError("expected a boolean")

    def alpha_cast(raw):
        toks = raw.split()
        if toks[0] == "constant" and len(toks) == 2:
            return ("constant", float(toks[1]))
        if toks[0] == "critical" and len(toks) == 2:
            return ("critical", float(toks[1]))
        if toks[0] == "cells" and len(toks) >= 2:
            return ("cells", tuple(float(t) for t in toks[1:]))
        raise ValueError("expected 'constant v', 'critical s' or 'cells v1 v2 ...'")

    def list_cast(raw):
        return () if raw.lower() == "none" else tuple(raw.replace(",", " ").split())

    def float_list(raw):
        return () if raw.lower() == "none" else _parse_floats(raw)

    x0_raw = get("boundary", "x0", _parse_floats)
    cfg = ExperimentConfig(
        domain_kind=get("domain", "kind", str, "interval"),
        bounds=get("domain", "bounds", _parse_floats, required=True),
        resolution=get("domain", "resolution", _parse_ints, required=True),
        boundary_mode=get("boundary", "mode", str, "star"),
        x0=x0_raw,
        tau=get("physics", "tau", float, 1.0),
        c=get("physics", "c", float, 1.0),
        delta=get("physics", "delta", float, 0.0),
        eta=get("physics", "eta", float, 1.0),
        alpha_spec=get("physics", "alpha", alpha_cast, ("critical", 0.0)),
        preset=get("initial", "preset", str, "eigenmode"),
        mode=get("initial", "mode", int, 1),
        seed=get("initial", "seed", int, None),
        amplitude=get("initial", "amplitude", float, 1.0),
        T=get("time", "T", float, required=True),
        dt=get("time", "dt", float, required=True),
        scheme=get("time", "scheme", str, "midpoint"),
        stride=get("time", "stride", int, 1),
        identities=get("analysis", "identities", list_cast, ()),
        spectrum=get("analysis", "spectrum", as_bool, True),
        decay_fit=get("analysis", "decay_fit", as_bool, True),
        fit_window=get("analysis", "fit_window", _parse_floats, (0.2, 1.0)),
        datko=get("analysis", "datko", as_bool, False),
        resolvent=get("analysis", "resolvent", float_list, ()),
        dense_threshold=get("analysis", "dense_threshold", int, 3000),
        out_dir=get("output", "directory", str, "out"),
        dump_matrices=get("output", "dump_matrices", as_bool, False),
        dump_mesh=get("output", "dump_mesh", as_bool, False),
        dump_states=get("output", "dump_states", as_bool, False),
    )
    return cfg.validate()


def write_config(cfg: ExperimentConfig, path) -> None:
    """Echo a config in its own file format; reparsing yields an equal config."""
    parser = configparser.ConfigParser()
    parser["domain"] = {
        "kind": cfg.domain_kind,
        "bounds": " ".join(_fmt(v) for v in cfg.bounds),
        "resolution": " ".join(str(v) for v in cfg.resolution),
    }
    bnd = {"mode": cfg.boundary_mode}
    if cfg.x0 is not None:
        bnd["x0"] = " ".join(_fmt(v) for v in cfg.x0)
    parser["boundary"] = bnd
    kind = cfg.alpha_spec[0]
    if kind == "cells":
        alpha = "cells " + " ".join(_fmt(v) for v in cfg.alpha_spec[1])
    else:
        alpha = f"{kind} {_fmt(cfg.alpha_spec[1])}"
    parser["physics"] = {
        "tau": _fmt(cfg.tau), "c": _fmt(cfg.c), "delta": _fmt(cfg.delta),
        "eta": _fmt(cfg.eta), "alpha": alpha,
    }
    init = {"preset": cfg.preset, "mode": str(cfg.mode),
            "amplitude": _fmt(cfg.amplitude)}
    if cfg.seed is not None:
        init["seed"] = str(cfg.seed)
    parser["initial"] = init
    parser["time"] = {"t": _fmt(cfg.T), "dt": _fmt(cfg.dt),
                      "scheme": cfg.scheme, "stride": str(cfg.stride)}
    parser["analysis"] = {
        "identities": " ".join(cfg.identities) if cfg.identities else "none",
        "spectrum": str(cfg.spectrum).lower(),
        "decay_fit": str(cfg.decay_fit).lower(),
        "fit_window": " ".join(_fmt(v) for v in cfg.fit_window),
        "datko": str(cfg.datko).lower(),
        "resolvent": " ".join(_fmt(v) for v in cfg.resolvent) if cfg.resolvent else "none",
        "dense_threshold": str(cfg.dense_threshold),
    }
    parser["output"] = {
        "directory": cfg.out_dir,
        "dump_matrices": str(cfg.dump_matrices).lower(),
        "dump_mesh": str(cfg.dump_mesh).lower(),
        "dump_states": str(cfg.dump_states).lower(),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        parser.write(fh)


# ---------------------------------------------------------------------------
# the run pipeline


@dataclass
class RunReport:
    config: ExperimentConfig
    assumptions: object
    abscissa: float | None = None
    fit: ana.DecayFit | None = None
    identity_residuals: dict = field(default_factory=dict)
    datko: ana.DatkoReport | None = None
    resolvent_norms: dict = field(default_factory=dict)
    trace_initial: float = 0.0
    trace_rate: float | None = None
    manifest: list = field(default_factory=list)

    def report_lines(self):
        yield f"compiled_kernels = {str(HAVE_COMPILED).lower()}"
        for line in self.assumptions.lines():
            name, rest = line.split(":", 1)
            yield f"assumption_{name} ={rest}"
        if self.abscissa is not None:
            yield f"abscissa = {_fmt(self.abscissa)}"
        if self.fit is not None:
            yield f"omega = {_fmt(self.fit.omega)}"
            yield f"mconst = {_fmt(self.fit.mconst)}"
            yield f"r2 = {_fmt(self.fit.r2)}"
            yield f"fit_window = {_fmt(self.fit.window[0])} {_fmt(self.fit.window[1])}"
        for which, res in self.identity_residuals.items():
            yield f"residual_{which} = {_fmt(res.residual)}"
        if self.datko is not None:
            for pt in self.datko.points:
                tag = _fmt(pt.s)
                if pt.vacuous:
                    yield f"datko_cstar_s_{tag} = vacuous"
                else:
                    yield (f"datko_cstar_s_{tag} = {_fmt(pt.cstar)} "
                           f"(half {_fmt(pt.cstar_half)}, "
                           f"{'UNBOUNDED' if pt.unbounded else 'bounded'})")
        for lam, val in self.resolvent_norms.items():
            yield f"resolvent_norm_lambda_{_fmt(lam)} = {_fmt(val)}"
        yield f"trace_initial = {_fmt(self.trace_initial)}"
        if self.trace_rate is not None:
            yield f"trace_rate = {_fmt(self.trace_rate)}"
        for p in self.manifest:
            yield f"manifest = {p}"


def run(cfg: ExperimentConfig, quiet: bool = False) -> RunReport:
    """Execute geometry -> assembly -> evolution -> analysis and write outputs."""
    cfg.validate()
    params = cfg.build_params()
    mesh = cfg.build_mesh()
    partition = cfg.build_partition(mesh)
    assumptions = validate_stability_assumptions(params, mesh, partition)
    ops = asm.assemble_fem(mesh, partition, params)
    bundle = asm.build_generators(ops)
    state0 = evo.initial_state(ops, cfg.preset, mode=cfg.mode, seed=cfg.seed,
                               amplitude=cfg.amplitude)
    traj = evo.integrate(bundle, state0, T=cfg.T, dt=cfg.dt,
                         scheme=cfg.scheme, stride=cfg.stride)
    report = RunReport(config=cfg, assumptions=assumptions)

    os.makedirs(cfg.out_dir, exist_ok=True)

    def emit(name, writer, *args):
        path = os.path.join(cfg.out_dir, name)
        writer(path, *args)
        report.manifest.append(path)

    energies = ana.energy_series(traj, ops, params)
    emit("energies.csv", ana.write_energy_csv, energies)
    emit("trajectory.csv", lambda p, t: evo.write_trajectory_csv(p, t, ops), traj)

    trace = evo.trace_series(traj, ops, params)
    emit("trace.csv", _write_trace_csv, trace)
    report.trace_initial = float(trace.upsilon[0])
    if trace.upsilon[0] > 0:
        try:
            report.trace_rate = trace.fitted_rate(
                floor=1e-6 * trace.upsilon[0])
        except ValidationError:
            report.trace_rate = None

    if cfg.spectrum:
        spec = ana.spectrum(bundle.A_u, bundle.E, dense_threshold=cfg.dense_threshold)
        report.abscissa = spec.abscissa
        emit("eigenvalues.csv", ana.write_eigenvalues_csv, spec.eigenvalues)

    if cfg.decay_fit:
        lo = cfg.fit_window[0] * traj.times[-1]
        hi = cfg.fit_window[1] * traj.times[-1]
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                report.fit = ana.fit_decay_rate(energies.times, energies.E, (lo, hi))
        except ValidationError:
            report.fit = None

    for which in cfg.identities:
        report.identity_residuals[which] = ana.identity_residual(
            traj, which, ops, params,
            x0=None if partition.x0 is None else partition.x0)

    if cfg.datko:
        report.datko = ana.datko_check(energies.times, energies.E)

    for lam in cfg.resolvent:
        report.resolvent_norms[lam] = ana.resolvent_norm(bundle, lam)

    if cfg.dump_matrices:
        for name in ("K", "M", "B"):
            emit(f"matrix_{name}.txt", asm.write_coo, getattr(ops, name))
    if cfg.dump_mesh:
        emit("mesh.txt", lambda p: geo.dump_mesh(mesh, p))
    if cfg.dump_states:
        emit("states.bin", lambda p: evo.write_state_dump(p, traj))

    emit("config_echo.cfg", lambda p, c: write_config(c, p), cfg)

    path = os.path.join(cfg.out_dir, "report.txt")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in report.report_lines():
            fh.write(line + "\n")
    report.manifest.append(path)

    if not quiet:
        for line in report.report_lines():
            print(line)
    return report


def _write_trace_csv(path, trace) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "upsilon"])
        for t, u in zip(trace.times, trace.upsilon):
            writer.writerow([_fmt(t), _fmt(u)])


# ---------------------------------------------------------------------------
# parameter sweeps


def apply_axis(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis == "eta":
        return replace(cfg, eta=float(value))
    if axis == "dt":
        return replace(cfg, dt=float(value))
    if axis == "resolution":
        return replace(cfg, resolution=(int(value),) * len(cfg.resolution))
    if axis == "gamma-scale":
        kind = cfg.alpha_spec[0]
        if kind == "critical":
            return replace(cfg, alpha_spec=("critical", cfg.alpha_spec[1] * float(value)))
        b = cfg.delta + cfg.tau * cfg.c**2
        shift = cfg.tau * cfg.c**2 / b
        if kind == "constant":
            base = cfg.alpha_spec[1] - shift
            return replace(cfg, alpha_spec=("constant", shift + float(value) * base))
        cells = tuple(shift + float(value) * (v - shift) for v in cfg.alpha_spec[1])
        return replace(cfg, alpha_spec=("cells", cells))
    raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")


SWEEP_COLUMNS = ("value", "abscissa", "omega", "r2", "datko_cstar",
                 "res_e1id", "res_zmul", "res_hzmult", "res_hzmult_robin", "error")


def _sweep_point(task):
    cfg_point, value = task
    row = {k: "" for k in SWEEP_COLUMNS}
    row["value"] = _fmt(value)
    try:
        cfg_point.validate()
        params = cfg_point.build_params()
        mesh = cfg_point.build_mesh()
        partition = cfg_point.build_partition(mesh)
        ops = asm.assemble_fem(mesh, partition, params)
        bundle = asm.build_generators(ops)
        spec = ana.spectrum(bundle.A_u, bundle.E,
                            dense_threshold=cfg_point.dense_threshold)
        row["abscissa"] = _fmt(spec.abscissa)
        state0 = evo.initial_state(ops, cfg_point.preset, mode=cfg_point.mode,
                                   seed=cfg_point.seed, amplitude=cfg_point.amplitude)
        traj = evo.integrate(bundle, state0, T=cfg_point.T, dt=cfg_point.dt,
                             scheme=cfg_point.scheme, stride=cfg_point.stride)
        energies = ana.energy_series(traj, ops, params)
        if cfg_point.decay_fit:
            lo = cfg_point.fit_window[0] * traj.times[-1]
            hi = cfg_point.fit_window[1] * traj.times[-1]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                fit = ana.fit_decay_rate(energies.times, energies.E, (lo, hi))
            row["omega"] = _fmt(fit.omega)
            row["r2"] = _fmt(fit.r2)
        if cfg_point.datko:
            rep = ana.datko_check(energies.times, energies.E)
            vals = rep.cstars()
            if vals.size:
                row["datko_cstar"] = _fmt(vals.mean())
        for which in cfg_point.identities:
            res = ana.identity_residual(traj, which, ops, params, x0=partition.x0)
            row[f"res_{which}"] = _fmt(res.residual)
    except Exception as exc:  # per-point failures stay in-row
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def sweep(cfg: ExperimentConfig, axis: str, values, workers: int = 1,
          out_path=None):
    """One pipeline run per value; rows in input order, failures recorded in-row."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    values = list(values)
    if not values:
        raise ConfigError("sweep needs a nonempty value list")
    if any(not np.isfinite(float(v)) for v in values):
        raise ConfigError("sweep values must be finite")
    tasks = [(apply_axis(cfg, axis, v), v) for v in values]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    if out_path is None:
        os.makedirs(cfg.out_dir, exist_ok=True)
        out_path = os.path.join(cfg.out_dir, f"sweep_{axis.replace('-', '_')}.csv")
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(SWEEP_COLUMNS), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return rows, out_path


# ---------------------------------------------------------------------------
# entry point


def _build_argparser():
    ap = argparse.ArgumentParser(prog="mgtlab",
                                 description="MGT boundary-stabilization laboratory")
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb in ("run", "spectrum", "check"):
        p = sub.add_parser(verb)
        p.add_argument("config")
    p = sub.add_parser("sweep")
    p.add_argument("config")
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", required=True,
                   help="comma- or space-separated numbers")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None)
    return ap


def main(argv=None) -> int:
    args = _build_argparser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.verb == "run":
            run(cfg)
            return 0
        if args.verb == "check":
            params = cfg.build_params()
            mesh = cfg.build_mesh()
            partition = cfg.build_partition(mesh)
            rep = validate_stability_assumptions(params, mesh, partition)
            for line in rep.lines():
                print(line)
            return 0 if rep.all_passed else 1
        if args.verb == "spectrum":
            params = cfg.build_params()
            mesh = cfg.build_mesh()
            partition = cfg.build_partition(mesh)
            ops = asm.assemble_fem(mesh, partition, params)
            bundle = asm.build_generators(ops)
            spec = ana.spectrum(bundle.A_u, bundle.E,
                                dense_threshold=cfg.dense_threshold)
            os.makedirs(cfg.out_dir, exist_ok=True)
            path = os.path.join(cfg.out_dir, "eigenvalues.csv")
            ana.write_eigenvalues_csv(path, spec.eigenvalues)
            print(f"abscissa = {_fmt(spec.abscissa)}")
            print(f"eigenvalues = {path}")
            return 0
        if args.verb == "sweep":
            values = [float(tok) for tok in args.values.replace(",", " ").split()]
            rows, path = sweep(cfg, args.axis, values, workers=args.workers,
                               out_path=args.out)
            print(f"sweep table = {path}")
            for row in rows:
                status = row["error"] or "ok"
                print(f"{args.axis} = {row['value']}: abscissa = "
                      f"{row['abscissa'] or 'n/a'} omega = {row['omega'] or 'n/a'} "
                      f"[{status}]")
            return 0
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # solver and I/O failures
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
