"""Command-line pipeline: ``parapde generate | discover | compare``.

Settings come from three layers, later ones winning: built-in defaults, a
``--config`` file of ``key=value`` lines, and explicit flags. Every run
writes the fully resolved settings to ``run.meta`` in the same format, so
``--config run.meta`` repeats the run exactly.

Exit codes: 0 success, 2 usage or unreadable input, 3 simulation failure,
4 discovery failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import warnings
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import simulate
from .differentiate import DiffMethod
from .features import LibrarySpec, build_blocks, build_blocks_2d
from .fields import (DatasetError, Field1D, NoiseSpec, _atomic_write, add_noise, load_dataset,
                     read_meta, save_dataset, subsample_points)
from .selection import METHODS, sweep

log = logging.getLogger("parapde")

EXIT_OK, EXIT_USAGE, EXIT_SIMULATION, EXIT_DISCOVERY = 0, 2, 3, 4
COMMANDS = ("generate", "discover", "compare")
AXES = ("time", "space")
DIFF_KINDS = ("spectral", "central_fd", "poly_smooth")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Resolved settings of one CLI run.

    ``space_method = auto`` means spectral on periodic data and central
    differences otherwise. ``max_power``/``max_derivative`` of 0 pick the
    library default for the data's dimension (3/4 in 1D, 2/2 in 2D).
    ``n``, ``m`` and ``t_end`` of 0 keep the benchmark's own values.
    """

    command: str = ""
    model: str = ""
    data: str = ""
    out: str = ""
    noise: float = 0.0
    seed: int = 0
    axis: str = "time"
    method: str = "sgtr"
    n: int = 0
    m: int = 0
    t_end: float = 0.0
    max_power: int = 0
    max_derivative: int = 0
    include_constant: bool = True
    space_method: str = "auto"
    space_degree: int = 4
    space_half_width: int = 5
    time_method: str = "central_fd"
    time_degree: int = 4
    time_half_width: int = 5
    ridge: float = 1e-5
    count: int = 50
    fraction: float = 0.2
    glasso_tol: float = 1e-8
    glasso_maxit: int = 1000
    sample_count: int = 1000
    sample_every: int = 10
    sample_seed: int = 0

    def validate(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if not self.out:
            raise UsageError("--out is required")
        if self.command == "generate":
            if self.model not in simulate.MODELS:
                raise UsageError(f"--model must be one of {', '.join(simulate.MODELS)}")
            if self.noise < 0:
                raise UsageError("--noise must be nonnegative")
        else:
            if not self.data:
                raise UsageError("--data is required")
            if self.axis not in AXES:
                raise UsageError(f"--axis must be one of {', '.join(AXES)}")
            if self.command == "discover" and self.method not in METHODS:
                raise UsageError(f"--method must be one of {', '.join(METHODS)}")
            if self.space_method not in DIFF_KINDS + ("auto",):
                raise UsageError(f"unknown space_method {self.space_method!r}")
            if self.time_method not in DIFF_KINDS:
                raise UsageError(f"unknown time_method {self.time_method!r}")
            if self.count < 1 or not 0 < self.fraction < 1 or self.ridge < 0:
                raise UsageError("count must be positive, fraction in (0, 1), ridge >= 0")
        return self

    def to_meta(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = str(v).lower()
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key, text):
    kind = _TYPES[key]
    try:
        if kind == "bool":
            low = text.lower()
            if low not in ("true", "false", "1", "0"):
                raise ValueError(text)
            return low in ("true", "1")
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        return text
    except ValueError:
        raise UsageError(f"bad value for {key}: {text!r}") from None


def load_config(path) -> dict:
    """Read a ``key=value`` config file; unknown keys are rejected."""
    try:
        raw = read_meta(path)
    except (OSError, DatasetError) as err:
        raise UsageError(f"cannot read config {path}: {err}") from err
    unknown = sorted(set(raw) - set(_TYPES))
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
    return {k: _convert(k, v) for k, v in raw.items()}


def _parser():
    p = argparse.ArgumentParser(prog="parapde",
                                description="Discover parametric PDEs from spatio-temporal data.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key=value settings file (for example a run.meta)")
        sp.add_argument("--out", help="output location")
        sp.add_argument("--seed", type=int, help="noise seed (generate) or split seed")
        sp.add_argument("-v", "--verbose", action="store_true")

    g = sub.add_parser("generate", help="simulate a benchmark dataset")
    common(g)
    g.add_argument("--model", help=f"one of {', '.join(simulate.MODELS)}")
    g.add_argument("--noise", type=float, help="noise level as a fraction of the data RMS")

    for name, text in (("discover", "run one sparse-regression sweep"),
                       ("compare", "run SGTR and GLASSO on the same split")):
        d = sub.add_parser(name, help=text)
        common(d)
        d.add_argument("--data", help="dataset path (without extension)")
        d.add_argument("--axis", help="group blocks by 'time' or 'space'")
        if name == "discover":
            d.add_argument("--method", help="'sgtr' or 'glasso'")
    return p


def resolve(argv) -> RunConfig:
    args = _parser().parse_args(argv)
    settings = {}
    if args.config:
        settings.update(load_config(args.config))
        if settings.get("command", args.command) != args.command:
            raise UsageError(f"config is for '{settings['command']}', not '{args.command}'")
    for key in ("model", "data", "out", "noise", "seed", "axis", "method"):
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    settings["command"] = args.command
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    return RunConfig(**settings).validate()


def _write_text(path: Path, text: str):
    _atomic_write(path, text.encode("utf-8"))


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def cmd_generate(cfg: RunConfig) -> int:
    sim = simulate.default_config(cfg.model)
    overrides = {k: getattr(cfg, k) for k in ("n", "m", "t_end") if getattr(cfg, k)}
    if cfg.model == "ns2d" and "n" in overrides:
        overrides["n_y"] = overrides["n"]
    try:
        sim = sim.with_overrides(**overrides)
    except ValueError as err:
        raise UsageError(str(err)) from err
    log.info("simulating %s", cfg.model)
    try:
        field = simulate.solve(sim)
    except (simulate.SimulationError, FloatingPointError, ValueError) as err:
        print(f"parapde: simulation failed: {err}", file=sys.stderr)
        return EXIT_SIMULATION
    if cfg.noise > 0:
        field = add_noise(field, NoiseSpec(cfg.noise, cfg.seed))
    stem = save_dataset(field, cfg.out)
    _write_text(stem.with_name(stem.name + ".run.meta"), cfg.to_meta())
    log.info("wrote %s", stem)
    return EXIT_OK


def _method(kind, degree, half_width):
    try:
        return DiffMethod(kind, degree, half_width)
    except ValueError as err:
        raise UsageError(str(err)) from err


def build_system(cfg: RunConfig, field):
    """Block system for ``field`` under the library settings of ``cfg``."""
    one_d = isinstance(field, Field1D)
    space_kind = cfg.space_method
    if space_kind == "auto":
        space_kind = "spectral" if field.grid.periodic else "central_fd"
    spec = LibrarySpec(
        max_power=cfg.max_power or (3 if one_d else 2),
        max_derivative=cfg.max_derivative or (4 if one_d else 2),
        include_constant=cfg.include_constant,
        space_method=_method(space_kind, cfg.space_degree, cfg.space_half_width),
        time_method=_method(cfg.time_method, cfg.time_degree, cfg.time_half_width),
        axis=cfg.axis,
    )
    if one_d:
        return build_blocks(field, spec)
    if cfg.axis != "time":
        raise UsageError("2D data can only be grouped by time")
    sample = subsample_points(field, cfg.sample_count, cfg.sample_every, seed=cfg.sample_seed)
    return build_blocks_2d(field, sample, spec)


def _run_sweep(cfg, system, method):
    return sweep(system, method, count=cfg.count, seed=cfg.seed, fraction=cfg.fraction,
                 ridge=cfg.ridge, glasso_tol=cfg.glasso_tol, glasso_maxit=cfg.glasso_maxit)


def write_results(out: Path, result, seed):
    """``model.json``, ``coeffs.csv`` and ``sweep.csv`` for one sweep."""
    model = result.model
    summary = {
        "method": result.method,
        "axis": model.axis,
        "terms": model.active_names,
        "hyperparameter": model.hyperparameter,
        "loss": result.best.loss,
        "k": model.k,
        "seed": seed,
    }
    _write_text(out / "model.json", json.dumps(summary, indent=2) + "\n")
    rows = [[repr(float(c))] + [repr(float(model.coeffs[g, j])) for g in model.active]
            for j, c in enumerate(model.coords)]
    _write_text(out / "coeffs.csv", _csv_text(["coord"] + model.active_names, rows))
    _write_text(out / "sweep.csv", _csv_text(
        ["hyperparameter", "loss", "k"],
        [[repr(h), repr(loss), k] for h, loss, k in result.trace()]))
    return summary


def _load_system(cfg):
    try:
        field = load_dataset(cfg.data)
    except (OSError, DatasetError) as err:
        raise UsageError(f"cannot load dataset {cfg.data}: {err}") from err
    return build_system(cfg, field)


def cmd_discover(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    try:
        system = _load_system(cfg)
        log.info("system: %d blocks x %d rows x %d terms", *system.shape)
        result = _run_sweep(cfg, system, cfg.method)
    except UsageError:
        raise
    except (ValueError, np.linalg.LinAlgError) as err:
        print(f"parapde: discovery failed: {err}", file=sys.stderr)
        return EXIT_DISCOVERY
    summary = write_results(out, result, cfg.seed)
    _write_text(out / "run.meta", cfg.to_meta())
    print(f"{summary['method']}: k={summary['k']} terms={','.join(summary['terms'])}")
    return EXIT_OK


def cmd_compare(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    try:
        system = _load_system(cfg)
        results = {m: _run_sweep(cfg, system, m) for m in METHODS}
    except UsageError:
        raise
    except (ValueError, np.linalg.LinAlgError) as err:
        print(f"parapde: discovery failed: {err}", file=sys.stderr)
        return EXIT_DISCOVERY
    rows = []
    for method, result in results.items():
        s = write_results(out / method, result, cfg.seed)
        rows.append([method, s["k"], repr(s["loss"]), repr(s["hyperparameter"]),
                     " ".join(s["terms"])])
        print(f"{method}: k={s['k']} terms={','.join(s['terms'])}")
    _write_text(out / "summary.csv",
                _csv_text(["method", "k", "loss", "hyperparameter", "terms"], rows))
    _write_text(out / "run.meta", cfg.to_meta())
    return EXIT_OK


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"parapde: warning: {message}", file=sys.stderr)


def main(argv=None) -> int:
    try:
        cfg = resolve(argv)
        handler = {"generate": cmd_generate, "discover": cmd_discover,
                   "compare": cmd_compare}[cfg.command]
        with warnings.catch_warnings():
            warnings.showwarning = _show_warning
            return handler(cfg)
    except UsageError as err:
        print(f"parapde: {err}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # argparse reports usage errors this way
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
