"""Command-line front end: ``kinkflow run | analyze | odecheck | kernel``.

Exit codes: 0 pass, 1 usage or I/O error, 2 solver abort, 3 assertion failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .duhamel import KernelSpec, kernel_l1_norm
from .evolution import ConfigError, InitSpec, RunConfig, SolverAbort, run
from .functionals import Diagnostics
from .grid import GridError, GridSpec
from .rates import (EXPECTED_SLOPES, FitError, Trajectory, VARIANTS, check_ode_bounds,
                    check_window, monitor_inequalities, ode_G0, ode_integrate, rate_report)

EXIT_OK, EXIT_USAGE, EXIT_ABORT, EXIT_FAIL = 0, 1, 2, 3
KERNEL_FLATNESS = 1.1
CSV_COLUMNS = Diagnostics.columns()

log = logging.getLogger("kinkflow")


class UsageError(Exception):
    pass


def fmt(x) -> str:
    return format(float(x), ".17g")


# configuration ----------------------------------------------------------------

_SECTIONS = {"grid": GridSpec, "init": InitSpec, "run": RunConfig}


def _coerce(cls, key: str, raw: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    if key not in fields or key in ("grid", "init"):
        raise UsageError(f"unknown key {key!r} for section of {cls.__name__}")
    default = getattr(cls(), key)
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        return type(default)(raw.strip())
    except ValueError:
        raise UsageError(f"cannot parse {key} = {raw!r} as {type(default).__name__}") from None


def load_config(path: Path | None, overrides: list[str], seed: int | None) -> RunConfig:
    """Read an INI file (``[grid]``, ``[init]``, ``[run]``) or a run manifest."""
    values: dict[str, dict] = {"grid": {}, "init": {}, "run": {}}
    if path is not None:
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        text = path.read_text()
        if text.lstrip().startswith("{"):
            try:
                manifest = json.loads(text)["config"]
            except (json.JSONDecodeError, KeyError) as exc:
                raise UsageError(f"{path}: not a run manifest ({exc})") from None
            values["grid"] = manifest.pop("grid")
            values["init"] = manifest.pop("init")
            values["run"] = manifest
        else:
            parser = configparser.ConfigParser()
            parser.optionxform = str  # keys are case-sensitive (L_z)
            try:
                parser.read_string(text, source=str(path))
            except configparser.Error as exc:
                raise UsageError(f"{path}: {exc}") from None
            for section in parser.sections():
                if section not in _SECTIONS:
                    raise UsageError(f"{path}: unknown section [{section}]")
                for key, raw in parser[section].items():
                    values[section][key] = _coerce(_SECTIONS[section], key, raw)
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise UsageError(f"--set expects section.key=value, got {item!r}")
        lhs, raw = item.split("=", 1)
        section, key = lhs.split(".", 1)
        if section not in _SECTIONS:
            raise UsageError(f"unknown section {section!r} in --set {item!r}")
        values[section][key] = _coerce(_SECTIONS[section], key, raw)
    if seed is not None:
        values["init"]["seed"] = seed
    try:
        return RunConfig(grid=GridSpec(**values["grid"]), init=InitSpec(**values["init"]),
                         **values["run"])
    except (ConfigError, GridError, TypeError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from None
    return out


# CSV --------------------------------------------------------------------------

def write_csv(path: Path, records) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rec in records:
            w.writerow([fmt(getattr(rec, c)) for c in CSV_COLUMNS])


def read_csv(path: Path) -> Trajectory:
    if not path.is_file():
        raise UsageError(f"CSV file not found: {path}")
    required = CSV_COLUMNS[:12]
    traj = Trajectory()
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise UsageError(f"{path}: missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            try:
                vals = {c: float(row[c]) for c in CSV_COLUMNS if c in header}
                traj.append(Diagnostics(**vals))
            except (TypeError, ValueError) as exc:
                raise UsageError(f"{path}:{lineno}: malformed row ({exc})") from None
    if not traj.records:
        raise UsageError(f"{path}: no data rows")
    traj.has_f0 = all(c in header for c in ("f0_l2", "f0_grad_l2"))
    return traj


# subcommands ------------------------------------------------------------------

def cmd_run(args) -> int:
    config = load_config(Path(args.config) if args.config else None, args.set, args.seed)
    out = _out_dir(args.out)
    manifest = {
        "version": __version__,
        "config": config.to_dict(),
        "config_hash": config.digest(),
    }
    ckdir = out / "checkpoints" if config.checkpoint_stride else None
    try:
        traj = run(config, checkpoint_dir=ckdir)
    except SolverAbort as exc:
        manifest["status"] = "aborted"
        manifest["error"] = str(exc)
        (out / "run-manifest.json").write_text(json.dumps(manifest, indent=2))
        print(f"solver abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    write_csv(out / "diagnostics.csv", traj.records)
    with (out / "balance.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t1", "t2", "delta_energy", "integral_d", "dt_max", "residual", "bound"])
        for b in traj.balance:
            w.writerow([fmt(b.t1), fmt(b.t2), fmt(b.delta_energy), fmt(b.integral_d),
                        fmt(b.dt_max), fmt(b.residual), fmt(b.bound)])
    manifest.update(
        status="completed",
        records=len(traj),
        mass_drift=traj.mass_drift,
        balance_ok=all(b.ok for b in traj.balance),
        last_checkpoint=str(traj.last_checkpoint) if traj.last_checkpoint else None,
    )
    (out / "run-manifest.json").write_text(json.dumps(manifest, indent=2))
    print(f"{len(traj)} records written to {out / 'diagnostics.csv'}")
    return EXIT_OK


def _parse_window(text: str) -> tuple[float, float]:
    try:
        a, b = (float(x) for x in text.split(":"))
    except ValueError:
        raise UsageError(f"--window expects t1:t2, got {text!r}") from None
    return a, b


def cmd_analyze(args) -> int:
    from .calibration import MONITOR_LIMITS

    window = _parse_window(args.window)
    try:
        check_window(window)
    except FitError as exc:
        raise UsageError(str(exc)) from None
    traj = read_csv(Path(args.csv))
    out = _out_dir(args.out)
    expected = dict(EXPECTED_SLOPES)
    if not traj.has_f0:
        expected.pop("f0_h1")
    try:
        report = rate_report(traj, window, quantities=tuple(expected))
    except FitError as exc:
        raise UsageError(str(exc)) from None
    d = int(args.d)
    monitors = monitor_inequalities(traj, d=d)
    payload = report.to_dict(expected)
    payload["monitors"] = {
        k: {**dataclasses.asdict(m), "limit": MONITOR_LIMITS[k],
            "within": m.max_ratio <= MONITOR_LIMITS[k]}
        for k, m in monitors.items()
    }
    (out / "rates.json").write_text(json.dumps(payload, indent=2))
    plots = out / "plotdata"
    plots.mkdir(exist_ok=True)
    t = traj.t
    for name in expected:
        y = traj.column(name)
        keep = (t > 0) & (y > 0)
        with (plots / f"{name}.dat").open("w") as fh:
            fh.write(f"# log10(t) log10({name})\n")
            for a, b in zip(np.log10(t[keep]), np.log10(y[keep])):
                fh.write(f"{fmt(a)} {fmt(b)}\n")
    verdict = report.passed(expected)
    for name, fit in report.fits.items():
        s, tol = expected[name]
        print(f"{name:12s} slope {fit.slope:+.4f}  expected {s:+.2f} +/- {tol:.2f}  "
              f"{'PASS' if verdict[name] else 'FAIL'}")
    return EXIT_OK if all(verdict.values()) else EXIT_FAIL


def _ode_points(args) -> list[dict]:
    params = {"E0": 1.0, "H0": 1.0, "c_star": 1.0, "d_prime": 3, "variant": None,
              "t_end": 1e4}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        if key not in params:
            raise UsageError(f"unknown ODE parameter {key!r}")
        try:
            params[key] = raw if key == "variant" else (int(raw) if key == "d_prime" else float(raw))
        except ValueError:
            raise UsageError(f"cannot parse {key} = {raw!r}") from None
    if params["c_star"] < 1:
        raise UsageError(f"c_star must be >= 1 (got {params['c_star']})")
    if params["E0"] <= 0 or params["H0"] <= 0 or params["t_end"] <= 0:
        raise UsageError("E0, H0 and t_end must be positive")
    if params["d_prime"] not in (3, 4, 5):
        raise UsageError("d_prime must be 3, 4 or 5")
    variants = VARIANTS if params["variant"] is None else (params["variant"],)
    if any(v not in VARIANTS for v in variants):
        raise UsageError(f"variant must be one of {VARIANTS}")
    if not args.sweep:
        return [dict(params, variant=v) for v in variants]
    from .calibration import ode_sweep_points

    return [dict(p, t_end=params["t_end"]) for p in ode_sweep_points() if p["variant"] in variants]


def cmd_odecheck(args) -> int:
    from .calibration import ODE_THRESHOLDS

    points = _ode_points(args)
    out = _out_dir(args.out)
    rows, ok = [], True
    for p in points:
        states = ode_integrate(p["E0"], p["H0"], p["c_star"], p["d_prime"], p["variant"],
                               t_end=p["t_end"])
        ratios = check_ode_bounds(states)
        limits = ODE_THRESHOLDS[p["variant"]]
        flags = {k: v <= limits[k] for k, v in ratios.items()}
        ok &= all(flags.values())
        rows.append({**p, "G0": ode_G0(p["E0"], p["H0"], p["c_star"]), "t_stop": states[-1].t,
                     "ratios": ratios, "pass": flags})
    (out / "ode-report.json").write_text(json.dumps(
        {"thresholds": ODE_THRESHOLDS, "points": rows, "pass": ok}, indent=2))
    print(f"{len(rows)} ODE integrations, {'all within' if ok else 'some exceed'} thresholds")
    return EXIT_OK if ok else EXIT_FAIL


def _float_list(text: str, name: str, cast=float) -> list:
    items = [x for x in text.split(",") if x.strip()]
    if not items:
        raise UsageError(f"{name} list is empty")
    try:
        return [cast(x) for x in items]
    except ValueError:
        raise UsageError(f"cannot parse {name} list {text!r}") from None


def cmd_kernel(args) -> int:
    times = _float_list(args.t, "t")
    js = _float_list(args.j, "j", int)
    if min(times) <= 0:
        raise UsageError("all t must be positive")
    if any(j < 0 or j > 3 for j in js):
        raise UsageError("j must lie in 0..3")
    spec = KernelSpec(d=args.d, t_min=min(times))
    out = _out_dir(args.out)
    ok = True
    with (out / "kernel-scaling.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "j", "l1norm", "scaled"])
        for j in js:
            scaled = []
            for t in times:
                l1 = kernel_l1_norm(spec, t, j)
                scaled.append(t ** (j / 4) * l1)
                w.writerow([fmt(t), j, fmt(l1), fmt(scaled[-1])])
            flat = max(scaled) / min(scaled)
            ok &= flat <= KERNEL_FLATNESS
            print(f"j={j}: flatness {flat:.6f}")
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kinkflow", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="integrate one configuration")
    r.add_argument("--config", help="INI config or run-manifest.json")
    r.add_argument("--out", default="out")
    r.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    r.add_argument("--seed", type=int)
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("analyze", help="fit decay rates from diagnostics.csv")
    a.add_argument("csv")
    a.add_argument("--window", default="10:500")
    a.add_argument("--out", default="out")
    a.add_argument("--d", type=int, default=2, help="dimension used in the GN exponent")
    a.set_defaults(func=cmd_analyze)

    o = sub.add_parser("odecheck", help="integrate the saturated ODE system")
    o.add_argument("--sweep", action="store_true", help="run the full parameter grid")
    o.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    o.add_argument("--out", default="out")
    o.set_defaults(func=cmd_odecheck)

    k = sub.add_parser("kernel", help="L1 scaling of the biharmonic kernel")
    k.add_argument("--t", default="0.1,0.316,1,3.16,10")
    k.add_argument("--j", default="0,1,2,3")
    k.add_argument("--d", type=int, default=2)
    k.add_argument("--out", default="out")
    k.set_defaults(func=cmd_kernel)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
