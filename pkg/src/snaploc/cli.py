"""Command-line front end.

Settings are resolved as built-in defaults, then ``--config`` file
(``key = value`` lines, ``#`` comments), then explicit flags.
Exit codes: 0 success, 1 numerical failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields, replace
from pathlib import Path

from . import __version__
from .checks import run_checks
from .discretization import SpatialGrid
from .ocp import LineSearchError
from .pipeline import PipelineConfig, StageError, run, sweep, table_configs
from .problems import get_problem
from .report import emit_plotdata, format_report, row_from_result, write_report
from .spacetime import FixedPointError, adapt

EXIT_OK, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2

# flag name -> PipelineConfig field
_FLAG_FIELDS = {"test": "problem", "nrefine": "n_refine", "snapshot_control": "snapshot_control"}
_CONFIG_FIELDS = {f.name for f in fields(PipelineConfig)}
_EXTRA_KEYS = {"dt", "out", "format", "jobs", "table", "plotdata", "field"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key=value settings file")
    p.add_argument("--test", type=int, choices=(1, 2, 3))
    p.add_argument("--dof", type=int)
    p.add_argument("--dt", type=float, help="uniform step; implies --grid uniform")
    p.add_argument("--ell", type=int)
    p.add_argument("--dx", type=float)
    p.add_argument("--h", type=float)
    p.add_argument("--nrefine", type=int)
    p.add_argument("--grid", choices=("uniform", "adaptive"))
    p.add_argument("--ip", choices=("l2", "h1"))
    p.add_argument("--snapshot-control", dest="snapshot_control", choices=("zero", "forecast"))
    p.add_argument("--tau-r", dest="tau_r", type=float)
    p.add_argument("--out", type=Path)
    p.add_argument("--format", choices=("csv", "tsv"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="snaploc", description="adaptive snapshot location for POD control")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("adapt", help="print the adaptive time nodes")
    _common(p)
    p = sub.add_parser("run", help="single pipeline run, one report row")
    _common(p)
    p.add_argument("--plotdata", type=Path, help="also write plot data to this file")
    p.add_argument("--field", choices=("control", "state", "adjoint"), default=None)
    p = sub.add_parser("bench", help="reproduce a benchmark table")
    _common(p)
    p.add_argument("--table", type=int, choices=range(1, 9))
    p.add_argument("--jobs", type=int)
    p = sub.add_parser("check", help="quick randomized self-checks")
    p.add_argument("--seed", type=int, default=0)
    return parser


def read_config_file(path: Path) -> dict[str, str]:
    out = {}
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for num, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not key:
            raise UsageError(f"{path}:{num}: expected key=value")
        field = _FLAG_FIELDS.get(key, key)
        if field not in _CONFIG_FIELDS and key not in _EXTRA_KEYS:
            raise UsageError(f"{path}:{num}: unknown key {key!r}")
        out[key] = value.strip()
    return out


def _coerce(name: str, value: str):
    defaults = PipelineConfig()
    if name in ("dt",):
        return float(value)
    if name in ("jobs", "table"):
        return int(value)
    if name in ("out", "plotdata"):
        return Path(value)
    if name in ("format", "field"):
        return value
    field = _FLAG_FIELDS.get(name, name)
    current = getattr(defaults, field)
    if field == "ell" or field == "pod_tol":
        return None if value.lower() == "none" else (int(value) if field == "ell" else float(value))
    if isinstance(current, bool):
        return value.lower() in ("1", "true", "yes", "on")
    return type(current)(value)


def resolve(args: argparse.Namespace) -> dict:
    """Merge file settings under explicit flags."""
    settings = {}
    if getattr(args, "config", None) is not None:
        for k, v in read_config_file(args.config).items():
            try:
                settings[k] = _coerce(k, v)
            except ValueError as exc:
                raise UsageError(f"bad value for {k!r}: {v!r}") from exc
    for k, v in vars(args).items():
        if k not in ("config", "command") and v is not None:
            settings[k] = v
    return settings


def make_config(settings: dict) -> PipelineConfig:
    kw = {}
    for k, v in settings.items():
        field = _FLAG_FIELDS.get(k, k)
        if field in _CONFIG_FIELDS:
            kw[field] = v
    dt = settings.get("dt")
    if dt is not None:
        if kw.get("grid", "uniform") != "uniform":
            raise UsageError("--dt only applies to uniform grids")
        spec = get_problem(kw.get("problem", 1))
        n = round(spec.T / dt)
        if n < 1 or abs(n * dt - spec.T) > 1e-9:
            raise UsageError(f"--dt {dt} does not divide the horizon")
        if "dof" in kw and kw["dof"] != n + 1:
            raise UsageError("--dt and --dof disagree")
        kw["grid"], kw["dof"] = "uniform", n + 1
    try:
        cfg = PipelineConfig(**kw)
        SpatialGrid.from_spacing(cfg.dx)
        SpatialGrid.from_spacing(cfg.h)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    return cfg


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _cmd_adapt(settings: dict) -> int:
    cfg = make_config(settings)
    res = adapt(get_problem(cfg.problem), SpatialGrid.from_spacing(cfg.dx), cfg.dof)
    _emit("".join(f"{t!r}\n" for t in res.grid.nodes.tolist()), settings.get("out"))
    return EXIT_OK


def _write_rows(rows, settings: dict) -> None:
    fmt = settings.get("format", "csv")
    if settings.get("out") is not None:
        write_report(rows, settings["out"], fmt)
    else:
        sys.stdout.write(format_report(rows, fmt))


def _cmd_run(settings: dict) -> int:
    cfg = make_config(settings)
    result = run(cfg)
    _write_rows([row_from_result(result)], settings)
    if settings.get("plotdata") is not None:
        emit_plotdata(result, settings["plotdata"], settings.get("field") or "control")
    return EXIT_OK


def _cmd_bench(settings: dict) -> int:
    if "table" not in settings:
        raise UsageError("bench needs --table")
    test = settings.get("test", 1)
    try:
        configs = table_configs(test, settings["table"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    overrides = {_FLAG_FIELDS.get(k, k): v for k, v in settings.items()
                 if _FLAG_FIELDS.get(k, k) in ("dx", "h", "ip", "tau_r", "snapshot_control")}
    configs = [replace(c, **overrides) for c in configs]
    results = sweep(configs, workers=settings.get("jobs", 1))
    _write_rows([row_from_result(r) for r in results], settings)
    return EXIT_OK


def _cmd_check(args) -> int:
    results = run_checks(args.seed)
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name}: {r.value:.3e} (limit {r.limit:.0e})")
    return EXIT_OK if all(r.ok for r in results) else EXIT_NUMERICAL


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "check":
            return _cmd_check(args)
        settings = resolve(args)
        handler = {"adapt": _cmd_adapt, "run": _cmd_run, "bench": _cmd_bench}[args.command]
        return handler(settings)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (StageError, FixedPointError, LineSearchError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
