"""Table rows and plot-data files derived from pipeline results."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal

import numpy as np

from .discretization import SpatialGrid
from .pipeline import PipelineResult

Format = Literal["csv", "tsv"]
BASE_COLUMNS = ("grid", "eps_y", "eps_u", "eps_p", "J")
ESTIMATE_COLUMNS = ("eta_i", "eta_b", "zeta_sum", "lambda_tail")


@dataclass(frozen=True)
class ReportRow:
    grid: str
    eps_y: float
    eps_u: float
    eps_p: float
    J: float
    extra: tuple[tuple[str, float], ...] = field(default=())

    def __post_init__(self):
        for name, v in self.numeric():
            if not math.isfinite(v):
                raise ValueError(f"{name} is not finite: {v}")

    def numeric(self) -> list[tuple[str, float]]:
        base = [("eps_y", self.eps_y), ("eps_u", self.eps_u), ("eps_p", self.eps_p), ("J", self.J)]
        return base + list(self.extra)

    @property
    def columns(self) -> tuple[str, ...]:
        return ("grid",) + tuple(name for name, _ in self.numeric())


def grid_label(result: PipelineResult) -> str:
    cfg = result.config
    if cfg.grid == "uniform":
        return f"dt=1/{cfg.dof - 1}"
    label = f"dof={cfg.dof}"
    if cfg.n_refine:
        label += f";nrefine={cfg.n_refine}"
    return label


def row_from_result(result: PipelineResult) -> ReportRow:
    if result.errors is None:
        raise ValueError("problem has no analytic solution to report errors against")
    extra = tuple((k, float(result.estimates[k])) for k in ESTIMATE_COLUMNS
                  if k in result.estimates)
    r = result.errors
    return ReportRow(grid_label(result), r.eps_y, r.eps_u, r.eps_p, r.J, extra)


def _fmt(v: float, fmt: Format) -> str:
    return f"{v:.3e}" if fmt == "csv" else repr(float(v))


def format_report(rows: Iterable[ReportRow], fmt: Format = "csv") -> str:
    """Header plus one line per row. ``csv`` rounds to 4 significant digits,
    ``tsv`` keeps full precision. Rows must share their columns."""
    if fmt not in ("csv", "tsv"):
        raise ValueError(f"unknown format {fmt!r}")
    rows = list(rows)
    columns = rows[0].columns if rows else BASE_COLUMNS
    for r in rows:
        if r.columns != columns:
            raise ValueError(f"row {r.grid!r} has columns {r.columns}, expected {columns}")
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="," if fmt == "csv" else "\t", lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([r.grid] + [_fmt(v, fmt) for _, v in r.numeric()])
    return buf.getvalue()


def write_report(rows: Iterable[ReportRow], path, fmt: Format = "csv") -> None:
    text = format_report(rows, fmt)
    with open(Path(path), "w", newline="", encoding="ascii") as fh:
        fh.write(text)


def read_report(path, fmt: Format = "csv") -> list[dict[str, str | float]]:
    delim = "," if fmt == "csv" else "\t"
    with open(Path(path), newline="", encoding="ascii") as fh:
        out = []
        for rec in csv.DictReader(fh, delimiter=delim):
            out.append({k: (v if k == "grid" else float(v)) for k, v in rec.items()})
        return out


def _write_rows(path, header: list[str], data: np.ndarray) -> None:
    with open(Path(path), "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in data:
            w.writerow([repr(float(v)) for v in row])


def field_triplets(t: np.ndarray, x: np.ndarray, values: np.ndarray) -> np.ndarray:
    """(t, x, value) rows, time-major, for a (len(t), len(x)) nodal field."""
    values = np.asarray(values, dtype=float)
    if values.shape != (t.size, x.size):
        raise ValueError(f"field shape {values.shape} does not match grids ({t.size}, {x.size})")
    T, X = np.meshgrid(t, x, indexing="ij")
    return np.column_stack([T.ravel(), X.ravel(), values.ravel()])


def emit_plotdata(result: PipelineResult,
                  path, what: Literal["state", "adjoint", "control"] = "control") -> None:
    """Write the POD state/adjoint surface as triplets or the control as rows."""
    s = result.solve
    if what == "control":
        u = s.control
        header = ["t"] + [f"u_{i + 1}" for i in range(u.values.shape[1])]
        _write_rows(path, header, np.column_stack([u.grid.nodes, u.values]))
        return
    if what not in ("state", "adjoint"):
        raise ValueError(f"unknown plot field {what!r}")
    traj = s.state if what == "state" else s.adjoint
    x = SpatialGrid.from_spacing(result.config.h).interior
    _write_rows(path, ["t", "x", "value"], field_triplets(traj.grid.nodes, x, traj.values))
