import numpy as np
import pytest

from snaploc.pipeline import PipelineConfig
from snaploc.report import (
    ReportRow,
    emit_plotdata,
    field_triplets,
    read_report,
    row_from_result,
    write_report,
)

from conftest import cached_run


def test_empty_report_is_header_only(tmp_path):
    path = tmp_path / "r.csv"
    write_report([], path)
    assert path.read_bytes() == b"grid,eps_y,eps_u,eps_p,J\n"


def test_one_row_two_lines(tmp_path):
    path = tmp_path / "r.csv"
    write_report([ReportRow("dof=21", 5.19e-2, 5.3428e-2, 9.6343e-3, 87.5)], path)
    lines = path.read_bytes().split(b"\n")
    assert len(lines) == 3 and lines[-1] == b""
    assert lines[1] == b"dof=21,5.190e-02,5.343e-02,9.634e-03,8.750e+01"


def test_round_trip_to_printed_precision(tmp_path, rng):
    rows = [ReportRow(f"dt=1/{n}", *rng.uniform(1e-5, 1e3, 4), extra=(("eta_i", 4.9518),))
            for n in (20, 40)]
    for fmt, rtol in (("csv", 5e-4), ("tsv", 0.0)):
        path = tmp_path / f"r.{fmt}"
        write_report(rows, path, fmt)
        back = read_report(path, fmt)
        for r, b in zip(rows, back):
            assert b["grid"] == r.grid
            for name, v in r.numeric():
                assert b[name] == pytest.approx(v, rel=rtol)


def test_rows_validated(tmp_path):
    with pytest.raises(ValueError):
        ReportRow("x", float("nan"), 0.0, 0.0, 0.0)
    rows = [ReportRow("a", 1, 1, 1, 1), ReportRow("b", 1, 1, 1, 1, (("eta_i", 1.0),))]
    with pytest.raises(ValueError):
        write_report(rows, tmp_path / "r.csv")
    with pytest.raises(ValueError):
        write_report([], tmp_path / "r.csv", "xlsx")


def test_zero_field_triplets():
    out = field_triplets(np.array([0.0, 1.0]), np.array([0.25, 0.5, 0.75]), np.zeros((2, 3)))
    assert out.shape == (6, 3) and np.all(out[:, 2] == 0.0)
    assert np.allclose(out[:3, 1], [0.25, 0.5, 0.75]) and np.all(out[:3, 0] == 0.0)


def test_plotdata_files(tmp_path):
    res = cached_run(PipelineConfig(dof=21))
    ctrl = tmp_path / "u.csv"
    emit_plotdata(res, ctrl, "control")
    data = np.loadtxt(ctrl, delimiter=",", skiprows=1)
    assert data.shape == (21, 2)

    surf = tmp_path / "p.csv"
    emit_plotdata(res, surf, "adjoint")
    tri = np.loadtxt(surf, delimiter=",", skiprows=1)
    t_max, x_max, v_max = tri[np.argmax(np.abs(tri[:, 2]))]
    # |x (x - 1) (t - E(t))| peaks at x = 1/2, t = 1 + eps ln(eps) ~ 0.999, value ~ 1/4;
    # the one-mode adjoint flattens across the last few steps
    assert abs(x_max - 0.5) <= 0.05
    assert t_max >= 0.9
    assert 0.75 <= abs(v_max) / 0.25 <= 1.05
    with pytest.raises(ValueError):
        emit_plotdata(res, tmp_path / "bad.csv", "pressure")


def test_row_from_result_labels():
    res = cached_run(PipelineConfig(dof=21))
    row = row_from_result(res)
    assert row.grid == "dof=21" and row.J == res.errors.J
