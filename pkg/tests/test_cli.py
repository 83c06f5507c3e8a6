import numpy as np
import pytest

from snaploc import cli
from snaploc.pipeline import StageError


def _run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_usage_errors(capsys):
    assert _run(capsys, "run", "--bogus")[0] == 2
    assert _run(capsys)[0] == 2
    assert _run(capsys, "run", "--grid", "graded")[0] == 2
    assert _run(capsys, "run", "--dt", "0.05", "--grid", "adaptive")[0] == 2
    assert _run(capsys, "run", "--h", "0.3")[0] == 2
    assert _run(capsys, "bench", "--test", "2", "--table", "1")[0] == 2
    assert _run(capsys, "bench", "--test", "1")[0] == 2


def test_numerical_failure_exit_code(capsys, monkeypatch):
    def boom(config):
        raise StageError("optimize", RuntimeError("line search"))

    monkeypatch.setattr(cli, "run", boom)
    code, _, err = _run(capsys, "run", "--dt", "0.05")
    assert code == 1 and "[optimize]" in err


def test_adapt_midpoint_cluster(capsys):
    code, out, _ = _run(capsys, "adapt", "--test", "2", "--dof", "41", "--dx", "0.2")
    nodes = np.array([float(v) for v in out.split()])
    assert code == 0 and nodes.size == 41
    assert np.sum(np.abs(nodes - 0.5) <= 0.05) > 20


def test_run_single_row(capsys):
    code, out, _ = _run(capsys, "run", "--test", "3", "--grid", "adaptive", "--dof", "41",
                        "--ell", "4")
    lines = out.strip().split("\n")
    assert code == 0 and len(lines) == 2 and lines[1].startswith("dof=41,")


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# uniform run\ngrid = uniform\ndof = 11\nformat = tsv\n")
    _, out, _ = _run(capsys, "run", "--config", str(cfg))
    assert out.startswith("grid\t") and "dt=1/10\t" in out
    _, out, _ = _run(capsys, "run", "--config", str(cfg), "--dof", "6", "--format", "csv")
    assert "dt=1/5," in out
    cfg.write_text("colour = blue\n")
    assert _run(capsys, "run", "--config", str(cfg))[0] == 2
    cfg.write_text("dof = many\n")
    assert _run(capsys, "run", "--config", str(cfg))[0] == 2


def test_outputs_are_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert _run(capsys, "run", "--dt", "0.1", "--out", str(path))[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_bench_table_one(tmp_path, capsys):
    out = tmp_path / "t1.csv"
    assert _run(capsys, "bench", "--test", "1", "--table", "1", "--out", str(out))[0] == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "grid,eps_y,eps_u,eps_p,J"
    assert [l.split(",")[0] for l in lines[1:]] == [
        "dt=1/20", "dt=1/42", "dt=1/61", "dt=1/114", "dof=21", "dof=43", "dof=62", "dof=115"]


def test_plotdata_flag(tmp_path, capsys):
    path = tmp_path / "u.csv"
    code, _, _ = _run(capsys, "run", "--dt", "0.1", "--plotdata", str(path))
    assert code == 0 and len(path.read_text().strip().split("\n")) == 12


def test_check_subcommand(capsys):
    code, out, _ = _run(capsys, "check")
    assert code == 0 and out.count("PASS") == 6
