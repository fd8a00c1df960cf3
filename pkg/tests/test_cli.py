import csv
import io
import subprocess
import sys
import textwrap

import pytest
from hypothesis import given, strategies as st

from starrisk.cli import CSV_HEADER, ReportRow, emit_report, main


def write(tmp_path, text, name="exp.toml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return str(p)


SOLVE = """
    id = "solve_mu"
    task = "solve"
    seed = 0
    lattice = { T = 1.0, N = 100 }

    [driver]
    name = "scaled_abs_z"
    params = { mu = 0.5 }

    [claim]
    kind = "identity"

    [params]
    expected = 0.5
    tol = 1e-10
"""


def read_rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_solve_config(tmp_path, capsys):
    assert main(["solve", "--config", write(tmp_path, SOLVE)]) == 0
    rows = read_rows(capsys.readouterr().out)
    rho = [r for r in rows if r["quantity"].startswith("rho_0")]
    assert rho and abs(float(rho[0]["value"]) - 0.5) <= 1e-10
    assert all(r["experiment_id"] == "solve_mu-seed0" for r in rows)
    assert all(r["wall_ms"] == "" for r in rows)


def test_out_file_and_timing(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["solve", "--config", write(tmp_path, SOLVE), "--out", str(out), "--timing", "--seed", "4"]) == 0
    rows = read_rows(out.read_text())
    assert all(r["wall_ms"] != "" for r in rows)
    assert rows[0]["experiment_id"] == "solve_mu-seed4"


def test_failed_assertion_exits_1(tmp_path, capsys):
    assert main(["solve", "--config", write(tmp_path, SOLVE.replace("expected = 0.5", "expected = 0.6"))]) == 1
    assert "false" in capsys.readouterr().out


@pytest.mark.parametrize(
    "old, new",
    [
        ('name = "scaled_abs_z"', 'name = "scaled_abs_zz"'),
        ("params = { mu = 0.5 }", "params = { nu = 0.5 }"),
        ('kind = "identity"', 'kind = "digital"'),
        ("N = 100", "N = 0"),
        ("T = 1.0", "T = -1.0"),
        ('task = "solve"', 'task = "dance"'),
        ("seed = 0", 'seed = "zero"'),
        ("seed = 0", "seed = 0\ncolour = 1"),
        ("lattice = { T = 1.0, N = 100 }", "lattice = { T = 1.0, N = 100, M = 2 }"),
        ("tol = 1e-10", 'tol = "small"'),
        ('id = "solve_mu"', 'id = "solve_mu'),
    ],
)
def test_validation_errors_exit_2(tmp_path, capsys, old, new):
    assert main(["solve", "--config", write(tmp_path, SOLVE.replace(old, new))]) == 2
    captured = capsys.readouterr()
    assert captured.out == ""
    assert "error" in captured.err


def test_malformed_driver_writes_no_output(tmp_path):
    out = tmp_path / "r.csv"
    cfg = write(tmp_path, SOLVE.replace('name = "scaled_abs_z"', 'name = "nope"'))
    assert main(["solve", "--config", cfg, "--out", str(out)]) == 2
    assert not out.exists()


def test_missing_config_exits_2(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "none.toml")]) == 2


def test_subcommand_must_match_task(tmp_path):
    assert main(["minmax", "--config", write(tmp_path, SOLVE)]) == 2


def test_step_size_error_exits_2(tmp_path, capsys):
    cfg = SOLVE.replace('name = "scaled_abs_z"', 'name = "linear_y"').replace("mu = 0.5", "a = -5.0")
    cfg = cfg.replace("N = 100", "N = 2")
    assert main(["solve", "--config", write(tmp_path, cfg)]) == 2
    assert "N = 10" in capsys.readouterr().err


def test_nonfinite_claim_exits_3(tmp_path, capsys):
    cfg = SOLVE.replace('kind = "identity"', 'kind = "table"\nparams = { values = [0.0, inf, 1.0] }')
    cfg = cfg.replace("N = 100", "N = 2")
    assert main(["solve", "--config", write(tmp_path, cfg)]) == 3
    assert "node" in capsys.readouterr().err


def test_minmax_rows(tmp_path, capsys):
    cfg = """
        id = "mm"
        task = "minmax"
        lattice = { T = 1.0, N = 60 }
        driver = { name = "example1" }
        claim = { kind = "identity" }
        params = { n_random_duals = 5 }
    """
    assert main(["minmax", "--config", write(tmp_path, cfg)]) == 0
    names = {r["quantity"].split("[")[0] for r in read_rows(capsys.readouterr().out)}
    assert {"primal", "dual_at_witness", "gap"} <= names


def test_batch_include_and_inline(tmp_path, capsys):
    write(tmp_path, SOLVE, "a.toml")
    batch = """
        include = ["a.toml"]

        [[experiments]]
        id = "inline"
        task = "solve"
        lattice = { T = 1.0, N = 4 }
        driver = { name = "zero" }
        params = { expected = 0.0, tol = 0.0 }
    """
    path = write(tmp_path, batch, "batch.toml")
    assert main(["batch", "--config", path, "--format", "human"]) == 0
    out = capsys.readouterr().out
    assert "solve_mu-seed0" in out and "inline-seed0" in out and "PASS" in out
    assert main(["solve", "--config", path]) == 2


def test_batch_validates_before_running(tmp_path, capsys):
    batch = """
        [[experiments]]
        id = "good"
        task = "solve"
        driver = { name = "zero" }

        [[experiments]]
        id = "bad"
        task = "solve"
        driver = { name = "nope" }
    """
    assert main(["batch", "--config", write(tmp_path, batch)]) == 2
    assert capsys.readouterr().out == ""


def test_determinism(tmp_path):
    cfg = write(tmp_path, SOLVE.replace("N = 100", "N = [10, 20]"))
    outs = []
    for i in range(2):
        out = tmp_path / f"r{i}.csv"
        main(["solve", "--config", cfg, "--out", str(out)])
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_one_row_two_lines():
    text = emit_report([ReportRow("e-seed0", "solve", "rho_0", 0.5)])
    lines = text.splitlines()
    assert len(lines) == 2 and tuple(lines[0].split(",")) == CSV_HEADER


def test_human_format_has_status_column():
    text = emit_report([ReportRow("e", "solve", "a", 1.0, 0.1, True), ReportRow("e", "solve", "b", 2.0, 0.1, False)],
                       "human")
    assert "PASS" in text and "FAIL" in text
    widths = {line.index("solve") for line in text.splitlines()[1:]}
    assert len(widths) == 1


@given(st.floats(allow_nan=False))
def test_csv_values_round_trip(x):
    text = emit_report([ReportRow("e", "solve", "q", x, 1e-10, True)])
    row = read_rows(text)[0]
    assert float(row["value"]) == x
    assert row["pass"] == "true" and float(row["tolerance"]) == 1e-10


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "starrisk", "solve", "--config", write(tmp_path, SOLVE)],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.startswith(",".join(CSV_HEADER))
