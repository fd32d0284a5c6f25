import io
import subprocess
import sys

import pytest

from sbbm.cli import EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, main, read_config


def run(argv):
    out = io.StringIO()
    code = main(argv, out=out)
    return code, out.getvalue()


def summary(text):
    return dict(line.split(" = ") for line in text.splitlines() if not line.startswith("#"))


def test_run_zero_noise():
    code, text = run(["run", "--level", "3", "--k", "0.015625", "--noise", "zero"])
    assert code == EXIT_OK
    assert float(summary(text)["sup_h1"]) == 0.0
    assert "# level = 3" in text


def test_run_bad_k(capsys):
    code, _ = run(["run", "--level", "3", "--k", "0.3"])
    assert code == EXIT_CONFIG
    assert "T/k must be a positive integer" in capsys.readouterr().err


def test_run_deterministic():
    argv = ["run", "--level", "3", "--noise", "linear", "--alpha", "0.25", "--seed", "7", "--u0", "bump"]
    assert run(argv)[1] == run(argv)[1]


def test_run_solver_failure_exit_code(capsys):
    code, _ = run(["run", "--level", "4", "--k", "1.0", "--u0", "bump", "--fp-max-iter", "1"])
    assert code == EXIT_SOLVER
    assert "step 0" in capsys.readouterr().err


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "a.cfg"
    cfg.write_text("# comment\nlevel = 2\nnoise = sin_shift  # trailing\nalpha = 0.1\nseed = 5\n")
    assert read_config(cfg)["noise"] == "sin_shift"
    code, text = run(["run", "--config", str(cfg), "--level", "1"])
    assert code == EXIT_OK
    assert "# level = 1" in text and "# noise = sin_shift" in text
    bad = tmp_path / "b.cfg"
    bad.write_text("colour = red\n")
    assert run(["run", "--config", str(bad)])[0] == EXIT_CONFIG


def test_run_dump(tmp_path):
    code, _ = run(["run", "--level", "1", "--u0", "bump", "--dump", str(tmp_path / "d.csv")])
    assert code == EXIT_OK
    assert (tmp_path / "d.csv").read_text().startswith("# level=1")


def test_converge_zero_noise(tmp_path):
    code, text = run(["converge", "--levels", "1,2", "--samples", "3", "--noise", "zero", "--out", str(tmp_path), "--plot-data"])
    assert code == EXIT_OK
    csv = (tmp_path / "convergence.csv").read_text().splitlines()
    assert csv[0] == "k,h,error,order,J,stderr"
    assert [line.split(",")[2] for line in csv[1:]] == ["0", "0"]
    assert (tmp_path / "convergence_plot.csv").exists()


def test_converge_replay_from_echo(tmp_path):
    argv = ["converge", "--levels", "1,2", "--samples", "4", "--noise", "sin_shift", "--alpha", "0.1", "--seed", "3", "--out", str(tmp_path)]
    code, first = run(argv)
    assert code == EXIT_OK
    code, second = run(["converge", "--config", str(tmp_path / "convergence.cfg")])
    assert code == EXIT_OK
    strip = lambda t: [line for line in t.splitlines() if not line.startswith("#")]
    assert strip(first) == strip(second)


def test_converge_profile_name(tmp_path):
    code, _ = run(["converge", "--profile", "ci-table2", "--levels", "1,2", "--samples", "2", "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert (tmp_path / "table2.csv").exists()
    assert "alpha = 0.1" in (tmp_path / "table2.cfg").read_text()


def test_validate_quick():
    code, text = run(["validate", "--quick"])
    assert code == EXIT_OK
    assert "FAIL" not in text


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sbbm", "run", "--level", "1", "--noise", "zero"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "sup_h1 = 0.0" in proc.stdout


def test_bad_flag_exits_nonzero():
    with pytest.raises(SystemExit):
        main(["run", "--bc", "neumann"])
