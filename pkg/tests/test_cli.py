import csv
import io
import json

import pytest

from entryexit import ConvergenceError, solve
from entryexit import cli

from conftest import GOLDEN


@pytest.fixture
def config(tmp_path):
    def write(**overrides):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(dict(GOLDEN, p0=3.0, **overrides)))
        return str(path)

    return write


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_solve_golden(capsys, config):
    code, out, _ = run(capsys, "solve", "--config", config())
    assert code == 0
    rep = json.loads(out)
    assert rep["regime"] == "VI_DoubleEntry_Exit"
    assert rep["p_O"] == pytest.approx(2.66841, abs=1e-4)
    assert rep["p_I1"] == pytest.approx(1.96101, abs=1e-4)
    assert rep["p_I2"] == pytest.approx(6.94641, abs=1e-4)
    # 9 significant digits
    assert '"p_O": 2.66841146' in out


def test_solve_csv_and_out_file(capsys, config, tmp_path):
    dest = tmp_path / "o.csv"
    code, out, _ = run(capsys, "solve", "--config", config(), "--format", "csv", "--out", str(dest))
    assert code == 0 and out == ""
    rows = dict(csv.reader(io.StringIO(dest.read_text())))
    assert float(rows["p_O"]) == pytest.approx(2.66841146, abs=1e-8)


def test_infinite_value(capsys, config):
    code, out, _ = run(capsys, "solve", "--config", config(mu=0.2))
    assert code == 0
    assert json.loads(out)["regime"] == "InfiniteValue"


def test_infinite_value_cannot_be_tabulated(capsys, config):
    code, _, err = run(capsys, "table", "--config", config(mu=0.3))
    assert code == 2 and "infinite" in err


def test_bad_sigma_names_field(capsys, config):
    code, out, err = run(capsys, "solve", "--config", config(sigma=0.0))
    assert code == 2 and out == ""
    assert "sigma" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["solve", "--set", "volatility=0.3"],
        ["solve", "--set", "r"],
        ["solve", "--set", "r=abc"],
        ["simulate", "--paths", "0"],
        ["simulate", "--paths", "3", "--antithetic"],
    ],
)
def test_input_errors_exit_2(capsys, config, argv):
    code, _, err = run(capsys, *argv, "--config", config())
    assert code == 2 and err.startswith("error:")


def test_missing_config_file(capsys):
    code, _, err = run(capsys, "solve", "--config", "/nonexistent/cfg.json")
    assert code == 2 and "cannot read" in err


def test_unknown_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["solve", "--bogus"])
    assert exc.value.code == 2


def test_set_overrides_file(capsys, config):
    code, out, _ = run(capsys, "solve", "--config", config(), "--set", "K_O=60", "--set", "K_I=5", "--set", "delta=0")
    assert code == 0 and json.loads(out)["regime"] == "II_SingleEntry_NeverExit"


def _table(capsys, config, *extra):
    code, out, _ = run(capsys, "table", "--config", config(), *extra)
    assert code == 0
    return list(csv.DictReader(io.StringIO(out)))


def test_table_single_row(capsys, config):
    rows = _table(capsys, config, "--pmin", "3", "--pmax", "3", "--steps", "10")
    assert len(rows) == 1 and float(rows[0]["p"]) == 3.0


def test_table_round_trip(capsys, config, golden_solution):
    rows = _table(capsys, config, "--pmin", "0.5", "--pmax", "20", "--steps", "200")
    assert len(rows) == 201
    p = [float(r["p"]) for r in rows]
    assert all(b > a for a, b in zip(p, p[1:]))
    for r in rows:
        x = float(r["p"])
        assert abs(float(r["G"]) - golden_solution.G(x)) <= 1e-12 * max(1, abs(golden_solution.G(x)))
        assert abs(float(r["H"]) - golden_solution.H(x)) <= 1e-12 * max(1, abs(golden_solution.H(x)))


def test_table_continuous_across_upper_trigger(capsys, config, golden_solution):
    p2 = golden_solution.entry.triggers[1]
    step = 1e-4
    rows = _table(capsys, config, "--pmin", str(p2 - 50 * step), "--pmax", str(p2 + 50 * step), "--steps", "100")
    H = [float(r["H"]) for r in rows]
    G = [float(r["G"]) for r in rows]
    slope = max(abs(float(golden_solution.entry.dH(p2))), 1.0)
    lip_g = max(abs(float(golden_solution.exit.dG(p2))), 1.0)
    assert max(abs(b - a) for a, b in zip(H, H[1:])) <= 1.01 * slope * step
    assert max(abs(b - a) for a, b in zip(G, G[1:])) <= 1.01 * lip_g * step


def test_table_json(capsys, config):
    code, out, _ = run(capsys, "table", "--config", config(), "--format", "json", "--steps", "4")
    assert code == 0 and len(json.loads(out)["rows"]) == 5


def test_simulate_small(capsys, config):
    code, out, _ = run(capsys, "simulate", "--config", config(), "--paths", "400", "--dt", "0.01", "--tmax", "30")
    assert code == 0
    rep = json.loads(out)
    assert rep["n_effective"] == 200  # antithetic pairs
    assert rep["H_at_p0"] == pytest.approx(11.1578397, abs=1e-6)
    assert abs(rep["mean"] - rep["H_at_p0"]) < 5 * rep["std_error"] + 0.5


VERIFY = ("verify", "--paths", "4000", "--dt", "0.01", "--grid", "2000")


def test_verify_deterministic(capsys, config, tmp_path):
    outs = []
    for name in ("a.json", "b.json"):
        code, _, err = run(capsys, *VERIFY, "--config", config(), "--out", str(tmp_path / name))
        assert code == 0, err
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]
    rep = json.loads(outs[0])
    assert rep["passed"] and len(rep["checks"]) == 4
    assert "PASS policy_dominance" in err


def test_verify_catches_corrupted_trigger(capsys, config, golden_solution):
    bad = 1.25 * golden_solution.entry.triggers[1]
    code, out, err = run(capsys, *VERIFY, "--config", config(), "--override-pI2", str(bad))
    assert code == 4
    assert "FAIL policy_dominance" in err
    assert json.loads(out)["candidate"]["entry_rule"]["upper"] == pytest.approx(bad, rel=1e-8)


def test_override_rejected_for_immediate_entry(capsys, config):
    code, _, err = run(capsys, "simulate", "--config", config(K_I=-60.0, K_O=60.0), "--override-pI2", "5")
    assert code == 2 and "override" in err


def test_convergence_error_exit_3(capsys, config, monkeypatch):
    def boom(params):
        raise ConvergenceError("band solver failed", sweeps=1)

    monkeypatch.setattr(cli, "solve", boom)
    code, _, err = run(capsys, "solve", "--config", config())
    assert code == 3 and "band solver failed" in err


def test_module_entry_point(config):
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "entryexit", "solve", "--config", config()],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert json.loads(res.stdout)["regime"] == solve(__import__("entryexit").ProjectParams(**GOLDEN)).regime.value
