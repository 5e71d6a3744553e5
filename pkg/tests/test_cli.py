import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from msvou import __version__
from msvou.cli import parse_grid, read_smile_csv, run
from msvou.config import load_params, save_params
from msvou.covswap import read_curve_csv
from msvou.montecarlo import read_paths_csv
from msvou.ou_wishart import step_a_params

DATA = Path(__file__).resolve().parents[1] / "data"
STEP_A = str(DATA / "step_a.cfg")


def test_price(capsys):
    assert run(["price", "--model", STEP_A, "--pair", "EURUSD", "--strike", "1.30", "--maturity", "0.5"]) == 0
    out = capsys.readouterr().out.split()
    assert out[0] == "price" and out[2] == "quad_error"
    assert float(out[1]) == pytest.approx(0.0651766096502746, rel=1e-9)


def test_price_cross(capsys):
    assert run(["price", "--model", STEP_A, "--pair", "EURGBP", "--strike", "0.8641", "--maturity", "0.5"]) == 0
    assert float(capsys.readouterr().out.split()[1]) == pytest.approx(0.0267190177695308, rel=1e-9)


def test_mgfcheck(capsys):
    assert run(["mgfcheck", "--model", STEP_A, "--t", "1.0", "--points", "50"]) == 0
    assert float(capsys.readouterr().out.split()[-1]) < 1e-8


def test_missing_flag_is_usage_error(capsys):
    assert run(["price", "--model", STEP_A, "--pair", "EURUSD", "--maturity", "0.5"]) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_verb():
    assert run(["frobnicate"]) == 2


def test_missing_file_is_computation_error(capsys, tmp_path):
    assert run(["price", "--model", str(tmp_path / "none.cfg"), "--pair", "EURUSD", "--strike", "1",
                "--maturity", "1"]) == 1
    assert "error" in capsys.readouterr().err


def test_invalid_params_reported(capsys, tmp_path):
    f = tmp_path / "bad.cfg"
    f.write_text((DATA / "step_a.cfg").read_text().replace("a1 = -2.392", "a1 = 1"))
    assert run(["mgfcheck", "--model", str(f)]) == 1
    assert "mean reversion must be negative" in capsys.readouterr().err


def test_smile(tmp_path):
    out = tmp_path / "smile.csv"
    assert run(["smile", "--model", STEP_A, "--pair", "GBPUSD", "--strikes", "1.4:1.7:4",
                "--maturities", "0.25,1", "--out", str(out)]) == 0
    rows = read_smile_csv(out)
    assert len(rows) == 8
    assert all(0.05 < iv < 0.5 for _, _, iv in rows)


def test_covswap(tmp_path):
    out = tmp_path / "curve.csv"
    assert run(["covswap", "--model", STEP_A, "--maturities", "0.1:5:50", "--out", str(out)]) == 0
    curve = read_curve_csv(out)
    assert len(curve) == 50 and curve[0][0] == 0.1


def test_simulate(tmp_path):
    out = tmp_path / "paths.csv"
    assert run(["--threads", "2", "simulate", "--model", STEP_A, "--maturity", "1", "--paths", "3", "--steps", "20",
                "--out", str(out)]) == 0
    data = read_paths_csv(out)
    assert sorted(data) == [0, 1, 2] and data[0][0].size == 21


def test_calibrate(tmp_path, capsys):
    fit, rep = tmp_path / "fit.cfg", tmp_path / "rep.csv"
    cfg = tmp_path / "c.cfg"
    cfg.write_text("variant = A\nmax_evals = 5\nlb.lam = 0.5\nub.lam = 1.0\n")
    assert run(["calibrate", "--quotes", str(DATA / "synthetic_quotes.csv"), "--config", str(cfg),
                "--model", str(DATA / "initial.cfg"), "--out", str(fit), "--report", str(rep)]) == 0
    p = load_params(fit)
    assert p.a1 == p.a2 and 0.5 <= p.lam <= 1.0
    assert len(rep.read_text().splitlines()) == 301
    assert "variant A" in capsys.readouterr().out


def test_calibrate_matrix_bounds_rejected(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("lb.Theta11 = 0.0\n")
    assert run(["calibrate", "--quotes", str(DATA / "synthetic_quotes.csv"), "--config", str(cfg),
                "--out", str(tmp_path / "f.cfg")]) == 1


def test_parse_grid():
    assert parse_grid("1,2.5,3") == [1.0, 2.5, 3.0]
    np.testing.assert_allclose(parse_grid("0:1:5"), [0, 0.25, 0.5, 0.75, 1])
    with pytest.raises(Exception):
        parse_grid("a:b")


def test_params_round_trip(tmp_path):
    p = step_a_params()
    save_params(p, tmp_path / "a.cfg")
    save_params(load_params(tmp_path / "a.cfg"), tmp_path / "b.cfg")
    assert (tmp_path / "a.cfg").read_text() == (tmp_path / "b.cfg").read_text()


def test_console_script():
    r = subprocess.run([sys.executable, "-m", "msvou.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip() == __version__
