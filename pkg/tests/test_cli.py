import csv
import io
import json

import pytest

from opbw.cli import (EXIT_ERROR, EXIT_OK, EXIT_STAT_FAIL, ExperimentConfig, main, run,
                      run_rows, rows_to_csv, sweep, sweep_cells)


def _rows(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_density_p1_exact(tmp_path):
    out = tmp_path / "d.csv"
    code = main(["density", "--p", "1", "--n", "64", "--replicates", "50", "--seed", "1",
                 "--out", str(out)])
    assert code == EXIT_OK
    rows = _rows(out)
    assert rows[0]["statistic"] == "p_hat" and rows[0]["estimate"] == "1.0"
    meta = json.loads((tmp_path / "d.csv.json").read_text())
    assert meta["config"]["p"] == 1.0 and "numpy" in meta["versions"]
    assert "wall_clock_seconds" in meta


@pytest.mark.parametrize("argv", [
    ["density", "--p", "0.8", "--n", "64", "--replicates", "300", "--pairs", "4",
     "--drift-horizon", "256", "--drift-replicates", "200"],
    ["negcor", "--p", "0.8", "--n", "16", "--replicates", "300", "--gap", "8"],
    ["eta-hat-bw", "--replicates", "100", "--steps", "100"],
])
def test_rerun_is_byte_identical(tmp_path, argv):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        main(argv + ["--seed", "42", "--out", str(out)])
    assert a.read_bytes() == b.read_bytes()


def test_invalid_config_exits_1(tmp_path, capsys):
    code = main(["density", "--p", "1.5", "--n", "64", "--replicates", "10", "--seed", "1",
                 "--out", str(tmp_path / "x.csv")])
    assert code == EXIT_ERROR
    assert "p must lie" in capsys.readouterr().err


def test_statistical_failure_exits_2(tmp_path):
    code = main(["density", "--p", "0.8", "--n", "64", "--replicates", "200", "--seed", "1",
                 "--tol", "1e-9", "--drift-horizon", "256", "--drift-replicates", "100",
                 "--out", str(tmp_path / "x.csv")])
    assert code == EXIT_STAT_FAIL


def test_low_p_warns():
    cfg = ExperimentConfig("right-edge-density", p=0.6, n=8, replicates=20, seed=1, window=400)
    with pytest.warns(RuntimeWarning):
        run_rows(cfg)


def test_config_round_trip():
    cfg = ExperimentConfig("negcor", p=0.75, n=64, replicates=10, seed=2**63 + 5, gap=8)
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"experiment": "density", "bogus": 1})


def test_sweep_of_one_cell_equals_run(tmp_path):
    spec = {"seed": 9, "template": {"experiment": "right-edge-density", "p": 0.8,
                                    "replicates": 200}, "grid": {"n": [64]}}
    sweep(spec, str(tmp_path / "s.csv"))
    (cell,) = sweep_cells(spec)
    run(cell, str(tmp_path / "r.csv"))
    assert (tmp_path / "s.csv").read_bytes() == (tmp_path / "r.csv").read_bytes()


def test_sweep_cells_independent_of_grid_order(tmp_path):
    base = {"seed": 3, "template": {"experiment": "right-edge-density", "p": 0.8,
                                    "replicates": 300}}
    sweep({**base, "grid": {"n": [16, 64]}}, str(tmp_path / "a.csv"))
    sweep({**base, "grid": {"n": [64, 16]}}, str(tmp_path / "b.csv"))
    key = lambda r: (r["n"], r["statistic"])
    assert sorted(_rows(tmp_path / "a.csv"), key=key) == sorted(_rows(tmp_path / "b.csv"), key=key)


def test_sweep_records_failed_cells(tmp_path):
    spec = {"seed": 1, "template": {"experiment": "right-edge-density", "replicates": 20},
            "grid": {"n": [16, 3]}}
    code = sweep(spec, str(tmp_path / "f.csv"))
    rows = _rows(tmp_path / "f.csv")
    assert code == EXIT_ERROR
    assert any(r["status"].startswith("error") for r in rows)
    assert any(r["n"] == "16" and r["status"] == "ok" for r in rows)


def test_density_sweep_decreases_in_n(tmp_path):
    spec = {"seed": 5, "template": {"experiment": "density", "p": 0.8, "replicates": 400,
                                    "pairs": 16, "drift_horizon": 256, "drift_replicates": 200},
            "grid": {"n": [256, 1024, 4096]}}
    sweep(spec, str(tmp_path / "d.csv"))
    est = [float(r["estimate"]) for r in _rows(tmp_path / "d.csv") if r["statistic"] == "p_hat"]
    assert len(est) == 3 and est[0] > est[1] > est[2]


def test_csv_quoting():
    text = rows_to_csv([{"experiment": "drift", "p": 0.8, "n": 1, "horizon": None,
                         "replicates": 1, "param": "a,b", "statistic": "x", "estimate": 0.1,
                         "se": None, "reference": None, "passed": True, "seed": 1,
                         "status": "ok"}])
    assert '"a,b"' in text and ",true," in text
