import csv
import json

import numpy as np
import pytest

from swarmopt.cli import build_land, load_config, main
from swarmopt.errors import ParseError, ValidationError


def _write(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_builtin_ring_config(tmp_path):
    cfg = load_config(_write(tmp_path, "mode: stationary\nbeta: 5\nlandscape: {builtin: ring20}\n"))
    land = build_land(cfg.landscape)
    assert land.n == 20
    np.testing.assert_allclose(land.ell, 0.05)
    assert int(np.argmin(land.objective)) == 7


def test_defaults_filled(tmp_path):
    cfg = load_config(_write(tmp_path, "mode: flow-annealed\n"))
    assert cfg.m == -1.0
    assert cfg.schedule == {"t0": 1.0, "alpha": 0.25}
    assert cfg.particles == 50


def test_alpha_outside_guaranteed_regime_warns(tmp_path):
    path = _write(tmp_path, "mode: flow-annealed\nschedule: {t0: 1, alpha: 0.3}\n")
    with pytest.warns(UserWarning, match="outside guaranteed regime"):
        cfg = load_config(path)
    assert cfg.warnings
    strict = _write(tmp_path, "mode: flow-annealed\nguaranteed: true\nschedule: {t0: 1, alpha: 0.3}\n", "strict.yaml")
    with pytest.raises(ValidationError) as err:
        load_config(strict)
    assert err.value.field == "schedule.alpha"


def test_missing_seed_in_simulate(tmp_path):
    with pytest.raises(ValidationError) as err:
        load_config(_write(tmp_path, "mode: simulate\nbeta: 1\n"))
    assert err.value.field == "seed"


def test_invalid_field_named(tmp_path):
    with pytest.raises(ValidationError) as err:
        load_config(_write(tmp_path, "mode: stationary\nbeta: 1\nkind: third\n"))
    assert err.value.field == "kind"
    with pytest.raises(ValidationError) as err:
        load_config(_write(tmp_path, "mode: stationary\nbeta: 1\nbogus: 3\n"))
    assert err.value.field == "bogus"


def test_parse_error_has_line(tmp_path):
    with pytest.raises(ParseError, match="line 2"):
        load_config(_write(tmp_path, "mode: stationary\nbeta: 1: 2\n"))


def test_stationary_command(tmp_path, capsys):
    assert main(["stationary", "--builtin", "ring20", "--beta", "5", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "stationary.csv")
    zeta = {int(r["state"]): float(r["zeta"]) for r in rows}
    assert 0.60 <= zeta[6] + zeta[7] + zeta[8] <= 0.70
    assert len(rows[0]["zeta"].replace("e", "").lstrip("0.-")) >= 15


def test_printed_numbers_appear_in_csv(tmp_path, capsys):
    main(["stationary", "--builtin", "ring20", "--beta", "5", "--out", str(tmp_path)])
    printed = [line.split(": ", 1) for line in capsys.readouterr().out.splitlines() if ": " in line]
    summary = {r["key"]: r["value"] for r in _rows(tmp_path / "stationary_summary.csv")}
    assert printed
    for key, value in printed:
        assert summary[key] == value
    data = json.loads((tmp_path / "stationary_summary.json").read_text())
    assert set(summary) <= set(data)


def test_simulate_deterministic(tmp_path):
    args = ["simulate", "--builtin", "ring20", "--schedule", "1,0.25", "--particles", "50", "--seed", "42", "--horizon", "20"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("events.csv", "snapshots.csv", "simulate_summary.csv", "simulate_summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header = (tmp_path / "a" / "events.csv").read_text().splitlines()[0]
    assert header == "event_index,t,particle,from,to"


def test_simulate_without_seed_fails(tmp_path, capsys):
    assert main(["simulate", "--builtin", "ring20", "--beta", "1", "--out", str(tmp_path)]) == 2
    assert "seed" in capsys.readouterr().err


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("SWARMOPT_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["stationary", "--builtin", "ring20", "--beta", "1"]) == 0
    assert (tmp_path / "env" / "stationary.csv").exists()


def test_config_file_with_flag_override(tmp_path):
    cfg = _write(tmp_path, "beta: 1\nlandscape:\n  matrix: [[-1, 1], [1, -1]]\n  ell: [0.5, 0.5]\n  U: [0, 1]\n")
    assert main(["stationary", "--config", str(cfg), "--beta", "0", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "stationary.csv")
    assert [float(r["eta"]) for r in rows] == [1.0, 1.0]


def test_verify_metropolis(tmp_path):
    assert main(["verify", "--suite", "metropolis", "--trials", "1000", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "verify.csv")
    assert all(r["passed"] == "true" for r in rows)


def test_verify_reports_chi_clause(tmp_path):
    code = main(["verify", "--suite", "chi", "--trials", "2", "--seed", "0", "--out", str(tmp_path)])
    rows = {r["check"]: r for r in _rows(tmp_path / "verify.csv")}
    assert rows["estimate_positive"]["passed"] == "true"
    assert rows["estimate_below_twice_linearized_gap"]["passed"] == "true"
    assert code == 0


def test_flow_command(tmp_path):
    assert main(["flow", "--builtin", "ring20", "--schedule", "1,0.25", "--horizon", "100", "--out", str(tmp_path)]) == 0
    diag = _rows(tmp_path / "flow_diagnostics.csv")
    assert float(diag[-1]["t"]) == 100.0
    assert float(diag[-1]["mass_on_minimizers"]) > 0.05


def test_ring_demo(tmp_path):
    assert main(["ring-demo", "--horizon", "20", "--out", str(tmp_path)]) == 0
    for name in ("ring_stationary.csv", "ring_homogeneous_distance.csv", "ring_annealed_distance.csv", "ring_homogeneous_hist.csv", "ring_annealed_hist.csv"):
        assert (tmp_path / name).exists()
    hist = _rows(tmp_path / "ring_annealed_hist.csv")
    assert len({r["snapshot_t"] for r in hist}) == 16
    dist = _rows(tmp_path / "ring_homogeneous_distance.csv")
    assert all(float(r["l2_distance"]) >= 0 for r in dist)
