import json

import numpy as np
import pytest

from dpqt import cli


def write(tmp_path, name, obj):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_calibrate_line_and_csv(tmp_path, capsys):
    code, out, _ = run(["calibrate", "--epsilon", "1", "--delta", "1e-5", "--sensitivity", "1",
                        "--out", str(tmp_path)], capsys)
    assert code == 0
    assert out.startswith("epsilon=1 delta=1e-05 sensitivity=1 sigma=")
    header, rows = cli.read_csv(tmp_path / "calibrate.csv")
    assert header == ["epsilon", "delta", "sensitivity", "sigma", "slack"]
    sigma, slack = float(rows[0][3]), float(rows[0][4])
    assert sigma <= 4.845
    assert slack == pytest.approx(1e-5, abs=1e-10)


def test_calibrate_doubles_with_sensitivity(tmp_path, capsys):
    conf = write(tmp_path, "c.json", {"epsilon": 1, "delta": 1e-5, "sensitivity": 1})
    run(["calibrate", "--config", conf, "--out", str(tmp_path / "a")], capsys)
    run(["calibrate", "--config", conf, "--sensitivity", "2", "--out", str(tmp_path / "b")], capsys)
    s1 = float(cli.read_csv(tmp_path / "a" / "calibrate.csv")[1][0][3])
    s2 = float(cli.read_csv(tmp_path / "b" / "calibrate.csv")[1][0][3])
    assert s2 == pytest.approx(2 * s1, rel=1e-11)


@pytest.mark.parametrize("conf", [{"epsilon": 1, "delta": 1, "sensitivity": 1},
                                  {"epsilon": 1, "delta": 1e-5, "sensitivity": 1, "extra": 2},
                                  {"epsilon": -1, "delta": 1e-5, "sensitivity": 1}])
def test_calibrate_rejects_bad_config(tmp_path, capsys, conf):
    code, out, err = run(["calibrate", "--config", write(tmp_path, "c.json", conf)], capsys)
    assert code == 2
    assert err.startswith("error: calibrate config invalid")
    assert out == ""


def test_not_json(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text("{not json")
    code, _, err = run(["fixed", "--config", str(path)], capsys)
    assert code == 2 and "not valid JSON" in err


def fixed_table(tmp_path, conf, capsys):
    code, _, _ = run(["fixed", "--config", write(tmp_path, "f.json", conf),
                      "--out", str(tmp_path)], capsys)
    assert code == 0
    header, rows = cli.read_csv(tmp_path / "fixed.csv")
    assert header == cli.FIXED_HEADER
    return {(q, i): float(v) for q, i, v in rows}


def test_fixed_equal_boxes(tmp_path, capsys):
    table = fixed_table(tmp_path, {"universe": {"n": 10, "bounds": [[0, 1]] * 3},
                                   "eta": [1, 1, 1], "epsilon": 1, "delta": 1e-5}, capsys)
    assert table[("volume_ratio", "")] == 1.0


def test_fixed_unequal_boxes(tmp_path, capsys):
    table = fixed_table(tmp_path, {"universe": {"n": 5, "bounds": [[0, 10], [0, 2]]},
                                   "eta": [1, 1], "epsilon": 1, "delta": 1e-5}, capsys)
    assert (table[("psi", "0")], table[("psi", "1")]) == (2.0, 0.4)
    assert table[("volume_ratio", "")] == pytest.approx(0.8 / 2.08, rel=1e-11)
    assert table[("power_xi_star_test", "")] >= table[("power_xi1", "")]


def test_fixed_psi_form(tmp_path, capsys):
    table = fixed_table(tmp_path, {"psi": [1, 2], "eta": [0.5, 0.5], "epsilon": 1,
                                   "delta": 1e-5}, capsys)
    assert table[("xi_star_cr", "0")] == 2.5 and table[("xi_star_cr", "1")] == 0.625
    assert table[("volume_ratio", "")] == pytest.approx(0.8)


def test_fixed_round_trip(tmp_path, capsys):
    conf = {"universe": {"n": 7, "bounds": [[0, 3], [-1, 4], [2, 2.5]]},
            "eta": [0.3, -0.1, 0.2], "epsilon": 0.7, "delta": 1e-6}
    text = cli.csv_text(cli.FIXED_HEADER, cli.fixed_rows(conf))
    path = tmp_path / "rt.csv"
    path.write_text(text)
    header, rows = cli.read_csv(path)
    assert cli.csv_text(header, rows) == text
    assert "\r" not in text


def test_fixed_rejects_both_sources(tmp_path, capsys):
    conf = {"psi": [1], "universe": {"n": 2, "bounds": [[0, 1]]}, "eta": [1], "epsilon": 1,
            "delta": 0.1}
    code, _, _ = run(["fixed", "--config", write(tmp_path, "f.json", conf)], capsys)
    assert code == 2


def test_fixed_zero_width_box(tmp_path, capsys):
    conf = {"universe": {"n": 2, "bounds": [[1, 1]]}, "eta": [1], "epsilon": 1, "delta": 0.1}
    code, _, err = run(["fixed", "--config", write(tmp_path, "f.json", conf)], capsys)
    assert code == 2 and "zero sensitivity" in err


def test_rdp_curves_example(tmp_path, capsys):
    code, _, err = run(["rdp-curves", "--config", write(tmp_path, "r.json", {"example": 1}),
                        "--out", str(tmp_path)], capsys)
    assert code == 0, err
    header, rows = cli.read_csv(tmp_path / "rdp_curves.csv")
    assert header == cli.CURVE_COLUMNS
    assert len(rows) == 30
    vals = np.array(rows, dtype=float)
    np.testing.assert_allclose(vals[:, 0], np.round(np.arange(1, 31) * 0.1, 12))
    for col in (1, 2, 3, 4):
        assert np.all(np.diff(vals[:, col]) >= 0)
    assert np.all(vals[:, 1] > vals[:, 3]) and np.all(vals[:, 3] >= vals[:, 2])
    plot_header, plot_rows = cli.read_csv(tmp_path / "rdp_curves_plot.csv")
    assert plot_header == ["curve", "epsilon", "value"] and len(plot_rows) == 240


def test_rdp_curves_identity_override(tmp_path, capsys):
    conf = {"covariance": np.eye(6).tolist(), "example": 1, "eta": [0.05, 0.1, 0, 0, 0.02, 0],
            "grid": {"start": 0.5, "stop": 2, "step": 0.5}}
    code, out, _ = run(["rdp-curves", "--config", write(tmp_path, "r.json", conf)], capsys)
    assert code == 0
    lines = out.strip().split("\n")
    assert len(lines) == 5
    vals = np.array([line.split(",") for line in lines[1:]], dtype=float)
    np.testing.assert_allclose(vals[:, 1], vals[:, 2], atol=1e-12)
    np.testing.assert_allclose(vals[:, 2], vals[:, 3], atol=1e-12)
    assert np.all(vals[:, 1] < 0.999)


def test_rdp_curves_grid_flag(tmp_path, capsys):
    code, out, _ = run(["rdp-curves", "--config", write(tmp_path, "r.json", {"example": 3}),
                        "--grid", "1:2:0.25"], capsys)
    assert code == 0 and len(out.strip().split("\n")) == 6
    code, _, err = run(["rdp-curves", "--config", write(tmp_path, "r.json", {"example": 3}),
                        "--grid", "1:2"], capsys)
    assert code == 2


def test_rdp_curves_requires_inputs(tmp_path, capsys):
    code, _, err = run(["rdp-curves", "--config", write(tmp_path, "r.json", {"n": 50})], capsys)
    assert code == 2 and "required" in err


def test_rdp_curves_bad_covariance(tmp_path, capsys):
    conf = {"covariance": [[1, 2], [2, 1]], "example": 1}
    code, _, _ = run(["rdp-curves", "--config", write(tmp_path, "r.json", conf)], capsys)
    assert code == 2


SIM_CONF = {
    "seed": 99, "replications": 3000, "block_size": 500,
    "fixed": {"psi": [1, 2], "mu": [0, 1], "eta": [1, 1], "epsilon": 1, "delta": 1e-5},
    "random": {"example": 1, "epsilon": 1, "gamma": 0.01},
}


def test_simulate_identical_bytes(tmp_path, capsys, monkeypatch):
    conf = write(tmp_path, "s.json", SIM_CONF)
    outputs = []
    for threads in ("1", "3"):
        monkeypatch.setenv("DPQT_THREADS", threads)
        out_dir = tmp_path / threads
        code, _, _ = run(["simulate", "--config", conf, "--out", str(out_dir)], capsys)
        assert code in (0, 1)
        outputs.append((out_dir / "simulate.csv").read_bytes())
    assert outputs[0] == outputs[1]
    header, rows = cli.read_csv(tmp_path / "1" / "simulate.csv")
    assert header == cli.SIM_HEADER
    assert {r[-1] for r in rows} <= {"PASS", "FAIL"}
    assert all(r[7] != "" for r in rows)


def test_simulate_failure_list(tmp_path, capsys):
    conf = dict(SIM_CONF, replications=50, block_size=50)
    code, _, err = run(["simulate", "--config", write(tmp_path, "s.json", conf)], capsys)
    # 50 replications cannot separate the super-naive level from alpha.
    assert code == 1
    failed = json.loads(err)["failed"]
    assert any(f["estimand"] == "level_super_naive_gt_alpha" for f in failed)


def test_simulate_needs_scenario(tmp_path, capsys):
    code, _, _ = run(["simulate", "--config", write(tmp_path, "s.json", {"replications": 5})],
                     capsys)
    assert code == 2


def test_fixtures_output(capsys):
    code, out, _ = run(["fixtures"], capsys)
    assert code == 0
    assert out.startswith("variable,Cholesterol,HDL,ApoA1,LDL,Total Lipid,Glucose\n")
    assert "1,10 5 10 8.75 12.5 2.5,50,0.02,0.0001" in out


def test_fmt():
    assert cli.fmt(0.1 + 0.2) == "0.3"
    assert cli.fmt(1 / 3) == "0.333333333333"
    assert cli.fmt(np.int64(5)) == "5"


def test_grid_values():
    from dpqt import config
    assert config.grid_values({"start": 0.1, "stop": 3.0, "step": 0.1}) == EPS_30
    assert config.grid_values(config.parse_grid("1:1:0.5")) == [1.0]
    from dpqt.errors import ConfigError
    with pytest.raises(ConfigError):
        config.grid_values({"start": 2, "stop": 1, "step": 0.1})


EPS_30 = [round(0.1 * i, 12) for i in range(1, 31)]


def test_random_inputs_override_example():
    from dpqt import config
    inputs = config.random_inputs({"example": 2, "gamma": 0.01})
    assert inputs["gamma"] == 0.01 and inputs["delta"] == 0.0004 and inputs["n"] == 50
    assert inputs["covariance"].shape == (6, 6)
