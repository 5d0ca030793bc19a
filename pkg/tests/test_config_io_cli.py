import json
import struct

import numpy as np
import pytest

from magcalderon.bicharacteristics import lens_relation
from magcalderon.cli import main
from magcalderon.config import ConfigError, ExperimentConfig, load_config
from magcalderon.io import MAGIC, read_field, read_trajectory_csv, write_field, write_trajectory_csv
from magcalderon.scenarios import get_scenario


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown config keys"):
        ExperimentConfig.from_dict({"scenario": "minkowski-disk", "bogus": 1})


def test_invalid_values_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"mode": "magic"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"x": [1.0, 2.0]})


def test_hash_stable_and_ignores_out_and_workers():
    a = ExperimentConfig.from_dict({"scenario": "warped-disk", "seed": 3})
    b = ExperimentConfig.from_dict({"seed": 3, "scenario": "warped-disk", "out": "/elsewhere", "workers": 4})
    c = ExperimentConfig.from_dict({"scenario": "warped-disk", "seed": 4})
    assert a.hash == b.hash
    assert a.hash != c.hash
    assert len(a.hash) == 64


def test_config_json_round_trip():
    a = ExperimentConfig.from_dict({"scenario": "aniso-box", "grid_n": 17})
    assert ExperimentConfig.from_dict(json.loads(a.to_json())).hash == a.hash


def test_nested_config_rejected(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"scenario": "minkowski-disk", "grid": {"n": 3}}))
    with pytest.raises(ConfigError):
        load_config(str(p))
    p.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(str(p))
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.json"))


@pytest.mark.parametrize("dtype", [float, complex])
def test_field_round_trip(tmp_path, dtype):
    rng = np.random.default_rng(0)
    v = rng.normal(size=(3, 4, 5)).astype(dtype)
    if dtype is complex:
        v = v + 1j * rng.normal(size=v.shape)
    p = tmp_path / "f.bin"
    write_field(p, v, [0.1, 0.2, 0.3])
    back, sp = read_field(p)
    assert back.dtype == v.dtype
    assert np.array_equal(back, v)
    np.testing.assert_array_equal(sp, [0.1, 0.2, 0.3])


def test_field_header_bytes(tmp_path):
    p = tmp_path / "f.bin"
    write_field(p, np.arange(6.0).reshape(2, 3), [0.5, 0.25])
    raw = p.read_bytes()
    assert raw[:8] == MAGIC
    assert struct.unpack("<II", raw[8:16]) == (0, 2)
    assert struct.unpack("<QQ", raw[16:32]) == (2, 3)
    assert struct.unpack("<dd", raw[32:48]) == (0.5, 0.25)
    assert len(raw) == 48 + 6 * 8
    assert struct.unpack("<d", raw[-8:])[0] == 5.0


def test_field_rejects_bad_input(tmp_path):
    with pytest.raises(ValueError):
        write_field(tmp_path / "f.bin", np.zeros((2, 2)), [1.0])
    (tmp_path / "junk.bin").write_bytes(b"notafield")
    with pytest.raises(ValueError):
        read_field(tmp_path / "junk.bin")


def test_trajectory_csv(tmp_path):
    sc = get_scenario("minkowski-disk")
    res = lens_relation(sc.metric, [1.5, -1.0, 0.0], [-1.0, 0.0, 0.3], 0, sc.domain)
    p = tmp_path / "t.csv"
    write_trajectory_csv(p, res.trajectory)
    assert p.read_text().splitlines()[0] == "s,x0,x1,x2,xi0,xi1,xi2"
    arr = read_trajectory_csv(p)
    assert arr.shape == (res.trajectory.s.size, 7)
    assert np.array_equal(arr[:, 0], res.trajectory.s)
    assert np.array_equal(arr[:, 1:4], res.trajectory.x)


def test_cli_unknown_scenario_exit_2(tmp_path, capsys):
    assert main(["lens", "--scenario", "nowhere", "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_bad_config_exit_2(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"frobnicate": True}))
    assert main(["lens", "--config", str(p), "--out", str(tmp_path)]) == 2
    assert main(["lens", "--x", "1,a,0", "--out", str(tmp_path)]) == 2
    assert main(["nonsense"]) == 2


def test_cli_lorentz_command_on_riemann_scenario_exit_2(tmp_path):
    assert main(["membership", "--scenario", "euclid-box", "--out", str(tmp_path)]) == 2


def test_cli_lens_report(tmp_path):
    assert main(["lens", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["passed"] and rep["checks"]["closed_form_lens"]
    assert rep["config_hash"] == ExperimentConfig.from_dict(dict(rep["config"])).hash
    assert "wall_seconds" in json.loads((tmp_path / "timing.json").read_text())
    assert "wall_seconds" not in json.dumps(rep)


def test_cli_trace_writes_csv(tmp_path):
    assert main(["trace", "--k", "1", "--out", str(tmp_path)]) == 0
    arr = read_trajectory_csv(tmp_path / "trajectory.csv")
    assert arr.shape[1] == 7 and arr.shape[0] > 10


def test_cli_scan_deterministic(tmp_path):
    args = ["scan", "--samples", "5", "--spacing", "0.2", "--radius", "0.2", "--workers", "1"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    ra = (tmp_path / "a" / "report.json").read_bytes()
    rb = (tmp_path / "b" / "report.json").read_bytes()
    assert ra == rb
    assert (tmp_path / "a" / "flagged.csv").read_bytes() == (tmp_path / "b" / "flagged.csv").read_bytes()


def test_cli_verify_admissible(tmp_path):
    assert main(["verify-admissible", "--scenario", "warped-disk", "--out", str(tmp_path)]) == 0
    assert main(["verify-admissible", "--scenario", "euclid-box", "--out", str(tmp_path)]) == 2


def test_list_scenarios(capsys):
    assert main(["list-scenarios"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) >= 5
    ids = [ln.split()[0] for ln in lines]
    assert "minkowski-disk" in ids and "conformal-minkowski" in ids


def test_list_scenarios_json(capsys):
    assert main(["list-scenarios", "--json"]) == 0
    cat = json.loads(capsys.readouterr().out)
    by_id = {e["id"]: e for e in cat}
    assert len(cat) >= 5
    assert by_id["conformal-minkowski"]["conformal_base"] == "minkowski-disk"
    assert all("param_types" in e for e in cat)


def test_cli_riemann_gauge(tmp_path):
    assert main(["riemann", "gauge", "--grid-n", "17", "--out", str(tmp_path)]) == 0
