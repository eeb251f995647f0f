import json

import pytest

from uav_isac import cli

SMALL = """
name: small
search_area: {x: [0, 400], y: [0, 400]}
noise_power_dbm: -110
users:
  - {position: [150, 100]}
  - {position: [300, 120]}
sensing:
  points: [[250, 300], [280, 300]]
  gain_threshold_dbm: -60
uav: {num_antennas: 4, altitude: 100, max_power_w: 0.5, channel_gain_ref_db: -60}
mission:
  num_slots: 4
  slot_duration: 5
  initial_position: [0, 200]
  final_position: [400, 200]
  max_speed: 30
"""


@pytest.fixture
def small_yaml(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(SMALL)
    return str(p)


def run(args, out):
    return cli.main(args + ["--out", str(out), "--jobs", "1"])


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_feasibility_exit_codes(small_yaml, tmp_path):
    ok = tmp_path / "ok"
    assert run(["feasibility", "--scenario", small_yaml, "--resolution", "50"], ok) == 0
    m = manifest(ok)
    assert m["status"] == "ok" and "feasibility.json" in m["files"]
    bad = tmp_path / "bad"
    assert run(["feasibility", "--scenario", small_yaml, "--gamma-dbm", "20",
                "--resolution", "50"], bad) == 2
    assert json.loads((bad / "feasibility.json").read_text())["feasible"] is False
    assert manifest(bad)["exit_code"] == 2


def test_bad_scenario_exit_one(tmp_path, capsys):
    p = tmp_path / "broken.yaml"
    p.write_text("users: [{position: [1, 2]}]\nuav: {num_antennas: -3}\n")
    assert run(["feasibility", "--scenario", str(p)], tmp_path / "o") == 1
    assert "error in uav_isac.scenario" in capsys.readouterr().err
    assert manifest(tmp_path / "o")["status"] == "error"


def test_static_outputs_and_determinism(small_yaml, tmp_path):
    args = ["solve-static", "--scenario", small_yaml, "--resolution", "200", "--maps", "1",
            "--map-resolution", "100"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(args, a) == 0 and run(args, b) == 0
    for name in ("static_solution.json", "static_grid.csv", "map.csv", "map_rates.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert manifest(a)["config_hash"] == manifest(b)["config_hash"]
    sol = json.loads((a / "static_solution.json").read_text())
    assert len(sol["location"]) == 2


def test_config_hash_changes_with_inputs(small_yaml):
    base = cli.spec_from_args(cli.build_parser().parse_args(
        ["feasibility", "--scenario", small_yaml]))
    other = cli.spec_from_args(cli.build_parser().parse_args(
        ["feasibility", "--scenario", small_yaml, "--gamma-dbm", "-50"]))
    assert cli.config_hash(base) != cli.config_hash(other)
    assert cli.config_hash(base) == cli.config_hash(base)


def test_mobile_sf_outputs(small_yaml, tmp_path):
    out = tmp_path / "m"
    assert run(["solve-mobile", "--scenario", small_yaml, "--benchmark", "sf",
                "--maps", "2", "--map-resolution", "100"], out) == 0
    files = manifest(out)["files"]
    for name in ("mobile_solution.json", "trajectory.csv", "rate_trace.csv",
                 "map_slot02.csv", "map_slot02_rates.json"):
        assert name in files and (out / name).exists()
    rows = (out / "trajectory.csv").read_text().strip().splitlines()
    assert len(rows) == 1 + 4


def test_mobile_infeasible_slot(small_yaml, tmp_path, capsys):
    out = tmp_path / "m"
    assert run(["solve-mobile", "--scenario", small_yaml, "--benchmark", "sf",
                "--gamma-dbm", "-14"], out) == 2
    assert "slot" in capsys.readouterr().err


def test_bad_arguments():
    with pytest.raises(SystemExit):
        cli.main(["solve-mobile", "--initial-radius", "-1"])
    with pytest.raises(SystemExit):
        cli.main(["feasibility", "--area", "5,1,0,1"])


def test_gamma_parsing():
    assert cli._gamma_arg("0") == "off" and cli._gamma_arg("off") == "off"
    assert cli._gamma_arg("-43") == -43.0
    assert cli._list(cli._gamma_item)("0,-70,-43") == (None, -70.0, -43.0)


def test_emit_unknown_kind(tmp_path):
    with pytest.raises(ValueError):
        cli.emit_figure_data(cli.Writer(str(tmp_path)), None, "histogram")
