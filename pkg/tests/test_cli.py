import json
from importlib import resources
from pathlib import Path

import jsonschema
import pytest

from flashpim.cli import main

GOLDEN = Path(__file__).parent / "golden"


def _schema(name):
    return json.loads(resources.files("flashpim.data").joinpath(f"schemas/{name}.json").read_text())


def _run_json(capsys, argv):
    code = main(argv + ["--json", "-"])
    out = capsys.readouterr().out
    return code, json.loads(out)


@pytest.mark.parametrize("axis", ["n_row", "n_col", "n_stack"])
def test_sweep_matches_golden(axis, tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--axis", axis, "--out", str(out)]) == 0
    assert out.read_bytes() == (GOLDEN / f"sweep_{axis}.csv").read_bytes()


@pytest.mark.parametrize("name,argv", [
    ("select", ["select"]),
    ("tiling", ["tiling", "--m", "2048", "--n", "2048"]),
    ("bus", ["bus", "--shape", "1024x1024"]),
    ("area", ["area"]),
    ("lifetime", ["lifetime", "--tpot-ms", "7"]),
    ("kv-overhead", ["kv-overhead", "--saving-ms", "10"]),
    ("tpot", ["tpot", "--ctx", "256"]),
])
def test_json_schemas(name, argv, capsys):
    code, payload = _run_json(capsys, argv)
    assert code == 0
    jsonschema.validate(payload, _schema(name))


def test_json_to_file(tmp_path, capsys):
    path = tmp_path / "area.json"
    assert main(["area", "--json", str(path)]) == 0
    assert "mm^2" in capsys.readouterr().out
    jsonschema.validate(json.loads(path.read_text()), _schema("area"))


def test_exit_codes(tmp_path, capsys):
    assert main(["select", "--budget-us", "0.001"]) == 1
    assert main(["tiling", "--m", "1000000", "--n", "1000000"]) == 1
    assert main(["sweep", "--axis", "n_depth"]) == 2
    assert main(["sweep", "--axis", "n_col", "--values", "2048,1024"]) == 2
    assert main(["bus", "--shape", "12by4"]) == 2
    assert main(["tpot", "--model", "nope"]) == 2
    assert main(["tpot", "--ctx", "0"]) == 2
    assert main(["area", "--tech", str(tmp_path / "missing.yaml")]) == 3
    bad = tmp_path / "bad.yaml"
    bad.write_text("tech: {r_s: -1}\n")
    assert main(["area", "--tech", str(bad)]) == 3
    bad.write_text("topology: {n_channel: [\n")
    assert main(["area", "--topology", str(bad)]) == 3
    assert main([]) == 2


def test_flag_overrides_file(tmp_path, capsys):
    topo = tmp_path / "t.yaml"
    topo.write_text("topology:\n  n_plane: 64\n")
    _, a = _run_json(capsys, ["area", "--topology", str(topo)])
    _, b = _run_json(capsys, ["area", "--topology", str(topo), "--planes-per-die", "32"])
    assert a["n_planes"] == 64 and b["n_planes"] == 32


def test_bus_flag_changes_result(capsys):
    _, a = _run_json(capsys, ["tiling", "--m", "2048", "--n", "2048"])
    _, b = _run_json(capsys, ["tiling", "--m", "2048", "--n", "2048", "--bus", "shared"])
    assert b["cost_us"]["total"] > a["cost_us"]["total"]


def test_tiling_explicit_plan(capsys):
    code, d = _run_json(capsys, ["tiling", "--m", "7168", "--n", "7168",
                                 "--plan", "C(7)/C(2)/N/R(56)"])
    assert code == 0 and d["plan"] == "C(7)/C(2)/N(1)/R(56)"


def test_trace_is_deterministic_and_replays(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["bus", "--shape", "1024x2048", "--trace", str(a), "--json", "-"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert main(["bus", "--shape", "1024x2048", "--trace", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0] == "event,plane,start_s,end_s,bytes"
    ends = {}
    for line in lines[1:]:
        ev, _, start, end, _ = line.split(",")
        assert float(end) >= float(start)
        kind = ev.split(":")[0]
        ends[kind] = max(ends.get(kind, 0.0), float(end))
    assert ends["shared"] * 1e6 == pytest.approx(payload["shared_us"])
    assert ends["htree"] * 1e6 == pytest.approx(payload["htree_us"])


def test_tpot_baseline_and_csv(tmp_path, capsys):
    csv_path = tmp_path / "ops.csv"
    code, d = _run_json(capsys, ["tpot", "--ctx", "128", "--baseline", "--csv", str(csv_path)])
    assert code == 0 and d["speedup"] > 1
    assert csv_path.read_text().splitlines()[-1].startswith("total,")
