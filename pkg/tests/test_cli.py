import json

import jsonschema
import pytest

from legav.cli import main
from legav.curves import circle, figure_eight, lift_front_cylinder, lift_planar_heisenberg, perturb, write_curve_csv
from legav.scenario import BUNDLED, SCHEMA, ScenarioError, build_family, load_scenario


@pytest.fixture
def curves(tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    h = tmp_path / "h.csv"
    N = lift_front_cylinder(circle(128, 2.0))
    write_curve_csv(a, N)
    write_curve_csv(b, perturb(N, 1e-3, 1))
    write_curve_csv(h, lift_planar_heisenberg(figure_eight(128, 1.0)))
    return a, b, h


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_scenarios_validate(name):
    sc = load_scenario(name)
    sc.pop("_source")
    jsonschema.validate(sc, SCHEMA)
    assert len(build_family(sc)) >= 1


def test_schema_violation_is_line_anchored(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "name": "bad",\n  "model": {"id": "heisenberg"},\n  "family": {"base": {"kind": "circle"}},\n  "mode": "loose"\n}\n')
    assert main(["run", str(p)]) == 3
    err = capsys.readouterr().err
    assert "line 5" in err and "mode" in err


def test_malformed_json_reports_line(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text('{\n  "name": "x",\n  "model": {"id": "cylinder"}\n  "family": {}\n}\n')
    assert main(["run", str(p)]) == 3
    assert "line 4" in capsys.readouterr().err


def test_missing_files_exit_3(tmp_path):
    assert main(["run", str(tmp_path / "nope.json")]) == 3
    assert main(["distances", str(tmp_path / "nope.csv")]) == 3
    assert main(["check", "--model", "cylinder", "--curve", str(tmp_path / "nope.csv")]) == 3


def test_unknown_bundled_name():
    with pytest.raises(ScenarioError):
        load_scenario("no-such-scenario")


def test_distances_on_identical_files_are_zero(curves, capsys, tmp_path):
    a, b, _ = curves
    out = tmp_path / "d.csv"
    assert main(["distances", str(a), str(a), str(b), "--out", str(out)]) == 0
    rows = [r.split(",") for r in out.read_text().splitlines()[1:]]
    assert len(rows) == 9
    for n, m, v0, v1 in rows:
        if n == m:
            assert float(v0) == 0.0 and float(v1) == 0.0
        else:
            assert 5e-4 < float(v0) < 5e-3


def test_check_reports_heisenberg_curvature_sup(curves, capsys):
    _, _, h = curves
    assert main(["check", "--model", "heisenberg", "--curve", str(h), "--points", "200"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert abs(out["curvature_sup"] - 0.75) < 1e-9
    assert out["legendrian_residual"] < 1e-12
    assert out["omega_bar_bound"] <= 2.0
    assert out["structure"]["compatibility"] < 1e-10


def test_identity_scenario_runs(tmp_path, capsys):
    assert main(["run", "identity", "--out", str(tmp_path)]) == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    for r in s["results"].values():
        assert max(r["d0_per_member"].values()) <= 1e-9
        assert r["residual"] <= 1e-9
    for f in ("summary.json", "report.txt", "plot.svg", "weinstein.csv", "L_contact.csv", "L_symplectization.csv"):
        assert (tmp_path / f).exists()
    svg = (tmp_path / "plot.svg").read_text()
    assert "stroke-dasharray" in svg


def test_strict_relaxed_scenario_is_a_gate_failure(tmp_path, capsys):
    assert main(["run", "relaxed", "--strict", "--out", str(tmp_path)]) == 2
    assert "gate" in capsys.readouterr().err


def test_identity_outputs_are_byte_identical_across_threads(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "identity", "--out", str(a), "--threads", "1"]) == 0
    assert main(["run", "identity", "--out", str(b), "--threads", "2"]) == 0
    for f in sorted(p.name for p in a.iterdir() if p.suffix in (".json", ".csv")):
        assert (a / f).read_bytes() == (b / f).read_bytes(), f
