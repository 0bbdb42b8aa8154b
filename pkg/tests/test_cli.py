import json

import pytest

from latfrac import io
from latfrac.cli import main

SMALL = {"geometry": {"width": 20, "height": 60, "notches": [[0, 29, 3, 31], [17, 29, 20, 31]], "protocol": "LD"},
         "l_m": 2.0, "mesh_seed": 3, "grain_seed": 3,
         "grading": {"kind": "monodisperse", "d": 4, "fraction": 0.3}}


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "run.json"
    p.write_text(json.dumps({**SMALL, "analysis": {"with_dd": True}}))
    return p


def test_run_analyze_plot(config, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "--config", str(config), "--out", str(out)]) == 0
    for name in ("events.csv", "events_dd.csv", "record.json", "elements.csv", "config.json", "summary.json"):
        assert (out / name).is_file()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["Gf"] > 0 and summary["lc"] > 0 and summary["n_events"] >= 5
    assert main(["analyze", str(out / "record.json"), "--out", str(tmp_path / "an")]) == 0
    res = json.loads((tmp_path / "an" / "analysis.json").read_text())
    assert res["Gf_log"] == pytest.approx(summary["Gf"], rel=1e-12)
    assert main(["plot", str(out / "record.json"), "--out", str(tmp_path / "fig")]) == 0
    assert sorted(p.name for p in (tmp_path / "fig").iterdir()) == [
        "cracks.svg", "energy_map.svg", "load_curve.svg", "profile.svg"]
    assert "RuntimeWarning" not in capsys.readouterr().err


def test_run_is_byte_identical(config, tmp_path):
    for k in (1, 2):
        assert main(["run", "--config", str(config), "--out", str(tmp_path / f"r{k}")]) == 0
    for name in ("events.csv", "events_dd.csv", "record.json", "elements.csv", "summary.json"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()


def test_seed_override(config, tmp_path):
    assert main(["run", "--config", str(config), "--seed", "9", "--out", str(tmp_path / "s")]) == 0
    cfg = json.loads((tmp_path / "s" / "config.json").read_text())
    assert cfg["mesh_seed"] == cfg["grain_seed"] == 9


def test_mesh_and_grains(config, tmp_path, capsys):
    assert main(["mesh", "--config", str(config), "--out", str(tmp_path / "m")]) == 0
    mesh = io.load_mesh(tmp_path / "m" / "mesh.json")
    assert mesh.n_nodes > 100
    assert main(["grains", "--config", str(config), "--out", str(tmp_path / "g")]) == 0
    g = io.load_grains(tmp_path / "g" / "grains.json")
    assert 0.25 < g.achieved_fraction <= 0.3
    assert "inclusions" in capsys.readouterr().out


def test_campaign(tmp_path):
    camp = {"base": {k: SMALL[k] for k in ("geometry", "l_m")}, "kind": "path_b", "values": [3, 4],
            "replicates": 2, "phases": [True, False], "fraction": 0.3}
    p = tmp_path / "camp.json"
    p.write_text(json.dumps(camp))
    outs = []
    for k in (1, 2):
        out = tmp_path / f"c{k}"
        assert main(["campaign", "--config", str(p), "--out", str(out), "--no-plots"]) == 0
        outs.append(out)
    rows = io.read_csv(outs[0] / "runs.csv")
    assert len(rows) == 8 and all(r["error"] == "" for r in rows)
    assert set(json.loads((outs[0] / "fits.json").read_text())) == {"3ph", "2ph"}
    for name in ("runs.csv", "points.csv", "fits.json", "campaign.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_material(capsys):
    assert main(["material", "default", "--two-phase"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["material"]["itz"]["kn"] == d["material"]["matrix"]["kn"]
    assert d["matrix_nu"] == pytest.approx(0.209, abs=1e-3)


@pytest.mark.parametrize("argv", [
    ["run", "--config", "does-not-exist.json"],
    ["campaign", "--config", "does-not-exist.json"],
])
def test_missing_file(argv, capsys):
    assert main(argv) == 2
    assert "error" in capsys.readouterr().err


def test_bad_config(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"l_m": -2}))
    assert main(["run", "--config", str(p)]) == 2
    assert "l_m" in capsys.readouterr().err


def test_bad_jobs(tmp_path):
    assert main(["campaign", "--config", "x.json", "--jobs", "0"]) == 2
