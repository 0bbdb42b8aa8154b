import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latfrac.campaign import derive_seed, point_config
from latfrac.config import (PRESETS, CampaignSpec, ConfigError, RunConfig, campaign_from_dict, content_hash,
                            parse_campaign, parse_config, run_config_from_dict)
from latfrac.grains import GradingSpec


class TestRunConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert cfg.geometry.protocol == "LD" and cfg.l_m == 2.0
        assert cfg.effective_gap == 0.5
        E, nu = cfg.derived_elastic
        assert nu == pytest.approx(0.209, abs=1e-3)

    @pytest.mark.parametrize("preset", PRESETS)
    def test_presets_round_trip(self, preset):
        cfg = run_config_from_dict({"preset": preset})
        again = run_config_from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again == cfg
        assert again.config_hash() == cfg.config_hash()

    def test_heterogeneous_round_trip(self):
        cfg = run_config_from_dict({"preset": "ld-40x160", "grading": {"kind": "monodisperse", "d": 10, "fraction": 0.4},
                                    "rescale_d": 6.0, "three_phase": False, "mesh_seed": 2**63 + 5})
        assert run_config_from_dict(cfg.to_dict()) == cfg
        assert cfg.material.itz.kn == cfg.material.matrix.kn

    def test_hash_sensitivity(self):
        a = RunConfig()
        assert a.config_hash() == RunConfig().config_hash()
        assert a.config_hash() != a.with_(mesh_seed=2).config_hash()
        assert a.config_hash() != a.with_(reaction_ratio=1e-5).config_hash()

    def test_content_hash_key_order(self):
        assert content_hash({"a": 1, "b": [1.0, 2]}) == content_hash({"b": [1.0, 2], "a": 1})

    def test_with_three_phase_resets_material(self):
        cfg = RunConfig().with_(three_phase=False)
        assert cfg.material.itz == cfg.material.matrix.__class__(**{**cfg.material.matrix.__dict__, "name": "itz"})

    def test_matrix_from_elastic(self):
        cfg = run_config_from_dict({"material": {"E": 13.2, "nu": 0.2}})
        assert cfg.material.matrix.kt == pytest.approx(5.5)
        assert cfg.material.inclusion.kn == pytest.approx(165.0)
        cfg = run_config_from_dict({"material": {"E": 13.2, "nu": 0.2, "matrix": {"sn0": 5.0}}})
        assert (cfg.material.matrix.kn, cfg.material.matrix.sn0) == (pytest.approx(16.5), 5.0)
        with pytest.raises(ConfigError, match="nu"):
            run_config_from_dict({"material": {"E": 13.2, "nu": 0.4}})

    @pytest.mark.parametrize("bad,field", [
        ({"l_m": -1}, "l_m"),
        ({"l_m": 30}, "l_m"),
        ({"perturbation": 0.6}, "perturbation"),
        ({"mesh_seed": -3}, "mesh_seed"),
        ({"mesh_seed": 1.5}, "mesh_seed"),
        ({"grading": {"kind": "sphere", "d": 4}}, "grading"),
        ({"grading": {"kind": "monodisperse", "d": 30, "fraction": 0.3}}, "grading.d"),
        ({"rescale_d": 4.0}, "rescale_d"),
        ({"analysis": {"fpz_energy": "e_total"}}, "analysis"),
        ({"geometry": {"width": 40, "height": 160, "protocol": "XX"}}, "geometry"),
        ({"three_phase": "yes"}, "three_phase"),
        ({"unknown": 1}, "unknown"),
        ({"preset": "nope"}, "preset"),
    ])
    def test_errors_name_field(self, bad, field):
        with pytest.raises(ConfigError) as info:
            run_config_from_dict(bad)
        assert field in str(info.value)

    def test_parse_file(self, tmp_path):
        p = tmp_path / "run.json"
        p.write_text(json.dumps({"preset": "dd-40x160", "mesh_seed": 4}))
        cfg = parse_config(p)
        assert cfg.geometry.protocol == "DD" and cfg.mesh_seed == 4
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            parse_config(p)
        with pytest.raises((ConfigError, FileNotFoundError)):
            parse_config(tmp_path / "missing.json")


class TestCampaign:
    def spec(self, **kw):
        d = {"base": {"preset": "ld-40x160"}, "kind": "path_a", "values": [4, 6, 8, 10], "phases": [True, False]}
        d.update(kw)
        return campaign_from_dict(d)

    def test_points(self):
        pts = self.spec().points()
        assert [p.label for p in pts[:4]] == ["3ph_d4", "3ph_d6", "3ph_d8", "3ph_d10"]
        assert pts[4].label == "2ph_d4" and len(pts) == 8

    def test_path_a_shares_centers(self):
        spec = self.spec()
        cfgs = [point_config(spec, p, 1) for p in spec.points()]
        assert len({c.grain_seed for c in cfgs}) == 1
        assert len({c.mesh_seed for c in cfgs}) == 1
        assert all(c.grading == GradingSpec(kind="monodisperse", d=10.0, fraction=0.4) for c in cfgs)
        assert [c.rescale_d for c in cfgs[:4]] == [4, 6, 8, 10]
        assert not cfgs[4].three_phase and cfgs[4].material.itz.kn == cfgs[4].material.matrix.kn
        assert point_config(spec, spec.points()[0], 2).grain_seed != cfgs[0].grain_seed

    def test_path_b_independent_placements(self):
        spec = self.spec(kind="path_b")
        cfgs = [point_config(spec, p, 0) for p in spec.points()[:4]]
        assert len({c.grain_seed for c in cfgs}) == 4
        assert all(c.rescale_d is None and c.grading.fraction == 0.4 for c in cfgs)

    def test_mesh_size(self):
        spec = self.spec(kind="mesh_size", values=[1, 2, 3], phases=[True])
        cfgs = [point_config(spec, p, 0) for p in spec.points()]
        assert [c.l_m for c in cfgs] == [1, 2, 3]
        assert all(c.grading is None for c in cfgs)
        assert len({c.mesh_seed for c in cfgs}) == 3

    def test_ligament(self):
        spec = campaign_from_dict({"base": {"preset": "ligament-L"}, "kind": "ligament", "values": [6.3, 16],
                                   "labels": ["L", "XS"]})
        pts = spec.points()
        assert [p.label for p in pts] == ["3ph_L_dmax6.3", "3ph_L_dmax16", "3ph_XS_dmax6.3", "3ph_XS_dmax16"]
        cfg = point_config(spec, pts[3], 0)
        assert cfg.geometry.notches[0][2] == 50 and cfg.grading.kind == "fuller" and cfg.l_m == 1.5

    def test_seed_derivation(self):
        s = derive_seed(2024, 0, 0, 0)
        assert 0 <= s < 2**64 and s == derive_seed(2024, 0, 0, 0)
        assert len({derive_seed(2024, a, b, c) for a in range(2) for b in range(3) for c in range(3)}) == 18

    def test_round_trip(self, tmp_path):
        spec = self.spec()
        again = campaign_from_dict(json.loads(json.dumps(spec.to_dict())))
        assert again.config_hash() == spec.config_hash()
        p = tmp_path / "c.json"
        p.write_text(json.dumps(spec.to_dict()))
        assert parse_campaign(p).config_hash() == spec.config_hash()

    @pytest.mark.parametrize("bad,field", [
        ({"kind": "path_z"}, "kind"),
        ({"values": "4,6"}, "values"),
        ({"values": [-4]}, "values"),
        ({"replicates": 0}, "replicates"),
        ({"kind": "ligament", "labels": ["XXL"]}, "labels"),
        ({"phases": ["yes"]}, "phases"),
    ])
    def test_errors(self, bad, field):
        with pytest.raises(ConfigError) as info:
            self.spec(**bad)
        assert field in str(info.value)


@settings(max_examples=30, deadline=None)
@given(l_m=st.floats(0.5, 5.0), seed=st.integers(0, 2**64 - 1), ratio=st.floats(1e-9, 0.5),
       three=st.booleans())
def test_hash_round_trip_property(l_m, seed, ratio, three):
    cfg = RunConfig(l_m=l_m, mesh_seed=seed, reaction_ratio=ratio, three_phase=three)
    again = run_config_from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again.config_hash() == cfg.config_hash()
    assert isinstance(CampaignSpec(cfg, "mesh_size", (l_m,)).config_hash(), str)
    assert np.isfinite(again.l_m)
