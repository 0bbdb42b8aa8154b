import numpy as np
import pytest

from latfrac.campaign import RunSummary, _task, aggregate, derive_seed, point_config, run_campaign
from latfrac.config import campaign_from_dict

SMALL = {"geometry": {"width": 20, "height": 60, "notches": [[0, 29, 3, 31], [17, 29, 20, 31]], "protocol": "LD"},
         "l_m": 2.0}


def spec(**kw):
    d = {"base": SMALL, "kind": "path_b", "values": [3, 4], "replicates": 2, "phases": [True], "fraction": 0.3}
    d.update(kw)
    return campaign_from_dict(d)


def fake_runs(sp, values):
    """Successful run summaries with the given FPZ widths, point-major."""
    runs, it = [], iter(values)
    for pt in sp.points():
        for rep in range(sp.replicates):
            runs.append(RunSummary(pt.index, pt.label, rep, "h", 0, 0, pt.params["d"], pt.params["three_phase"],
                                   mean_mesh_size=2.0, l_fpz=next(it), lc=1.0))
    return runs


class TestAggregate:
    def test_means_and_fit(self):
        sp = spec(values=[2, 3, 4])
        summary = aggregate(sp, fake_runs(sp, [1.0, 3.0, 3.0, 5.0, 5.0, 7.0]))
        assert [p.l_fpz_mean for p in summary.points] == [2.0, 4.0, 6.0]
        assert [p.l_fpz_std for p in summary.points] == [1.0, 1.0, 1.0]
        fit = summary.fits["3ph"]
        assert (fit["slope"], fit["intercept"], fit["r2"]) == pytest.approx((2.0, -2.0, 1.0))
        assert fit["spearman"] == pytest.approx(1.0)

    def test_failures_kept_out_of_means(self):
        sp = spec()
        runs = fake_runs(sp, [1.0, 3.0, 5.0, 7.0])
        runs[1].error = "SolverError: boom"
        summary = aggregate(sp, runs)
        assert [p.n_failed for p in summary.points] == [1, 0]
        assert summary.points[0].l_fpz_mean == 1.0
        assert summary.failures == [runs[1]]

    def test_series_by_phase(self):
        sp = spec(phases=[True, False])
        summary = aggregate(sp, fake_runs(sp, np.arange(8.0)))
        x, m, _ = summary.series(three_phase=False)
        assert x.tolist() == [3.0, 4.0] and m.tolist() == [4.5, 6.5]
        assert set(summary.fits) == {"3ph", "2ph"}


def test_failed_task_reported(monkeypatch):
    import latfrac.campaign as camp

    def boom(cfg):
        raise RuntimeError("no convergence")

    monkeypatch.setattr(camp, "simulate", boom)
    sp = spec()
    head = RunSummary(0, "x", 0, "h", 0, 0, 3.0, True)
    out = _task((point_config(sp, sp.points()[0], 0), head))
    assert not out.ok and out.error == "RuntimeError: no convergence"


def test_small_campaign_runs():
    sp = spec()
    summary = run_campaign(sp)
    assert not summary.failures
    assert [(r.point, r.replicate) for r in summary.runs] == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert all(np.isfinite(r.l_fpz) and r.n_events > 0 for r in summary.runs)
    assert summary.runs[0].grain_seed == derive_seed(sp.master_seed, 1, 0, 0)
