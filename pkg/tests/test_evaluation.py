"""Trajectory-level scoring, the lead-time grid search, aggregation
identities, and the full experiment runner at toy scale."""

import json
import warnings

import numpy as np
import pytest

import falltime.dataset as ds
import falltime.detectors as det
import falltime.evaluation as ev
import falltime.scenario as sc
from falltime.errors import InsufficientData, NoFeasibleLeadTime


@pytest.fixture(scope="module")
def eval_dataset(params):
    cfg = sc.DatasetConfig(count_abrupt=7, count_incipient=7)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, trajs = sc.generate_dataset(cfg, seed=2, params=params)
    return trajs


def rigged_nn(threshold, d=7):
    return det.NnModel(R=np.eye(d), R_inv=np.eye(d),
                       threshold=threshold, n_window=10,
                       scaler=ds.ScalerParams(min_=np.zeros(d),
                                              max_=np.ones(d)))


def test_lead_time():
    assert ev.lead_time(4.2, 5.0) == pytest.approx(0.8)


def test_report_from_outcomes_hand_scored():
    outs = [
        ev.TrajectoryOutcome("s0", False, None, None, None),
        ev.TrajectoryOutcome("s1", False, None, 3.0, None),
        ev.TrajectoryOutcome("f0", True, 5.0, 4.5, 0.5),
        ev.TrajectoryOutcome("f1", True, 4.0, None, None),
        ev.TrajectoryOutcome("f2", True, 6.0, 4.5, 1.5),
    ]
    rep = ev.report_from_outcomes(outs, "nn", "both", 0)
    assert rep.n_safe == 2 and rep.n_fall == 3
    assert rep.n_declared_falls == 2
    assert rep.fpr == pytest.approx(0.5)
    assert rep.fnr == pytest.approx(1.0 / 3.0)
    assert rep.avg_lead_time == pytest.approx(1.0)


def test_report_with_no_falls():
    outs = [ev.TrajectoryOutcome("s0", False, None, None, None)]
    rep = ev.report_from_outcomes(outs, "nn", "both", 0)
    assert rep.fnr == 0.0
    assert rep.avg_lead_time is None


def test_default_grid():
    grid = ev.default_grid()
    assert grid.size == 21
    assert grid[0] == 0.0 and grid[-1] == 2.0
    assert np.allclose(np.diff(grid), 0.1, atol=1e-12)
    assert np.array_equal(ev.default_grid(0.5, 2.0),
                          [0.0, 0.5, 1.0, 1.5, 2.0])


def scripted_search(rates, bounds=(0.0, 0.0), grid=None):
    """rates: lead -> (fpr, fnr) on the training side."""
    def trainer(lead):
        return ("model", lead)

    def evaluator(model, lead):
        fpr, fnr = rates[lead]
        return ev.EvalReport(detector="nn", regime="both", fold=0,
                             n_safe=10, n_fall=10, n_declared_falls=10,
                             fpr=fpr, fnr=fnr, avg_lead_time=lead)

    if grid is None:
        grid = sorted(rates)
    return ev.grid_search_lead_time(trainer, evaluator, grid=grid,
                                    bounds=bounds)


def test_grid_search_keeps_largest_qualifying_lead():
    res = scripted_search({0.0: (0.0, 1.0), 0.5: (0.0, 0.0),
                           1.0: (0.0, 0.0), 1.5: (0.2, 0.0),
                           2.0: (0.0, 0.3)})
    assert res.chosen == 1.0
    feas = [r.lead for r in res.rows if r.feasible]
    assert feas == [0.5, 1.0]


def test_grid_search_all_qualify_takes_maximum():
    res = scripted_search({l: (0.0, 0.0) for l in
                           (0.0, 0.5, 1.0, 1.5, 2.0)})
    assert res.chosen == 2.0


def test_grid_search_bounds_relax():
    rates = {0.0: (0.3, 0.0), 1.0: (0.3, 0.0), 2.0: (0.5, 0.1)}
    with pytest.raises(NoFeasibleLeadTime):
        scripted_search(rates)
    res = scripted_search(rates, bounds=(0.35, 0.0))
    assert res.chosen == 1.0


def test_grid_search_nothing_feasible_reports_table():
    with pytest.raises(NoFeasibleLeadTime) as err:
        scripted_search({0.0: (1.0, 1.0), 2.0: (1.0, 1.0)})
    assert err.value.table
    assert "2" in err.value.table
    assert str(err.value)


def test_grid_search_training_errors_mark_candidates():
    def trainer(lead):
        if lead < 1.0:
            raise InsufficientData("not enough windows")
        return "model"

    def evaluator(model, lead):
        return ev.EvalReport(detector="nn", regime="both", fold=0,
                             n_safe=1, n_fall=1, n_declared_falls=1,
                             fpr=0.0, fnr=0.0, avg_lead_time=lead)

    res = ev.grid_search_lead_time(trainer, evaluator,
                                   grid=[0.0, 0.5, 1.0, 1.5])
    assert res.chosen == 1.5
    notes = {r.lead: r.note for r in res.rows}
    assert "not enough windows" in notes[0.0]
    assert not res.rows[0].feasible
    assert np.isnan(res.rows[0].fpr)


def test_aggregate_single_cell_identity():
    rep = ev.EvalReport(detector="nn", regime="both", fold=0,
                        n_safe=8, n_fall=12, n_declared_falls=10,
                        fpr=0.25, fnr=1.0 / 6.0, avg_lead_time=0.9)
    cell = ev.CellResult(detector="nn", regime="both", fold=0,
                         chosen_lead=1.4, test=rep)
    agg = ev.aggregate_cells([cell])
    assert agg["fpr"] == pytest.approx(0.25, abs=1e-12)
    assert agg["fnr"] == pytest.approx(1.0 / 6.0, abs=1e-12)
    assert agg["avg_lead_time"] == pytest.approx(0.9, abs=1e-12)
    assert agg["mean_chosen_lead"] == pytest.approx(1.4)
    assert agg["n_safe"] == 8 and agg["n_fall"] == 12


def test_aggregate_weights_by_trajectories():
    rep1 = ev.EvalReport(detector="nn", regime="both", fold=0,
                         n_safe=4, n_fall=6, n_declared_falls=6,
                         fpr=0.5, fnr=0.0, avg_lead_time=1.0)
    rep2 = ev.EvalReport(detector="nn", regime="both", fold=1,
                         n_safe=8, n_fall=2, n_declared_falls=1,
                         fpr=0.125, fnr=0.5, avg_lead_time=0.3)
    cells = [ev.CellResult(detector="nn", regime="both", fold=f,
                           chosen_lead=1.0, test=r)
             for f, r in ((0, rep1), (1, rep2))]
    agg = ev.aggregate_cells(cells)
    assert agg["fpr"] == pytest.approx((0.5 * 4 + 0.125 * 8) / 12,
                                       abs=1e-12)
    assert agg["fnr"] == pytest.approx((0.0 * 6 + 0.5 * 2) / 8,
                                       abs=1e-12)
    assert agg["avg_lead_time"] == pytest.approx(
        (1.0 * 6 + 0.3 * 1) / 7, abs=1e-12)
    assert agg["folds"] == [0, 1]


def test_aggregate_skips_failed_cells():
    rep = ev.EvalReport(detector="nn", regime="both", fold=0,
                        n_safe=1, n_fall=1, n_declared_falls=1,
                        fpr=0.0, fnr=0.0, avg_lead_time=1.0)
    good = ev.CellResult(detector="nn", regime="both", fold=0,
                         chosen_lead=1.0, test=rep)
    bad = ev.CellResult(detector="nn", regime="both", fold=1,
                        error="boom")
    agg = ev.aggregate_cells([good, bad])
    assert agg["folds"] == [0]
    assert ev.aggregate_cells([bad]) is None


def test_evaluate_with_fire_everything_model(params, eval_dataset):
    trajs = eval_dataset[:6]
    rep = ev.evaluate(rigged_nn(-1.0), trajs, params, regime="both",
                      fold=0)
    falls = [t for t in trajs if t.fall_time is not None]
    safes = [t for t in trajs if t.fall_time is None]
    assert rep.fpr == (1.0 if safes else 0.0)
    assert rep.fnr == 0.0
    assert rep.n_declared_falls == len(falls)
    # every trajectory is declared at its very first window
    by_id = {o.traj_id: o for o in rep.outcomes}
    for t in falls:
        out = by_id[t.id]
        assert out.declared == pytest.approx(t.t[9])
        assert out.lead == pytest.approx(t.fall_time - t.t[9])
    assert rep.avg_lead_time == pytest.approx(
        np.mean([t.fall_time - t.t[9] for t in falls]))


def test_evaluate_with_mute_model(params, eval_dataset):
    trajs = eval_dataset[:6]
    rep = ev.evaluate(rigged_nn(1e18), trajs, params, regime="both",
                      fold=0)
    assert rep.fpr == 0.0
    assert rep.fnr == (1.0 if rep.n_fall else 0.0)
    assert rep.n_declared_falls == 0
    assert rep.avg_lead_time is None


def test_evaluate_monitor_debounces(params, eval_dataset):
    # a 2-of-2 monitor can only fire later (or never), not earlier
    trajs = eval_dataset
    loose = ev.evaluate(rigged_nn(5.0), trajs, params, regime="both",
                        fold=0)
    tight = ev.evaluate(rigged_nn(5.0), trajs, params, regime="both",
                        fold=0, n_monitor=2, fire_threshold=2)
    a = {o.traj_id: o.declared for o in loose.outcomes}
    b = {o.traj_id: o.declared for o in tight.outcomes}
    for tid in a:
        if b[tid] is not None:
            assert a[tid] is not None
            assert b[tid] >= a[tid]


@pytest.fixture(scope="module")
def tiny_result(params, eval_dataset):
    cfg = ev.ExperimentConfig(grid_step=1.0, n_folds=2, folds=(0,),
                              split_seed=0)
    return ev.run_experiment(eval_dataset, params, cfg), cfg


def test_run_experiment_covers_all_cells(tiny_result):
    result, cfg = tiny_result
    combos = {(c.detector, c.regime, c.fold) for c in result.cells}
    expect = {(d, r, 0) for d in ("nn", "svm")
              for r in ("abrupt", "incipient", "both", "multiclass")}
    assert combos == expect
    for cell in result.cells:
        assert cell.error is None, (cell.detector, cell.regime,
                                    cell.error)
        assert cell.test is not None
        if cell.regime != "multiclass":
            assert cell.chosen_lead is not None
            assert len(cell.grid.rows) == 3
            assert cell.grid.chosen == cell.chosen_lead


def test_run_experiment_multiclass_uses_binary_leads(tiny_result):
    result, _ = tiny_result
    for detector in ("nn", "svm"):
        mc = result.cell(detector, "multiclass", 0)
        ab = result.cell(detector, "abrupt", 0)
        inc = result.cell(detector, "incipient", 0)
        assert mc.identifier_stats["lead_abrupt"] == ab.chosen_lead
        assert mc.identifier_stats["lead_incipient"] == inc.chosen_lead
        assert isinstance(mc.model, det.MulticlassModel)


def test_render_tables(tiny_result):
    result, _ = tiny_result
    text = ev.render_tables(result)
    assert "minimum-variance detector" in text
    assert "svm detector" in text
    assert "multi-class pipeline" in text
    assert "mean_latch_delay_s" in text
    assert "avg_lead_time_s" in text
    for regime in ("abrupt", "incipient", "both"):
        assert regime in text


def test_result_summary_serializes(tiny_result):
    result, _ = tiny_result
    summary = ev.result_summary(result, config_hash="abc",
                                manifest_hash="def")
    text = json.dumps(summary)
    back = json.loads(text)
    assert back["config_hash"] == "abc"
    assert back["manifest_hash"] == "def"
    assert len(back["cells"]) == len(result.cells)


def test_experiment_config_round_trip():
    cfg = ev.ExperimentConfig(detectors=("nn",), grid_step=0.5,
                              bounds=(0.1, 0.2), folds=(0, 2))
    back = ev.ExperimentConfig.from_dict(cfg.to_dict())
    assert back == cfg
    with pytest.raises(ValueError):
        ev.ExperimentConfig.from_dict({"nope": 1})


def test_experiment_config_grid():
    cfg = ev.ExperimentConfig(grid_step=0.5, grid_max=2.0)
    assert np.array_equal(cfg.grid, [0.0, 0.5, 1.0, 1.5, 2.0])
