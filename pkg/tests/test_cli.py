"""End-to-end command-line checks: artifact determinism, exit codes,
and agreement between saved artifacts and library recomputation."""

import json
import time

import numpy as np
import pytest

import falltime.cli as cli
import falltime.dataset as ds
import falltime.detectors as det
import falltime.scenario as sc


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """Generated dataset plus trained binary models."""
    root = tmp_path_factory.mktemp("cliws")
    dataset = root / "ds"
    assert cli.main(["generate", "--out", str(dataset), "--count", "14",
                     "--seed", "2"]) == 0
    timings = {}
    for detector in ("nn", "svm"):
        t0 = time.monotonic()
        model = root / f"{detector}.npz"
        assert cli.main(["train", "--dataset", str(dataset),
                         "--detector", detector, "--lead", "1.0",
                         "--out", str(model)]) == 0
        out = root / f"eval_{detector}.json"
        assert cli.main(["eval", "--dataset", str(dataset), "--model",
                         str(model), "--out", str(out)]) == 0
        timings[detector] = time.monotonic() - t0
    return root, dataset, timings


def test_generate_is_byte_deterministic(ws, tmp_path):
    root, dataset, _ = ws
    other = tmp_path / "ds_again"
    assert cli.main(["generate", "--out", str(other), "--count", "14",
                     "--seed", "2"]) == 0
    assert tree_bytes(dataset) == tree_bytes(other)


def test_generate_seed_changes_output(ws, tmp_path):
    _, dataset, _ = ws
    other = tmp_path / "ds_seed4"
    assert cli.main(["generate", "--out", str(other), "--count", "14",
                     "--seed", "4"]) == 0
    a = tree_bytes(dataset)
    b = tree_bytes(other)
    assert a.keys() == b.keys()
    assert a != b


def test_generate_writes_run_config(ws):
    _, dataset, _ = ws
    cfg = json.loads((dataset / "run_config.json").read_text())
    assert cfg["config"]["seed"] == 2
    assert "config_hash" in cfg and "manifest_hash" in cfg
    # artifacts never embed output paths, so hashes are path independent
    assert "out" not in cfg["config"]


def test_train_and_eval_fast_enough(ws):
    _, _, timings = ws
    assert timings["nn"] < 60.0
    assert timings["svm"] < 60.0


def test_eval_payload_matches_library(ws, params):
    root, dataset, _ = ws
    payload = json.loads((root / "eval_nn.json").read_text())
    report = payload["report"]
    assert payload["model_extra"]["detector"] == "nn"
    assert 0.0 <= report["fpr"] <= 1.0
    assert 0.0 <= report["fnr"] <= 1.0
    assert len(payload["outcomes"]) > 0

    # recompute one trajectory's verdict stream from the saved model
    model, extra = det.load_model(root / "nn.npz")
    _, trajs = sc.load_dataset(dataset)
    fell = [t for t in trajs if t.fall_time is not None]
    traj = fell[0]
    ws_one = ds.build_window_set([traj], params,
                                 extra["feature_set_id"])
    vals = det.nn_decision_values(model, ws_one.X)
    fired = np.nonzero(vals > model.threshold)[0]
    expect = (float(ws_one.end_times[fired[0]]) if fired.size else None)
    out = next(o for o in payload["outcomes"]
               if o["traj_id"] == traj.id)
    if expect is None:
        assert out["declared"] is None
    else:
        assert out["declared"] == pytest.approx(expect)


def test_eval_rerun_is_identical(ws):
    root, dataset, _ = ws
    again = root / "eval_nn_again.json"
    assert cli.main(["eval", "--dataset", str(dataset), "--model",
                     str(root / "nn.npz"), "--out", str(again)]) == 0
    assert again.read_bytes() == (root / "eval_nn.json").read_bytes()


def test_saved_model_reload_verdicts(ws, params):
    root, dataset, _ = ws
    model, _ = det.load_model(root / "svm.npz")
    _, trajs = sc.load_dataset(dataset)
    w = ds.build_window_set(trajs[:2], params)
    vals = det.svm_decision_values(model, w.X)
    model2, _ = det.load_model(root / "svm.npz")
    assert np.array_equal(vals, det.svm_decision_values(model2, w.X))


def test_grid_search_writes_table(ws, tmp_path):
    _, dataset, _ = ws
    out = tmp_path / "grid.csv"
    rc = cli.main(["grid-search", "--dataset", str(dataset),
                   "--detector", "nn", "--regime", "both",
                   "--grid-step", "1.0", "--n-folds", "2",
                   "--fold", "0", "--out", str(out)])
    assert rc == 0
    text = out.read_text()
    assert "lead" in text.splitlines()[1]
    assert "chosen" in text
    assert "config_hash=" in text.splitlines()[0]


def test_grid_search_infeasible_exits_8(ws, tmp_path):
    _, dataset, _ = ws
    out = tmp_path / "grid_bad.csv"
    rc = cli.main(["grid-search", "--dataset", str(dataset),
                   "--detector", "nn", "--regime", "both",
                   "--grid-step", "2.0", "--n-folds", "2",
                   "--fold", "0", "--bounds=-1,-1",
                   "--out", str(out)])
    assert rc == 8
    # the candidate table is still written for inspection
    assert out.exists()


def test_multiclass_command(ws, tmp_path):
    root, dataset, _ = ws
    out = tmp_path / "mc.json"
    model_path = tmp_path / "mc.npz"
    rc = cli.main(["multiclass", "--dataset", str(dataset),
                   "--detector", "svm", "--lead-abrupt", "1.0",
                   "--lead-incipient", "1.0", "--n-folds", "2",
                   "--fold", "0", "--out", str(out),
                   "--out-model", str(model_path)])
    assert rc == 0
    payload = json.loads(out.read_text())
    assert "fpr" in payload["report"]
    assert "mean_latch_delay_s" in payload["identifier_stats"]
    model, extra = det.load_model(model_path)
    assert isinstance(model, det.MulticlassModel)


def test_report_and_summary_round_trip(ws, tmp_path):
    _, dataset, _ = ws
    rep = tmp_path / "rep"
    rc = cli.main(["report", "--dataset", str(dataset), "--out",
                   str(rep), "--grid-step", "1.0", "--n-folds", "2",
                   "--folds", "0"])
    assert rc == 0
    tables = (rep / "tables.txt").read_text()
    assert "minimum-variance detector" in tables
    summary = json.loads((rep / "summary.json").read_text())
    assert summary["manifest_hash"]

    rep2 = tmp_path / "rep2"
    rc = cli.main(["report", "--dataset", str(dataset), "--out",
                   str(rep2), "--summary", str(rep / "summary.json")])
    assert rc == 0
    assert (rep2 / "tables.txt").read_text() == tables


def test_report_refuses_foreign_summary(ws, tmp_path):
    root, dataset, _ = ws
    rep = tmp_path / "rep"
    assert cli.main(["report", "--dataset", str(dataset), "--out",
                     str(rep), "--grid-step", "1.0", "--n-folds", "2",
                     "--folds", "0"]) == 0
    other = tmp_path / "other_ds"
    assert cli.main(["generate", "--out", str(other), "--count", "6",
                     "--seed", "9"]) == 0
    rc = cli.main(["report", "--dataset", str(other), "--out",
                   str(tmp_path / "rep3"),
                   "--summary", str(rep / "summary.json")])
    assert rc == 9
    rc = cli.main(["report", "--dataset", str(other), "--out",
                   str(tmp_path / "rep4"),
                   "--summary", str(rep / "summary.json"), "--force"])
    assert rc == 0


def test_plot_data_rescores(ws, params, tmp_path):
    root, dataset, _ = ws
    _, trajs = sc.load_dataset(dataset)
    traj = next(t for t in trajs if t.fall_time is not None)
    out = tmp_path / "series.csv"
    rc = cli.main(["plot-data", "--dataset", str(dataset), "--model",
                   str(root / "nn.npz"), "--traj", traj.id,
                   "--out", str(out)])
    assert rc == 0
    lines = out.read_text().strip().splitlines()
    header = lines[1].split(",")
    assert header == ["end_time", "decision_value", "threshold",
                      "verdict"]
    cells = [ln.split(",") for ln in lines[2:]]
    rows = np.array([[float(v) for v in c[:3]] for c in cells])
    verdicts = np.array([c[3] == "faulty" for c in cells])
    model, extra = det.load_model(root / "nn.npz")
    w = ds.build_window_set([traj], params, extra["feature_set_id"])
    vals = det.nn_decision_values(model, w.X)
    assert rows.shape[0] == vals.size
    assert np.allclose(rows[:, 0], w.end_times, atol=1e-6)
    assert np.allclose(rows[:, 1], vals, rtol=1e-6)
    assert np.allclose(rows[:, 2], model.threshold, rtol=1e-6)
    assert np.array_equal(verdicts, vals > model.threshold)


def test_usage_errors():
    with pytest.raises(SystemExit) as err:
        cli.main([])
    assert err.value.code == 2


def test_unknown_config_key(ws, tmp_path):
    _, dataset, _ = ws
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus_key": 1}))
    with pytest.raises(SystemExit) as err:
        cli.main(["train", "--dataset", str(dataset), "--detector",
                  "nn", "--lead", "1.0", "--config", str(cfg),
                  "--out", str(tmp_path / "m.npz")])
    assert err.value.code == 2


def test_bad_lead_exits_6(ws, tmp_path):
    _, dataset, _ = ws
    rc = cli.main(["train", "--dataset", str(dataset), "--detector",
                   "nn", "--lead", "5.0",
                   "--out", str(tmp_path / "m.npz")])
    assert rc == 6


def test_missing_dataset_exits_2(tmp_path):
    rc = cli.main(["train", "--dataset", str(tmp_path / "nope"),
                   "--detector", "nn", "--lead", "1.0",
                   "--out", str(tmp_path / "m.npz")])
    assert rc == 2


def test_missing_robot_params_exits_2(tmp_path):
    rc = cli.main(["generate", "--out", str(tmp_path / "d"),
                   "--count", "2", "--seed", "0",
                   "--robot-params", str(tmp_path / "nope.txt")])
    assert rc == 2


def test_seed_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("FALLTIME_SEED", "3")
    out_env = tmp_path / "env_ds"
    assert cli.main(["generate", "--out", str(out_env),
                     "--count", "4"]) == 0
    out_flag = tmp_path / "flag_ds"
    monkeypatch.delenv("FALLTIME_SEED")
    assert cli.main(["generate", "--out", str(out_flag),
                     "--count", "4", "--seed", "3"]) == 0
    assert tree_bytes(out_env) == tree_bytes(out_flag)


def test_features_command(ws, tmp_path):
    _, dataset, _ = ws
    out = tmp_path / "features.csv"
    rc = cli.main(["features", "--dataset", str(dataset),
                   "--out", str(out)])
    assert rc == 0
    assert out.exists()
