import warnings

import numpy as np

import falltime.dataset as ds
import falltime.detectors as det
import falltime.evaluation as ev
import falltime.params as pm
import falltime.scenario as sc

params = pm.RobotParams()
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    manifest, trajs = sc.generate_dataset(
        sc.DatasetConfig(count_abrupt=100, count_incipient=100),
        seed=1, params=params)

cfg = ev.ExperimentConfig(detectors=("nn", "svm"),
                          regimes=("abrupt",), folds=(0,), n_folds=5)
ws = ds.build_window_set(trajs, params, cfg.feature_set_id, cfg.n_window)
splits = ds.make_splits(trajs, kind=ds.SPLIT_KFOLD, seed=cfg.split_seed,
                        n_folds=cfg.n_folds)
by_id = {tr.id: tr for tr in trajs}

# fall development time for abrupt fallers across the whole dataset
gaps = [tr.fall_time - tr.fault.t_start for tr in trajs
        if tr.kind == "abrupt" and tr.fell]
gaps = np.array(gaps)
print(f"abrupt fallers n={len(gaps)} fall-onset: mean={gaps.mean():.2f} "
      f"median={np.median(gaps):.2f} min={gaps.min():.2f} "
      f"max={gaps.max():.2f}")
gi = [tr.fall_time - tr.fault.t_start for tr in trajs
      if tr.kind == "incipient" and tr.fell]
gi = np.array(gi)
print(f"incipient fallers n={len(gi)} fall-onset: mean={gi.mean():.2f} "
      f"median={np.median(gi):.2f} min={gi.min():.2f} "
      f"max={gi.max():.2f}")

for detector in ("svm", "nn"):
    cell = ev._run_binary_cell(ws, splits, 0, "abrupt", detector, cfg)
    print(f"\n{detector} abrupt chosen={cell.chosen_lead} "
          f"test lead={cell.test.avg_lead_time:.3f}")
    model = cell.model
    test_ids = ev._regime_ids(ws, splits.fold_ids(0), "abrupt")
    pre = 0
    post = 0
    for tid in test_ids:
        tr = by_id[tid]
        if not tr.fell:
            continue
        rows = ws.rows_for_ids([tid])
        vals = det.detector_decision_values(model, ws.X[rows])
        faulty = det.detector_faulty(model, vals)
        declared = det.monitor(faulty, 1, 1, end_times=ws.end_times[rows])
        onset = tr.fault.t_start
        if declared is None:
            print(f"  {tid}: never declared, fall={tr.fall_time:.2f}")
            continue
        rel = declared - onset
        if rel < 0:
            pre += 1
        else:
            post += 1
        print(f"  {tid}: onset={onset:.2f} declared={declared:.2f} "
              f"fall={tr.fall_time:.2f} decl-onset={rel:+.2f} "
              f"lead={tr.fall_time - declared:.2f}")
    print(f"  fired before onset: {pre}, at/after onset: {post}")
