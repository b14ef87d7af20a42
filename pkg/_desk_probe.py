import time
import warnings

import numpy as np

import falltime.dataset as ds
import falltime.detectors as det
import falltime.evaluation as ev
import falltime.params as pm
import falltime.scenario as sc

params = pm.RobotParams()

t0 = time.monotonic()
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    manifest, trajs = sc.generate_dataset(
        sc.DatasetConfig(count_abrupt=100, count_incipient=100),
        seed=1, params=params)
gen_s = time.monotonic() - t0
print(f"generation: {gen_s:.1f}s; fall fraction "
      f"{manifest['fall_fraction']:.3f} by kind "
      f"{manifest['fall_fraction_by_kind']}", flush=True)

cfg = ev.ExperimentConfig(detectors=("nn", "svm"),
                          regimes=("abrupt", "incipient", "both"),
                          folds=(0,), n_folds=5)
t1 = time.monotonic()
result = ev.run_experiment(trajs, params, cfg)
bin_s = time.monotonic() - t1
print(f"binary experiment: {bin_s:.1f}s", flush=True)
for c in result.cells:
    if c.error:
        print(c.detector, c.regime, "ERROR", c.error[:200], flush=True)
    else:
        print(f"{c.detector:3s} {c.regime:9s} chosen={c.chosen_lead} "
              f"test fpr={c.test.fpr:.3f} fnr={c.test.fnr:.3f} "
              f"lead={c.test.avg_lead_time}", flush=True)

t2 = time.monotonic()
ws = ds.build_window_set(trajs, params, cfg.feature_set_id, cfg.n_window)
ws_vel = ds.build_window_set(trajs, params, ev.VELOCITY_FEATURE_SET,
                             cfg.n_window)
splits = ds.make_splits(trajs, kind=ds.SPLIT_KFOLD, seed=cfg.split_seed,
                        n_folds=cfg.n_folds)
train_ids = ev._regime_ids(ws, splits.train_ids(0), ev.REGIME_MULTICLASS)
test_ids = ev._regime_ids(ws, splits.fold_ids(0), ev.REGIME_MULTICLASS)
for detector in ("nn", "svm"):
    la = result.cell(detector, "abrupt", 0).chosen_lead
    li = result.cell(detector, "incipient", 0).chosen_lead
    model, train_stats = ev.train_multiclass(
        trajs, ws, ws_vel, train_ids, la, li, detector, cfg)
    report, stats = ev.evaluate_multiclass(model, trajs, ws, ws_vel,
                                           test_ids, cfg, 0)
    print(f"mc {detector}: fpr={report.fpr:.3f} fnr={report.fnr:.3f} "
          f"lead={report.avg_lead_time} latch_delay_s="
          f"{stats['mean_latch_delay_s']} samples="
          f"{stats['mean_latch_delay_samples']} train={train_stats}",
          flush=True)
mc_s = time.monotonic() - t2
print(f"multiclass: {mc_s:.1f}s", flush=True)
print(f"TOTAL gen={gen_s:.0f} bin={bin_s:.0f} mc={mc_s:.0f}", flush=True)
