import sys
import time
import warnings

import numpy as np

import falltime.dataset as ds
import falltime.evaluation as ev
import falltime.params as pm
import falltime.scenario as sc

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 1
params = pm.RobotParams().replace(foot_toe=0.08, foot_heel=0.08,
                                  i_foot=2.5 * 0.16**2 / 12.0)

t0 = time.monotonic()
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    manifest, trajs = sc.generate_dataset(
        sc.DatasetConfig(count_abrupt=100, count_incipient=100),
        seed=seed, params=params)
gen_s = time.monotonic() - t0
print(f"seed {seed} generation: {gen_s:.1f}s; fall fraction "
      f"{manifest['fall_fraction']:.3f} by kind "
      f"{manifest['fall_fraction_by_kind']}", flush=True)

gaps = np.array([tr.fall_time - tr.fault.t_start for tr in trajs
                 if tr.kind == "abrupt" and tr.fell])
gi = np.array([tr.fall_time - tr.fault.t_start for tr in trajs
               if tr.kind == "incipient" and tr.fell])
print(f"gap abrupt n={gaps.size} mean={gaps.mean():.2f} "
      f"median={np.median(gaps):.2f}; gap incipient n={gi.size} "
      f"mean={gi.mean():.2f} median={np.median(gi):.2f}", flush=True)

cfg = ev.ExperimentConfig(detectors=("nn", "svm"),
                          regimes=("abrupt", "incipient", "both"),
                          folds=(0,), n_folds=5)
t1 = time.monotonic()
result = ev.run_experiment(trajs, params, cfg)
bin_s = time.monotonic() - t1
print(f"binary experiment: {bin_s:.1f}s", flush=True)
leads = {}
for c in result.cells:
    if c.error:
        print(f"{c.detector} {c.regime} ERROR {c.error[:160]}", flush=True)
    else:
        leads[(c.detector, c.regime)] = c.test.avg_lead_time
        print(f"{c.detector:3s} {c.regime:9s} chosen={c.chosen_lead} "
              f"fpr={c.test.fpr:.3f} fnr={c.test.fnr:.3f} "
              f"lead={c.test.avg_lead_time:.3f}", flush=True)

ok = True
for det_name in ("nn", "svm"):
    a = leads.get((det_name, "abrupt"))
    i = leads.get((det_name, "incipient"))
    if a is None or i is None or not i > a:
        ok = False
        print(f"ORDERING FAIL {det_name}: incipient {i} !> abrupt {a}",
              flush=True)
nb = leads.get(("nn", "both"))
sb = leads.get(("svm", "both"))
if nb is None or sb is None or not sb >= nb:
    ok = False
    print(f"ORDERING FAIL both: svm {sb} !>= nn {nb}", flush=True)
if ok:
    print("ALL ORDERINGS HOLD", flush=True)

t2 = time.monotonic()
ws = ds.build_window_set(trajs, params, cfg.feature_set_id, cfg.n_window)
ws_vel = ds.build_window_set(trajs, params, ev.VELOCITY_FEATURE_SET,
                             cfg.n_window)
splits = ds.make_splits(trajs, kind=ds.SPLIT_KFOLD, seed=cfg.split_seed,
                        n_folds=cfg.n_folds)
train_ids = ev._regime_ids(ws, splits.train_ids(0), ev.REGIME_MULTICLASS)
test_ids = ev._regime_ids(ws, splits.fold_ids(0), ev.REGIME_MULTICLASS)
for det_name in ("nn", "svm"):
    la = result.cell(det_name, "abrupt", 0).chosen_lead
    li = result.cell(det_name, "incipient", 0).chosen_lead
    model, tstats = ev.train_multiclass(
        trajs, ws, ws_vel, train_ids, la, li, det_name, cfg)
    report, stats = ev.evaluate_multiclass(model, trajs, ws, ws_vel,
                                           test_ids, cfg, 0)
    print(f"mc {det_name}: fpr={report.fpr:.3f} fnr={report.fnr:.3f} "
          f"lead={report.avg_lead_time} "
          f"latch_s={stats['mean_latch_delay_s']} "
          f"latch_n={stats['mean_latch_delay_samples']} {tstats}",
          flush=True)
    if det_name == "svm" and sb is not None:
        margin = report.avg_lead_time - (sb - 0.03)
        print(f"  mc-svm vs binary-both-svm margin: {margin:+.3f}",
              flush=True)
mc_s = time.monotonic() - t2
print(f"multiclass: {mc_s:.1f}s  TOTAL {gen_s + bin_s + mc_s:.0f}s",
      flush=True)
