import time
import warnings

import falltime.dataset as ds
import falltime.evaluation as ev
import falltime.params as pm
import falltime.scenario as sc

params = pm.RobotParams()
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    manifest, trajs = sc.generate_dataset(
        sc.DatasetConfig(count_abrupt=100, count_incipient=100),
        seed=1, params=params)

for C in (1.0, 2.0):
    cfg = ev.ExperimentConfig(detectors=("svm",),
                              regimes=("abrupt", "incipient", "both"),
                              folds=(0,), n_folds=5, C=C)
    t0 = time.monotonic()
    result = ev.run_experiment(trajs, params, cfg)
    dt = time.monotonic() - t0
    print(f"C={C} ({dt:.0f}s)")
    for c in result.cells:
        if c.error:
            print(f"  svm {c.regime}: ERROR {c.error[:160]}")
        else:
            print(f"  svm {c.regime:9s} chosen={c.chosen_lead} "
                  f"fpr={c.test.fpr:.3f} fnr={c.test.fnr:.3f} "
                  f"lead={c.test.avg_lead_time}")
