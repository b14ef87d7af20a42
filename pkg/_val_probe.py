"""Measure grid search with a held-out validation split (spec default).

Mirrors _run_binary_cell but trains on 75% of the fold's training pool
and judges lead feasibility on train+validation rates together.
"""
import time

import numpy as np

import falltime.dataset as ds
import falltime.detectors as det
import falltime.evaluation as ev
import falltime.params as pm
import falltime.scenario as sc

t0 = time.monotonic()
params = pm.RobotParams()
cfg = ev.ExperimentConfig()
dcfg = sc.DatasetConfig(count_abrupt=100, count_incipient=100)
trajectories = sc.generate_dataset(dcfg, seed=1, params=params)
print(f"gen {time.monotonic() - t0:.1f}s")

ws = ds.build_window_set(trajectories, params)
splits = ds.make_splits(trajectories, seed=0, n_folds=5)
fold = 0

meta = {tid: (k, o) for tid, k, o in zip(ws.ids, ws.kinds, ws.outcomes)}


def val_split(pool_ids, frac=4):
    """Every frac-th trajectory of each (kind, outcome) stratum."""
    strata = {}
    for tid in pool_ids:
        strata.setdefault(meta[tid], []).append(tid)
    tr, va = [], []
    for key in sorted(strata):
        for pos, tid in enumerate(strata[key]):
            (va if pos % frac == frac - 1 else tr).append(tid)
    return [t for t in pool_ids if t in set(tr)], \
           [t for t in pool_ids if t in set(va)]


def run_cell(regime, detector):
    pool = ev._regime_ids(ws, splits.train_ids(fold), regime)
    test_ids = ev._regime_ids(ws, splits.fold_ids(fold), regime)
    train_ids, valid_ids = val_split(pool)
    eval_ids = train_ids + valid_ids

    train_rows = ws.rows_for_ids(train_ids)
    eval_rows = ws.rows_for_ids(eval_ids)
    test_rows = ws.rows_for_ids(test_ids)
    eval_idx = ev._cell_indices(ws, eval_ids)
    test_idx = ev._cell_indices(ws, test_ids)
    eval_groups = ev._group_rows(ws, eval_rows)
    test_groups = ev._group_rows(ws, test_rows)

    scaler = ds.fit_scaler(ws.X[train_rows])
    Xs_train = ds.apply_scaler(scaler, ws.X[train_rows])
    m = ws.n_window

    if detector == ev.DETECTOR_NN:
        diffs = Xs_train[:, -1, :] - Xs_train[:, :-1, :].mean(axis=1)
        c = (m - 1.0) / m

        def trainer(lead):
            y = ws.labels(lead)[train_rows]
            safe = y == 1
            if safe.sum() < 2:
                raise det.InsufficientData("no safe windows")
            frames_safe = Xs_train[safe].reshape(-1, ws.dim)
            R = det.dcor_matrix(frames_safe)
            R_inv = det.regularized_inverse(R, cfg.lam)
            efforts = c * np.einsum("nd,de,ne->n", diffs, R_inv, diffs)
            threshold = float(efforts[safe].max())
            return det.NnModel(R=R, R_inv=R_inv, threshold=threshold,
                               n_window=m, scaler=scaler)
    else:
        flat = Xs_train.reshape(Xs_train.shape[0], -1)
        gamma = cfg.gamma if cfg.gamma else det.default_gamma(flat)
        cache = det.KernelCache(flat, gamma, cfg.cache_bytes)

        def trainer(lead):
            y = ws.labels(lead)[train_rows].astype(float)
            return det.svm_train(ws.X[train_rows], y, C=cfg.C,
                                 gamma=gamma, tol=cfg.tol,
                                 scaler=scaler, cache=cache)

    def evaluator(model, lead):
        values = det.detector_decision_values(model, ws.X[eval_rows])
        faulty = det.detector_faulty(model, values)
        outcomes = ev._outcomes(ws, eval_rows, eval_groups, eval_idx,
                                faulty, cfg.n_monitor, cfg.fire_threshold)
        return ev.report_from_outcomes(outcomes, detector, regime, fold)

    models = {}

    def caching(lead):
        mdl = trainer(lead)
        models[lead] = mdl
        return mdl

    try:
        grid = ev.grid_search_lead_time(caching, evaluator,
                                        cfg.grid, cfg.bounds)
    except ev.NoFeasibleLeadTime as exc:
        print(f"{detector:3s} {regime:9s} INFEASIBLE")
        print(exc.table)
        return None
    model = models[grid.chosen]
    values = det.detector_decision_values(model, ws.X[test_rows])
    faulty = det.detector_faulty(model, values)
    outcomes = ev._outcomes(ws, test_rows, test_groups, test_idx, faulty,
                            cfg.n_monitor, cfg.fire_threshold)
    rep = ev.report_from_outcomes(outcomes, detector, regime, fold)
    infeas = [f"{r.lead:.1f}({r.fpr:.2f}/{r.fnr:.2f})"
              for r in grid.rows if not r.feasible]
    print(f"{detector:3s} {regime:9s} chosen={grid.chosen:.1f} "
          f"test fpr={rep.fpr:.3f} fnr={rep.fnr:.3f} "
          f"lead={rep.avg_lead_time if rep.avg_lead_time is not None else float('nan'):.3f}  "
          f"infeasible: {' '.join(infeas) if infeas else 'none'}")
    return rep


leads = {}
for detector in (ev.DETECTOR_NN, ev.DETECTOR_SVM):
    for regime in (ev.REGIME_ABRUPT, ev.REGIME_INCIPIENT, ev.REGIME_BOTH):
        t1 = time.monotonic()
        rep = run_cell(regime, detector)
        if rep is not None:
            leads[(detector, regime)] = rep.avg_lead_time
        print(f"    cell {time.monotonic() - t1:.1f}s")

for detector in (ev.DETECTOR_NN, ev.DETECTOR_SVM):
    a = leads.get((detector, ev.REGIME_ABRUPT))
    i = leads.get((detector, ev.REGIME_INCIPIENT))
    if a is not None and i is not None:
        tag = "OK  " if i > a else "FAIL"
        print(f"ordering {tag} {detector}: incipient {i:.3f} vs abrupt {a:.3f}")
nb = leads.get((ev.DETECTOR_NN, ev.REGIME_BOTH))
sb = leads.get((ev.DETECTOR_SVM, ev.REGIME_BOTH))
if nb is not None and sb is not None:
    tag = "OK  " if sb >= nb else "FAIL"
    print(f"svm-vs-nn {tag}: svm both {sb:.3f} vs nn both {nb:.3f}")
print(f"TOTAL {time.monotonic() - t0:.1f}s")
