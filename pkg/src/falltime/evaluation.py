"""Metrics, training-lead-time grid search, experiment orchestration
over stratified folds, and report rendering.

Rates are trajectory-level: a false positive is a safe trajectory with
any declaration, a false negative a fall trajectory with none. Lead
time is how far before the fall the declaration landed. The grid
search trains one detector per candidate training lead time, keeps the
candidates whose train-set rates meet the bounds, and picks the
largest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import detectors as det
from .dataset import (N_WINDOW_DEFAULT, WindowSet, apply_scaler,
                      build_window_set, fit_scaler, identifier_windows,
                      make_splits)
from .errors import (InsufficientData, NoConvergence, NoFeasibleLeadTime,
                     SingularR)
from .features import DEFAULT_FEATURE_SET
from .scenario import KIND_ABRUPT, KIND_INCIPIENT, KIND_NONE

REGIME_ABRUPT = "abrupt"
REGIME_INCIPIENT = "incipient"
REGIME_BOTH = "both"
REGIME_MULTICLASS = "multiclass"
BINARY_REGIMES = (REGIME_ABRUPT, REGIME_INCIPIENT, REGIME_BOTH)

DETECTOR_NN = "nn"
DETECTOR_SVM = "svm"

VELOCITY_FEATURE_SET = "joint-velocities"

_REGIME_KINDS = {
    REGIME_ABRUPT: (KIND_ABRUPT, KIND_NONE),
    REGIME_INCIPIENT: (KIND_INCIPIENT, KIND_NONE),
    REGIME_BOTH: (KIND_ABRUPT, KIND_INCIPIENT, KIND_NONE),
    REGIME_MULTICLASS: (KIND_ABRUPT, KIND_INCIPIENT, KIND_NONE),
}


def lead_time(declared: float, fall: float) -> float:
    """Seconds between the declaration and the actual fall."""
    return fall - declared


@dataclass
class TrajectoryOutcome:
    traj_id: str
    fell: bool
    fall_time: float | None
    declared: float | None
    lead: float | None


@dataclass
class EvalReport:
    detector: str
    regime: str
    fold: int
    n_safe: int
    n_fall: int
    n_declared_falls: int
    fpr: float
    fnr: float
    avg_lead_time: float | None
    outcomes: tuple = ()


def report_from_outcomes(outcomes, detector: str, regime: str,
                         fold: int) -> EvalReport:
    safe = [o for o in outcomes if not o.fell]
    falls = [o for o in outcomes if o.fell]
    declared_leads = [o.lead for o in falls if o.lead is not None]
    fpr = (sum(o.declared is not None for o in safe) / len(safe)
           if safe else 0.0)
    fnr = (sum(o.declared is None for o in falls) / len(falls)
           if falls else 0.0)
    avg = (float(np.mean(declared_leads)) if declared_leads else None)
    return EvalReport(detector=detector, regime=regime, fold=fold,
                      n_safe=len(safe), n_fall=len(falls),
                      n_declared_falls=len(declared_leads),
                      fpr=fpr, fnr=fnr, avg_lead_time=avg,
                      outcomes=tuple(outcomes))


@dataclass
class GridSearchRow:
    lead: float
    fpr: float
    fnr: float
    avg_lead_time: float | None
    feasible: bool
    note: str = ""


@dataclass
class GridSearchResult:
    rows: tuple
    chosen: float | None
    bounds: tuple

    def table_text(self) -> str:
        lines = ["lead_s,fpr,fnr,avg_lead_time_s,feasible,note"]
        for r in self.rows:
            avg = "" if r.avg_lead_time is None else f"{r.avg_lead_time:.6g}"
            lines.append(f"{r.lead:.6g},{r.fpr:.6g},{r.fnr:.6g},{avg},"
                         f"{int(r.feasible)},{r.note}")
        return "\n".join(lines) + "\n"


def default_grid(step: float = 0.1, maximum: float = 2.0) -> np.ndarray:
    n = int(round(maximum / step))
    return np.round(np.linspace(0.0, maximum, n + 1), 10)


def grid_search_lead_time(trainer, evaluator, grid=None,
                          bounds=(0.0, 0.0)) -> GridSearchResult:
    """Sweep candidate training lead times and keep the largest whose
    train+validation rates meet the bounds.

    trainer(lead) returns a trained model (or raises a per-candidate
    training error, which marks the candidate infeasible);
    evaluator(model, lead) returns an EvalReport on the
    train+validation trajectories. Raises NoFeasibleLeadTime with the
    full candidate table when nothing qualifies.
    """
    if grid is None:
        grid = default_grid()
    fpr_max, fnr_max = bounds
    rows = []
    chosen = None
    for lead in grid:
        lead = float(lead)
        try:
            model = trainer(lead)
        except (ValueError, InsufficientData, NoConvergence,
                SingularR) as exc:
            rows.append(GridSearchRow(lead=lead, fpr=np.nan, fnr=np.nan,
                                      avg_lead_time=None, feasible=False,
                                      note=str(exc)))
            continue
        rep = evaluator(model, lead)
        ok = rep.fpr <= fpr_max and rep.fnr <= fnr_max
        rows.append(GridSearchRow(lead=lead, fpr=rep.fpr, fnr=rep.fnr,
                                  avg_lead_time=rep.avg_lead_time,
                                  feasible=ok))
        if ok:
            chosen = lead
    result = GridSearchResult(rows=tuple(rows), chosen=chosen,
                              bounds=tuple(bounds))
    if chosen is None:
        raise NoFeasibleLeadTime(
            "no training lead time met the rate bounds "
            f"{tuple(bounds)}:\n{result.table_text()}",
            table=result.table_text())
    return result


@dataclass
class ExperimentConfig:
    detectors: tuple = (DETECTOR_NN, DETECTOR_SVM)
    regimes: tuple = (REGIME_ABRUPT, REGIME_INCIPIENT, REGIME_BOTH,
                      REGIME_MULTICLASS)
    feature_set_id: str = DEFAULT_FEATURE_SET
    n_window: int = N_WINDOW_DEFAULT
    n_monitor: int = 1
    fire_threshold: int = 1
    C: float = det.DEFAULT_C
    gamma: float | None = None
    lam: float = det.DEFAULT_LAMBDA
    tol: float = det.DEFAULT_TOL
    grid_step: float = 0.1
    grid_max: float = 2.0
    bounds: tuple = (0.0, 0.0)
    split_seed: int = 0
    n_folds: int = 5
    folds: tuple | None = None
    cache_bytes: int = 1 << 30
    jobs: int = 1

    @property
    def grid(self) -> np.ndarray:
        return default_grid(self.grid_step, self.grid_max)

    def to_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            out[k] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        allowed = set(cls().__dict__)
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown experiment config keys: "
                             f"{sorted(unknown)}")
        kwargs = {}
        for k, v in data.items():
            kwargs[k] = tuple(v) if isinstance(v, list) else v
        return cls(**kwargs)


@dataclass
class CellResult:
    detector: str
    regime: str
    fold: int
    grid: GridSearchResult | None = None
    chosen_lead: float | None = None
    test: EvalReport | None = None
    model: object = None
    identifier_stats: dict | None = None
    error: str | None = None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    cells: list = field(default_factory=list)

    def cell(self, detector: str, regime: str, fold: int) -> CellResult:
        for c in self.cells:
            if (c.detector, c.regime, c.fold) == (detector, regime, fold):
                return c
        raise KeyError(f"no cell ({detector}, {regime}, {fold})")


def _group_rows(ws: WindowSet, rows: np.ndarray) -> dict:
    """Map trajectory index -> positions within rows (contiguous)."""
    groups = {}
    tr = ws.traj_index[rows]
    start = 0
    for k in range(1, len(rows) + 1):
        if k == len(rows) or tr[k] != tr[start]:
            groups[int(tr[start])] = np.arange(start, k)
            start = k
    return groups


def _outcomes(ws: WindowSet, rows: np.ndarray, groups: dict,
              traj_indices, faulty: np.ndarray, n_monitor: int,
              fire_threshold: int):
    """Stream verdicts through the monitor, one trajectory at a time.

    traj_indices lists every trajectory of the cell, including ones
    too short to produce a single window (they can never declare).
    """
    ends = ws.end_times[rows]
    out = []
    for tidx in traj_indices:
        fall_t = ws.fall_times[tidx]
        fell = not np.isnan(fall_t)
        local = groups.get(int(tidx))
        declared = None
        if local is not None and local.size:
            declared = det.monitor(faulty[local], n_monitor,
                                   fire_threshold,
                                   end_times=ends[local])
        lead = (lead_time(declared, fall_t)
                if fell and declared is not None else None)
        out.append(TrajectoryOutcome(
            traj_id=ws.ids[tidx], fell=fell,
            fall_time=float(fall_t) if fell else None,
            declared=None if declared is None else float(declared),
            lead=lead))
    return out


def _cell_indices(ws: WindowSet, ids):
    wanted = set(ids)
    return [i for i, tid in enumerate(ws.ids) if tid in wanted]


def _regime_ids(ws: WindowSet, ids, regime: str):
    kinds = _REGIME_KINDS[regime]
    by_id = dict(zip(ws.ids, ws.kinds))
    return [tid for tid in ids if by_id[tid] in kinds]


def _run_binary_cell(ws: WindowSet, splits, fold: int, regime: str,
                     detector: str, cfg: ExperimentConfig) -> CellResult:
    train_ids = _regime_ids(ws, splits.train_ids(fold), regime)
    test_ids = _regime_ids(ws, splits.fold_ids(fold), regime)
    train_idx = _cell_indices(ws, train_ids)
    test_idx = _cell_indices(ws, test_ids)
    train_rows = ws.rows_for_ids(train_ids)
    test_rows = ws.rows_for_ids(test_ids)
    train_groups = _group_rows(ws, train_rows)
    test_groups = _group_rows(ws, test_rows)

    scaler = fit_scaler(ws.X[train_rows])
    Xs_train = apply_scaler(scaler, ws.X[train_rows])
    m = ws.n_window

    if detector == DETECTOR_NN:
        diffs = Xs_train[:, -1, :] - Xs_train[:, :-1, :].mean(axis=1)
        c = (m - 1.0) / m
        verdict_stash = {}

        def trainer(lead):
            y = ws.labels(lead)[train_rows]
            safe = y == 1
            if safe.sum() < 2:
                raise InsufficientData(
                    f"{int(safe.sum())} safe windows at lead {lead}")
            frames_safe = Xs_train[safe].reshape(-1, ws.dim)
            R = det.dcor_matrix(frames_safe)
            R_inv = det.regularized_inverse(R, cfg.lam)
            efforts = c * np.einsum("nd,de,ne->n", diffs, R_inv, diffs)
            threshold = float(efforts[safe].max())
            model = det.NnModel(R=R, R_inv=R_inv, threshold=threshold,
                                n_window=m, scaler=scaler)
            verdict_stash[lead] = efforts > threshold
            return model

        def evaluator(model, lead):
            outcomes = _outcomes(ws, train_rows, train_groups, train_idx,
                                 verdict_stash.pop(lead),
                                 cfg.n_monitor, cfg.fire_threshold)
            return report_from_outcomes(outcomes, detector, regime, fold)

    elif detector == DETECTOR_SVM:
        flat = Xs_train.reshape(Xs_train.shape[0], -1)
        gamma = cfg.gamma if cfg.gamma else det.default_gamma(flat)
        cache = det.KernelCache(flat, gamma, cfg.cache_bytes)

        def trainer(lead):
            y = ws.labels(lead)[train_rows].astype(float)
            return det.svm_train(ws.X[train_rows], y, C=cfg.C,
                                 gamma=gamma, tol=cfg.tol,
                                 scaler=scaler, cache=cache)

        def evaluator(model, lead):
            values = det.svm_decision_values(model, ws.X[train_rows])
            outcomes = _outcomes(ws, train_rows, train_groups, train_idx,
                                 values < 0.0, cfg.n_monitor,
                                 cfg.fire_threshold)
            return report_from_outcomes(outcomes, detector, regime, fold)

    else:
        raise ValueError(f"unknown detector kind {detector!r}")

    models = {}

    def caching_trainer(lead):
        model = trainer(lead)
        models[lead] = model
        return model

    grid = grid_search_lead_time(caching_trainer, evaluator,
                                 cfg.grid, cfg.bounds)
    model = models[grid.chosen]

    values = det.detector_decision_values(model, ws.X[test_rows])
    faulty = det.detector_faulty(model, values)
    outcomes = _outcomes(ws, test_rows, test_groups, test_idx, faulty,
                         cfg.n_monitor, cfg.fire_threshold)
    test_report = report_from_outcomes(outcomes, detector, regime, fold)
    return CellResult(detector=detector, regime=regime, fold=fold,
                      grid=grid, chosen_lead=grid.chosen,
                      test=test_report, model=model)


def train_detector_at_lead(ws: WindowSet, rows: np.ndarray, lead: float,
                           detector: str, cfg: ExperimentConfig):
    """One detector trained on the given window rows at one lead time."""
    scaler = fit_scaler(ws.X[rows])
    y = ws.labels(lead)[rows]
    if detector == DETECTOR_NN:
        return det.nn_train(ws.X[rows][y == 1], cfg.lam, scaler=scaler)
    if detector == DETECTOR_SVM:
        return det.svm_train(ws.X[rows], y.astype(float), C=cfg.C,
                             gamma=cfg.gamma, tol=cfg.tol, scaler=scaler)
    raise ValueError(f"unknown detector kind {detector!r}")


def train_multiclass(trajectories, ws: WindowSet, ws_vel: WindowSet,
                     train_ids, lead_abrupt: float, lead_incipient: float,
                     detector: str, cfg: ExperimentConfig):
    """Identifier plus the two fault detectors with augmentation.

    The identifier is trained on joint-velocity windows of the training
    trajectories. Trajectories the identifier misclassifies donate all
    their windows to the opposing detector's training set: abrupt
    trajectories it never latches go to the incipient detector,
    incipient trajectories it latches go to the abrupt detector.
    """
    by_id = {tr.id: tr for tr in trajectories}
    train_trajs = [by_id[tid] for tid in train_ids]
    iw = identifier_windows(train_trajs, cfg.n_window)
    if not (np.any(iw.y > 0) and np.any(iw.y < 0)):
        raise InsufficientData("identifier training needs both fault "
                               "kinds among the training trajectories")
    identifier = det.svm_train(iw.X, iw.y.astype(float), C=cfg.C,
                               gamma=cfg.gamma, tol=cfg.tol)

    train_rows = ws_vel.rows_for_ids(train_ids)
    groups = _group_rows(ws_vel, train_rows)
    id_vals = det.svm_decision_values(identifier, ws_vel.X[train_rows])
    id_abrupt = id_vals < 0.0

    to_incipient = []
    to_abrupt = []
    for tidx, local in groups.items():
        kind = ws_vel.kinds[tidx]
        latched = bool(id_abrupt[local].any())
        if kind == KIND_ABRUPT and not latched:
            to_incipient.append(ws_vel.ids[tidx])
        elif kind == KIND_INCIPIENT and latched:
            to_abrupt.append(ws_vel.ids[tidx])

    abrupt_ids = _regime_ids(ws, train_ids, REGIME_ABRUPT) + to_abrupt
    incip_ids = _regime_ids(ws, train_ids, REGIME_INCIPIENT) + to_incipient
    abrupt_rows = ws.rows_for_ids(abrupt_ids)
    incip_rows = ws.rows_for_ids(incip_ids)
    abrupt_detector = train_detector_at_lead(ws, abrupt_rows,
                                             lead_abrupt, detector, cfg)
    incipient_detector = train_detector_at_lead(ws, incip_rows,
                                                lead_incipient, detector,
                                                cfg)
    model = det.MulticlassModel(identifier=identifier,
                                incipient_detector=incipient_detector,
                                abrupt_detector=abrupt_detector)
    stats = {"n_train_abrupt_missed": len(to_incipient),
             "n_train_incipient_latched": len(to_abrupt)}
    return model, stats


def _first_force_window_end(traj, n_window: int):
    """End time of the earliest window containing the abrupt push."""
    t0 = traj.fault.t_start
    t1 = t0 + traj.fault.duration
    mask = (traj.t >= t0) & (traj.t < t1)
    n = traj.n_samples
    for k in range(n - n_window + 1):
        if mask[k:k + n_window].any():
            return float(traj.t[k + n_window - 1])
    return None


def evaluate_multiclass(model, trajectories, ws: WindowSet,
                        ws_vel: WindowSet, test_ids,
                        cfg: ExperimentConfig, fold: int):
    """Stream the pipeline over test trajectories; latch delay stats
    are collected on the abrupt ones."""
    by_id = {tr.id: tr for tr in trajectories}
    rows = ws.rows_for_ids(test_ids)
    groups = _group_rows(ws, rows)
    test_idx = _cell_indices(ws, test_ids)

    faulty = np.zeros(len(rows), dtype=bool)
    delays_s = []
    delays_n = []
    n_latched = 0
    n_abrupt = 0
    for tidx, local in groups.items():
        w_rows = rows[local]
        trace = det.multiclass_stream(model, ws.X[w_rows],
                                      ws_vel.X[w_rows],
                                      ws.end_times[w_rows])
        faulty[local] = trace.faulty
        traj = by_id[ws.ids[tidx]]
        if traj.kind == KIND_ABRUPT:
            n_abrupt += 1
            if trace.latch_index is not None:
                n_latched += 1
                first_end = _first_force_window_end(traj, cfg.n_window)
                if first_end is not None:
                    delay = trace.latch_time - first_end
                    dt = float(traj.t[1] - traj.t[0])
                    delays_s.append(delay)
                    delays_n.append(delay / dt)

    outcomes = _outcomes(ws, rows, groups, test_idx, faulty,
                         cfg.n_monitor, cfg.fire_threshold)
    report = report_from_outcomes(outcomes, "", REGIME_MULTICLASS, fold)
    stats = {
        "n_abrupt_test": n_abrupt,
        "n_latched": n_latched,
        "mean_latch_delay_s": (float(np.mean(delays_s))
                               if delays_s else None),
        "mean_latch_delay_samples": (float(np.mean(delays_n))
                                     if delays_n else None),
    }
    return report, stats


def _run_multiclass_cell(trajectories, ws, ws_vel, splits, fold: int,
                         detector: str, cfg: ExperimentConfig,
                         binary_cells: dict) -> CellResult:
    need = [(detector, REGIME_ABRUPT, fold),
            (detector, REGIME_INCIPIENT, fold)]
    leads = {}
    for key in need:
        cell = binary_cells.get(key)
        if cell is None or cell.error or cell.chosen_lead is None:
            raise RuntimeError(
                f"binary cell {key} unavailable, cannot pick the "
                "detector's training lead time")
        leads[key[1]] = cell.chosen_lead

    train_ids = _regime_ids(ws, splits.train_ids(fold), REGIME_MULTICLASS)
    test_ids = _regime_ids(ws, splits.fold_ids(fold), REGIME_MULTICLASS)
    model, train_stats = train_multiclass(
        trajectories, ws, ws_vel, train_ids, leads[REGIME_ABRUPT],
        leads[REGIME_INCIPIENT], detector, cfg)
    report, stats = evaluate_multiclass(model, trajectories, ws, ws_vel,
                                        test_ids, cfg, fold)
    report = replace(report, detector=detector)
    stats.update(train_stats)
    stats["lead_abrupt"] = leads[REGIME_ABRUPT]
    stats["lead_incipient"] = leads[REGIME_INCIPIENT]
    return CellResult(detector=detector, regime=REGIME_MULTICLASS,
                      fold=fold, chosen_lead=None, test=report,
                      model=model, identifier_stats=stats)


def run_experiment(trajectories, params, cfg: ExperimentConfig
                   ) -> ExperimentResult:
    """Grid search, train, and evaluate every fold x regime x detector
    cell; cell failures are recorded without aborting the rest."""
    ws = build_window_set(trajectories, params, cfg.feature_set_id,
                          cfg.n_window)
    want_multi = REGIME_MULTICLASS in cfg.regimes
    ws_vel = (build_window_set(trajectories, params,
                               VELOCITY_FEATURE_SET, cfg.n_window)
              if want_multi else None)
    splits = make_splits(trajectories, "kfold", cfg.split_seed,
                         cfg.n_folds)
    folds = cfg.folds if cfg.folds is not None else tuple(
        range(cfg.n_folds))

    result = ExperimentResult(config=cfg)
    binary_cells = {}
    for fold in folds:
        for detector in cfg.detectors:
            for regime in [r for r in cfg.regimes if r in BINARY_REGIMES]:
                try:
                    cell = _run_binary_cell(ws, splits, fold, regime,
                                            detector, cfg)
                except NoFeasibleLeadTime as exc:
                    cell = CellResult(detector=detector, regime=regime,
                                      fold=fold,
                                      grid=GridSearchResult(
                                          rows=(), chosen=None,
                                          bounds=tuple(cfg.bounds)),
                                      error=str(exc))
                except Exception as exc:
                    cell = CellResult(detector=detector, regime=regime,
                                      fold=fold, error=repr(exc))
                binary_cells[(detector, regime, fold)] = cell
                result.cells.append(cell)
    if want_multi:
        for fold in folds:
            for detector in cfg.detectors:
                try:
                    cell = _run_multiclass_cell(trajectories, ws, ws_vel,
                                                splits, fold, detector,
                                                cfg, binary_cells)
                except Exception as exc:
                    cell = CellResult(detector=detector,
                                      regime=REGIME_MULTICLASS,
                                      fold=fold, error=repr(exc))
                result.cells.append(cell)
    return result


def aggregate_cells(cells):
    """Trajectory-weighted rates across folds; None when no data."""
    ok = [c for c in cells if c.test is not None and not c.error]
    if not ok:
        return None
    n_safe = sum(c.test.n_safe for c in ok)
    n_fall = sum(c.test.n_fall for c in ok)
    n_dec = sum(c.test.n_declared_falls for c in ok)
    fpr = (sum(c.test.fpr * c.test.n_safe for c in ok) / n_safe
           if n_safe else 0.0)
    fnr = (sum(c.test.fnr * c.test.n_fall for c in ok) / n_fall
           if n_fall else 0.0)
    avg = (sum((c.test.avg_lead_time or 0.0) * c.test.n_declared_falls
               for c in ok) / n_dec if n_dec else None)
    chosen = [c.chosen_lead for c in ok if c.chosen_lead is not None]
    return {
        "folds": sorted(c.fold for c in ok),
        "n_safe": n_safe, "n_fall": n_fall,
        "n_declared_falls": n_dec,
        "fpr": fpr, "fnr": fnr, "avg_lead_time": avg,
        "mean_chosen_lead": float(np.mean(chosen)) if chosen else None,
    }


_DETECTOR_TITLES = {DETECTOR_NN: "minimum-variance detector",
                    DETECTOR_SVM: "svm detector"}


def _fmt(v, digits=6):
    if v is None:
        return ""
    return f"{v:.{digits}g}"


def render_tables(result: ExperimentResult) -> str:
    """The four report tables: per detector, binary regimes then the
    multi-class pipeline, aggregated over evaluated folds."""
    parts = []
    for detector in result.config.detectors:
        title = _DETECTOR_TITLES.get(detector, detector)
        parts.append(f"# {title}, binary regimes")
        parts.append("regime,fpr,fnr,avg_lead_time_s,mean_chosen_lead_s,"
                     "n_safe,n_fall")
        for regime in BINARY_REGIMES:
            if regime not in result.config.regimes:
                continue
            cells = [c for c in result.cells
                     if c.detector == detector and c.regime == regime]
            agg = aggregate_cells(cells)
            if agg is None:
                errs = "; ".join(c.error.splitlines()[0]
                                 for c in cells if c.error)
                parts.append(f"{regime},,,,,,{errs or 'no data'}")
                continue
            parts.append(
                f"{regime},{_fmt(agg['fpr'])},{_fmt(agg['fnr'])},"
                f"{_fmt(agg['avg_lead_time'])},"
                f"{_fmt(agg['mean_chosen_lead'])},"
                f"{agg['n_safe']},{agg['n_fall']}")
        parts.append("")
    for detector in result.config.detectors:
        if REGIME_MULTICLASS not in result.config.regimes:
            continue
        title = _DETECTOR_TITLES.get(detector, detector)
        parts.append(f"# {title}, multi-class pipeline")
        parts.append("fpr,fnr,avg_lead_time_s,n_safe,n_fall,"
                     "mean_latch_delay_s,mean_latch_delay_samples")
        cells = [c for c in result.cells
                 if c.detector == detector
                 and c.regime == REGIME_MULTICLASS]
        agg = aggregate_cells(cells)
        if agg is None:
            errs = "; ".join(c.error.splitlines()[0]
                             for c in cells if c.error)
            parts.append(f",,,,,,{errs or 'no data'}")
            parts.append("")
            continue
        delays_s = [c.identifier_stats["mean_latch_delay_s"]
                    for c in cells if c.identifier_stats
                    and c.identifier_stats["mean_latch_delay_s"]
                    is not None]
        delays_n = [c.identifier_stats["mean_latch_delay_samples"]
                    for c in cells if c.identifier_stats
                    and c.identifier_stats["mean_latch_delay_samples"]
                    is not None]
        dly_s = float(np.mean(delays_s)) if delays_s else None
        dly_n = float(np.mean(delays_n)) if delays_n else None
        parts.append(
            f"{_fmt(agg['fpr'])},{_fmt(agg['fnr'])},"
            f"{_fmt(agg['avg_lead_time'])},"
            f"{agg['n_safe']},{agg['n_fall']},"
            f"{_fmt(dly_s)},{_fmt(dly_n)}")
        parts.append("")
    return "\n".join(parts)


def _report_dict(rep: EvalReport | None):
    if rep is None:
        return None
    return {"fold": rep.fold, "n_safe": rep.n_safe, "n_fall": rep.n_fall,
            "n_declared_falls": rep.n_declared_falls, "fpr": rep.fpr,
            "fnr": rep.fnr, "avg_lead_time": rep.avg_lead_time}


def result_summary(result: ExperimentResult, config_hash: str = "",
                   manifest_hash: str = "") -> dict:
    """Machine-readable mirror of the tables, with full grid tables."""
    cells = []
    for c in result.cells:
        cells.append({
            "detector": c.detector, "regime": c.regime, "fold": c.fold,
            "chosen_lead": c.chosen_lead,
            "grid": None if c.grid is None else [
                {"lead": r.lead, "fpr": None if np.isnan(r.fpr) else r.fpr,
                 "fnr": None if np.isnan(r.fnr) else r.fnr,
                 "avg_lead_time": r.avg_lead_time,
                 "feasible": r.feasible, "note": r.note}
                for r in c.grid.rows],
            "test": _report_dict(c.test),
            "identifier_stats": c.identifier_stats,
            "error": c.error,
        })
    return {"config": result.config.to_dict(),
            "config_hash": config_hash,
            "manifest_hash": manifest_hash,
            "cells": cells}


def evaluate(model, trajectories, params, *, n_monitor: int = 1,
             fire_threshold: int = 1,
             feature_set_id: str = DEFAULT_FEATURE_SET,
             regime: str = "", fold: int = -1) -> EvalReport:
    """Score a trained model over whole trajectories.

    Works for either detector kind or the multi-class pipeline;
    trajectories too short to window count as undeclared.
    """
    if isinstance(model, det.MulticlassModel):
        n_window = model.incipient_detector.n_window
        ws = build_window_set(trajectories, params, feature_set_id,
                              n_window)
        ws_vel = build_window_set(trajectories, params,
                                  VELOCITY_FEATURE_SET, n_window)
        cfg = ExperimentConfig(n_window=n_window, n_monitor=n_monitor,
                               fire_threshold=fire_threshold,
                               feature_set_id=feature_set_id)
        report, _ = evaluate_multiclass(model, trajectories, ws, ws_vel,
                                        list(ws.ids), cfg, fold)
        return replace(report, detector="multiclass",
                       regime=regime or REGIME_MULTICLASS)
    n_window = model.n_window
    ws = build_window_set(trajectories, params, feature_set_id, n_window)
    rows = np.arange(ws.n_windows)
    groups = _group_rows(ws, rows)
    values = det.detector_decision_values(model, ws.X)
    faulty = det.detector_faulty(model, values)
    outcomes = _outcomes(ws, rows, groups, range(len(ws.ids)), faulty,
                         n_monitor, fire_threshold)
    name = (DETECTOR_NN if isinstance(model, det.NnModel)
            else DETECTOR_SVM)
    return report_from_outcomes(outcomes, name, regime, fold)
