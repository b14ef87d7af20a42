"""Command-line entry point for reproducible runs.

Subcommands: generate, features, train, eval, grid-search, multiclass,
report, plot-data. Flags are long-form only. Values resolve as
defaults, then flags, then the --config file (the file wins). When
--seed is absent the FALLTIME_SEED environment variable applies.

Every artifact embeds the resolved config hash and the dataset
manifest hash; `report --summary` refuses a summary whose manifest
hash no longer matches the dataset unless --force.

Exit codes: 0 success; 2 usage, missing files, or bad configuration;
3 dynamics errors; 4 scenario calibration errors; 5 feature errors;
6 dataset labeling or split errors; 7 detector training errors;
8 no feasible training lead time; 9 artifact hash mismatch.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import detectors as det
from . import errors as err
from . import evaluation as ev
from . import features as feat
from . import scenario as scn
from .params import RobotParams, load_params

EXIT_USAGE = 2
EXIT_DYNAMICS = 3
EXIT_SCENARIO = 4
EXIT_FEATURES = 5
EXIT_DATASET = 6
EXIT_DETECTORS = 7
EXIT_EVAL = 8
EXIT_HASH = 9

_ERROR_CODES = (
    (err.NonFiniteState, EXIT_DYNAMICS),
    (err.IntegrationDiverged, EXIT_DYNAMICS),
    (err.CalibrationFailed, EXIT_SCENARIO),
    (err.UnknownFeatureSet, EXIT_FEATURES),
    (err.DegenerateSeries, EXIT_FEATURES),
    (err.LeadTimeOutOfRange, EXIT_DATASET),
    (err.TooFewTrajectories, EXIT_DATASET),
    (err.SingularR, EXIT_DETECTORS),
    (err.InsufficientData, EXIT_DETECTORS),
    (err.NoConvergence, EXIT_DETECTORS),
    (err.NoFeasibleLeadTime, EXIT_EVAL),
)


class HashMismatch(err.FalltimeError):
    pass


def _hash_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


_PATH_KEYS = frozenset({"out", "out_model", "dataset", "model",
                        "summary", "traj", "force"})


def science_config(resolved: dict) -> dict:
    """The resolved config minus file locations, so the hash names the
    experimental setup rather than where artifacts happen to live."""
    return {k: v for k, v in resolved.items() if k not in _PATH_KEYS}


def config_hash(resolved: dict) -> str:
    return _hash_text(json.dumps(science_config(resolved),
                                 sort_keys=True, default=str))


def manifest_hash(dataset_dir) -> str:
    path = Path(dataset_dir) / scn.MANIFEST_NAME
    return _hash_text(path.read_text(encoding="utf-8"))


def _resolve(args: argparse.Namespace, parser_defaults: dict) -> dict:
    """defaults < flags < config file; returns the effective mapping."""
    effective = dict(parser_defaults)
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        effective[key] = value
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        try:
            overrides = json.loads(Path(cfg_path).read_text(
                encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise SystemExit(_usage_error(f"cannot read config "
                                          f"{cfg_path}: {exc}"))
        unknown = set(overrides) - set(parser_defaults)
        if unknown:
            raise SystemExit(_usage_error(
                f"unknown config keys {sorted(unknown)}"))
        effective.update(overrides)
    if effective.get("seed") is None:
        env = os.environ.get("FALLTIME_SEED")
        effective["seed"] = int(env) if env else 0
    return effective


def _usage_error(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_USAGE


def _load_robot_params(effective: dict) -> RobotParams:
    path = effective.get("robot_params")
    if not path:
        return RobotParams()
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"robot params file not found: {p}")
    return load_params(p)


def _load_dataset(effective: dict):
    d = effective.get("dataset")
    if not d:
        raise FileNotFoundError("--dataset is required")
    root = Path(d)
    if not (root / scn.MANIFEST_NAME).exists():
        raise FileNotFoundError(f"no dataset manifest under {root}")
    return scn.load_dataset(root)


def _artifact_header(cfg_hash: str, man_hash: str) -> str:
    return f"# config_hash={cfg_hash} manifest_hash={man_hash}\n"


def _write_text(path, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text, encoding="utf-8")


def _write_json(path, payload: dict) -> None:
    _write_text(path, json.dumps(payload, indent=2, sort_keys=True)
                + "\n")


def _experiment_config(effective: dict) -> ev.ExperimentConfig:
    kwargs = {}
    mapping = {
        "feature_set": "feature_set_id", "n_window": "n_window",
        "n_monitor": "n_monitor", "fire_threshold": "fire_threshold",
        "c": "C", "gamma": "gamma", "lam": "lam", "tol": "tol",
        "grid_step": "grid_step", "grid_max": "grid_max",
        "split_seed": "split_seed", "n_folds": "n_folds",
        "jobs": "jobs",
    }
    for flag, name in mapping.items():
        if effective.get(flag) is not None:
            kwargs[name] = effective[flag]
    if effective.get("detector"):
        kwargs["detectors"] = (effective["detector"],)
    if effective.get("detectors"):
        kwargs["detectors"] = tuple(effective["detectors"].split(","))
    if effective.get("regimes"):
        kwargs["regimes"] = tuple(effective["regimes"].split(","))
    if effective.get("bounds"):
        parts = [float(x) for x in effective["bounds"].split(",")]
        if len(parts) != 2:
            raise ValueError("--bounds expects FPR_MAX,FNR_MAX")
        kwargs["bounds"] = tuple(parts)
    if effective.get("folds"):
        kwargs["folds"] = tuple(int(x) for x
                                in effective["folds"].split(","))
    return ev.ExperimentConfig(**kwargs)


def _regime_trajectories(trajs, regime: str):
    kinds = ev._REGIME_KINDS[regime]
    return [t for t in trajs if t.kind in kinds]


def _fold_split(trajs, effective: dict):
    """Returns (train trajectories, test trajectories)."""
    fold = effective.get("fold")
    if fold is None:
        return trajs, trajs
    plan = ds.make_splits(trajs, "kfold",
                          seed=effective.get("split_seed") or 0,
                          n_folds=effective.get("n_folds") or 5)
    train = set(plan.train_ids(fold))
    return ([t for t in trajs if t.id in train],
            [t for t in trajs if t.id not in train])


def cmd_generate(effective: dict) -> int:
    out = effective.get("out")
    if not out:
        raise FileNotFoundError("--out is required")
    params = _load_robot_params(effective)
    kwargs = {}
    if effective.get("count") is not None:
        n = effective["count"]
        kwargs["count_abrupt"] = (n + 1) // 2
        kwargs["count_incipient"] = n // 2
    for key in ("count_abrupt", "count_incipient", "count_none",
                "abrupt_max", "incipient_max", "t_max", "sample_dt"):
        if effective.get(key) is not None:
            kwargs[key] = effective[key]
    cfg = scn.DatasetConfig(**kwargs)
    manifest, _ = scn.generate_dataset(cfg, seed=effective["seed"],
                                       params=params, out_dir=out,
                                       jobs=effective.get("jobs") or 1)
    cfg_hash = config_hash(effective)
    _write_json(Path(out) / "run_config.json",
                {"config": science_config(effective),
                 "config_hash": cfg_hash,
                 "manifest_hash": manifest_hash(out)})
    print(f"dataset of {len(manifest['trajectories'])} trajectories "
          f"written to {out}; fall fraction "
          f"{manifest['fall_fraction']:.3f}")
    return 0


def cmd_features(effective: dict) -> int:
    manifest, trajs = _load_dataset(effective)
    params = _load_robot_params(effective)
    columns = None
    if effective.get("columns"):
        columns = effective["columns"].split(",")
    report = feat.feature_report(
        trajs, params,
        feature_set_id=effective.get("feature_set") or "main7",
        columns=columns)
    header = _artifact_header(config_hash(effective),
                              manifest_hash(effective["dataset"]))
    out = effective.get("out")
    text = header + report.to_text()
    if out:
        _write_text(out, text)
        print(f"feature report written to {out}")
    else:
        print(text, end="")
    return 0


def cmd_train(effective: dict) -> int:
    manifest, trajs = _load_dataset(effective)
    params = _load_robot_params(effective)
    out = effective.get("out")
    if not out:
        raise FileNotFoundError("--out is required")
    regime = effective.get("regime") or ev.REGIME_BOTH
    detector = effective.get("detector") or ev.DETECTOR_NN
    lead = effective.get("lead")
    if lead is None:
        raise ValueError("--lead is required for train")
    cfg = _experiment_config(effective)
    train, _ = _fold_split(_regime_trajectories(trajs, regime),
                           effective)
    ws = ds.build_window_set(train, params, cfg.feature_set_id,
                             cfg.n_window)
    rows = np.arange(ws.n_windows)
    model = ev.train_detector_at_lead(ws, rows, lead, detector, cfg)
    extra = {"config_hash": config_hash(effective),
             "manifest_hash": manifest_hash(effective["dataset"]),
             "detector": detector, "regime": regime, "lead": lead,
             "feature_set_id": cfg.feature_set_id}
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    det.save_model(model, out, extra=extra)
    print(f"{detector} model trained on {len(train)} trajectories "
          f"at lead {lead} written to {out}")
    return 0


def cmd_eval(effective: dict) -> int:
    manifest, trajs = _load_dataset(effective)
    params = _load_robot_params(effective)
    model_path = effective.get("model")
    if not model_path or not Path(model_path).exists():
        raise FileNotFoundError(f"model file not found: {model_path}")
    model, extra = det.load_model(model_path)
    regime = effective.get("regime") or ev.REGIME_BOTH
    _, test = _fold_split(_regime_trajectories(trajs, regime),
                          effective)
    fsid = (effective.get("feature_set")
            or extra.get("feature_set_id") or "main7")
    report = ev.evaluate(
        model, test, params,
        n_monitor=effective.get("n_monitor") or 1,
        fire_threshold=effective.get("fire_threshold") or 1,
        feature_set_id=fsid, regime=regime,
        fold=effective.get("fold") if effective.get("fold") is not None
        else -1)
    payload = {
        "config_hash": config_hash(effective),
        "manifest_hash": manifest_hash(effective["dataset"]),
        "model_extra": extra,
        "report": ev._report_dict(report),
        "outcomes": [{"traj_id": o.traj_id, "fell": o.fell,
                      "fall_time": o.fall_time, "declared": o.declared,
                      "lead": o.lead} for o in report.outcomes],
    }
    out = effective.get("out")
    if out:
        _write_json(out, payload)
        print(f"evaluation written to {out}")
    avg = ("" if report.avg_lead_time is None
           else f", avg lead {report.avg_lead_time:.3f}s")
    print(f"fpr {report.fpr:.3f}, fnr {report.fnr:.3f}{avg} over "
          f"{report.n_safe} safe + {report.n_fall} fall trajectories")
    return 0


def cmd_grid_search(effective: dict) -> int:
    manifest, trajs = _load_dataset(effective)
    params = _load_robot_params(effective)
    cfg = _experiment_config(effective)
    detector = effective.get("detector") or ev.DETECTOR_NN
    regime = effective.get("regime") or ev.REGIME_BOTH
    fold = effective.get("fold") if effective.get("fold") is not None \
        else 0
    ws = ds.build_window_set(trajs, params, cfg.feature_set_id,
                             cfg.n_window)
    splits = ds.make_splits(trajs, "kfold", seed=cfg.split_seed,
                            n_folds=cfg.n_folds)
    header = _artifact_header(config_hash(effective),
                              manifest_hash(effective["dataset"]))
    out = effective.get("out")
    try:
        cell = ev._run_binary_cell(ws, splits, fold, regime, detector,
                                   cfg)
    except err.NoFeasibleLeadTime as exc:
        if out and exc.table:
            _write_text(out, header + exc.table)
        raise
    text = header + cell.grid.table_text() + \
        f"chosen,{cell.chosen_lead:.6g}\n"
    if out:
        _write_text(out, text)
        print(f"grid table written to {out}")
    else:
        print(text, end="")
    t = cell.test
    print(f"chosen lead {cell.chosen_lead:.3g}s; test fpr {t.fpr:.3f}, "
          f"fnr {t.fnr:.3f}, avg lead "
          f"{t.avg_lead_time if t.avg_lead_time is None else round(t.avg_lead_time, 3)}")
    return 0


def cmd_multiclass(effective: dict) -> int:
    manifest, trajs = _load_dataset(effective)
    params = _load_robot_params(effective)
    cfg = _experiment_config(effective)
    detector = effective.get("detector") or ev.DETECTOR_SVM
    lead_abrupt = effective.get("lead_abrupt")
    lead_incipient = effective.get("lead_incipient")
    if lead_abrupt is None or lead_incipient is None:
        raise ValueError("--lead-abrupt and --lead-incipient are "
                         "required for multiclass")
    train, test = _fold_split(trajs, effective)
    ws = ds.build_window_set(trajs, params, cfg.feature_set_id,
                             cfg.n_window)
    ws_vel = ds.build_window_set(trajs, params, ev.VELOCITY_FEATURE_SET,
                                 cfg.n_window)
    model, train_stats = ev.train_multiclass(
        trajs, ws, ws_vel, [t.id for t in train], lead_abrupt,
        lead_incipient, detector, cfg)
    report, stats = ev.evaluate_multiclass(
        model, trajs, ws, ws_vel, [t.id for t in test], cfg,
        effective.get("fold") if effective.get("fold") is not None
        else -1)
    stats.update(train_stats)
    extra = {"config_hash": config_hash(effective),
             "manifest_hash": manifest_hash(effective["dataset"]),
             "detector": detector, "lead_abrupt": lead_abrupt,
             "lead_incipient": lead_incipient,
             "feature_set_id": cfg.feature_set_id}
    out_model = effective.get("out_model")
    if out_model:
        Path(out_model).parent.mkdir(parents=True, exist_ok=True)
        det.save_model(model, out_model, extra=extra)
        print(f"multiclass model written to {out_model}")
    payload = {"config_hash": extra["config_hash"],
               "manifest_hash": extra["manifest_hash"],
               "report": ev._report_dict(report),
               "identifier_stats": stats}
    out = effective.get("out")
    if out:
        _write_json(out, payload)
        print(f"multiclass evaluation written to {out}")
    avg = ("" if report.avg_lead_time is None
           else f", avg lead {report.avg_lead_time:.3f}s")
    print(f"multiclass fpr {report.fpr:.3f}, fnr {report.fnr:.3f}{avg}; "
          f"mean latch delay {stats['mean_latch_delay_s']}")
    return 0


def cmd_report(effective: dict) -> int:
    man_hash = manifest_hash(effective["dataset"])
    out_dir = Path(effective.get("out") or ".")
    summary_path = effective.get("summary")
    if summary_path:
        summary = json.loads(Path(summary_path).read_text(
            encoding="utf-8"))
        if summary.get("manifest_hash") != man_hash \
                and not effective.get("force"):
            raise HashMismatch(
                f"summary manifest hash {summary.get('manifest_hash')} "
                f"does not match dataset manifest hash {man_hash}; "
                "pass --force to render anyway")
        tables = summary.get("tables", "")
        _write_text(out_dir / "tables.txt", tables)
        print(f"tables re-rendered to {out_dir / 'tables.txt'}")
        return 0
    manifest, trajs = _load_dataset(effective)
    params = _load_robot_params(effective)
    cfg = _experiment_config(effective)
    result = ev.run_experiment(trajs, params, cfg)
    cfg_hash = config_hash(effective)
    tables = _artifact_header(cfg_hash, man_hash) \
        + ev.render_tables(result)
    summary = ev.result_summary(result, config_hash=cfg_hash,
                                manifest_hash=man_hash)
    summary["tables"] = tables
    _write_text(out_dir / "tables.txt", tables)
    _write_json(out_dir / "summary.json", summary)
    print(tables)
    print(f"report written to {out_dir}")
    failed = [c for c in result.cells if c.error]
    if failed:
        print(f"{len(failed)} cell(s) failed; see summary.json",
              file=sys.stderr)
    return 0


def cmd_plot_data(effective: dict) -> int:
    manifest, trajs = _load_dataset(effective)
    params = _load_robot_params(effective)
    model_path = effective.get("model")
    if not model_path or not Path(model_path).exists():
        raise FileNotFoundError(f"model file not found: {model_path}")
    model, extra = det.load_model(model_path)
    traj_id = effective.get("traj")
    if not traj_id:
        raise ValueError("--traj is required for plot-data")
    matches = [t for t in trajs if t.id == traj_id]
    if not matches:
        raise FileNotFoundError(f"trajectory {traj_id!r} not in dataset")
    traj = matches[0]
    fsid = (effective.get("feature_set")
            or extra.get("feature_set_id") or "main7")
    if isinstance(model, det.MulticlassModel):
        n_window = model.incipient_detector.n_window
        ws = ds.build_window_set([traj], params, fsid, n_window)
        ws_vel = ds.build_window_set([traj], params,
                                     ev.VELOCITY_FEATURE_SET, n_window)
        trace = det.multiclass_stream(model, ws.X, ws_vel.X,
                                      ws.end_times)
        values = trace.values
        faulty = trace.faulty
        thresholds = np.empty(len(values))
        for k in range(len(values)):
            active = (model.abrupt_detector
                      if trace.latch_index is not None
                      and k >= trace.latch_index
                      else model.incipient_detector)
            thresholds[k] = (active.threshold
                             if isinstance(active, det.NnModel) else 0.0)
    else:
        ws = ds.build_window_set([traj], params, fsid, model.n_window)
        values = det.detector_decision_values(model, ws.X)
        faulty = det.detector_faulty(model, values)
        thr = (model.threshold if isinstance(model, det.NnModel)
               else 0.0)
        thresholds = np.full(len(values), thr)
    lines = [_artifact_header(config_hash(effective),
                              manifest_hash(effective["dataset"]))
             + "end_time,decision_value,threshold,verdict"]
    for k in range(len(values)):
        lines.append(f"{ws.end_times[k]:.9g},{values[k]:.9g},"
                     f"{thresholds[k]:.9g},"
                     f"{'faulty' if faulty[k] else 'safe'}")
    text = "\n".join(lines) + "\n"
    out = effective.get("out")
    if out:
        _write_text(out, text)
        print(f"plot data written to {out}")
    else:
        print(text, end="")
    return 0


_COMMANDS = {
    "generate": cmd_generate,
    "features": cmd_features,
    "train": cmd_train,
    "eval": cmd_eval,
    "grid-search": cmd_grid_search,
    "multiclass": cmd_multiclass,
    "report": cmd_report,
    "plot-data": cmd_plot_data,
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file whose keys override "
                   "flags")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--robot-params", dest="robot_params")
    p.add_argument("--jobs", type=int, default=None)


def _add_model_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--feature-set", dest="feature_set")
    p.add_argument("--n-window", dest="n_window", type=int)
    p.add_argument("--n-monitor", dest="n_monitor", type=int)
    p.add_argument("--fire-threshold", dest="fire_threshold", type=int)
    p.add_argument("--c", dest="c", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--lam", type=float)
    p.add_argument("--tol", type=float)


def _add_split_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fold", type=int)
    p.add_argument("--split-seed", dest="split_seed", type=int)
    p.add_argument("--n-folds", dest="n_folds", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="falltime",
        description="Fall-detection workbench for a standing planar "
                    "four-link robot")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate and write a dataset")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, help="total trajectory count, "
                   "split between abrupt and incipient")
    p.add_argument("--count-abrupt", dest="count_abrupt", type=int)
    p.add_argument("--count-incipient", dest="count_incipient", type=int)
    p.add_argument("--count-none", dest="count_none", type=int)
    p.add_argument("--abrupt-max", dest="abrupt_max", type=float)
    p.add_argument("--incipient-max", dest="incipient_max", type=float)
    p.add_argument("--t-max", dest="t_max", type=float)
    p.add_argument("--sample-dt", dest="sample_dt", type=float)

    p = sub.add_parser("features", help="feature relevance report")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out")
    p.add_argument("--feature-set", dest="feature_set")
    p.add_argument("--columns")

    p = sub.add_parser("train", help="train one detector at one lead")
    _add_common(p)
    _add_model_opts(p)
    _add_split_opts(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--detector", choices=("nn", "svm"))
    p.add_argument("--regime", choices=ev.BINARY_REGIMES)
    p.add_argument("--lead", type=float)

    p = sub.add_parser("eval", help="evaluate a saved model")
    _add_common(p)
    _add_model_opts(p)
    _add_split_opts(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out")
    p.add_argument("--regime", choices=ev.BINARY_REGIMES)

    p = sub.add_parser("grid-search", help="lead-time grid search for "
                       "one fold and regime")
    _add_common(p)
    _add_model_opts(p)
    _add_split_opts(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out")
    p.add_argument("--detector", choices=("nn", "svm"))
    p.add_argument("--regime", choices=ev.BINARY_REGIMES)
    p.add_argument("--grid-step", dest="grid_step", type=float)
    p.add_argument("--grid-max", dest="grid_max", type=float)
    p.add_argument("--bounds", help="FPR_MAX,FNR_MAX")

    p = sub.add_parser("multiclass", help="train and evaluate the "
                       "three-detector pipeline")
    _add_common(p)
    _add_model_opts(p)
    _add_split_opts(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out")
    p.add_argument("--out-model", dest="out_model")
    p.add_argument("--detector", choices=("nn", "svm"))
    p.add_argument("--lead-abrupt", dest="lead_abrupt", type=float)
    p.add_argument("--lead-incipient", dest="lead_incipient", type=float)

    p = sub.add_parser("report", help="full experiment tables, or "
                       "re-render from a summary")
    _add_common(p)
    _add_model_opts(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out")
    p.add_argument("--summary", help="existing summary.json to "
                   "re-render instead of running the experiment")
    p.add_argument("--force", action="store_true", default=None)
    p.add_argument("--detectors", help="comma list: nn,svm")
    p.add_argument("--regimes", help="comma list of regimes")
    p.add_argument("--folds", help="comma list of fold indices")
    p.add_argument("--grid-step", dest="grid_step", type=float)
    p.add_argument("--grid-max", dest="grid_max", type=float)
    p.add_argument("--bounds", help="FPR_MAX,FNR_MAX")
    p.add_argument("--split-seed", dest="split_seed", type=int)
    p.add_argument("--n-folds", dest="n_folds", type=int)

    p = sub.add_parser("plot-data", help="decision-value series for "
                       "one trajectory")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--traj")
    p.add_argument("--out")
    p.add_argument("--feature-set", dest="feature_set")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    defaults = {k: v for k, v in vars(args).items()
                if k not in ("command", "config")}
    for key in defaults:
        defaults[key] = None if defaults[key] is None else defaults[key]
    try:
        effective = _resolve(args, defaults)
        return _COMMANDS[args.command](effective)
    except SystemExit:
        raise
    except HashMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_HASH
    except (FileNotFoundError, ValueError) as exc:
        return _usage_error(str(exc))
    except err.FalltimeError as exc:
        for klass, code in _ERROR_CODES:
            if isinstance(exc, klass):
                print(f"error: {exc}", file=sys.stderr)
                return code
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
