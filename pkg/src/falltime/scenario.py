"""Fault injection, trajectory generation and dataset persistence.

A dataset is a directory of per-trajectory sample files plus a manifest.
Everything downstream of (config, seed, robot parameters) is
deterministic: each trajectory draws from its own named random stream,
so the same seed regenerates the same files byte for byte regardless of
generation order or worker count.
"""

from __future__ import annotations

import ast
import io
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import _core
from .dynamics import ContactState, build_contact_state
from .errors import CalibrationFailed, IntegrationDiverged
from .params import RobotParams, nominal_state

KIND_NONE = "none"
KIND_ABRUPT = "abrupt"
KIND_INCIPIENT = "incipient"
KINDS = (KIND_NONE, KIND_ABRUPT, KIND_INCIPIENT)

# fixed stream index per kind, part of the dataset's RNG contract
KIND_INDEX = {KIND_NONE: 0, KIND_ABRUPT: 1, KIND_INCIPIENT: 2}

GENERATOR_VERSION = 1

MANIFEST_NAME = "manifest.json"

CSV_HEADER = ("t,foot_x,foot_z,foot_ang,ankle,knee,hip,"
              "d_foot_x,d_foot_z,d_foot_ang,d_ankle,d_knee,d_hip,"
              "u_ankle,u_knee,u_hip,toe_fx,toe_fz,heel_fx,heel_fz")
CSV_COLUMNS = CSV_HEADER.count(",") + 1


@dataclass(frozen=True)
class DatasetConfig:
    """Counts, force ranges and timing for one generated dataset.

    Force magnitudes are drawn uniformly from [0, *_max]; onsets from
    the [lo, hi] start windows. The initial impulse hits every
    trajectory at time zero to vary the post-transient state; samples
    before discard_before seconds are dropped so that transient never
    reaches the detectors.
    """

    count_abrupt: int = 400
    count_incipient: int = 400
    count_none: int = 0
    impulse_max: float = 159.0
    impulse_duration: float = 0.075
    abrupt_max: float = 320.0
    abrupt_duration: float = 0.075
    abrupt_start: tuple = (2.5, 3.5)
    incipient_max: float = 46.0
    incipient_duration: float = 1.0
    incipient_start: tuple = (2.0, 3.5)
    incipient_ramp: bool = False
    force_at_tip: bool = False
    t_max: float = 8.0
    sample_dt: float = 0.03
    discard_before: float = 2.0

    def validate(self) -> None:
        for name in ("count_abrupt", "count_incipient", "count_none"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("impulse_max", "impulse_duration", "abrupt_max",
                     "abrupt_duration", "incipient_max",
                     "incipient_duration", "t_max", "sample_dt"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("abrupt_start", "incipient_start"):
            lo, hi = getattr(self, name)
            if not (0.0 <= lo <= hi):
                raise ValueError(f"{name} must satisfy 0 <= lo <= hi")

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    @staticmethod
    def from_dict(data: dict) -> "DatasetConfig":
        known = {f.name for f in fields(DatasetConfig)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown dataset config keys {sorted(unknown)}")
        kw = dict(data)
        for name in ("abrupt_start", "incipient_start"):
            if name in kw:
                kw[name] = tuple(kw[name])
        cfg = DatasetConfig(**kw)
        cfg.validate()
        return cfg

    def replace(self, **kw) -> "DatasetConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class FaultSpec:
    """One injected force: kind, size, onset, duration and sign.

    direction is +1 for a push toward +x, -1 toward -x. ramp switches
    the force from constant over the window to a linear ramp that
    reaches the full magnitude at the window end.
    """

    kind: str
    magnitude: float
    t_start: float
    duration: float
    direction: int = 1
    ramp: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown fault kind {self.kind!r}")
        if self.magnitude < 0.0:
            raise ValueError("magnitude must be non-negative")
        if self.t_start < 0.0:
            raise ValueError("t_start must be non-negative")
        if self.duration < 0.0:
            raise ValueError("duration must be non-negative")
        if self.direction not in (-1, 1):
            raise ValueError("direction must be -1 or +1")


@dataclass
class Trajectory:
    """One simulated run, cut down to its retained sample span.

    Arrays are row-per-sample at sample_dt spacing: q and qd are (n, 6),
    u is (n, 3) clamped joint torques, f_contact is (n, 4) ground
    reaction components (toe_fx, toe_fz, heel_fx, heel_fz). fall_time
    is None when the robot stayed up for the whole horizon; when set,
    every retained sample lies strictly before it.
    """

    id: str
    fault: FaultSpec
    initial_impulse: float
    impulse_direction: int
    t: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    u: np.ndarray
    f_contact: np.ndarray
    fall_time: float | None
    heel_or_toe_lift: bool

    @property
    def kind(self) -> str:
        return self.fault.kind

    @property
    def fell(self) -> bool:
        return self.fall_time is not None

    @property
    def outcome(self) -> str:
        return "fall" if self.fell else "safe"

    @property
    def n_samples(self) -> int:
        return int(self.t.shape[0])

    def contact_state(self, i: int, params: RobotParams) -> ContactState:
        """Full contact state (positions, mode, CoP) at sample i."""
        (toe_x, toe_z, _, _, heel_x, heel_z, _, _,
         _, _, _, _) = _core.foot_contact_state(
            self.q[i], self.qd[i], params.pack())
        return build_contact_state(
            self.f_contact[i, 0:2], self.f_contact[i, 2:4],
            np.array([toe_x, toe_z]), np.array([heel_x, heel_z]))


def sample_fault(kind: str, rng: np.random.Generator,
                 config: DatasetConfig | None = None) -> FaultSpec:
    """Draw one fault from the configured uniform ranges.

    Draw order is fixed (magnitude, onset, direction) so that a given
    stream state maps to exactly one FaultSpec.
    """
    cfg = config if config is not None else DatasetConfig()
    if kind == KIND_NONE:
        return FaultSpec(KIND_NONE, 0.0, 0.0, 0.0, 1)
    if kind == KIND_ABRUPT:
        magnitude = float(rng.uniform(0.0, cfg.abrupt_max))
        lo, hi = cfg.abrupt_start
        t_start = float(rng.uniform(lo, hi))
        direction = 1 if rng.random() < 0.5 else -1
        return FaultSpec(KIND_ABRUPT, magnitude, t_start,
                         cfg.abrupt_duration, direction)
    if kind == KIND_INCIPIENT:
        magnitude = float(rng.uniform(0.0, cfg.incipient_max))
        lo, hi = cfg.incipient_start
        t_start = float(rng.uniform(lo, hi))
        direction = 1 if rng.random() < 0.5 else -1
        return FaultSpec(KIND_INCIPIENT, magnitude, t_start,
                         cfg.incipient_duration, direction,
                         ramp=cfg.incipient_ramp)
    raise ValueError(f"unknown fault kind {kind!r}")


def generate_trajectory(fault: FaultSpec, impulse: float,
                        params: RobotParams,
                        rng: np.random.Generator | None = None, *,
                        traj_id: str = "traj_0000",
                        config: DatasetConfig | None = None) -> Trajectory:
    """Simulate one run from nominal stance under impulse plus fault.

    The impulse magnitude must lie in [0, impulse_max]; its sign is
    drawn from rng (+x when rng is omitted). Samples before
    discard_before seconds are dropped, and incipient runs additionally
    drop samples before the fault onset. Recording stops strictly
    before the fall instant.
    """
    cfg = config if config is not None else DatasetConfig()
    if not 0.0 <= impulse <= cfg.impulse_max:
        raise ValueError(
            f"impulse {impulse!r} outside [0, {cfg.impulse_max}]")
    if rng is None:
        impulse_direction = 1
    else:
        impulse_direction = 1 if rng.random() < 0.5 else -1

    windows = [[0.0, cfg.impulse_duration,
                impulse_direction * impulse, 0.0, 0.0]]
    if fault.kind != KIND_NONE and fault.magnitude > 0.0:
        windows.append([fault.t_start, fault.t_start + fault.duration,
                        fault.direction * fault.magnitude, 0.0,
                        1.0 if fault.ramp else 0.0])

    rec_stride = int(round(cfg.sample_dt / params.h_int))
    if rec_stride < 1 or \
            abs(rec_stride * params.h_int - cfg.sample_dt) > 1e-9:
        raise ValueError("sample_dt must be a multiple of h_int")

    q0, qd0 = nominal_state(params)
    (n, t, q, qd, u, f, fall_time, status) = _core.simulate(
        q0, qd0, params.pack(), np.array(windows, dtype=float),
        cfg.force_at_tip, cfg.t_max, rec_stride)
    if status != _core.STATUS_OK:
        t_bad = float(t[n - 1]) if n else 0.0
        raise IntegrationDiverged(
            f"trajectory {traj_id} diverged", t=t_bad)

    keep_from = cfg.discard_before
    if fault.kind == KIND_INCIPIENT:
        keep_from = max(keep_from, fault.t_start)
    keep = t >= keep_from - 1e-9
    t, q, qd, u, f = (np.ascontiguousarray(a[keep])
                      for a in (t, q, qd, u, f))

    toe_loaded = f[:, 1] > 0.0
    heel_loaded = f[:, 3] > 0.0
    lift = bool(np.any(toe_loaded != heel_loaded))
    fall = None if math.isnan(fall_time) else float(fall_time)
    return Trajectory(traj_id, fault, float(impulse), impulse_direction,
                      t, q, qd, u, f, fall, lift)


def _build_one(seed: int, kind: str, index: int, params: RobotParams,
               cfg: DatasetConfig) -> Trajectory:
    """Build trajectory (kind, index) from its own named random stream."""
    rng = np.random.default_rng(
        np.random.SeedSequence((seed, KIND_INDEX[kind], index)))
    fault = sample_fault(kind, rng, cfg)
    impulse = float(rng.uniform(0.0, cfg.impulse_max))
    return generate_trajectory(fault, impulse, params, rng,
                               traj_id=f"{kind}_{index:04d}", config=cfg)


def generate_dataset(config: DatasetConfig | None, seed: int,
                     params: RobotParams | None = None,
                     out_dir=None, jobs: int = 1):
    """Generate all configured trajectories plus the dataset manifest.

    Returns (manifest, trajectories); when out_dir is given the
    manifest and per-trajectory files are also written there. Warns
    when the achieved fall fraction leaves [0.4, 0.6] (see
    calibrate_ranges for restoring the balance).
    """
    cfg = config if config is not None else DatasetConfig()
    cfg.validate()
    if params is None:
        params = RobotParams()
    tasks = [(kind, i)
             for kind, count in ((KIND_ABRUPT, cfg.count_abrupt),
                                 (KIND_INCIPIENT, cfg.count_incipient),
                                 (KIND_NONE, cfg.count_none))
             for i in range(count)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            trajectories = list(pool.map(
                lambda task: _build_one(seed, task[0], task[1], params, cfg),
                tasks))
    else:
        trajectories = [_build_one(seed, kind, i, params, cfg)
                        for kind, i in tasks]

    manifest = build_manifest(cfg, seed, params, trajectories)
    faulted = cfg.count_abrupt + cfg.count_incipient
    if faulted > 0 and not 0.4 <= manifest["fall_fraction"] <= 0.6:
        warnings.warn(
            f"fall fraction {manifest['fall_fraction']:.3f} outside "
            "[0.4, 0.6]; consider calibrate_ranges", stacklevel=2)
    if out_dir is not None:
        save_dataset(manifest, trajectories, out_dir)
    return manifest, trajectories


def build_manifest(cfg: DatasetConfig, seed: int, params: RobotParams,
                   trajectories) -> dict:
    counts = {kind: 0 for kind in KINDS}
    falls = {kind: 0 for kind in KINDS}
    for tr in trajectories:
        counts[tr.kind] += 1
        falls[tr.kind] += int(tr.fell)
    total = sum(counts.values())
    total_falls = sum(falls.values())
    safe = [tr for tr in trajectories if not tr.fell]
    lifted = sum(1 for tr in safe if tr.heel_or_toe_lift)
    by_kind = {kind: (falls[kind] / counts[kind] if counts[kind] else None)
               for kind in KINDS if counts[kind]}
    return {
        "generator_version": GENERATOR_VERSION,
        "seed": int(seed),
        "robot_params_hash": params.params_hash(),
        "config": cfg.to_dict(),
        "counts": {kind: counts[kind] for kind in KINDS if counts[kind]},
        "fall_fraction": (total_falls / total) if total else 0.0,
        "fall_fraction_by_kind": by_kind,
        "lift_fraction_safe": (lifted / len(safe)) if safe else 0.0,
        "trajectories": [
            {"id": tr.id, "kind": tr.kind, "outcome": tr.outcome,
             "fall_time": tr.fall_time, "n_samples": tr.n_samples,
             "heel_or_toe_lift": tr.heel_or_toe_lift}
            for tr in trajectories],
    }


def manifest_text(manifest: dict) -> str:
    return json.dumps(manifest, indent=2, sort_keys=True) + "\n"


def trajectory_csv(traj: Trajectory) -> str:
    """Sample table as delimiter-separated text, 9 significant digits."""
    data = np.hstack([traj.t[:, None], traj.q, traj.qd, traj.u,
                      traj.f_contact])
    buf = io.StringIO()
    np.savetxt(buf, data, fmt="%.9g", delimiter=",",
               header=CSV_HEADER, comments="")
    return buf.getvalue()


def trajectory_meta(traj: Trajectory) -> str:
    """Sidecar text: the fault draw and outcome flags, key = value."""
    lines = [
        f"id = {traj.id!r}",
        f"kind = {traj.fault.kind!r}",
        f"magnitude = {traj.fault.magnitude!r}",
        f"t_start = {traj.fault.t_start!r}",
        f"duration = {traj.fault.duration!r}",
        f"direction = {traj.fault.direction!r}",
        f"ramp = {traj.fault.ramp!r}",
        f"impulse = {traj.initial_impulse!r}",
        f"impulse_direction = {traj.impulse_direction!r}",
    ]
    if traj.fall_time is not None:
        lines.append(f"fall_time = {traj.fall_time!r}")
    lines.append(f"heel_or_toe_lift = {traj.heel_or_toe_lift!r}")
    return "\n".join(lines) + "\n"


def save_dataset(manifest: dict, trajectories, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / MANIFEST_NAME).write_text(manifest_text(manifest),
                                     encoding="utf-8")
    for tr in trajectories:
        (out / f"{tr.id}.csv").write_text(trajectory_csv(tr),
                                          encoding="utf-8")
        (out / f"{tr.id}.meta").write_text(trajectory_meta(tr),
                                           encoding="utf-8")


def _parse_meta(path: Path) -> dict:
    meta = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8")
                                 .splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in meta:
            raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
        meta[key] = ast.literal_eval(value)
    return meta


def load_trajectory(dataset_dir, traj_id: str) -> Trajectory:
    """Rebuild one trajectory from its sample file and sidecar."""
    root = Path(dataset_dir)
    meta = _parse_meta(root / f"{traj_id}.meta")
    text = (root / f"{traj_id}.csv").read_text(encoding="utf-8")
    header, _, body = text.partition("\n")
    if header.strip() != CSV_HEADER:
        raise ValueError(f"{traj_id}.csv: unexpected header")
    if body.strip():
        data = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
    else:
        data = np.zeros((0, CSV_COLUMNS))
    if data.shape[1] != CSV_COLUMNS:
        raise ValueError(f"{traj_id}.csv: expected {CSV_COLUMNS} columns")
    fault = FaultSpec(meta["kind"], meta["magnitude"], meta["t_start"],
                      meta["duration"], meta["direction"],
                      ramp=meta.get("ramp", False))
    return Trajectory(
        id=meta["id"], fault=fault,
        initial_impulse=meta["impulse"],
        impulse_direction=meta["impulse_direction"],
        t=data[:, 0], q=data[:, 1:7], qd=data[:, 7:13], u=data[:, 13:16],
        f_contact=data[:, 16:20],
        fall_time=meta.get("fall_time"),
        heel_or_toe_lift=meta["heel_or_toe_lift"])


def load_dataset(dataset_dir):
    """Read a dataset directory back into (manifest, trajectories)."""
    root = Path(dataset_dir)
    manifest = json.loads((root / MANIFEST_NAME).read_text(
        encoding="utf-8"))
    trajectories = [load_trajectory(root, entry["id"])
                    for entry in manifest["trajectories"]]
    return manifest, trajectories


def calibrate_ranges(kind: str, params: RobotParams,
                     tolerance: float = 0.05, *, seed: int = 0,
                     n_pilot: int = 100,
                     config: DatasetConfig | None = None,
                     max_iter: int = 24, jobs: int = 1) -> float:
    """Bisect the force-range maximum toward a 50% pilot fall fraction.

    Each probe regenerates the same n_pilot trajectories (common random
    numbers) under the candidate range and measures the fall fraction.
    Returns the calibrated maximum force in newtons.
    """
    if kind not in (KIND_ABRUPT, KIND_INCIPIENT):
        raise ValueError(f"cannot calibrate kind {kind!r}")
    cfg = config if config is not None else DatasetConfig()
    default_max = cfg.abrupt_max if kind == KIND_ABRUPT \
        else cfg.incipient_max
    if tolerance >= 0.5:
        return float(default_max)
    n_pilot = max(int(n_pilot), 100)

    def fraction(f_max: float) -> float:
        field = "abrupt_max" if kind == KIND_ABRUPT else "incipient_max"
        probe_cfg = cfg.replace(**{field: f_max})
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                runs = list(pool.map(
                    lambda i: _build_one(seed, kind, i, params, probe_cfg),
                    range(n_pilot)))
        else:
            runs = [_build_one(seed, kind, i, params, probe_cfg)
                    for i in range(n_pilot)]
        return sum(tr.fell for tr in runs) / n_pilot

    lo, hi = 0.0, float(default_max)
    f_lo = fraction(lo)
    if f_lo >= 0.5:
        warnings.warn(
            f"fall fraction {f_lo:.3f} with a zero force range; the "
            "controller cannot hold the stance, returning the minimal "
            "range edge", stacklevel=2)
        return lo
    if abs(f_lo - 0.5) <= tolerance:
        return lo
    f_hi = fraction(hi)
    for _ in range(8):
        if f_hi >= 0.5:
            break
        lo = hi
        hi *= 2.0
        f_hi = fraction(hi)
    if f_hi < 0.5:
        raise CalibrationFailed(
            f"no upper bracket: fall fraction {f_hi:.3f} at "
            f"{hi:.1f} N; the controller rejects the whole range")
    if abs(f_hi - 0.5) <= tolerance:
        return hi
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = fraction(mid)
        if abs(f_mid - 0.5) <= tolerance:
            return mid
        if f_mid < 0.5:
            lo = mid
        else:
            hi = mid
    raise CalibrationFailed(
        f"no candidate within tolerance {tolerance} after {max_iter} "
        "bisections; try a larger pilot batch")
