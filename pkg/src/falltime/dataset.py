"""From trajectories to training sets: sliding windows, lead-time
labeling, min-max scaling, and stratified splitting.

Windows advance one sample at a time and never span trajectories. A
window is faulty (-1) iff it contains any sample past the trajectory's
label boundary: fall_time minus the training lead time, clamped to the
fault onset for abrupt faults. Safe-outcome trajectories contribute
only their first six seconds and never carry faulty labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import features
from .errors import LeadTimeOutOfRange, TooFewTrajectories
from .params import RobotParams
from .scenario import KIND_ABRUPT, KIND_INCIPIENT, Trajectory

N_WINDOW_DEFAULT = 10
LEAD_TIME_MAX = 2.0
SAFE_SPAN = 6.0

SPLIT_KFOLD = "kfold"
SPLIT_HOLDOUT = "holdout"

GROUP_TRAIN, GROUP_VAL, GROUP_TEST = 0, 1, 2
HOLDOUT_FRACTIONS = (0.6, 0.2, 0.2)


@dataclass
class FeatureWindow:
    """One labeled window: m consecutive feature frames."""

    traj_id: str
    end_time: float
    X: np.ndarray
    y: int


@dataclass
class ScalerParams:
    """Per-dimension extrema of the fit set (min-max scaling)."""

    min_: np.ndarray
    max_: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.min_.shape[0])


def retained_samples(traj: Trajectory) -> int:
    """Sample count after the safe-trajectory six-second clip.

    Fall trajectories keep everything (they truncate at the fall);
    safe-outcome trajectories keep only their first SAFE_SPAN seconds
    so the training data stays transient.
    """
    n = traj.n_samples
    if traj.fell or n == 0:
        return n
    dt = float(traj.t[1] - traj.t[0]) if n > 1 else 0.03
    return min(n, int(round(SAFE_SPAN / dt)))


def _check_lead(training_lead_time: float) -> None:
    if not 0.0 <= training_lead_time <= LEAD_TIME_MAX:
        raise LeadTimeOutOfRange(
            f"training lead time {training_lead_time!r} outside "
            f"[0, {LEAD_TIME_MAX}]")


def label_boundary(traj: Trajectory, training_lead_time: float) -> float:
    """Time after which samples count as faulty; inf for safe runs."""
    _check_lead(training_lead_time)
    if not traj.fell:
        return np.inf
    boundary = traj.fall_time - training_lead_time
    if traj.kind == KIND_ABRUPT:
        # faulty labels are only defined once the push has started
        boundary = max(boundary, traj.fault.t_start)
    return boundary


def label_windows(traj: Trajectory, training_lead_time: float,
                  n_window: int = N_WINDOW_DEFAULT, *,
                  frames: np.ndarray | None = None,
                  params: RobotParams | None = None,
                  feature_set_id: str = features.DEFAULT_FEATURE_SET
                  ) -> list:
    """All full windows of one trajectory with lead-time labels.

    frames may be precomputed (n_samples, d); otherwise they are built
    from params. Windows end strictly inside the retained span; partial
    warm-up windows are skipped.
    """
    boundary = label_boundary(traj, training_lead_time)
    if frames is None:
        if params is None:
            raise ValueError("need either frames or params")
        frames = features.trajectory_frames(traj, params, feature_set_id)
    n = retained_samples(traj)
    out = []
    for k in range(n - n_window + 1):
        end = k + n_window - 1
        end_time = float(traj.t[end])
        y = -1 if end_time > boundary else 1
        out.append(FeatureWindow(traj_id=traj.id, end_time=end_time,
                                 X=frames[k:end + 1], y=y))
    return out


@dataclass
class WindowSet:
    """Columnar window tensor for a whole dataset.

    X is (n_windows, n_window, d) raw (unscaled) frames; traj_index
    maps every window to its row in the per-trajectory metadata arrays.
    Labels are not stored: they depend on the training lead time and
    are derived on demand by labels(), so one WindowSet serves every
    candidate lead time.
    """

    X: np.ndarray
    end_times: np.ndarray
    traj_index: np.ndarray
    ids: tuple
    kinds: tuple
    outcomes: tuple
    fall_times: np.ndarray
    onsets: np.ndarray
    n_window: int
    feature_set_id: str

    @property
    def n_windows(self) -> int:
        return int(self.X.shape[0])

    @property
    def dim(self) -> int:
        return int(self.X.shape[2])

    def labels(self, training_lead_time: float) -> np.ndarray:
        """Window labels (+1 safe, -1 faulty) for one lead time."""
        _check_lead(training_lead_time)
        boundary = self.fall_times - training_lead_time
        abrupt = np.array([k == KIND_ABRUPT for k in self.kinds])
        boundary = np.where(abrupt, np.maximum(boundary, self.onsets),
                            boundary)
        boundary = np.where(np.isnan(self.fall_times), np.inf, boundary)
        faulty = self.end_times > boundary[self.traj_index]
        return np.where(faulty, -1, 1).astype(np.int8)

    def flat(self) -> np.ndarray:
        """Windows as (n_windows, n_window * d) row vectors."""
        return self.X.reshape(self.n_windows, -1)

    def windows_of(self, traj_idx: int) -> np.ndarray:
        """Window row indices of one trajectory, in stream order."""
        return np.nonzero(self.traj_index == traj_idx)[0]

    def rows_for_ids(self, wanted_ids) -> np.ndarray:
        wanted = set(wanted_ids)
        member = np.array([tid in wanted for tid in self.ids])
        return np.nonzero(member[self.traj_index])[0]


def build_window_set(trajectories, params: RobotParams,
                     feature_set_id: str = features.DEFAULT_FEATURE_SET,
                     n_window: int = N_WINDOW_DEFAULT) -> WindowSet:
    """Window every trajectory once; labels come later per lead time."""
    xs = []
    ends = []
    tindex = []
    for idx, traj in enumerate(trajectories):
        frames = features.trajectory_frames(traj, params, feature_set_id)
        n = retained_samples(traj)
        for k in range(n - n_window + 1):
            end = k + n_window - 1
            xs.append(frames[k:end + 1])
            ends.append(float(traj.t[end]))
            tindex.append(idx)
    d = features.feature_set(feature_set_id).dim
    X = np.array(xs) if xs else np.zeros((0, n_window, d))
    return WindowSet(
        X=X, end_times=np.array(ends),
        traj_index=np.array(tindex, dtype=np.int64),
        ids=tuple(tr.id for tr in trajectories),
        kinds=tuple(tr.kind for tr in trajectories),
        outcomes=tuple(tr.outcome for tr in trajectories),
        fall_times=np.array([tr.fall_time if tr.fell else np.nan
                             for tr in trajectories]),
        onsets=np.array([tr.fault.t_start for tr in trajectories]),
        n_window=n_window, feature_set_id=feature_set_id)


def fit_scaler(X: np.ndarray) -> ScalerParams:
    """Per-feature extrema over raw frames of the training windows.

    X may be (n, d) frames or (n, m, d) windows; the reduction runs
    over every axis except the last.
    """
    if X.size == 0:
        raise ValueError("cannot fit a scaler on an empty set")
    reduce_axes = tuple(range(X.ndim - 1))
    return ScalerParams(min_=X.min(axis=reduce_axes),
                        max_=X.max(axis=reduce_axes))


def apply_scaler(scaler: ScalerParams, X: np.ndarray,
                 clip: bool = False) -> np.ndarray:
    """Elementwise (x - min) / (max - min); constant dimensions to 0.

    Out-of-range inputs map outside [0, 1] unless clip is set.
    """
    span = scaler.max_ - scaler.min_
    inv = np.where(span > 0.0, 1.0 / np.where(span > 0.0, span, 1.0), 0.0)
    out = (X - scaler.min_) * inv
    if clip:
        out = np.clip(out, 0.0, 1.0)
    return out


@dataclass
class SplitPlan:
    """Whole-trajectory split assignments, stratified by
    (fault kind, outcome)."""

    kind: str
    seed: int
    ids: tuple
    strata: tuple
    assignment: np.ndarray
    n_folds: int

    def fold_ids(self, fold: int) -> list:
        return [tid for tid, g in zip(self.ids, self.assignment)
                if g == fold]

    def train_ids(self, fold: int) -> list:
        """k-fold: everything outside the held-out fold."""
        return [tid for tid, g in zip(self.ids, self.assignment)
                if g != fold]

    def group_ids(self, group: int) -> list:
        """Holdout groups GROUP_TRAIN / GROUP_VAL / GROUP_TEST."""
        return self.fold_ids(group)


def _stratum_key(traj: Trajectory) -> tuple:
    return (traj.kind, traj.outcome)


def make_splits(trajectories, kind: str = SPLIT_KFOLD, seed: int = 0,
                n_folds: int = 5) -> SplitPlan:
    """Deterministic stratified split by whole trajectory.

    kfold deals each stratum round-robin across n_folds after a seeded
    shuffle; holdout allocates 60/20/20 by largest remainder. Every
    fold or group keeps each stratum's share within one trajectory.
    """
    if kind not in (SPLIT_KFOLD, SPLIT_HOLDOUT):
        raise ValueError(f"unknown split kind {kind!r}")
    ids = tuple(tr.id for tr in trajectories)
    strata = tuple(_stratum_key(tr) for tr in trajectories)
    assignment = np.full(len(ids), -1, dtype=np.int64)
    rng = np.random.default_rng(seed)
    groups = {}
    for i, key in enumerate(strata):
        groups.setdefault(key, []).append(i)

    for key in sorted(groups):
        members = np.array(groups[key])
        rng.shuffle(members)
        if kind == SPLIT_KFOLD:
            if members.size < n_folds:
                raise TooFewTrajectories(
                    f"stratum {key} has {members.size} trajectories, "
                    f"need at least {n_folds} for {n_folds}-fold splits")
            for pos, idx in enumerate(members):
                assignment[idx] = pos % n_folds
        else:
            # cumulative rounding keeps both each stratum and the whole
            # dataset within one trajectory of the exact fractions
            edges = np.round(np.cumsum(HOLDOUT_FRACTIONS)
                             * members.size).astype(int)
            start = 0
            for g, stop in enumerate(edges):
                assignment[members[start:stop]] = g
                start = stop
    return SplitPlan(kind=kind, seed=seed, ids=ids, strata=strata,
                     assignment=assignment,
                     n_folds=n_folds if kind == SPLIT_KFOLD else 3)


@dataclass
class IdentifierWindows:
    """Joint-velocity windows for the fault-type identifier.

    X is (n, n_window, 3) over the actuated joint velocities; labels
    are +1 for incipient-like windows and -1 for windows containing the
    abrupt push.
    """

    X: np.ndarray
    y: np.ndarray
    end_times: np.ndarray
    traj_ids: tuple


def identifier_windows(trajectories, n_window: int = N_WINDOW_DEFAULT
                       ) -> IdentifierWindows:
    """Training windows for telling abrupt from incipient faults.

    Abrupt trajectories contribute their pre-push windows as incipient
    examples and their push-overlapping windows as abrupt examples
    (later windows are dropped). Incipient trajectories contribute
    every k-th window, k chosen to roughly match the abrupt count.
    """
    abrupt_x, abrupt_end, abrupt_tid = [], [], []
    pre_x, pre_end, pre_tid = [], [], []
    inc_x, inc_end, inc_tid = [], [], []

    for traj in trajectories:
        n = retained_samples(traj)
        qd = traj.qd[:, 3:6]
        if traj.kind == KIND_ABRUPT:
            t0 = traj.fault.t_start
            t1 = t0 + traj.fault.duration
            in_force = (traj.t >= t0) & (traj.t < t1)
            for k in range(n - n_window + 1):
                end = k + n_window - 1
                if in_force[k:end + 1].any():
                    abrupt_x.append(qd[k:end + 1])
                    abrupt_end.append(float(traj.t[end]))
                    abrupt_tid.append(traj.id)
                elif traj.t[end] < t0:
                    pre_x.append(qd[k:end + 1])
                    pre_end.append(float(traj.t[end]))
                    pre_tid.append(traj.id)
        elif traj.kind == KIND_INCIPIENT:
            for k in range(n - n_window + 1):
                end = k + n_window - 1
                inc_x.append(qd[k:end + 1])
                inc_end.append(float(traj.t[end]))
                inc_tid.append(traj.id)

    if inc_x and abrupt_x:
        stride = max(1, int(round(len(inc_x) / len(abrupt_x))))
        inc_x = inc_x[::stride]
        inc_end = inc_end[::stride]
        inc_tid = inc_tid[::stride]

    xs = abrupt_x + pre_x + inc_x
    ys = ([-1] * len(abrupt_x) + [1] * len(pre_x) + [1] * len(inc_x))
    ends = abrupt_end + pre_end + inc_end
    tids = abrupt_tid + pre_tid + inc_tid
    X = np.array(xs) if xs else np.zeros((0, n_window, 3))
    return IdentifierWindows(X=X, y=np.array(ys, dtype=np.int8),
                             end_times=np.array(ends),
                             traj_ids=tuple(tids))


def export_windows(window_set: WindowSet, labels: np.ndarray,
                   path) -> None:
    """Flat matrix file: id, end_time, label, then m*d frame values."""
    flat = window_set.flat()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("traj_id,end_time,label,"
                 + ",".join(f"x{j}" for j in range(flat.shape[1]))
                 + "\n")
        for w in range(window_set.n_windows):
            tid = window_set.ids[window_set.traj_index[w]]
            cells = ",".join(format(v, ".9g") for v in flat[w])
            fh.write(f"{tid},{window_set.end_times[w]:.9g},"
                     f"{labels[w]:d},{cells}\n")
