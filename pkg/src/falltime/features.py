"""Physical quantities behind the detectors: CoM kinematics, angular
momenta about CoM and contact point, the feature-vector registry, and
the distance-correlation statistic used for feature diagnostics and the
nearest-neighbor weighting matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _core
from .dynamics import (MODE_AIRBORNE, MODE_FLAT, MODE_HEEL, MODE_TOE,
                       ContactState, GeneralizedState)
from .errors import DegenerateSeries, UnknownFeatureSet
from .params import RobotParams

MODE_NAMES = (MODE_FLAT, MODE_TOE, MODE_HEEL, MODE_AIRBORNE)

DCOR_MAX_SAMPLES = 2000


@dataclass
class KinematicsBatch:
    """Columnar per-sample kinematics for one trajectory.

    l_com is the angular momentum about the system CoM; l_cop the
    angular momentum about the contact reference point, whose x
    coordinate is contact_x (rotation point when the foot rotates, CoP
    when flat, foot midpoint when airborne). cop_x is NaN on airborne
    samples. mode holds contact-mode codes indexing MODE_NAMES.
    """

    q: np.ndarray
    qd: np.ndarray
    p_com: np.ndarray
    v_com: np.ndarray
    l_com: np.ndarray
    l_cop: np.ndarray
    p_toe: np.ndarray
    p_heel: np.ndarray
    p_f_mid: np.ndarray
    contact_x: np.ndarray
    cop_x: np.ndarray
    mode: np.ndarray

    @property
    def n_samples(self) -> int:
        return int(self.q.shape[0])


@dataclass
class KinematicsSummary:
    """Single-sample view of KinematicsBatch, plus the raw state."""

    q: np.ndarray
    qd: np.ndarray
    p_com: np.ndarray
    v_com: np.ndarray
    p_toe: np.ndarray
    p_heel: np.ndarray
    p_f_mid: np.ndarray
    p_cop_x: float
    L_com: float
    L_cop: float
    contact_point_x: float
    mode: str


@dataclass(frozen=True)
class FeatureFrame:
    """One feature vector tagged with the set that produced it."""

    values: np.ndarray
    feature_set_id: str


def kinematics_batch(q: np.ndarray, qd: np.ndarray, f_contact: np.ndarray,
                     params: RobotParams) -> KinematicsBatch:
    """Vectorized kinematics over sample arrays (n,6),(n,6),(n,4)."""
    q = np.ascontiguousarray(q, dtype=float)
    qd = np.ascontiguousarray(qd, dtype=float)
    f_contact = np.ascontiguousarray(f_contact, dtype=float)
    (p_com, v_com, l_com, l_ref, p_toe, p_heel, ref_x, cop_x,
     mode) = _core.feature_kinematics(q, qd, f_contact, params.pack())
    return KinematicsBatch(q=q, qd=qd, p_com=p_com, v_com=v_com,
                           l_com=l_com, l_cop=l_ref, p_toe=p_toe,
                           p_heel=p_heel,
                           p_f_mid=0.5 * (p_toe + p_heel),
                           contact_x=ref_x, cop_x=cop_x, mode=mode)


def kinematics(state: GeneralizedState, contact: ContactState,
               params: RobotParams) -> KinematicsSummary:
    """Mass-weighted CoM kinematics and momenta at a single state."""
    f = np.array([[contact.f_toe[0], contact.f_toe[1],
                   contact.f_heel[0], contact.f_heel[1]]])
    batch = kinematics_batch(state.q[None, :], state.qd[None, :], f,
                             params)
    return KinematicsSummary(
        q=batch.q[0], qd=batch.qd[0], p_com=batch.p_com[0],
        v_com=batch.v_com[0], p_toe=batch.p_toe[0],
        p_heel=batch.p_heel[0], p_f_mid=batch.p_f_mid[0],
        p_cop_x=float(batch.cop_x[0]), L_com=float(batch.l_com[0]),
        L_cop=float(batch.l_cop[0]),
        contact_point_x=float(batch.contact_x[0]),
        mode=MODE_NAMES[int(batch.mode[0])])


def _sgn(x: np.ndarray) -> np.ndarray:
    # ties are deterministic: sgn(0) is +1
    return np.where(np.asarray(x) >= 0.0, 1.0, -1.0)


def _frames_main7(b: KinematicsBatch) -> np.ndarray:
    signed = (b.l_cop + b.l_com) * _sgn(b.p_com[:, 0] - b.p_f_mid[:, 0])
    return np.column_stack([
        b.l_cop - b.l_com,
        b.p_com[:, 0],
        b.v_com[:, 0],
        b.p_toe[:, 0] - b.p_com[:, 0],
        b.p_heel[:, 0] - b.p_toe[:, 0],
        b.p_heel[:, 1] - b.p_toe[:, 1],
        signed,
    ])


def _frames_incipient_f1(b: KinematicsBatch) -> np.ndarray:
    signed = (b.l_cop + b.l_com) * _sgn(b.p_com[:, 0] - b.p_f_mid[:, 0])
    return np.column_stack([b.q[:, 4], b.q[:, 5], b.qd[:, 5], signed])


def _frames_abrupt_f1(b: KinematicsBatch) -> np.ndarray:
    return np.column_stack([
        b.p_com[:, 0],
        b.v_com[:, 0],
        b.p_com[:, 0] - b.p_heel[:, 0],
        b.q[:, 0],
        b.qd[:, 1],
        b.qd[:, 5],
    ])


def _frames_joint_velocities(b: KinematicsBatch) -> np.ndarray:
    return np.ascontiguousarray(b.qd[:, 3:6])


@dataclass(frozen=True)
class FeatureSetDef:
    names: tuple
    builder: object

    @property
    def dim(self) -> int:
        return len(self.names)


FEATURE_SETS = {
    "main7": FeatureSetDef(
        names=("l_cop_minus_l_com", "p_com_x", "v_com_x",
               "toe_minus_com_x", "heel_minus_toe_x", "heel_minus_toe_z",
               "l_sum_signed"),
        builder=_frames_main7),
    "incipient-f1": FeatureSetDef(
        names=("knee", "hip", "d_hip", "l_sum_signed"),
        builder=_frames_incipient_f1),
    "abrupt-f1": FeatureSetDef(
        names=("p_com_x", "v_com_x", "com_minus_heel_x", "foot_x",
               "d_foot_z", "d_hip"),
        builder=_frames_abrupt_f1),
    "joint-velocities": FeatureSetDef(
        names=("d_ankle", "d_knee", "d_hip"),
        builder=_frames_joint_velocities),
}

DEFAULT_FEATURE_SET = "main7"


def feature_set(feature_set_id: str) -> FeatureSetDef:
    try:
        return FEATURE_SETS[feature_set_id]
    except KeyError:
        raise UnknownFeatureSet(
            f"feature set {feature_set_id!r} not registered; known: "
            f"{sorted(FEATURE_SETS)}") from None


def batch_frames(batch: KinematicsBatch,
                 feature_set_id: str = DEFAULT_FEATURE_SET) -> np.ndarray:
    """Feature matrix (n, d) for a kinematics batch."""
    return feature_set(feature_set_id).builder(batch)


def feature_frame(summary: KinematicsSummary,
                  feature_set_id: str = DEFAULT_FEATURE_SET
                  ) -> FeatureFrame:
    """Single feature vector from a kinematics summary."""
    batch = KinematicsBatch(
        q=summary.q[None, :], qd=summary.qd[None, :],
        p_com=summary.p_com[None, :], v_com=summary.v_com[None, :],
        l_com=np.array([summary.L_com]),
        l_cop=np.array([summary.L_cop]),
        p_toe=summary.p_toe[None, :], p_heel=summary.p_heel[None, :],
        p_f_mid=summary.p_f_mid[None, :],
        contact_x=np.array([summary.contact_point_x]),
        cop_x=np.array([summary.p_cop_x]),
        mode=np.array([MODE_NAMES.index(summary.mode)]))
    values = batch_frames(batch, feature_set_id)[0]
    return FeatureFrame(values=values, feature_set_id=feature_set_id)


def trajectory_frames(traj, params: RobotParams,
                      feature_set_id: str = DEFAULT_FEATURE_SET
                      ) -> np.ndarray:
    """Feature matrix (n_samples, d) for a generated trajectory."""
    batch = kinematics_batch(traj.q, traj.qd, traj.f_contact, params)
    return batch_frames(batch, feature_set_id)


def _subsample(x: np.ndarray, y: np.ndarray):
    n = x.size
    if n <= DCOR_MAX_SAMPLES:
        return x, y
    # evenly spaced subsample keeps the statistic deterministic
    idx = np.linspace(0, n - 1, DCOR_MAX_SAMPLES).astype(np.int64)
    return x[idx], y[idx]


def distance_correlation(x, y) -> float:
    """Distance correlation of two scalar series, in [0, 1].

    Double-centered pairwise-distance estimator; series longer than
    DCOR_MAX_SAMPLES are evenly subsampled first. Constant series are
    defined to have zero correlation with anything.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise ValueError("series must have equal length")
    if x.size < 2:
        raise DegenerateSeries(
            f"need at least 2 samples, got {x.size}")
    x, y = _subsample(x, y)
    if np.all(x == x[0]) or np.all(y == y[0]):
        return 0.0
    a = np.abs(x[:, None] - x[None, :])
    b = np.abs(y[:, None] - y[None, :])
    A = a - a.mean(axis=0)[None, :] - a.mean(axis=1)[:, None] + a.mean()
    B = b - b.mean(axis=0)[None, :] - b.mean(axis=1)[:, None] + b.mean()
    dcov2 = (A * B).mean()
    dvar_x = (A * A).mean()
    dvar_y = (B * B).mean()
    if dvar_x <= 0.0 or dvar_y <= 0.0:
        return 0.0
    r2 = max(dcov2, 0.0) / np.sqrt(dvar_x * dvar_y)
    return float(np.sqrt(min(r2, 1.0)))


@dataclass
class FeatureReport:
    """Diagnostic correlations: each feature against the time left
    before the fall, and each feature against every other."""

    feature_set_id: str
    columns: tuple
    dcor_lead: np.ndarray
    dcor_pairwise: np.ndarray
    n_frames: int

    def to_text(self) -> str:
        rows = ["feature," + ",".join(self.columns) + ",lead_time"]
        for i, name in enumerate(self.columns):
            cells = ",".join(format(v, ".6g")
                             for v in self.dcor_pairwise[i])
            rows.append(f"{name},{cells},"
                        f"{format(self.dcor_lead[i], '.6g')}")
        return "\n".join(rows) + "\n"


def feature_report(trajectories, params: RobotParams,
                   feature_set_id: str = DEFAULT_FEATURE_SET,
                   columns=None) -> FeatureReport:
    """Correlation diagnostics over the fall trajectories of a dataset.

    columns selects (and may repeat) features by name from the set;
    default is every feature. Lead time for a sample at time t of a
    fall trajectory is fall_time - t.
    """
    spec = feature_set(feature_set_id)
    if columns is None:
        columns = spec.names
    picks = []
    for name in columns:
        if name not in spec.names:
            raise UnknownFeatureSet(
                f"feature {name!r} not in set {feature_set_id!r}")
        picks.append(spec.names.index(name))

    frames = []
    leads = []
    for traj in trajectories:
        if traj.fall_time is None or traj.n_samples == 0:
            continue
        frames.append(trajectory_frames(traj, params, feature_set_id))
        leads.append(traj.fall_time - traj.t)
    if not frames:
        raise ValueError("no fall trajectories with samples in dataset")
    X = np.vstack(frames)[:, picks]
    lead = np.concatenate(leads)

    d = len(picks)
    dcor_lead = np.array([distance_correlation(X[:, i], lead)
                          for i in range(d)])
    pairwise = np.ones((d, d))
    for i in range(d):
        for j in range(i + 1, d):
            val = distance_correlation(X[:, i], X[:, j])
            pairwise[i, j] = val
            pairwise[j, i] = val
        pairwise[i, i] = distance_correlation(X[:, i], X[:, i])
    return FeatureReport(feature_set_id=feature_set_id,
                         columns=tuple(columns), dcor_lead=dcor_lead,
                         dcor_pairwise=pairwise, n_frames=X.shape[0])
