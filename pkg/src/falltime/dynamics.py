"""Public dynamics interface: terms, contact, control, stepping, falling.

The heavy lifting lives in the jitted kernels of _core; this module
wraps them in small typed containers and adds the pieces that only make
sense at the Python level (mode classification, diagnostics, energies).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _core
from .errors import IntegrationDiverged, NonFiniteState
from .params import RobotParams

MODE_FLAT = "flat"
MODE_TOE = "toe-rotation"
MODE_HEEL = "heel-rotation"
MODE_AIRBORNE = "airborne"


@dataclass
class GeneralizedState:
    """Time plus generalized positions and velocities."""

    t: float
    q: np.ndarray
    qd: np.ndarray

    def copy(self) -> "GeneralizedState":
        return GeneralizedState(self.t, self.q.copy(), self.qd.copy())


@dataclass
class ContactAnchors:
    """Tangential spring anchors recorded at touchdown."""

    toe_x: float = 0.0
    heel_x: float = 0.0
    toe_active: bool = False
    heel_active: bool = False


@dataclass
class ContactState:
    """Ground reaction at both sole points plus derived quantities."""

    f_toe: np.ndarray
    f_heel: np.ndarray
    p_toe: np.ndarray
    p_heel: np.ndarray
    mode: str
    cop_x: float  # NaN when airborne


@dataclass
class DynamicsTerms:
    """Terms of D(q) qdd + C(q, qd) qd + G(q) = B u + J^T forces.

    c_qd is the assembled velocity-product force vector C(q, qd) qd.
    J stacks two rows (x, z) per loaded contact point; jdot_qd is the
    matching velocity-product point acceleration, so J qdd + jdot_qd is
    the loaded-point acceleration used as a stiffness diagnostic.
    """

    D: np.ndarray
    c_qd: np.ndarray
    G: np.ndarray
    B: np.ndarray
    J: np.ndarray
    jdot_qd: np.ndarray
    contact_points: tuple[str, ...] = field(default_factory=tuple)


_B = np.zeros((6, 3))
_B[3, 0] = 1.0
_B[4, 1] = 1.0
_B[5, 2] = 1.0


def _check_state(state: GeneralizedState) -> None:
    if (state.q.shape != (6,) or state.qd.shape != (6,)):
        raise ValueError("state arrays must have shape (6,)")
    if not (np.all(np.isfinite(state.q)) and np.all(np.isfinite(state.qd))):
        raise NonFiniteState("state contains non-finite entries")


def contact_forces(state: GeneralizedState, params: RobotParams,
                   anchors: ContactAnchors | None = None) -> ContactState:
    """Evaluate the compliant ground reaction at toe and heel.

    Without anchors the tangential springs are unset, so freshly supplied
    states see normal forces only (anchor equals the current position).
    """
    _check_state(state)
    p = params.pack()
    if anchors is None:
        anchors = ContactAnchors()
    (toe_x, toe_z, toe_vx, toe_vz, heel_x, heel_z, heel_vx, heel_vz,
     _, _, _, _) = _core.foot_contact_state(state.q, state.qd, p)
    tfx, tfz = _core.point_contact_force(
        toe_z, toe_vz, toe_x, toe_vx, anchors.toe_x, anchors.toe_active, p)
    hfx, hfz = _core.point_contact_force(
        heel_z, heel_vz, heel_x, heel_vx,
        anchors.heel_x, anchors.heel_active, p)
    return build_contact_state(
        np.array([tfx, tfz]), np.array([hfx, hfz]),
        np.array([toe_x, toe_z]), np.array([heel_x, heel_z]))


def build_contact_state(f_toe: np.ndarray, f_heel: np.ndarray,
                        p_toe: np.ndarray, p_heel: np.ndarray) -> ContactState:
    """Classify the contact mode and CoP from point forces and positions."""
    toe_loaded = f_toe[1] > 0.0
    heel_loaded = f_heel[1] > 0.0
    if toe_loaded and heel_loaded:
        mode = MODE_FLAT
    elif toe_loaded:
        mode = MODE_TOE
    elif heel_loaded:
        mode = MODE_HEEL
    else:
        mode = MODE_AIRBORNE
    total = f_toe[1] + f_heel[1]
    if total > 0.0:
        cop_x = (f_toe[1] * p_toe[0] + f_heel[1] * p_heel[0]) / total
    else:
        cop_x = float("nan")
    return ContactState(f_toe=np.asarray(f_toe, dtype=float),
                        f_heel=np.asarray(f_heel, dtype=float),
                        p_toe=np.asarray(p_toe, dtype=float),
                        p_heel=np.asarray(p_heel, dtype=float),
                        mode=mode, cop_x=float(cop_x))


def dynamics_terms(state: GeneralizedState, params: RobotParams,
                   contact: ContactState | None = None) -> DynamicsTerms:
    """Assemble the planar rigid-body terms at a state.

    When a contact state is supplied, J and jdot_qd carry two rows per
    loaded point (toe first); otherwise they are empty.
    """
    _check_state(state)
    p = params.pack()
    D, c_qd, G = _core.dyn_terms(state.q, state.qd, p)
    if contact is None:
        contact = contact_forces(state, params)
    (toe_x, toe_z, toe_vx, toe_vz, heel_x, heel_z, heel_vx, heel_vz,
     rpt_x, rpt_z, rph_x, rph_z) = _core.foot_contact_state(
        state.q, state.qd, p)
    rows = []
    jdots = []
    names = []
    psi0 = state.q[2]
    w0 = state.qd[2]
    c0, s0 = np.cos(psi0), np.sin(psi0)
    for name, loaded, rp, w in (
            ("toe", contact.f_toe[1] > 0.0, (rpt_x, rpt_z),
             (params.foot_toe, -params.ankle_height)),
            ("heel", contact.f_heel[1] > 0.0, (rph_x, rph_z),
             (-params.foot_heel, -params.ankle_height))):
        if not loaded:
            continue
        names.append(name)
        rx = np.zeros(6)
        rz = np.zeros(6)
        rx[0] = 1.0
        rz[1] = 1.0
        rx[2] = rp[0]
        rz[2] = rp[1]
        rows.append(rx)
        rows.append(rz)
        # velocity-product point acceleration: -R(psi0) w * w0^2
        r_x = c0 * w[0] - s0 * w[1]
        r_z = s0 * w[0] + c0 * w[1]
        jdots.append(-r_x * w0 * w0)
        jdots.append(-r_z * w0 * w0)
    J = np.array(rows) if rows else np.zeros((0, 6))
    jdot_qd = np.array(jdots) if jdots else np.zeros(0)
    return DynamicsTerms(D=D, c_qd=c_qd, G=G, B=_B.copy(), J=J,
                         jdot_qd=jdot_qd, contact_points=tuple(names))


def pd_control(state: GeneralizedState, params: RobotParams) -> np.ndarray:
    """Clamped joint-space PD torques for the standing setpoints."""
    _check_state(state)
    return _core.pd_control(state.q, state.qd, params.pack())


def link_points(state: GeneralizedState, params: RobotParams) -> dict:
    """Named world positions of the chain points."""
    _check_state(state)
    pts = _core.link_points(state.q, params.pack())
    names = ("ankle", "toe", "heel", "foot_com", "knee", "shank_com",
             "hip", "thigh_com", "torso_tip", "torso_com")
    return {name: pts[i].copy() for i, name in enumerate(names)}


def mechanical_energy(state: GeneralizedState,
                      params: RobotParams) -> tuple[float, float]:
    """(kinetic, gravitational potential); contact springs excluded."""
    _check_state(state)
    p = params.pack()
    return (float(_core.kinetic_energy(state.q, state.qd, p)),
            float(_core.potential_energy(state.q, p)))


def fall_predicate(state: GeneralizedState, params: RobotParams,
                   airborne_time: float = 0.0) -> bool:
    """Fallen iff a monitored point reached the ground, or the feet have
    been airborne for at least the configured dwell."""
    _check_state(state)
    pts = _core.link_points(state.q, params.pack())
    knee_z, hip_z, tip_z = pts[4, 1], pts[6, 1], pts[8, 1]
    if min(knee_z, hip_z, tip_z) <= 0.0:
        return True
    toe_z, heel_z = pts[1, 1], pts[2, 1]
    airborne = toe_z > params.h_air and heel_z > params.h_air
    return airborne and airborne_time >= params.t_air - 1e-12


def step(state: GeneralizedState, params: RobotParams,
         external_force: tuple[float, float] = (0.0, 0.0),
         anchors: ContactAnchors | None = None,
         at_tip: bool = False) -> GeneralizedState:
    """One fixed-step RK4 update of the closed-loop robot.

    Joint torques are held over the step; the external force is applied
    at the torso CoM (or tip) for the whole step.
    """
    _check_state(state)
    p = params.pack()
    if anchors is None:
        anchors = ContactAnchors()
    windows = np.array([[state.t - 1.0, state.t + 1.0 + params.h_int,
                         external_force[0], external_force[1], 0.0]])
    u = _core.pd_control(state.q, state.qd, p)
    q, qd = _core.rk4_step(
        state.q, state.qd, state.t, params.h_int, u, windows, at_tip,
        anchors.toe_x, anchors.toe_active,
        anchors.heel_x, anchors.heel_active, p)
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
        raise IntegrationDiverged("non-finite state after step", t=state.t)
    if np.max(np.abs(q)) > params.q_bound or \
            np.max(np.abs(qd)) > params.qd_bound:
        raise IntegrationDiverged("state bound exceeded", t=state.t)
    return GeneralizedState(state.t + params.h_int, q, qd)


def constraint_residual(state: GeneralizedState, qdd: np.ndarray,
                        params: RobotParams) -> float:
    """Max loaded-point acceleration |J qdd + jdot_qd| (diagnostic).

    With ideal rigid contact this would be exactly zero; the compliant
    model keeps it small whenever the springs are near steady load.
    """
    terms = dynamics_terms(state, params)
    if terms.J.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(terms.J @ qdd + terms.jdot_qd)))
