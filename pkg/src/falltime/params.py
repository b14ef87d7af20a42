"""Robot parameter set: geometry, masses, contact law, controller gains.

The robot is a planar four-link chain (foot, shank, thigh, torso) standing
on compliant ground.  Everything the simulator needs is collected in one
frozen dataclass so a parameter file fully determines the dynamics.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace

import numpy as np

SCHEMA_VERSION = 1

# Index layout of the packed parameter vector consumed by the jit kernels.
P_G = 0
P_M_FOOT, P_M_SHANK, P_M_THIGH, P_M_TORSO = 1, 2, 3, 4
P_I_FOOT, P_I_SHANK, P_I_THIGH, P_I_TORSO = 5, 6, 7, 8
P_FOOT_TOE, P_FOOT_HEEL, P_ANKLE_H, P_FOOT_COM = 9, 10, 11, 12
P_L_SHANK, P_L_THIGH, P_L_TORSO = 13, 14, 15
P_C_SHANK, P_C_THIGH, P_C_TORSO = 16, 17, 18
P_K_NORMAL, P_C_NORMAL, P_K_TANGENT, P_C_TANGENT = 19, 20, 21, 22
P_KP_ANKLE, P_KP_KNEE, P_KP_HIP = 23, 24, 25
P_KD_ANKLE, P_KD_KNEE, P_KD_HIP = 26, 27, 28
P_QSTAR_ANKLE, P_QSTAR_KNEE, P_QSTAR_HIP = 29, 30, 31
P_TAU_ANKLE, P_TAU_KNEE, P_TAU_HIP = 32, 33, 34
P_H_INT, P_H_AIR, P_T_AIR = 35, 36, 37
P_Q_BOUND, P_QD_BOUND = 38, 39
P_B_ANKLE, P_B_KNEE, P_B_HIP = 40, 41, 42
P_JR_ANKLE, P_JR_KNEE, P_JR_HIP = 43, 44, 45
P_SIZE = 46


@dataclass(frozen=True)
class RobotParams:
    """Physical and controller constants for the standing biped.

    Joint angles are zero in nominal stance: foot flat, leg vertical,
    torso upright.  The foot reference point (generalized coordinates
    foot_x, foot_z) is the ankle joint; the sole lies ankle_height below
    it, extending foot_toe forward and foot_heel backward.
    """

    g: float = 9.81

    # link masses, kg
    m_foot: float = 2.5
    m_shank: float = 7.0
    m_thigh: float = 12.0
    m_torso: float = 53.5

    # planar inertias about each link CoM, kg m^2 (uniform rod defaults)
    i_foot: float = 2.5 * 0.2**2 / 12.0
    i_shank: float = 7.0 * 0.45**2 / 12.0
    i_thigh: float = 12.0 * 0.45**2 / 12.0
    i_torso: float = 53.5 * 0.6**2 / 12.0

    # foot geometry, m: sole distances from the point below the ankle
    foot_toe: float = 0.10
    foot_heel: float = 0.10
    ankle_height: float = 0.05
    foot_com: float = 0.0  # CoM offset along the sole, toe-ward positive

    # upper link lengths and CoM offsets from the proximal joint, m
    l_shank: float = 0.45
    l_thigh: float = 0.45
    l_torso: float = 0.60
    com_shank: float = 0.225
    com_thigh: float = 0.225
    com_torso: float = 0.30

    # ground contact law, N/m and N s/m
    k_normal: float = 3.0e5
    c_normal: float = 500.0
    k_tangent: float = 3.0e4
    c_tangent: float = 300.0

    # PD standing controller (ankle, knee, hip)
    kp_ankle: float = 3500.0
    kp_knee: float = 1500.0
    kp_hip: float = 1000.0
    kd_ankle: float = 200.0
    kd_knee: float = 150.0
    kd_hip: float = 120.0
    q_star_ankle: float = 0.0
    q_star_knee: float = 0.0
    q_star_hip: float = 0.0
    tau_max_ankle: float = 70.0
    tau_max_knee: float = 300.0
    tau_max_hip: float = 250.0

    # passive joint viscous damping, N m s/rad (acts outside the
    # actuator torque limits, like gearbox and bearing friction)
    b_ankle: float = 8.0
    b_knee: float = 10.0
    b_hip: float = 10.0

    # reflected actuator inertia per joint coordinate, kg m^2
    # (rotor inertia times gear ratio squared)
    j_rotor_ankle: float = 0.10
    j_rotor_knee: float = 0.10
    j_rotor_hip: float = 0.10

    # integration and fall monitoring
    h_int: float = 0.001
    h_air: float = 0.03   # both feet above this height counts as airborne
    t_air: float = 0.06   # required airborne dwell before "fallen"
    q_bound: float = 1.0e3
    qd_bound: float = 1.0e4

    @property
    def total_mass(self) -> float:
        return self.m_foot + self.m_shank + self.m_thigh + self.m_torso

    @property
    def foot_length(self) -> float:
        return self.foot_toe + self.foot_heel

    def validate(self) -> None:
        for name in ("g", "m_foot", "m_shank", "m_thigh", "m_torso",
                     "i_foot", "i_shank", "i_thigh", "i_torso",
                     "foot_toe", "foot_heel", "ankle_height",
                     "l_shank", "l_thigh", "l_torso",
                     "k_normal", "h_int", "q_bound", "qd_bound"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        for name in ("c_normal", "k_tangent", "c_tangent",
                     "kp_ankle", "kp_knee", "kp_hip",
                     "kd_ankle", "kd_knee", "kd_hip",
                     "tau_max_ankle", "tau_max_knee", "tau_max_hip",
                     "b_ankle", "b_knee", "b_hip",
                     "j_rotor_ankle", "j_rotor_knee", "j_rotor_hip",
                     "h_air", "t_air"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        if not -self.foot_heel < self.foot_com < self.foot_toe:
            raise ValueError("foot_com must lie between heel and toe")
        for name, length in (("com_shank", self.l_shank),
                             ("com_thigh", self.l_thigh),
                             ("com_torso", self.l_torso)):
            if not 0.0 < getattr(self, name) <= length:
                raise ValueError(f"{name} must lie on the link")

    def pack(self) -> np.ndarray:
        """Flatten into the float vector used by the jit kernels."""
        p = np.empty(P_SIZE, dtype=np.float64)
        p[P_G] = self.g
        p[P_M_FOOT], p[P_M_SHANK] = self.m_foot, self.m_shank
        p[P_M_THIGH], p[P_M_TORSO] = self.m_thigh, self.m_torso
        p[P_I_FOOT], p[P_I_SHANK] = self.i_foot, self.i_shank
        p[P_I_THIGH], p[P_I_TORSO] = self.i_thigh, self.i_torso
        p[P_FOOT_TOE], p[P_FOOT_HEEL] = self.foot_toe, self.foot_heel
        p[P_ANKLE_H], p[P_FOOT_COM] = self.ankle_height, self.foot_com
        p[P_L_SHANK], p[P_L_THIGH], p[P_L_TORSO] = (
            self.l_shank, self.l_thigh, self.l_torso)
        p[P_C_SHANK], p[P_C_THIGH], p[P_C_TORSO] = (
            self.com_shank, self.com_thigh, self.com_torso)
        p[P_K_NORMAL], p[P_C_NORMAL] = self.k_normal, self.c_normal
        p[P_K_TANGENT], p[P_C_TANGENT] = self.k_tangent, self.c_tangent
        p[P_KP_ANKLE], p[P_KP_KNEE], p[P_KP_HIP] = (
            self.kp_ankle, self.kp_knee, self.kp_hip)
        p[P_KD_ANKLE], p[P_KD_KNEE], p[P_KD_HIP] = (
            self.kd_ankle, self.kd_knee, self.kd_hip)
        p[P_QSTAR_ANKLE], p[P_QSTAR_KNEE], p[P_QSTAR_HIP] = (
            self.q_star_ankle, self.q_star_knee, self.q_star_hip)
        p[P_TAU_ANKLE], p[P_TAU_KNEE], p[P_TAU_HIP] = (
            self.tau_max_ankle, self.tau_max_knee, self.tau_max_hip)
        p[P_H_INT], p[P_H_AIR], p[P_T_AIR] = self.h_int, self.h_air, self.t_air
        p[P_Q_BOUND], p[P_QD_BOUND] = self.q_bound, self.qd_bound
        p[P_B_ANKLE], p[P_B_KNEE], p[P_B_HIP] = (
            self.b_ankle, self.b_knee, self.b_hip)
        p[P_JR_ANKLE], p[P_JR_KNEE], p[P_JR_HIP] = (
            self.j_rotor_ankle, self.j_rotor_knee, self.j_rotor_hip)
        return p

    def to_text(self) -> str:
        """Canonical key-value serialization (the robot.params format)."""
        lines = [f"schema_version = {SCHEMA_VERSION}"]
        for f in fields(self):
            lines.append(f"{f.name} = {getattr(self, f.name)!r}")
        return "\n".join(lines) + "\n"

    def params_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def replace(self, **kw) -> "RobotParams":
        return replace(self, **kw)


def save_params(params: RobotParams, path) -> None:
    params.validate()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(params.to_text())


def load_params(path) -> RobotParams:
    """Parse a robot.params file, rejecting unknown or missing keys."""
    known = {f.name for f in fields(RobotParams)}
    seen: dict[str, float] = {}
    schema = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key == "schema_version":
                schema = int(value)
                continue
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            if key in seen:
                raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
            seen[key] = float(value)
    if schema is None:
        raise ValueError(f"{path}: missing schema_version")
    if schema != SCHEMA_VERSION:
        raise ValueError(
            f"{path}: schema_version {schema} unsupported "
            f"(expected {SCHEMA_VERSION})")
    missing = known - set(seen)
    if missing:
        raise ValueError(f"{path}: missing keys {sorted(missing)}")
    params = RobotParams(**seen)
    params.validate()
    return params


def nominal_state(params: RobotParams) -> tuple[np.ndarray, np.ndarray]:
    """Rest configuration: flat foot, vertical leg, springs at equilibrium."""
    sag = params.total_mass * params.g / (2.0 * params.k_normal)
    q = np.zeros(6)
    q[1] = params.ankle_height - sag
    qd = np.zeros(6)
    return q, qd
