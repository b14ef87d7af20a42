"""Numerical kernels for the planar four-link standing robot.

Coordinates q = (foot_x, foot_z, theta_f, theta_a, theta_k, theta_h):
the ankle position, absolute foot pitch, and relative ankle, knee and
hip angles.  All angles are zero in nominal stance (flat foot, vertical
leg).  Rotations are counterclockwise in the x-z plane.

Every function here is written against flat float64 arrays so the whole
simulation loop can run under numba.  The packed parameter vector layout
is defined in params.py (P_* constants, duplicated here as literals
through module constants to keep the kernels self-contained).
"""

from __future__ import annotations

import math

import numpy as np

from .params import (
    P_G, P_M_FOOT, P_M_SHANK, P_M_THIGH, P_M_TORSO,
    P_I_FOOT, P_I_SHANK, P_I_THIGH, P_I_TORSO,
    P_FOOT_TOE, P_FOOT_HEEL, P_ANKLE_H, P_FOOT_COM,
    P_L_SHANK, P_L_THIGH, P_L_TORSO,
    P_C_SHANK, P_C_THIGH, P_C_TORSO,
    P_K_NORMAL, P_C_NORMAL, P_K_TANGENT, P_C_TANGENT,
    P_KP_ANKLE, P_KP_KNEE, P_KP_HIP,
    P_KD_ANKLE, P_KD_KNEE, P_KD_HIP,
    P_QSTAR_ANKLE, P_QSTAR_KNEE, P_QSTAR_HIP,
    P_TAU_ANKLE, P_TAU_KNEE, P_TAU_HIP,
    P_H_INT, P_H_AIR, P_T_AIR, P_Q_BOUND, P_QD_BOUND,
    P_B_ANKLE, P_B_KNEE, P_B_HIP,
    P_JR_ANKLE, P_JR_KNEE, P_JR_HIP,
)

try:
    from numba import njit as _numba_njit
    HAVE_NUMBA = True
except Exception:  # pragma: no cover - numba is an install-time dependency
    HAVE_NUMBA = False


def _jit(func):
    if HAVE_NUMBA:
        return _numba_njit(cache=True, fastmath=False, nogil=True)(func)
    return func


# Simulation status codes returned by simulate().
STATUS_OK = 0
STATUS_DIVERGED = 1


@_jit
def dyn_terms(q, qd, p):
    """Mass matrix D, velocity-product force C(q,qd)*qd, and gravity G.

    Assembled link by link from CoM Jacobians: each link CoM is the ankle
    point plus a sum of rotated constant offsets, so the Jacobian columns
    and the velocity-product accelerations have closed forms.
    """
    D = np.zeros((6, 6))
    C = np.zeros(6)
    G = np.zeros(6)

    g = p[P_G]
    psi0 = q[2]
    psi1 = psi0 + q[3]
    psi2 = psi1 + q[4]
    psi3 = psi2 + q[5]
    w0 = qd[2]
    w1 = w0 + qd[3]
    w2 = w1 + qd[4]
    w3 = w2 + qd[5]
    c0, s0 = math.cos(psi0), math.sin(psi0)
    c1, s1 = math.cos(psi1), math.sin(psi1)
    c2, s2 = math.cos(psi2), math.sin(psi2)
    c3, s3 = math.cos(psi3), math.sin(psi3)

    masses = (p[P_M_FOOT], p[P_M_SHANK], p[P_M_THIGH], p[P_M_TORSO])
    inertias = (p[P_I_FOOT], p[P_I_SHANK], p[P_I_THIGH], p[P_I_TORSO])
    ls, lt = p[P_L_SHANK], p[P_L_THIGH]
    cs, ct, cT = p[P_C_SHANK], p[P_C_THIGH], p[P_C_TORSO]

    # Rotated offsets R(psi)*w and their angle derivatives Rp(psi)*w for
    # the seven chain terms.  For w = (0, v): R*w = (-s v, c v) and
    # Rp*w = (-c v, -s v).  The foot offset has a general w.
    fx, fz = p[P_FOOT_COM], -p[P_ANKLE_H]
    r_f = (c0 * fx - s0 * fz, s0 * fx + c0 * fz)
    rp_f = (-s0 * fx - c0 * fz, c0 * fx - s0 * fz)

    r_s = (-s1 * cs, c1 * cs)
    rp_s = (-c1 * cs, -s1 * cs)
    r_ks = (-s1 * ls, c1 * ls)       # shank as a rigid spacer (knee offset)
    rp_ks = (-c1 * ls, -s1 * ls)
    r_t = (-s2 * ct, c2 * ct)
    rp_t = (-c2 * ct, -s2 * ct)
    r_ht = (-s2 * lt, c2 * lt)       # thigh spacer (hip offset)
    rp_ht = (-c2 * lt, -s2 * lt)
    r_T = (-s3 * cT, c3 * cT)
    rp_T = (-c3 * cT, -s3 * cT)

    # Per-link angle Jacobian (2 x 4) and velocity-product acceleration.
    jang = np.zeros((4, 2, 4))
    avel = np.zeros((4, 2))

    # foot: single term, angle slot 0
    jang[0, 0, 0] = rp_f[0]
    jang[0, 1, 0] = rp_f[1]
    avel[0, 0] = -r_f[0] * w0 * w0
    avel[0, 1] = -r_f[1] * w0 * w0

    # shank: term (slot 1, com_shank)
    for j in range(2):
        jang[1, 0, j] = rp_s[0]
        jang[1, 1, j] = rp_s[1]
    avel[1, 0] = -r_s[0] * w1 * w1
    avel[1, 1] = -r_s[1] * w1 * w1

    # thigh: terms (slot 1, l_shank) and (slot 2, com_thigh)
    for j in range(2):
        jang[2, 0, j] = rp_ks[0]
        jang[2, 1, j] = rp_ks[1]
    for j in range(3):
        jang[2, 0, j] += rp_t[0]
        jang[2, 1, j] += rp_t[1]
    avel[2, 0] = -(r_ks[0] * w1 * w1 + r_t[0] * w2 * w2)
    avel[2, 1] = -(r_ks[1] * w1 * w1 + r_t[1] * w2 * w2)

    # torso: terms (slot 1, l_shank), (slot 2, l_thigh), (slot 3, com_torso)
    for j in range(2):
        jang[3, 0, j] = rp_ks[0]
        jang[3, 1, j] = rp_ks[1]
    for j in range(3):
        jang[3, 0, j] += rp_ht[0]
        jang[3, 1, j] += rp_ht[1]
    for j in range(4):
        jang[3, 0, j] += rp_T[0]
        jang[3, 1, j] += rp_T[1]
    avel[3, 0] = -(r_ks[0] * w1 * w1 + r_ht[0] * w2 * w2 + r_T[0] * w3 * w3)
    avel[3, 1] = -(r_ks[1] * w1 * w1 + r_ht[1] * w2 * w2 + r_T[1] * w3 * w3)

    for link in range(4):
        m = masses[link]
        inert = inertias[link]
        D[0, 0] += m
        D[1, 1] += m
        for j in range(4):
            D[0, 2 + j] += m * jang[link, 0, j]
            D[1, 2 + j] += m * jang[link, 1, j]
        for j in range(4):
            for k in range(j, 4):
                D[2 + j, 2 + k] += m * (
                    jang[link, 0, j] * jang[link, 0, k]
                    + jang[link, 1, j] * jang[link, 1, k])
        # angular selector: link "link" spins with slots 0..link
        for j in range(link + 1):
            for k in range(j, link + 1):
                D[2 + j, 2 + k] += inert
        C[0] += m * avel[link, 0]
        C[1] += m * avel[link, 1]
        for j in range(4):
            C[2 + j] += m * (jang[link, 0, j] * avel[link, 0]
                             + jang[link, 1, j] * avel[link, 1])
        G[1] += m * g
        for j in range(4):
            G[2 + j] += m * g * jang[link, 1, j]

    # reflected actuator inertia spins with the relative joint coordinate
    D[3, 3] += p[P_JR_ANKLE]
    D[4, 4] += p[P_JR_KNEE]
    D[5, 5] += p[P_JR_HIP]

    for a in range(6):
        for bcol in range(a):
            D[a, bcol] = D[bcol, a]
    return D, C, G


@_jit
def link_points(q, p):
    """World positions of the named chain points, one row each:

    0 ankle, 1 toe, 2 heel, 3 foot CoM, 4 knee, 5 shank CoM,
    6 hip, 7 thigh CoM, 8 torso tip, 9 torso CoM.
    """
    out = np.empty((10, 2))
    psi0 = q[2]
    psi1 = psi0 + q[3]
    psi2 = psi1 + q[4]
    psi3 = psi2 + q[5]
    c0, s0 = math.cos(psi0), math.sin(psi0)
    c1, s1 = math.cos(psi1), math.sin(psi1)
    c2, s2 = math.cos(psi2), math.sin(psi2)
    c3, s3 = math.cos(psi3), math.sin(psi3)
    ax, az = q[0], q[1]
    ah = p[P_ANKLE_H]

    out[0, 0], out[0, 1] = ax, az
    tx, tz = p[P_FOOT_TOE], -ah
    out[1, 0] = ax + c0 * tx - s0 * tz
    out[1, 1] = az + s0 * tx + c0 * tz
    hx, hz = -p[P_FOOT_HEEL], -ah
    out[2, 0] = ax + c0 * hx - s0 * hz
    out[2, 1] = az + s0 * hx + c0 * hz
    fx, fz = p[P_FOOT_COM], -ah
    out[3, 0] = ax + c0 * fx - s0 * fz
    out[3, 1] = az + s0 * fx + c0 * fz
    out[4, 0] = ax - s1 * p[P_L_SHANK]
    out[4, 1] = az + c1 * p[P_L_SHANK]
    out[5, 0] = ax - s1 * p[P_C_SHANK]
    out[5, 1] = az + c1 * p[P_C_SHANK]
    out[6, 0] = out[4, 0] - s2 * p[P_L_THIGH]
    out[6, 1] = out[4, 1] + c2 * p[P_L_THIGH]
    out[7, 0] = out[4, 0] - s2 * p[P_C_THIGH]
    out[7, 1] = out[4, 1] + c2 * p[P_C_THIGH]
    out[8, 0] = out[6, 0] - s3 * p[P_L_TORSO]
    out[8, 1] = out[6, 1] + c3 * p[P_L_TORSO]
    out[9, 0] = out[6, 0] - s3 * p[P_C_TORSO]
    out[9, 1] = out[6, 1] + c3 * p[P_C_TORSO]
    return out


@_jit
def link_velocities(q, qd, p):
    """World velocities of link CoMs plus angular rates.

    Returns (vel, omega): vel rows foot, shank, thigh, torso CoM;
    omega the four absolute angular rates.  Independent of dyn_terms so
    energy built on it cross-checks the mass matrix.
    """
    vel = np.empty((4, 2))
    omega = np.empty(4)
    psi0 = q[2]
    psi1 = psi0 + q[3]
    psi2 = psi1 + q[4]
    psi3 = psi2 + q[5]
    w0 = qd[2]
    w1 = w0 + qd[3]
    w2 = w1 + qd[4]
    w3 = w2 + qd[5]
    omega[0], omega[1], omega[2], omega[3] = w0, w1, w2, w3
    c0, s0 = math.cos(psi0), math.sin(psi0)
    c1, s1 = math.cos(psi1), math.sin(psi1)
    c2, s2 = math.cos(psi2), math.sin(psi2)
    c3, s3 = math.cos(psi3), math.sin(psi3)
    vx, vz = qd[0], qd[1]

    fx, fz = p[P_FOOT_COM], -p[P_ANKLE_H]
    vel[0, 0] = vx + (-s0 * fx - c0 * fz) * w0
    vel[0, 1] = vz + (c0 * fx - s0 * fz) * w0

    cs = p[P_C_SHANK]
    vel[1, 0] = vx - c1 * cs * w1
    vel[1, 1] = vz - s1 * cs * w1

    ls, ct = p[P_L_SHANK], p[P_C_THIGH]
    vel[2, 0] = vx - c1 * ls * w1 - c2 * ct * w2
    vel[2, 1] = vz - s1 * ls * w1 - s2 * ct * w2

    lt, cT = p[P_L_THIGH], p[P_C_TORSO]
    vel[3, 0] = vx - c1 * ls * w1 - c2 * lt * w2 - c3 * cT * w3
    vel[3, 1] = vz - s1 * ls * w1 - s2 * lt * w2 - s3 * cT * w3
    return vel, omega


@_jit
def kinetic_energy(q, qd, p):
    vel, omega = link_velocities(q, qd, p)
    masses = (p[P_M_FOOT], p[P_M_SHANK], p[P_M_THIGH], p[P_M_TORSO])
    inertias = (p[P_I_FOOT], p[P_I_SHANK], p[P_I_THIGH], p[P_I_TORSO])
    t = 0.0
    for link in range(4):
        t += 0.5 * masses[link] * (vel[link, 0] ** 2 + vel[link, 1] ** 2)
        t += 0.5 * inertias[link] * omega[link] ** 2
    t += 0.5 * p[P_JR_ANKLE] * qd[3] ** 2
    t += 0.5 * p[P_JR_KNEE] * qd[4] ** 2
    t += 0.5 * p[P_JR_HIP] * qd[5] ** 2
    return t


@_jit
def potential_energy(q, p):
    """Gravitational potential of the chain (contact springs excluded)."""
    pts = link_points(q, p)
    return p[P_G] * (p[P_M_FOOT] * pts[3, 1] + p[P_M_SHANK] * pts[5, 1]
                     + p[P_M_THIGH] * pts[7, 1] + p[P_M_TORSO] * pts[9, 1])


@_jit
def foot_contact_state(q, qd, p):
    """Toe and heel world positions and velocities.

    Returns (toe_x, toe_z, toe_vx, toe_vz, heel_x, heel_z, heel_vx,
    heel_vz, rp_toe_x, rp_toe_z, rp_heel_x, rp_heel_z): the rp terms are
    the angle-derivative vectors used for Jacobian rows and torques.
    """
    psi0 = q[2]
    c0, s0 = math.cos(psi0), math.sin(psi0)
    w0 = qd[2]
    ah = p[P_ANKLE_H]

    twx, twz = p[P_FOOT_TOE], -ah
    rt_x = c0 * twx - s0 * twz
    rt_z = s0 * twx + c0 * twz
    rpt_x = -s0 * twx - c0 * twz
    rpt_z = c0 * twx - s0 * twz

    hwx, hwz = -p[P_FOOT_HEEL], -ah
    rh_x = c0 * hwx - s0 * hwz
    rh_z = s0 * hwx + c0 * hwz
    rph_x = -s0 * hwx - c0 * hwz
    rph_z = c0 * hwx - s0 * hwz

    toe_x = q[0] + rt_x
    toe_z = q[1] + rt_z
    toe_vx = qd[0] + rpt_x * w0
    toe_vz = qd[1] + rpt_z * w0
    heel_x = q[0] + rh_x
    heel_z = q[1] + rh_z
    heel_vx = qd[0] + rph_x * w0
    heel_vz = qd[1] + rph_z * w0
    return (toe_x, toe_z, toe_vx, toe_vz, heel_x, heel_z, heel_vx, heel_vz,
            rpt_x, rpt_z, rph_x, rph_z)


@_jit
def point_contact_force(z, vz, x, vx, anchor_x, anchored, p):
    """Spring-damper ground reaction at one sole point.

    Normal: max(0, -k z - c vz) while penetrating, zero above ground.
    Tangential: spring-damper about the touchdown anchor, active only
    while the normal force is positive.
    """
    fz = 0.0
    fx = 0.0
    if z < 0.0:
        fz = -p[P_K_NORMAL] * z - p[P_C_NORMAL] * vz
        if fz < 0.0:
            fz = 0.0
    if fz > 0.0 and anchored:
        fx = -p[P_K_TANGENT] * (x - anchor_x) - p[P_C_TANGENT] * vx
    return fx, fz


@_jit
def pd_control(q, qd, p):
    """Joint PD torques clamped to the actuator limits."""
    u = np.empty(3)
    u[0] = p[P_KP_ANKLE] * (p[P_QSTAR_ANKLE] - q[3]) - p[P_KD_ANKLE] * qd[3]
    u[1] = p[P_KP_KNEE] * (p[P_QSTAR_KNEE] - q[4]) - p[P_KD_KNEE] * qd[4]
    u[2] = p[P_KP_HIP] * (p[P_QSTAR_HIP] - q[5]) - p[P_KD_HIP] * qd[5]
    lims = (p[P_TAU_ANKLE], p[P_TAU_KNEE], p[P_TAU_HIP])
    for j in range(3):
        if u[j] > lims[j]:
            u[j] = lims[j]
        elif u[j] < -lims[j]:
            u[j] = -lims[j]
    return u


@_jit
def external_force_at(t, windows):
    """Piecewise-constant (optionally ramped) force schedule lookup.

    windows rows: (t0, t1, fx, fz, ramp_flag); active on t0 <= t < t1.
    """
    fx = 0.0
    fz = 0.0
    for k in range(windows.shape[0]):
        t0, t1 = windows[k, 0], windows[k, 1]
        if t0 <= t < t1:
            scale = 1.0
            if windows[k, 4] != 0.0 and t1 > t0:
                scale = (t - t0) / (t1 - t0)
            fx += windows[k, 2] * scale
            fz += windows[k, 3] * scale
    return fx, fz


@_jit
def _solve_spd6(A, b):
    """Cholesky solve for the 6x6 SPD mass matrix.

    Returns (x, ok); ok False when A is not positive definite, which the
    integrator treats as divergence.
    """
    L = np.zeros((6, 6))
    x = np.zeros(6)
    for i in range(6):
        for j in range(i):
            s = A[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / L[j, j]
        d = A[i, i]
        for k in range(i):
            d -= L[i, k] * L[i, k]
        if d <= 0.0 or not math.isfinite(d):
            return x, False
        L[i, i] = math.sqrt(d)
    # forward then backward substitution
    y = np.zeros(6)
    for i in range(6):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * y[k]
        y[i] = s / L[i, i]
    for i in range(5, -1, -1):
        s = y[i]
        for k in range(i + 1, 6):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]
    return x, True


@_jit
def accel(q, qd, u, t, windows, at_tip,
          anchor_toe, toe_anchored, anchor_heel, heel_anchored, p):
    """Generalized accelerations under control, contact and scheduled force."""
    D, C, G = dyn_terms(q, qd, p)
    rhs = np.empty(6)
    for i in range(6):
        rhs[i] = -C[i] - G[i]
    rhs[3] += u[0] - p[P_B_ANKLE] * qd[3]
    rhs[4] += u[1] - p[P_B_KNEE] * qd[4]
    rhs[5] += u[2] - p[P_B_HIP] * qd[5]

    (toe_x, toe_z, toe_vx, toe_vz, heel_x, heel_z, heel_vx, heel_vz,
     rpt_x, rpt_z, rph_x, rph_z) = foot_contact_state(q, qd, p)
    tfx, tfz = point_contact_force(
        toe_z, toe_vz, toe_x, toe_vx, anchor_toe, toe_anchored, p)
    hfx, hfz = point_contact_force(
        heel_z, heel_vz, heel_x, heel_vx, anchor_heel, heel_anchored, p)
    rhs[0] += tfx + hfx
    rhs[1] += tfz + hfz
    rhs[2] += rpt_x * tfx + rpt_z * tfz + rph_x * hfx + rph_z * hfz

    efx, efz = external_force_at(t, windows)
    if efx != 0.0 or efz != 0.0:
        psi1 = q[2] + q[3]
        psi2 = psi1 + q[4]
        psi3 = psi2 + q[5]
        ls, lt = p[P_L_SHANK], p[P_L_THIGH]
        wT = p[P_L_TORSO] if at_tip else p[P_C_TORSO]
        p3 = (-math.cos(psi3) * wT) * efx + (-math.sin(psi3) * wT) * efz
        p2 = (-math.cos(psi2) * lt) * efx + (-math.sin(psi2) * lt) * efz + p3
        p1 = (-math.cos(psi1) * ls) * efx + (-math.sin(psi1) * ls) * efz + p2
        rhs[0] += efx
        rhs[1] += efz
        rhs[2] += p1
        rhs[3] += p1
        rhs[4] += p2
        rhs[5] += p3

    qdd, ok = _solve_spd6(D, rhs)
    if not ok:
        qdd = np.full(6, np.nan)
    return qdd


@_jit
def rk4_step(q, qd, t, h, u, windows, at_tip,
             anchor_toe, toe_anchored, anchor_heel, heel_anchored, p):
    """One fixed-step RK4 update with zero-order-hold joint torques."""
    k1a = accel(q, qd, u, t, windows, at_tip,
                anchor_toe, toe_anchored, anchor_heel, heel_anchored, p)
    q2 = q + (0.5 * h) * qd
    v2 = qd + (0.5 * h) * k1a
    k2a = accel(q2, v2, u, t + 0.5 * h, windows, at_tip,
                anchor_toe, toe_anchored, anchor_heel, heel_anchored, p)
    q3 = q + (0.5 * h) * v2
    v3 = qd + (0.5 * h) * k2a
    k3a = accel(q3, v3, u, t + 0.5 * h, windows, at_tip,
                anchor_toe, toe_anchored, anchor_heel, heel_anchored, p)
    q4 = q + h * v3
    v4 = qd + h * k3a
    k4a = accel(q4, v4, u, t + h, windows, at_tip,
                anchor_toe, toe_anchored, anchor_heel, heel_anchored, p)
    q_out = q + (h / 6.0) * (qd + 2.0 * v2 + 2.0 * v3 + v4)
    qd_out = qd + (h / 6.0) * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
    return q_out, qd_out


@_jit
def simulate(q0, qd0, p, windows, at_tip, t_end, rec_stride):
    """Integrate the closed-loop robot, recording every rec_stride steps.

    Returns (n_rec, t_rec, q_rec, qd_rec, u_rec, f_rec, fall_time, status):
    fall_time is NaN while the robot stays upright for the whole horizon.
    Recording stops strictly before the fall instant.
    """
    h = p[P_H_INT]
    n_steps = int(round(t_end / h))
    max_rec = n_steps // rec_stride + 2
    t_rec = np.zeros(max_rec)
    q_rec = np.zeros((max_rec, 6))
    qd_rec = np.zeros((max_rec, 6))
    u_rec = np.zeros((max_rec, 3))
    f_rec = np.zeros((max_rec, 4))
    n_rec = 0

    q = q0.copy()
    qd = qd0.copy()
    anchor_toe = 0.0
    anchor_heel = 0.0
    toe_anchored = False
    heel_anchored = False
    fall_time = np.nan
    status = STATUS_OK
    air_dwell = 0.0

    # initial anchors for already loaded points
    (toe_x, toe_z, toe_vx, toe_vz, heel_x, heel_z, heel_vx, heel_vz,
     _, _, _, _) = foot_contact_state(q, qd, p)
    _, tfz0 = point_contact_force(toe_z, toe_vz, toe_x, toe_vx, 0.0, False, p)
    if tfz0 > 0.0:
        toe_anchored = True
        anchor_toe = toe_x
    _, hfz0 = point_contact_force(
        heel_z, heel_vz, heel_x, heel_vx, 0.0, False, p)
    if hfz0 > 0.0:
        heel_anchored = True
        anchor_heel = heel_x

    for step in range(n_steps + 1):
        t = step * h
        if step % rec_stride == 0:
            u_now = pd_control(q, qd, p)
            (toe_x, toe_z, toe_vx, toe_vz,
             heel_x, heel_z, heel_vx, heel_vz, _, _, _, _) = (
                foot_contact_state(q, qd, p))
            tfx, tfz = point_contact_force(
                toe_z, toe_vz, toe_x, toe_vx, anchor_toe, toe_anchored, p)
            hfx, hfz = point_contact_force(
                heel_z, heel_vz, heel_x, heel_vx,
                anchor_heel, heel_anchored, p)
            t_rec[n_rec] = t
            for i in range(6):
                q_rec[n_rec, i] = q[i]
                qd_rec[n_rec, i] = qd[i]
            for i in range(3):
                u_rec[n_rec, i] = u_now[i]
            f_rec[n_rec, 0] = tfx
            f_rec[n_rec, 1] = tfz
            f_rec[n_rec, 2] = hfx
            f_rec[n_rec, 3] = hfz
            n_rec += 1
        if step == n_steps:
            break

        u = pd_control(q, qd, p)
        q, qd = rk4_step(q, qd, t, h, u, windows, at_tip,
                         anchor_toe, toe_anchored,
                         anchor_heel, heel_anchored, p)
        t = (step + 1) * h

        ok = True
        for i in range(6):
            if not (math.isfinite(q[i]) and math.isfinite(qd[i])):
                ok = False
            elif abs(q[i]) > p[P_Q_BOUND] or abs(qd[i]) > p[P_QD_BOUND]:
                ok = False
        if not ok:
            status = STATUS_DIVERGED
            break

        (toe_x, toe_z, toe_vx, toe_vz, heel_x, heel_z, heel_vx, heel_vz,
         _, _, _, _) = foot_contact_state(q, qd, p)
        _, tfz = point_contact_force(
            toe_z, toe_vz, toe_x, toe_vx, anchor_toe, toe_anchored, p)
        if tfz > 0.0:
            if not toe_anchored:
                toe_anchored = True
                anchor_toe = toe_x
        else:
            toe_anchored = False
        _, hfz = point_contact_force(
            heel_z, heel_vz, heel_x, heel_vx, anchor_heel, heel_anchored, p)
        if hfz > 0.0:
            if not heel_anchored:
                heel_anchored = True
                anchor_heel = heel_x
        else:
            heel_anchored = False

        # fall predicate: a monitored point on the ground, or a sustained
        # airborne phase
        psi1 = q[2] + q[3]
        psi2 = psi1 + q[4]
        psi3 = psi2 + q[5]
        knee_z = q[1] + math.cos(psi1) * p[P_L_SHANK]
        hip_z = knee_z + math.cos(psi2) * p[P_L_THIGH]
        tip_z = hip_z + math.cos(psi3) * p[P_L_TORSO]
        if knee_z <= 0.0 or hip_z <= 0.0 or tip_z <= 0.0:
            fall_time = t
            break
        if toe_z > p[P_H_AIR] and heel_z > p[P_H_AIR]:
            air_dwell += h
        else:
            air_dwell = 0.0
        if air_dwell >= p[P_T_AIR] - 1e-12:
            fall_time = t
            break

    return (n_rec, t_rec[:n_rec], q_rec[:n_rec], qd_rec[:n_rec],
            u_rec[:n_rec], f_rec[:n_rec], fall_time, status)


# Contact-mode codes shared with the feature pipeline.
MODE_FLAT_CODE = 0
MODE_TOE_CODE = 1
MODE_HEEL_CODE = 2
MODE_AIR_CODE = 3


@_jit
def feature_kinematics(q_arr, qd_arr, f_arr, p):
    """Per-sample CoM kinematics and angular momenta for feature frames.

    f_arr rows are (toe_fx, toe_fz, heel_fx, heel_fz). Returns
    (p_com, v_com, l_com, l_ref, p_toe, p_heel, ref_x, cop_x, mode).
    l_com sums link spin plus relative-motion moments about the CoM;
    l_ref sums absolute link momenta about the reference point, which
    is (CoP or rotation point, 0) while grounded and the foot midpoint
    while airborne, so the two are independent summation routes.
    cop_x is NaN when airborne. mode uses the MODE_*_CODE values.
    """
    n = q_arr.shape[0]
    p_com = np.empty((n, 2))
    v_com = np.empty((n, 2))
    l_com = np.empty(n)
    l_ref = np.empty(n)
    p_toe = np.empty((n, 2))
    p_heel = np.empty((n, 2))
    ref_x = np.empty(n)
    cop_x = np.empty(n)
    mode = np.empty(n, dtype=np.int64)
    masses = (p[P_M_FOOT], p[P_M_SHANK], p[P_M_THIGH], p[P_M_TORSO])
    inertias = (p[P_I_FOOT], p[P_I_SHANK], p[P_I_THIGH], p[P_I_TORSO])
    com_rows = (3, 5, 7, 9)
    m_tot = masses[0] + masses[1] + masses[2] + masses[3]

    for i in range(n):
        pts = link_points(q_arr[i], p)
        vel, omega = link_velocities(q_arr[i], qd_arr[i], p)

        cx = 0.0
        cz = 0.0
        vx = 0.0
        vz = 0.0
        for k in range(4):
            cx += masses[k] * pts[com_rows[k], 0]
            cz += masses[k] * pts[com_rows[k], 1]
            vx += masses[k] * vel[k, 0]
            vz += masses[k] * vel[k, 1]
        cx /= m_tot
        cz /= m_tot
        vx /= m_tot
        vz /= m_tot

        lc = 0.0
        for k in range(4):
            rx = pts[com_rows[k], 0] - cx
            rz = pts[com_rows[k], 1] - cz
            lc += inertias[k] * omega[k] + masses[k] * (
                rx * (vel[k, 1] - vz) - rz * (vel[k, 0] - vx))

        toe_x, toe_z = pts[1, 0], pts[1, 1]
        heel_x, heel_z = pts[2, 0], pts[2, 1]
        toe_loaded = f_arr[i, 1] > 0.0
        heel_loaded = f_arr[i, 3] > 0.0
        if toe_loaded and heel_loaded:
            cop = (f_arr[i, 1] * toe_x + f_arr[i, 3] * heel_x) / (
                f_arr[i, 1] + f_arr[i, 3])
            rfx, rfz = cop, 0.0
            md = MODE_FLAT_CODE
        elif toe_loaded:
            cop = toe_x
            rfx, rfz = toe_x, 0.0
            md = MODE_TOE_CODE
        elif heel_loaded:
            cop = heel_x
            rfx, rfz = heel_x, 0.0
            md = MODE_HEEL_CODE
        else:
            cop = np.nan
            rfx, rfz = 0.5 * (toe_x + heel_x), 0.5 * (toe_z + heel_z)
            md = MODE_AIR_CODE

        lr = 0.0
        for k in range(4):
            rx = pts[com_rows[k], 0] - rfx
            rz = pts[com_rows[k], 1] - rfz
            lr += inertias[k] * omega[k] + masses[k] * (
                rx * vel[k, 1] - rz * vel[k, 0])

        p_com[i, 0], p_com[i, 1] = cx, cz
        v_com[i, 0], v_com[i, 1] = vx, vz
        l_com[i] = lc
        l_ref[i] = lr
        p_toe[i, 0], p_toe[i, 1] = toe_x, toe_z
        p_heel[i, 0], p_heel[i, 1] = heel_x, heel_z
        ref_x[i] = rfx
        cop_x[i] = cop
        mode[i] = md

    return p_com, v_com, l_com, l_ref, p_toe, p_heel, ref_x, cop_x, mode
