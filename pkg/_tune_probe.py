import sys

import numpy as np

import falltime.params as pm
import falltime.scenario as sc


def run(params, kind, mag, onset=3.0):
    if kind == "abrupt":
        fault = sc.FaultSpec("abrupt", mag, onset, 0.075, 1)
    elif kind == "incipient":
        fault = sc.FaultSpec("incipient", mag, onset, 1.0, 1)
    else:
        fault = sc.FaultSpec("none", 0.0, 0.0, 0.0, 1)
    return sc.generate_trajectory(fault, 0.0, params)


def threshold(params, kind, hi, onset=3.0, iters=11):
    lo = 0.0
    if run(params, kind, hi, onset).fall_time is None:
        return float("inf")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if run(params, kind, mid, onset).fall_time is None:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def topple(params, kind, mag, onset=3.0):
    tr = run(params, kind, mag, onset)
    return None if tr.fall_time is None else tr.fall_time - onset


def report(tag, params):
    stand = run(params, "none", 0.0)
    hold = float(np.abs(stand.q[:, 3:6]).max())
    rec50 = run(params, "abrupt", 50.0)
    thr_p = threshold(params, "abrupt", 320.0)
    thr_d = threshold(params, "incipient", 46.0)
    tp = [topple(params, "abrupt", m) for m in
          (min(1.15 * thr_p, 320), min(1.5 * thr_p, 320), 320.0)]
    td = [topple(params, "incipient", m) for m in
          (min(1.15 * thr_d, 46), 46.0)]
    fmt = lambda v: "-" if v is None else f"{v:.2f}"
    print(f"{tag}: stand8s={'ok' if stand.fall_time is None else 'FALL'} "
          f"hold={hold:.4f} rec50={'ok' if rec50.fall_time is None else 'FALL'} "
          f"thr_push={thr_p:.0f} thr_drift={thr_d:.1f} "
          f"topple_push={[fmt(v) for v in tp]} "
          f"topple_drift={[fmt(v) for v in td]}", flush=True)


base = pm.RobotParams()
report("base  tau70 kd200", base)
for tau in (55.0, 45.0, 40.0, 35.0):
    report(f"tau{tau:.0f} kd200", base.replace(tau_max_ankle=tau))
if len(sys.argv) > 1:
    for tau, kd in ((45.0, 260.0), (40.0, 260.0), (45.0, 320.0),
                    (40.0, 150.0), (35.0, 260.0)):
        report(f"tau{tau:.0f} kd{kd:.0f}",
               base.replace(tau_max_ankle=tau, kd_ankle=kd))
