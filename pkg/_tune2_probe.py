import falltime.params as pm
from _tune_probe import report

base = pm.RobotParams()
for kd in (120.0, 80.0, 40.0):
    for tau in (70.0, 55.0, 45.0):
        report(f"tau{tau:.0f} kd{kd:.0f}",
               base.replace(tau_max_ankle=tau, kd_ankle=kd))
