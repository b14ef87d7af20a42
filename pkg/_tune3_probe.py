import falltime.params as pm
from _tune_probe import report

base = pm.RobotParams()
for d in (0.08, 0.07, 0.06):
    for tau in (70.0, 85.0, 100.0):
        L = 2.0 * d
        report(f"d{d:.2f} tau{tau:.0f}",
               base.replace(foot_toe=d, foot_heel=d,
                            i_foot=2.5 * L**2 / 12.0,
                            tau_max_ankle=tau))
