import falltime.params as pm
from _tune_probe import report

base = pm.RobotParams().replace(foot_toe=0.08, foot_heel=0.08,
                                i_foot=2.5 * 0.16**2 / 12.0)
report("d.08 base", base)
for b in (30.0, 60.0, 100.0):
    report(f"d.08 b{b:.0f}", base.replace(b_ankle=b))
report("d.08 kd400", base.replace(kd_ankle=400.0))
report("d.08 kd700", base.replace(kd_ankle=700.0))
report("d.08 kp7e3 kd400", base.replace(kp_ankle=7000.0, kd_ankle=400.0))
report("d.08 kp9e3 kd600", base.replace(kp_ankle=9000.0, kd_ankle=600.0))
