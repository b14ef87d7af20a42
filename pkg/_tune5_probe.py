import falltime.params as pm
from _tune_probe import report

base = pm.RobotParams()
for jr in (0.5, 1.0, 2.0, 4.0):
    report(f"d.10 jr{jr:.1f}", base.replace(j_rotor_ankle=jr))
