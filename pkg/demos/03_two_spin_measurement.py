"""
Measurements of tunable strength
================================

A 13C control is rotated by 5 degrees per iteration. After each rotation an
r-th root of controlled-NOT entangles it with a 1H target, and the target is
dephased. For the control this is phase damping with factor cos(pi/2r):
r = 1 is a full measurement, large r a weak one.
"""

import math

import numpy as np

from nmrzeno.experiments import TwoSpinConfig, reduced_channel_curve, run_two_spin

theta = math.radians(5)
n = tuple(range(0, 101, 6))
print("   n    r=1      r=16     r=64")
curves = {r: run_two_spin(TwoSpinConfig(r=r, theta=theta, n_values=n)).signal for r in (1, 16, 64)}
for k, nk in enumerate(n):
    print(f"{nk:4d}  " + "  ".join(f"{curves[r][k]: .4f}" for r in (1, 16, 64)))

#%%
# The circuit can also be run as a pulse sequence: free J evolution for
# 1/(2rJ), a target 90 degree pulse, a control z correction and a gradient
# echo on the target. With ideal gradients this reproduces the circuit.
for r in (1, 16, 64):
    ham = run_two_spin(TwoSpinConfig(r=r, theta=theta, n_values=n, measurement_model="hamiltonian"))
    ref = reduced_channel_curve(r, theta, n)
    print(f"r={r:2d}: pulse-sequence vs channel max |diff| = {np.max(np.abs(ham.signal - ref)):.2e}")
