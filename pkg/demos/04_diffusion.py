"""
Diffusion and the background measurement
========================================

Spins that move between two opposite gradients are not refocused. The
attenuation follows exp(-gamma^2 G^2 delta^2 D (Delta - delta/3)), so for
the same gradients the 1H target loses about 16 times more (in the exponent)
than the 13C control.
"""

import math

import numpy as np

from nmrzeno.ensemble import echo_attenuation, monte_carlo_echo
from nmrzeno.experiments import TwoSpinConfig, run_two_spin
from nmrzeno.spinsys import GAMMA_13C, GAMMA_1H, formate_system

delta, spacing, D = 2e-3, 20e-3, 2e-9
G = 1 / (GAMMA_1H * delta * math.sqrt(D * (spacing - delta / 3)))
att = monte_carlo_echo(formate_system(), G, delta, spacing, D, n_isochromats=100_000)
print(f"G = {G:.3f} T/m")
print(f"1H : Monte Carlo {att[1]:.4f}  formula {echo_attenuation(GAMMA_1H, G, delta, D, spacing):.4f}")
print(f"13C: Monte Carlo {att[0]:.4f}  formula {echo_attenuation(GAMMA_13C, G, delta, D, spacing):.4f}")
print(f"exponent ratio {math.log(att[1]) / math.log(att[0]):.2f}, gamma^2 ratio {(GAMMA_1H / GAMMA_13C) ** 2:.2f}")

#%%
# In the two-spin experiment the control's own gradient phase is not fully
# refocused either, which adds a weak measurement on top of the intended one.
n = tuple(range(0, 101, 6))
weak = run_two_spin(TwoSpinConfig(r=64, n_values=n)).signal
diff = run_two_spin(TwoSpinConfig(r=64, n_values=n, measurement_model="ensemble", diffusion=True)).signal
print("\n   n   ideal r=64   with diffusion")
for k, nk in enumerate(n):
    print(f"{nk:4d}   {weak[k]: .4f}      {diff[k]: .4f}")
