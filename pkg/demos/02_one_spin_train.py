"""
One spin under a pulse train
============================

A train of 1 degree pulses separated by 1 ms delays rotates the
magnetisation steadily (a cosine with period 360 pulses). Putting a crusher
gradient in every delay destroys the transverse part after each pulse, so
the z magnetisation only shrinks by cos(theta) per step.
"""

import math
import time

import numpy as np

from nmrzeno.analysis import fit_cosine, fit_exponential
from nmrzeno.experiments import OneSpinConfig, run_one_spin

theta = math.radians(1.0)
free = run_one_spin(OneSpinConfig(theta=theta, gradients="off"))
crushed = run_one_spin(OneSpinConfig(theta=theta, gradients="ideal"))

fc = fit_cosine(free)
fe = fit_exponential(crushed)
print(f"no gradients : theta = {math.degrees(fc.theta):.6f} deg, period = {2 * math.pi / fc.theta:.1f} pulses")
print(f"ideal crush  : k = {fe.k:.4e} per pulse (-ln cos theta = {-math.log(math.cos(theta)):.4e})")

#%%
# The same run with an explicit ensemble of isochromats and a real gradient.
# With the same gradient in every interval, some magnetisation that was
# dephased by one gradient is rephased by a later one (stimulated echoes),
# so the ensemble decays more slowly than the ideal crush.
t0 = time.perf_counter()
ens = run_one_spin(OneSpinConfig(theta=theta, gradients="ensemble", n_isochromats=10_000))
print(f"\nensemble run took {time.perf_counter() - t0:.2f} s")
print("   n    off      ideal    ensemble")
for k in range(0, len(free.n_values), 5):
    print(f"{free.n_values[k]:4d}  {free.signal[k]: .4f}  {crushed.signal[k]: .4f}  {ens.signal[k]: .4f}")

#%%
# Over the first 100 pulses the ensemble still looks like an exponential,
# only with a smaller rate than the ideal crush; later it turns back up.
early = [k for k, n in enumerate(ens.n_values) if n <= 100]
n_early = np.array(ens.n_values)[early]
print(f"\nensemble k over n <= 100: {fit_exponential((n_early, ens.signal[early])).k:.3e} (ideal {fe.k:.3e})")
