"""
Watching a NOT gate
===================

A resonant drive rotates |0> into |1> once the accumulated angle reaches pi.
Interrupting it with n projective measurements leaves the system where it
started with probability [cos^2(pi/2n)]^n, which tends to one as n grows.
"""

import math

import numpy as np

from nmrzeno.experiments import rabi_state, survival_probability

# Populations along an uninterrupted drive
for angle in np.linspace(0, math.pi, 5):
    amp = rabi_state(angle)
    print(f"wt = {angle:5.3f}   p0 = {abs(amp[0])**2:.4f}   p1 = {abs(amp[1])**2:.4f}")

# Now split the same drive into n pieces with a measurement after each one.
# The exponential is the large-n approximation; the gap shrinks like 1/n^2.
print("\n    n      exact     exp(-pi^2/4n)")
for n in (1, 2, 5, 10, 30, 100, 1000):
    s = survival_probability(n)
    print(f"{n:5d}   {s.exact:.6f}   {s.approx:.6f}")
