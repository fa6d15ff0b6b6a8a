"""Executes compiled event timelines on a single state or an isochromat ensemble.

Gradient handling depends on ``mode``:

``off``
    gradients are ignored; delays are free evolution only.
``ideal``
    strong-gradient limit. Each spin carries the net gradient area it has
    seen. Coherence of a spin with non-zero net area is destroyed the next
    time a pulse (other than an exact 180) touches that spin, or at readout.
    An exact 180 only reverses the area, so a gradient echo refocuses.
``ensemble``
    gradients act on every isochromat explicitly, with diffusion when the
    sample geometry has a non-zero diffusion coefficient.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np

from . import propagate
from .ensemble import Ensemble, SampleGeometry, init_ensemble, weighted_mean
from .seqlang import Acquire, Crush, Delay, EventTimeline, Pulse
from .spinsys import SpinSystem, spin_operator

MODES = ("off", "ideal", "ensemble")
WORKERS_ENV = "NMRZENO_WORKERS"


def default_workers() -> int:
    value = os.environ.get(WORKERS_ENV)
    if value:
        n = int(value)
        return os.cpu_count() or 1 if n <= 0 else n
    return 1


def _angle_mod(x: float) -> float:
    """Distance of ``x`` from the nearest multiple of 2 pi, with sign."""
    return math.remainder(x, 2 * math.pi)


class _Runner:
    def __init__(self, ensemble: Ensemble, mode: str):
        self.ens = ensemble
        self.mode = mode
        self.system = ensemble.system
        self.area = np.zeros(self.system.nspins)
        self.area_scale = 0.0
        self.relaxing = any(s.t1 is not None or s.t2 is not None for s in self.system.spins)

    def _pending(self, k: int) -> bool:
        return self.area_scale > 0 and abs(self.area[k]) > 1e-12 * self.area_scale

    def _crush_spin(self, k):
        self.ens.states = propagate.crush(self.ens.states, k)
        self.area[k] = 0.0

    def pulse(self, spec: propagate.PulseSpec):
        k = spec.target
        if self.mode == "ideal" and self._pending(k):
            angle = spec.flip * spec.b1_scale
            if abs(_angle_mod(angle - math.pi)) < 1e-12:
                self.area[k] = -self.area[k]
            elif abs(_angle_mod(angle)) >= 1e-12:
                self._crush_spin(k)
        self.ens._pulse_inplace(spec)

    def delay(self, event: Delay):
        ens = self.ens
        if event.gradient is not None and event.gradient.strength != 0 and self.mode != "off":
            if self.mode == "ideal":
                step = self.system.gammas * event.gradient.strength * event.duration
                self.area += step
                self.area_scale = max(self.area_scale, float(np.abs(step).max()))
            else:
                ens._gradient_inplace(event.gradient, diffusion=ens.geometry.diffusion_coefficient > 0)
        elif self.mode == "ensemble":
            ens._diffuse_inplace(event.duration)
        ens._free_inplace(event.duration)
        if self.relaxing:
            ens.states = propagate.relax(ens.states, self.system, event.duration)

    def crush(self, target):
        self.ens.states = propagate.crush(self.ens.states, target)
        if target == "all":
            self.area[:] = 0.0
        else:
            self.area[target] = 0.0

    def apply(self, events: Sequence):
        for e in events:
            if isinstance(e, Pulse):
                self.pulse(e.spec)
            elif isinstance(e, Delay):
                self.delay(e)
            elif isinstance(e, Crush):
                self.crush(e.target)
            elif isinstance(e, Acquire):
                raise ValueError("acquire events are handled by the program structure")
            else:
                raise TypeError(f"unknown event {e!r}")

    def readout(self, finish: Sequence, acquire: Acquire) -> np.ndarray:
        """Per-member value of the acquired operator, leaving the running state untouched."""
        saved_states, saved_area = self.ens.states, self.area.copy()
        saved_pos, saved_counter = self.ens.positions, self.ens.counter
        self.ens.states = self.ens.states.copy()
        try:
            self.apply(finish)
            for k in range(self.system.nspins):
                if self.mode == "ideal" and self._pending(k):
                    self._crush_spin(k)
            op = spin_operator(self.system, acquire.spin, acquire.op)
            return self.ens.member_expectations(op)
        finally:
            self.ens.states, self.area = saved_states, saved_area
            self.ens.positions, self.ens.counter = saved_pos, saved_counter


def _run_chunk(ensemble: Ensemble, mode: str, program) -> list:
    runner = _Runner(ensemble, mode)
    out = []
    for events, finish, acquire in program:
        runner.apply(events)
        out.append(runner.readout(finish, acquire))
    return out


def simulate(
    program,
    system: SpinSystem,
    mode: str = "off",
    initial_kind: str = "pure-ground",
    state: Optional[np.ndarray] = None,
    geometry: Optional[SampleGeometry] = None,
    seed: int = 0,
    b1_spread: float = 0.0,
    workers: Optional[int] = None,
) -> list:
    """Run a program and return one ensemble-averaged readout per step.

    ``program`` is a sequence of ``(events, finish, acquire)``: ``events`` are
    applied to the running state, ``finish`` only to the copy that is read out.
    Results are bit-identical for any worker count.
    """
    if mode not in MODES:
        raise ValueError(f"unknown gradient mode {mode!r}; expected one of {MODES}")
    if mode != "ensemble":
        geometry = SampleGeometry(1.0, 0.0, 1)
        b1_spread = 0.0
    elif geometry is None:
        geometry = SampleGeometry()
    ens = init_ensemble(geometry, system, initial_kind, seed, b1_spread, state=state)
    workers = default_workers() if workers is None else max(1, int(workers))
    chunks = ens.split(workers) if mode == "ensemble" else [ens]
    if len(chunks) == 1:
        results = [_run_chunk(chunks[0], mode, program)]
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            results = list(pool.map(lambda c: _run_chunk(c, mode, program), chunks))
    weights = np.concatenate([c.weights for c in chunks])
    return [
        weighted_mean(np.concatenate([r[k] for r in results]), weights) for k in range(len(program))
    ]


def run_timeline(timeline: EventTimeline, system: SpinSystem, mode: str = "off", **kwargs) -> float:
    """Simulate one compiled timeline and return its acquired value."""
    return simulate([(timeline.events[:-1], (), timeline.acquire)], system, mode, **kwargs)[0]


def sequence_unitary(events: Sequence, system: SpinSystem) -> np.ndarray:
    """Dense propagator of pulses and gradient-free delays, built by matrix products.

    Independent of the elementwise fast paths; used to check them.
    """
    from scipy.linalg import expm

    from .spinsys import build_hamiltonian

    h = build_hamiltonian(system)
    u = np.eye(system.dim, dtype=complex)
    for e in events:
        if isinstance(e, Pulse):
            s = e.spec
            gen = math.cos(s.phase) * spin_operator(system, s.target, "x") + math.sin(s.phase) * spin_operator(
                system, s.target, "y"
            )
            u = expm(-1j * s.flip * s.b1_scale * gen) @ u
        elif isinstance(e, Delay):
            if e.gradient is not None and e.gradient.strength != 0:
                raise ValueError("sequence_unitary only handles gradient-free delays")
            u = expm(-1j * h * e.duration) @ u
        else:
            raise TypeError(f"{type(e).__name__} is not unitary")
    return u
