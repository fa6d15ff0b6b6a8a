"""Isochromat ensemble: pulsed field gradients, diffusion and B1 spread.

The sample is a slab of length L along the gradient axis, discretised into
``n_isochromats`` equal-weight members placed at cell midpoints. Each member
carries its own density matrix. Diffusion is the only source of randomness;
every member owns a counter-based random stream keyed by (seed, member index),
so results do not depend on how the members are split between workers.

Gradient phases are diagonal and commute with the rotating-frame Hamiltonian,
so a gradient of strength G acting for time h adds the phase gamma*G*integral(z dt)
to each spin. With free diffusion the pair (z(h), integral z dt) is Gaussian and
is sampled exactly from two normal deviates, so no time stepping is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtri

from . import propagate
from .spinsys import SpinSystem, expectation, initial_state, spin_operator, zeeman_eigenvalues

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _splitmix(x: np.ndarray) -> np.ndarray:
    x = x ^ (x >> np.uint64(30))
    x = x * _M1
    x = x ^ (x >> np.uint64(27))
    x = x * _M2
    return x ^ (x >> np.uint64(31))


def stream_normals(seed: int, members: np.ndarray, counter: int) -> np.ndarray:
    """Standard normal deviate number ``counter`` of each member's stream."""
    members = np.asarray(members, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = _splitmix(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64) + _GOLDEN)
        key = _splitmix(base ^ ((members + np.uint64(1)) * _GOLDEN))
        bits = _splitmix(key + np.uint64(counter + 1) * _GOLDEN)
    u = ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


@dataclass(frozen=True)
class SampleGeometry:
    length: float = 0.01
    diffusion_coefficient: float = 0.0
    n_isochromats: int = 10_000

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("sample length must be positive")
        if self.diffusion_coefficient < 0:
            raise ValueError("diffusion coefficient must be non-negative")
        if int(self.n_isochromats) != self.n_isochromats or self.n_isochromats < 1:
            raise ValueError("n_isochromats must be a positive integer")


@dataclass(frozen=True)
class GradientEvent:
    strength: float
    duration: float
    concurrent_180_target: Optional[int] = None

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("gradient duration must be positive")


@dataclass(frozen=True)
class Isochromat:
    index: int
    position: float
    b1_scale: float
    weight: float
    state: np.ndarray


def default_crusher_strength(system: SpinSystem, length: float, duration: float, spread: float = 64 * math.pi):
    """Gradient (T/m) giving a phase spread of ``spread`` across the sample for the lowest-gamma spin."""
    return spread / (np.abs(system.gammas).min() * length * duration)


def grid_positions(length: float, n: int, members=None) -> np.ndarray:
    members = np.arange(n) if members is None else np.asarray(members)
    return -length / 2 + (members + 0.5) * (length / n)


def reflect(z: np.ndarray, length: float) -> np.ndarray:
    """Fold positions back into [-L/2, L/2] with reflecting walls."""
    y = np.mod(z + length / 2, 2 * length)
    y = np.where(y > length, 2 * length - y, y)
    return y - length / 2


class Ensemble:
    """A slice of isochromats (all of them by default) with their states.

    The public module functions return new ensembles; the ``_*_inplace`` methods
    are used by the timeline runner, which owns its ensemble.
    """

    def __init__(self, system, geometry, seed, members, positions, b1, weights, states, counter=0):
        self.system = system
        self.geometry = geometry
        self.seed = int(seed)
        self.members = np.asarray(members)
        self.positions = np.asarray(positions, dtype=float)
        self.b1 = np.asarray(b1, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.states = np.asarray(states, dtype=complex)
        self.counter = counter
        self._mz = zeeman_eigenvalues(system)

    def __len__(self):
        return len(self.members)

    def copy(self) -> "Ensemble":
        return Ensemble(
            self.system, self.geometry, self.seed, self.members.copy(), self.positions.copy(),
            self.b1.copy(), self.weights.copy(), self.states.copy(), self.counter,
        )

    def split(self, parts: int) -> list:
        """Contiguous sub-ensembles that together hold every member, in order."""
        bounds = np.linspace(0, len(self), max(1, min(parts, len(self))) + 1).astype(int)
        return [
            Ensemble(
                self.system, self.geometry, self.seed, self.members[a:b].copy(),
                self.positions[a:b].copy(), self.b1[a:b].copy(), self.weights[a:b].copy(),
                self.states[a:b].copy(), self.counter,
            )
            for a, b in zip(bounds[:-1], bounds[1:])
        ]

    def isochromat(self, k: int) -> Isochromat:
        return Isochromat(
            int(self.members[k]), float(self.positions[k]), float(self.b1[k]),
            float(self.weights[k]), self.states[k].copy(),
        )

    def _draw(self) -> np.ndarray:
        xi = stream_normals(self.seed, self.members, self.counter)
        self.counter += 1
        return xi

    @property
    def uniform_b1(self) -> bool:
        return bool(np.all(self.b1 == 1.0))

    def _phase(self, phi: np.ndarray):
        """Apply per-member z rotations; ``phi`` has shape (members, nspins)."""
        big = phi @ self._mz.T
        self.states *= np.exp(-1j * (big[:, :, None] - big[:, None, :]))

    def _integral(self, duration: float) -> np.ndarray:
        """Advance positions by ``duration`` and return integral of z dt over it."""
        d = self.geometry.diffusion_coefficient
        if d == 0:
            return self.positions * duration
        xi1, xi2 = self._draw(), self._draw()
        scale = math.sqrt(2 * d)
        w_end = math.sqrt(duration) * xi1
        w_int = duration**1.5 * (0.5 * xi1 + xi2 / (2 * math.sqrt(3)))
        integral = self.positions * duration + scale * w_int
        self.positions = reflect(self.positions + scale * w_end, self.geometry.length)
        return integral

    def _gradient_inplace(self, event: GradientEvent, diffusion: bool = False):
        gammas = self.system.gammas
        halves = [event.duration] if event.concurrent_180_target is None else [event.duration / 2] * 2
        for k, h in enumerate(halves):
            if k == 1:
                self._pulse_inplace(propagate.PulseSpec(event.concurrent_180_target, math.pi))
            integral = self._integral(h) if diffusion else self.positions * h
            if event.strength != 0:
                self._phase(event.strength * integral[:, None] * gammas[None, :])

    def _diffuse_inplace(self, duration: float):
        d = self.geometry.diffusion_coefficient
        if duration == 0 or d == 0:
            return
        step = math.sqrt(2 * d * duration) * self._draw()
        self.positions = reflect(self.positions + step, self.geometry.length)

    def _pulse_inplace(self, pulse: propagate.PulseSpec):
        q = self.system.nspins
        if self.uniform_b1:
            u = propagate.pulse_unitary(pulse, q)
        else:
            u = propagate.pulse_unitary(pulse, q, self.b1)
        self.states = propagate.apply_unitary(self.states, u)

    def _free_inplace(self, duration: float):
        if duration > 0:
            self.states *= propagate.evolution_factors(self.system, duration)

    def member_expectations(self, op) -> np.ndarray:
        return expectation(self.states, op)


def init_ensemble(
    geometry: SampleGeometry,
    system: SpinSystem,
    initial_kind: str = "pure-ground",
    seed: int = 0,
    b1_spread: float = 0.0,
    state: Optional[np.ndarray] = None,
) -> Ensemble:
    """Uniform grid of isochromats over [-L/2, L/2] sharing one initial state.

    Draw 0 of every member's stream sets its B1 scale, 1 + b1_spread * N(0, 1),
    so diffusion draws are unaffected by whether B1 spread is switched on.
    """
    n = int(geometry.n_isochromats)
    if n < 1:
        raise ValueError("ensemble needs at least one isochromat")
    members = np.arange(n)
    rho = initial_state(system, initial_kind) if state is None else np.asarray(state, dtype=complex)
    xi = stream_normals(seed, members, 0)
    b1 = 1.0 + b1_spread * xi if b1_spread else np.ones(n)
    return Ensemble(
        system, geometry, seed, members, grid_positions(geometry.length, n), b1,
        np.full(n, 1.0 / n), np.broadcast_to(rho, (n,) + rho.shape).copy(), counter=1,
    )


def apply_gradient(ensemble: Ensemble, event: GradientEvent, diffusion: bool = False) -> Ensemble:
    """Each spin i of each member picks up the z phase gamma_i * G * z * duration.

    With ``diffusion`` the members also move during the gradient and the phase
    uses the time integral of their position.
    """
    out = ensemble.copy()
    out._gradient_inplace(event, diffusion)
    return out


def diffuse(ensemble: Ensemble, duration: float) -> Ensemble:
    if duration < 0:
        raise ValueError("duration must be non-negative")
    out = ensemble.copy()
    out._diffuse_inplace(duration)
    return out


def weighted_mean(values, weights) -> float:
    """Exactly rounded weighted mean; independent of summation order."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if values.size == 0:
        raise ValueError("cannot average an empty ensemble")
    return math.fsum((values * weights).tolist()) / math.fsum(weights.tolist())


def average(ensemble: Ensemble, op) -> float:
    """Weight-averaged expectation value of ``op`` over the ensemble."""
    if len(ensemble) == 0:
        raise ValueError("cannot average an empty ensemble")
    return weighted_mean(ensemble.member_expectations(op), ensemble.weights)


def echo_attenuation(gamma: float, G: float, delta: float, D: float, spacing: float) -> float:
    """Stejskal-Tanner attenuation exp(-gamma^2 G^2 delta^2 D (spacing - delta/3))."""
    for name, value in (("gamma", gamma), ("G", G), ("delta", delta), ("D", D), ("spacing", spacing)):
        if value < 0:
            raise ValueError(f"{name} must be non-negative")
    return math.exp(-(gamma**2) * G**2 * delta**2 * D * (spacing - delta / 3))


def monte_carlo_echo(
    system: SpinSystem,
    G: float,
    delta: float,
    spacing: float,
    D: float,
    n_isochromats: int = 100_000,
    seed: int = 0,
    length: float = 1.0,
) -> np.ndarray:
    """Diffusion attenuation of a bipolar gradient pair for every spin of ``system``.

    Gradient +G for ``delta``, free diffusion until ``spacing`` after the first
    gradient started, then -G for ``delta``. Returns the ensemble-averaged
    transverse magnetisation of each spin relative to its starting value.
    """
    if spacing < delta:
        raise ValueError("spacing must be at least the gradient duration")
    q = system.nspins
    plus_x = np.full(2, 1 / math.sqrt(2), dtype=complex)
    psi = plus_x
    for _ in range(q - 1):
        psi = np.kron(psi, plus_x)
    rho = np.outer(psi, psi.conj())
    geometry = SampleGeometry(length, D, n_isochromats)
    ens = init_ensemble(geometry, system, seed=seed, state=rho)
    ens._gradient_inplace(GradientEvent(G, delta), diffusion=True)
    ens._diffuse_inplace(spacing - delta)
    ens._gradient_inplace(GradientEvent(-G, delta), diffusion=True)
    return np.array([2 * average(ens, spin_operator(system, k, "x")) for k in range(q)])
