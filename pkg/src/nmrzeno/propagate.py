"""Unitary propagation and decoherence channels on density matrices.

All functions are pure and broadcast over leading axes, so a stack of states
with shape (..., dim, dim) is handled the same way as a single state.

Rotation convention: a pulse of flip angle beta and phase phi applies
U = exp(-i beta (cos(phi) I_x + sin(phi) I_y)). From |0> an x pulse leaves
<I_y> = -sin(beta)/2 and <I_z> = cos(beta)/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .spinsys import PAULI, SpinSystem, hamiltonian_diagonal


@dataclass(frozen=True)
class PulseSpec:
    target: int
    flip: float
    phase: float = 0.0
    b1_scale: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.flip) or not math.isfinite(self.phase):
            raise ValueError("pulse flip and phase must be finite")


@dataclass(frozen=True)
class ChannelSpec:
    kind: str
    target: Union[int, str] = "all"
    lam: float = 0.0
    duration: float = 0.0

    def __post_init__(self):
        if self.kind not in ("crush-spin", "phase-damp", "relax"):
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if self.duration < 0:
            raise ValueError("duration must be non-negative")


def _nspins(rho) -> int:
    d = rho.shape[-1]
    q = d.bit_length() - 1
    if d != 2**q or q < 1:
        raise ValueError(f"state dimension {d} is not a power of two")
    return q


def _check_target(target, q):
    if not isinstance(target, (int, np.integer)) or not 0 <= target < q:
        raise IndexError(f"target spin {target!r} out of range for {q} spin(s)")


def rotation(flip, phase=0.0) -> np.ndarray:
    """Single-spin rotation; ``flip`` may be an array, giving a stack of 2x2 matrices."""
    flip = np.asarray(flip, dtype=float)
    c = np.cos(flip / 2)[..., None, None]
    s = np.sin(flip / 2)[..., None, None]
    axis = math.cos(phase) * PAULI["x"] + math.sin(phase) * PAULI["y"]
    return c * PAULI["i"] - 1j * s * axis


def embed(u: np.ndarray, target: int, nspins: int) -> np.ndarray:
    """Embed a (stack of) single-spin operator(s) acting on ``target``."""
    if nspins == 1:
        return u
    eye = np.eye(2, dtype=complex)
    if target == 0:
        return np.einsum("...ab,cd->...acbd", u, eye).reshape(u.shape[:-2] + (4, 4))
    return np.einsum("ab,...cd->...acbd", eye, u).reshape(u.shape[:-2] + (4, 4))


def pulse_unitary(pulse: PulseSpec, nspins: int, b1_scale=None) -> np.ndarray:
    scale = pulse.b1_scale if b1_scale is None else np.asarray(b1_scale) * pulse.b1_scale
    return embed(rotation(pulse.flip * np.asarray(scale), pulse.phase), pulse.target, nspins)


def apply_unitary(rho, u):
    return u @ rho @ np.conj(np.swapaxes(u, -1, -2))


def apply_pulse(rho, pulse: PulseSpec, b1_scale=None):
    """rho -> U rho U^dagger for the pulse on its target spin.

    ``b1_scale`` optionally gives one extra scale factor per state in a stack.
    """
    rho = np.asarray(rho)
    q = _nspins(rho)
    _check_target(pulse.target, q)
    return apply_unitary(rho, pulse_unitary(pulse, q, b1_scale))


def evolution_factors(system: SpinSystem, duration: float) -> np.ndarray:
    """Elementwise factors exp(-i (E_j - E_k) t) implementing free evolution."""
    e = hamiltonian_diagonal(system) * duration
    return np.exp(-1j * (e[:, None] - e[None, :]))


def free_evolve(rho, system: SpinSystem, duration: float):
    """Exact evolution under the (diagonal) rotating-frame Hamiltonian."""
    if duration < 0:
        raise ValueError("duration must be non-negative")
    rho = np.asarray(rho)
    if duration == 0:
        return rho.copy()
    return rho * evolution_factors(system, duration)


def coherence_mask(dim: int, target) -> np.ndarray:
    """Boolean mask of elements off-diagonal in ``target``'s basis ("all": every off-diagonal)."""
    idx = np.arange(dim)
    if target == "all":
        return idx[:, None] != idx[None, :]
    q = dim.bit_length() - 1
    _check_target(target, q)
    bit = (idx >> (q - 1 - target)) & 1
    return bit[:, None] != bit[None, :]


def crush(rho, target="all"):
    """Remove all coherence of ``target`` (ideal gradient crusher / unread measurement)."""
    rho = np.asarray(rho)
    return np.where(coherence_mask(rho.shape[-1], target), 0, rho)


def phase_damp(rho, target, lam: float):
    """Scale the coherences of ``target`` by ``lam``; lam=0 is a crush, lam=1 the identity."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    rho = np.asarray(rho)
    return np.where(coherence_mask(rho.shape[-1], target), lam * rho, rho)


def _gad_kraus(gamma: float, p: float):
    s = math.sqrt(1 - gamma)
    g = math.sqrt(gamma)
    a, b = math.sqrt(p), math.sqrt(1 - p)
    return [
        a * np.array([[1, 0], [0, s]], dtype=complex),
        a * np.array([[0, g], [0, 0]], dtype=complex),
        b * np.array([[s, 0], [0, 1]], dtype=complex),
        b * np.array([[0, 0], [g, 0]], dtype=complex),
    ]


def relax(rho, system: SpinSystem, duration: float, polarization: float = 1.0):
    """Phenomenological T1/T2 relaxation of each spin over ``duration``.

    Coherences of spin i decay by exp(-t/T2); its populations relax with
    exp(-t/T1) towards <I_z> = polarization/2 (generalised amplitude damping).
    A missing T2 with T1 present means T2 = 2 T1; spins without T1 and T2 are untouched.
    """
    if duration < 0:
        raise ValueError("duration must be non-negative")
    rho = np.asarray(rho)
    out = rho.copy()
    if duration == 0:
        return out
    q = system.nspins
    p_ground = (1 + polarization) / 2
    for k, spin in enumerate(system.spins):
        if spin.t1 is None and spin.t2 is None:
            continue
        coherence = 1.0
        if spin.t1 is not None:
            gamma = -math.expm1(-duration / spin.t1)
            kraus = [embed(e, k, q) for e in _gad_kraus(gamma, p_ground)]
            out = sum(apply_unitary(out, e) for e in kraus)
            coherence = math.exp(-duration / (2 * spin.t1))
        if spin.t2 is not None:
            out = phase_damp(out, k, min(1.0, math.exp(-duration / spin.t2) / coherence))
    return out


def apply_channel(rho, channel: ChannelSpec, system: Optional[SpinSystem] = None):
    if channel.kind == "crush-spin":
        return crush(rho, channel.target)
    if channel.kind == "phase-damp":
        return phase_damp(rho, channel.target, channel.lam)
    if system is None:
        raise ValueError("relax channel needs the spin system")
    return relax(rho, system, channel.duration)
