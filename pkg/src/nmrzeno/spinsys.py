"""Spin systems, product operators, Hamiltonians and states for one or two spin-1/2 nuclei.

Conventions
-----------
- Basis ordering is the Kronecker order of ``SpinSystem.spins``: for two spins the
  first spin is the most significant factor, ``|00>, |01>, |10>, |11>``.
- ``|0>`` is spin-up, the +1/2 eigenstate of I_z.
- Operators use the spin-1/2 normalisation, I_k = sigma_k / 2.
- Everything is in the rotating frame. Offsets are in rad/s, J in Hz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

PAULI = {
    "i": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}

_AXIS_ALIASES = {"i": "i", "identity": "i", "1": "i", "e": "i", "x": "x", "y": "y", "z": "z"}

# rad s^-1 T^-1
GAMMA_1H = 267.5221900e6
GAMMA_13C = 67.2828e6

ISOTOPES = {"1H": GAMMA_1H, "13C": GAMMA_13C}

STATE_KINDS = ("pure-ground", "iz-polarized", "control-polarized-target-mixed")


@dataclass(frozen=True)
class SpinSpecies:
    """One spin-1/2 nucleus.

    ``gamma`` in rad/s/T, ``offset`` in rad/s, ``t1``/``t2`` in seconds (None = no relaxation).
    """

    label: str
    gamma: float
    offset: float = 0.0
    t2: Optional[float] = None
    t1: Optional[float] = None

    def __post_init__(self):
        if not self.label or not self.label.replace("_", "").isalnum():
            raise ValueError(f"invalid spin label {self.label!r}")
        if self.gamma == 0 or not math.isfinite(self.gamma):
            raise ValueError("gamma must be finite and non-zero")
        if not math.isfinite(self.offset):
            raise ValueError("offset must be finite")
        for name in ("t1", "t2"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive when given")
        if self.t1 is not None and self.t2 is not None and self.t2 > 2 * self.t1:
            raise ValueError("t2 > 2*t1 is not a physical relaxation model")


@dataclass(frozen=True)
class SpinSystem:
    spins: tuple
    j: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "spins", tuple(self.spins))
        if not 1 <= len(self.spins) <= 2:
            raise ValueError("only one- and two-spin systems are supported")
        labels = [s.label for s in self.spins]
        if len(set(labels)) != len(labels):
            raise ValueError("spin labels must be unique")
        if len(self.spins) == 2:
            if self.j is None or not self.j > 0:
                raise ValueError("a two-spin system needs a positive J coupling (Hz)")
        elif self.j is not None:
            raise ValueError("J coupling is only meaningful for two spins")

    @property
    def nspins(self) -> int:
        return len(self.spins)

    @property
    def dim(self) -> int:
        return 2 ** len(self.spins)

    @property
    def gammas(self) -> np.ndarray:
        return np.array([s.gamma for s in self.spins])

    def index(self, label) -> int:
        """Resolve a spin label (or an integer index) to an index."""
        if isinstance(label, (int, np.integer)):
            if not 0 <= label < self.nspins:
                raise IndexError(f"spin index {label} out of range")
            return int(label)
        for k, s in enumerate(self.spins):
            if s.label == label:
                return k
        raise KeyError(f"unknown spin label {label!r}")

    def with_offsets(self, offsets: Sequence[float]) -> "SpinSystem":
        spins = [
            SpinSpecies(s.label, s.gamma, float(o), s.t2, s.t1) for s, o in zip(self.spins, offsets)
        ]
        return SpinSystem(tuple(spins), self.j)


def single_spin(label="H", gamma=GAMMA_1H, offset=0.0, t2=None, t1=None) -> SpinSystem:
    return SpinSystem((SpinSpecies(label, gamma, offset, t2, t1),))


def formate_system(j: float = 195.0, t2=(None, None), t1=(None, None)) -> SpinSystem:
    """13C (control, index 0) and 1H (target, index 1) pair of labelled formate.

    Both rotating-frame offsets are set to +pi*J rad/s, so that the references sit
    on one line of each doublet and a free-evolution window of 1/J returns the
    system to its starting state.
    """
    offset = math.pi * j
    return SpinSystem(
        (
            SpinSpecies("C", GAMMA_13C, offset, t2[0], t1[0]),
            SpinSpecies("H", GAMMA_1H, offset, t2[1], t1[1]),
        ),
        j,
    )


@dataclass(frozen=True)
class ProductOperator:
    """Kronecker product of per-spin factors from {identity, x, y, z}."""

    spec: tuple
    matrix: np.ndarray = field(repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def _normalise_axis(label) -> str:
    try:
        return _AXIS_ALIASES[str(label).lower()]
    except KeyError:
        raise ValueError(f"unknown operator axis {label!r}") from None


def build_operator(system: SpinSystem, spec) -> ProductOperator:
    """Product operator with one axis label per spin.

    >>> build_operator(single_spin(), "z").matrix.real.diagonal()
    array([ 0.5, -0.5])
    """
    if isinstance(spec, str) and system.nspins == 1:
        spec = (spec,)
    spec = tuple(_normalise_axis(s) for s in spec)
    if len(spec) != system.nspins:
        raise ValueError(f"operator spec has {len(spec)} factors for {system.nspins} spins")
    m = np.ones((1, 1), dtype=complex)
    for axis in spec:
        factor = PAULI[axis] if axis == "i" else PAULI[axis] / 2
        m = np.kron(m, factor)
    m.setflags(write=False)
    return ProductOperator(spec, m)


def spin_operator(system: SpinSystem, spin, axis) -> np.ndarray:
    """Single-spin operator I_axis of ``spin`` embedded in the full space."""
    k = system.index(spin)
    spec = ["i"] * system.nspins
    spec[k] = axis
    return build_operator(system, spec).matrix


def zeeman_eigenvalues(system: SpinSystem) -> np.ndarray:
    """m_z of each spin for each basis state, shape (dim, nspins)."""
    q = system.nspins
    states = np.arange(system.dim)
    bits = (states[:, None] >> np.arange(q - 1, -1, -1)[None, :]) & 1
    return 0.5 - bits.astype(float)


def hamiltonian_diagonal(system: SpinSystem) -> np.ndarray:
    """Diagonal of H = sum_i offset_i I_z(i) + 2 pi J I_z S_z, rad/s."""
    m = zeeman_eigenvalues(system)
    offsets = np.array([s.offset for s in system.spins])
    energies = m @ offsets
    if system.nspins == 2:
        energies = energies + 2 * math.pi * system.j * m[:, 0] * m[:, 1]
    return energies


def build_hamiltonian(system: SpinSystem) -> np.ndarray:
    return np.diag(hamiltonian_diagonal(system)).astype(complex)


def check_density_matrix(rho: np.ndarray, atol: float = 1e-12) -> None:
    """Raise ValueError unless ``rho`` is Hermitian, unit trace and PSD up to round-off."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    if not np.allclose(rho, rho.conj().T, atol=atol, rtol=0):
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > atol:
        raise ValueError(f"density matrix trace is {np.trace(rho).real!r}, not 1")
    if np.linalg.eigvalsh(rho).min() < -1e-10:
        raise ValueError("density matrix is not positive semidefinite")


def expectation(rho: np.ndarray, op, atol: float = 1e-10):
    """Tr(rho op) for a state or a stack of states (leading axes broadcast)."""
    m = op.matrix if isinstance(op, ProductOperator) else np.asarray(op)
    rho = np.asarray(rho)
    if rho.shape[-2:] != m.shape:
        raise ValueError(f"dimension mismatch: state {rho.shape[-2:]} vs operator {m.shape}")
    value = np.sum(rho * m.T, axis=(-2, -1))
    if np.any(np.abs(value.imag) > atol):
        raise ValueError("expectation value has an imaginary part; state or operator is not Hermitian")
    return float(value.real) if value.ndim == 0 else value.real


def initial_state(system: SpinSystem, kind: str = "pure-ground", epsilon: Optional[float] = None) -> np.ndarray:
    """Starting density matrix.

    ``iz-polarized`` is I/dim + epsilon * (sum of I_z). The default epsilon is the
    largest value that keeps the state positive (1 for one spin, 1/4 for two).
    """
    d, q = system.dim, system.nspins
    if kind == "pure-ground":
        rho = np.zeros((d, d), dtype=complex)
        rho[0, 0] = 1
    elif kind == "iz-polarized":
        bound = 2.0 / (d * q)
        if epsilon is None:
            epsilon = bound
        if epsilon > bound * (1 + 1e-12):
            raise ValueError(f"epsilon {epsilon} gives a non-positive state (max {bound})")
        iz = sum(spin_operator(system, k, "z") for k in range(q))
        rho = np.eye(d, dtype=complex) / d + epsilon * iz
    elif kind == "control-polarized-target-mixed":
        if q != 2:
            raise ValueError("control-polarized-target-mixed needs two spins")
        rho = np.kron(np.diag([1.0, 0.0]), np.eye(2) / 2).astype(complex)
    else:
        raise ValueError(f"unknown initial state kind {kind!r}; expected one of {STATE_KINDS}")
    return rho


def partial_trace(rho: np.ndarray, keep: int) -> np.ndarray:
    """Reduced state of spin ``keep`` (0 or 1) of a two-spin state or stack of states."""
    rho = np.asarray(rho)
    if rho.shape[-2:] != (4, 4):
        raise ValueError("partial_trace needs a two-spin (4x4) state")
    r = rho.reshape(rho.shape[:-2] + (2, 2, 2, 2))
    if keep == 0:
        return np.einsum("...ajbj->...ab", r)
    if keep == 1:
        return np.einsum("...jajb->...ab", r)
    raise ValueError("keep must be 0 or 1")


# --- text form ------------------------------------------------------------
#
#   spin C gamma=13C offset=612.61 t2=0.3
#   spin H gamma=1H offset=612.61
#   j 195
#
# gamma is an isotope name or a number in rad/s/T, offset in rad/s, t1/t2 in s.
# "offset=pi*J" sets the offset to pi times the coupling (the default frame).


def system_from_text(text: str) -> SpinSystem:
    spins, j = [], None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        try:
            if head == "j":
                if len(rest) != 1:
                    raise ValueError("expected 'j <Hz>'")
                j = float(rest[0])
            elif head == "spin":
                if not rest:
                    raise ValueError("spin needs a label")
                label, opts = rest[0], {}
                for item in rest[1:]:
                    key, sep, value = item.partition("=")
                    if not sep or key not in ("gamma", "offset", "t1", "t2") or key in opts:
                        raise ValueError(f"bad spin option {item!r}")
                    opts[key] = value
                spins.append((label, opts))
            else:
                raise ValueError(f"unknown directive {head!r}")
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    if not spins:
        raise ValueError("no spins defined")
    out = []
    for label, opts in spins:
        g = opts.get("gamma", "1H")
        gamma = ISOTOPES[g] if g in ISOTOPES else float(g)
        off = opts.get("offset", "0")
        if off == "pi*J":
            if j is None:
                raise ValueError("offset=pi*J needs a j line")
            offset = math.pi * j
        else:
            offset = float(off)
        t1 = float(opts["t1"]) if "t1" in opts else None
        t2 = float(opts["t2"]) if "t2" in opts else None
        out.append(SpinSpecies(label, gamma, offset, t2, t1))
    return SpinSystem(tuple(out), j)


def system_to_text(system: SpinSystem) -> str:
    names = {v: k for k, v in ISOTOPES.items()}
    lines = []
    for s in system.spins:
        parts = [f"spin {s.label}", f"gamma={names.get(s.gamma, repr(s.gamma))}", f"offset={s.offset!r}"]
        parts += [f"{k}={v!r}" for k, v in (("t1", s.t1), ("t2", s.t2)) if v is not None]
        lines.append(" ".join(parts))
    if system.j is not None:
        lines.append(f"j {system.j!r}")
    return "\n".join(lines) + "\n"
