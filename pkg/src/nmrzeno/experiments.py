"""Zeno experiments on one and two spins, the gate-level circuit and closed-form oracles.

One spin: a DANTE-like train of n small-angle pulses separated by delays that
may carry crushing gradients, followed by a crush and I_z readout.

Two spins: 13C control, 1H target. Each iteration is a small control rotation,
an r-th root of controlled-NOT built from free J evolution, and a measurement of
the target implemented as a gradient echo around a target 180 pulse. The
control polarisation after n iterations is read out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import engine, propagate
from .ensemble import GradientEvent, SampleGeometry, default_crusher_strength
from .propagate import PulseSpec
from .seqlang import (
    Acquire,
    AcquireStmt,
    Crush,
    CrushStmt,
    Delay,
    DelayStmt,
    LoopStmt,
    Pulse,
    PulseStmt,
    Quantity,
    SequenceAst,
    format_ast,
)
from .spinsys import SpinSystem, formate_system, initial_state, single_spin, spin_operator

DEFAULT_DIFFUSION = 2.0e-9  # m^2/s, water near room temperature


# --- closed-form oracles --------------------------------------------------


def rabi_state(omega_t: float) -> np.ndarray:
    """Amplitudes (cos(wt/2), i sin(wt/2)) of a resonantly driven two-level system."""
    return np.array([math.cos(omega_t / 2), 1j * math.sin(omega_t / 2)])


class Survival(NamedTuple):
    exact: float
    approx: float


def survival_probability(n: int) -> Survival:
    """Probability of always finding the initial state over n measurements during a NOT.

    ``exact`` is [cos^2(pi/2n)]^n, ``approx`` is exp(-pi^2/4n).
    """
    if int(n) != n or n < 1:
        raise ValueError("need at least one measurement")
    n = int(n)
    c2 = math.cos(math.pi / (2 * n)) ** 2
    exact = 1.0
    for _ in range(n):
        exact *= c2
    return Survival(exact, math.exp(-(math.pi**2) / (4 * n)))


def crush_decay_oracle(theta: float, n: int) -> float:
    """Normalised I_z after n cycles of (rotate by theta, remove transverse magnetisation)."""
    if n < 0:
        raise ValueError("n must be non-negative")
    return math.cos(theta) ** n


def reduced_channel_oracle(r: float, theta: float, n: int) -> float:
    """Normalised control z after n iterations of rotation plus phase damping cos(pi/2r).

    Iterates (y, z) -> (lam (y cos t - z sin t), y sin t + z cos t) from (0, 1),
    the Bloch-vector form of one gate_step on the control spin.
    """
    if r < 1:
        raise ValueError("r must be at least 1")
    if n < 0:
        raise ValueError("n must be non-negative")
    lam = 0.0 if r == 1 else math.cos(math.pi / (2 * r))
    c, s = math.cos(theta), math.sin(theta)
    y, z = 0.0, 1.0
    for _ in range(n):
        y, z = lam * (y * c - z * s), y * s + z * c
    return z


def reduced_channel_curve(r: float, theta: float, n_values: Sequence[int]) -> np.ndarray:
    return np.array([reduced_channel_oracle(r, theta, int(n)) for n in n_values])


# --- gate-level circuit ---------------------------------------------------


def controlled_rx(r: float) -> np.ndarray:
    """Two-spin unitary: identity if the control (spin 0) is |0>, Rx(pi/r) on the target if |1>.

    r = 1 gives -i X on the target block, a controlled-NOT up to that phase;
    r = inf gives the identity.
    """
    if r < 1:
        raise ValueError("r must be at least 1")
    u = np.eye(4, dtype=complex)
    if r == 1:
        u[2:, 2:] = [[0, -1j], [-1j, 0]]  # exact, avoiding cos(pi/2) round-off
    else:
        u[2:, 2:] = propagate.rotation(math.pi / r, 0.0)
    return u


def gate_step(rho: np.ndarray, r: float, theta: float) -> np.ndarray:
    """One bracketed iteration: Rx(theta) on control, controlled_rx(r), target dephasing."""
    rho = propagate.apply_pulse(rho, PulseSpec(0, theta))
    rho = propagate.apply_unitary(rho, controlled_rx(r))
    return propagate.crush(rho, 1)


def run_gate_model(r: float, theta: float, n_values: Sequence[int]) -> np.ndarray:
    """Raw control <I_z> after each n of ``n_values`` (ascending), from the mixed-target start."""
    rho = initial_state(formate_system(), "control-polarized-target-mixed")
    iz = spin_operator(formate_system(), 0, "z")
    out, done = [], 0
    for n in n_values:
        for _ in range(int(n) - done):
            rho = gate_step(rho, r, theta)
        done = int(n)
        out.append(float(np.real(np.sum(rho * iz.T))))
    return np.array(out)


# --- configs --------------------------------------------------------------


def parse_range(text: str) -> list:
    """``start:stop:step`` (stop included when reached), ``a,b,c`` or a single integer."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) not in (2, 3):
            raise ValueError(f"bad range {text!r}")
        start, stop = int(parts[0]), int(parts[1])
        step = int(parts[2]) if len(parts) == 3 else 1
        if step <= 0 or start < 0 or stop < start:
            raise ValueError(f"bad range {text!r}")
        return list(range(start, stop + 1, step))
    values = [int(v) for v in text.split(",") if v.strip()]
    if not values or any(v < 0 for v in values):
        raise ValueError(f"bad list {text!r}")
    return values


def format_range(values: Sequence[int]) -> str:
    values = list(values)
    if len(values) >= 3:
        step = values[1] - values[0]
        if step > 0 and all(b - a == step for a, b in zip(values, values[1:])):
            return f"{values[0]}:{values[-1]}:{step}"
    return ",".join(str(v) for v in values)


def _check_n_values(values):
    values = [int(v) for v in values]
    if any(v < 0 for v in values) or values != sorted(set(values)):
        raise ValueError("n_values must be distinct, non-negative and ascending")
    return tuple(values)


@dataclass(frozen=True)
class OneSpinConfig:
    theta: float = math.radians(1.0)
    tau: float = 1e-3
    n_values: tuple = tuple(range(0, 401, 10))
    gradients: str = "off"  # off | ideal | ensemble
    gradient_strength: Optional[float] = None  # T/m; None = 64 pi crusher
    length: float = 0.01
    diffusion_coefficient: float = 0.0
    n_isochromats: int = 10_000
    b1_spread: float = 0.0

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.gradients not in engine.MODES:
            raise ValueError(f"gradients must be one of {engine.MODES}")
        object.__setattr__(self, "n_values", _check_n_values(self.n_values))

    @property
    def geometry(self) -> SampleGeometry:
        return SampleGeometry(self.length, self.diffusion_coefficient, self.n_isochromats)


TWO_SPIN_MODELS = ("gate", "hamiltonian", "ensemble")


@dataclass(frozen=True)
class TwoSpinConfig:
    r: float = 1
    theta: float = math.radians(5.0)
    j: float = 195.0
    n_values: tuple = tuple(range(0, 101))
    measurement_model: str = "gate"  # gate | hamiltonian | ensemble
    gradient_duration: float = 2e-3
    gradient_strength: Optional[float] = None  # T/m; None = 64 pi crusher for the control
    length: float = 0.01
    diffusion: bool = False
    diffusion_coefficient: float = DEFAULT_DIFFUSION
    n_isochromats: int = 10_000

    def __post_init__(self):
        if not (self.r >= 1 and (math.isinf(self.r) or float(self.r).is_integer())):
            raise ValueError("r must be an integer >= 1")
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if not self.j > 0:
            raise ValueError("J must be positive")
        if self.measurement_model not in TWO_SPIN_MODELS:
            raise ValueError(f"measurement_model must be one of {TWO_SPIN_MODELS}")
        if not 0 < 2 * self.gradient_duration <= self.t_g:
            raise ValueError("two gradient pulses must fit inside the measurement period 1/J")
        object.__setattr__(self, "n_values", _check_n_values(self.n_values))

    @property
    def t_r(self) -> float:
        return 1.0 / (2 * self.r * self.j)

    @property
    def t_g(self) -> float:
        return 1.0 / self.j

    @property
    def geometry(self) -> SampleGeometry:
        d = self.diffusion_coefficient if self.diffusion else 0.0
        return SampleGeometry(self.length, d, self.n_isochromats)


_CONFIG_UNITS = {
    "theta": ("deg", math.radians(1)),
    "tau": ("ms", 1e-3),
    "gradient_duration": ("ms", 1e-3),
    "gradient_strength": ("T/m", 1.0),
    "length": ("mm", 1e-3),
    "diffusion_coefficient": ("m2/s", 1.0),
    "j": ("Hz", 1.0),
}


def config_to_text(config) -> str:
    """Flat ``key=value`` lines with units, all defaults materialised."""
    lines = [f"experiment={'zeno1' if isinstance(config, OneSpinConfig) else 'zeno2'}"]
    for f in fields(config):
        value = getattr(config, f.name)
        if f.name == "n_values":
            text = format_range(value)
        elif value is None:
            text = "auto"
        elif f.name in _CONFIG_UNITS:
            unit, scale = _CONFIG_UNITS[f.name]
            text = f"{value / scale!r}{unit}"
        else:
            text = str(value)
        lines.append(f"{f.name}={text}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str):
    items = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        items[key] = value
    kind = items.pop("experiment", "zeno1")
    cls = {"zeno1": OneSpinConfig, "zeno2": TwoSpinConfig}.get(kind)
    if cls is None:
        raise ValueError(f"unknown experiment {kind!r}")
    types = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in items.items():
        if key not in types:
            raise ValueError(f"unknown {kind} setting {key!r}")
        if key == "n_values":
            kwargs[key] = tuple(parse_range(value))
        elif value == "auto":
            kwargs[key] = None
        elif key in _CONFIG_UNITS:
            unit, scale = _CONFIG_UNITS[key]
            if not value.endswith(unit):
                raise ValueError(f"{key} needs unit {unit}")
            kwargs[key] = float(value[: -len(unit)]) * scale
        elif key in ("gradients", "measurement_model"):
            kwargs[key] = value
        elif key == "diffusion":
            kwargs[key] = value.lower() in ("true", "1", "yes", "on")
        elif key in ("n_isochromats",):
            kwargs[key] = int(value)
        else:
            kwargs[key] = float(value)
    return cls(**kwargs)


@dataclass(frozen=True)
class ZenoCurve:
    n_values: tuple
    signal: np.ndarray
    raw: np.ndarray = field(repr=False)
    metadata: dict = field(default_factory=dict, compare=False)


def normalise(raw) -> np.ndarray:
    """Divide by the largest magnitude in the run."""
    raw = np.asarray(raw, dtype=float)
    peak = np.max(np.abs(raw)) if raw.size else 0.0
    return raw / peak if peak > 0 else raw.copy()


def _curve(n_values, raw, config, seed, **extra) -> ZenoCurve:
    meta = {"config": config_to_text(config), "seed": seed}
    meta.update(extra)
    return ZenoCurve(tuple(n_values), normalise(raw), np.asarray(raw, dtype=float), meta)


# --- one-spin experiment --------------------------------------------------


def one_spin_gradient(config: OneSpinConfig, system: SpinSystem) -> Optional[float]:
    if config.gradients == "off":
        return None
    if config.gradient_strength is not None:
        return config.gradient_strength
    return float(default_crusher_strength(system, config.length, config.tau))


def one_spin_ast(config: OneSpinConfig, system: SpinSystem, n: int) -> SequenceAst:
    label = system.spins[0].label
    g = one_spin_gradient(config, system)
    body = (
        PulseStmt(label, Quantity(config.theta, "rad"), "x"),
        DelayStmt(Quantity(config.tau, "s"), None if g is None else Quantity(g, "T/m")),
    )
    return SequenceAst((LoopStmt(int(n), body), CrushStmt("all"), AcquireStmt(label, "z")))


def one_spin_sequence(config: OneSpinConfig, system: SpinSystem, n: int) -> str:
    return format_ast(one_spin_ast(config, system, n))


def run_one_spin(
    config: OneSpinConfig, system: Optional[SpinSystem] = None, seed: int = 0, workers: Optional[int] = None
) -> ZenoCurve:
    """Normalised I_z after n pulse+delay cycles, a final crush and direct readout."""
    system = single_spin() if system is None else system
    if system.nspins != 1:
        raise ValueError("the one-spin experiment needs a one-spin system")
    g = one_spin_gradient(config, system)
    grad = None if g is None else GradientEvent(g, config.tau)
    body = (Pulse(PulseSpec(0, config.theta)), Delay(config.tau, grad))
    finish = (Crush("all"),)
    program, done = [], 0
    for n in config.n_values:
        program.append((body * (n - done), finish, Acquire(0, "z")))
        done = n
    raw = engine.simulate(
        program, system, config.gradients, "pure-ground", geometry=config.geometry,
        seed=seed, b1_spread=config.b1_spread, workers=workers,
    )
    return _curve(config.n_values, raw, config, seed, gradient_strength=g)


# --- two-spin experiment --------------------------------------------------


def roles(system: SpinSystem):
    """(control, target): the lower-gamma spin measures nothing and is read out."""
    if system.nspins != 2:
        raise ValueError("the two-spin experiment needs a two-spin system")
    order = np.argsort(np.abs(system.gammas), kind="stable")
    return int(order[0]), int(order[1])


def two_spin_gradient(config: TwoSpinConfig, system: SpinSystem) -> float:
    if config.gradient_strength is not None:
        return config.gradient_strength
    return float(default_crusher_strength(system, config.length, config.gradient_duration))


def control_correction(config: TwoSpinConfig, system: SpinSystem) -> float:
    """Control z rotation (rad, in [0, 2 pi)) undoing the control's offset precession.

    With the target averaged out, the control precesses at its offset during
    both the T_r window and the measurement period (where the target 180
    refocuses J). The correction cancels that, leaving pure phase damping.
    """
    c, _ = roles(system)
    beta = -system.spins[c].offset * (config.t_r + config.t_g)
    return math.fmod(beta, 2 * math.pi) % (2 * math.pi)


def measurement_block(config: TwoSpinConfig, system: SpinSystem, strength: Optional[float] = None) -> tuple:
    """Gradient echo on the target: +G, target 180, -G, centred in a window of 1/J."""
    _, t = roles(system)
    g = two_spin_gradient(config, system) if strength is None else strength
    delta = config.gradient_duration
    pad = config.t_g / 2 - delta
    grad = (GradientEvent(g, delta), GradientEvent(-g, delta)) if g != 0 else (None, None)
    return (
        Delay(pad),
        Delay(delta, grad[0]),
        Pulse(PulseSpec(t, math.pi)),
        Delay(delta, grad[1]),
        Delay(pad),
    )


def root_cnot_block(config: TwoSpinConfig, system: SpinSystem) -> tuple:
    """Free evolution for T_r = 1/(2rJ), target pseudo-Hadamard and the control z correction."""
    c, t = roles(system)
    events = [Delay(config.t_r), Pulse(PulseSpec(t, math.pi / 2, math.pi / 2))]
    beta = control_correction(config, system)
    if beta != 0:
        # Rz(beta) = R_-y(90) R_x(beta) R_y(90)
        events += [
            Pulse(PulseSpec(c, math.pi / 2, math.pi / 2)),
            Pulse(PulseSpec(c, beta, 0.0)),
            Pulse(PulseSpec(c, math.pi / 2, 3 * math.pi / 2)),
        ]
    return tuple(events)


def two_spin_iteration(config: TwoSpinConfig, system: SpinSystem) -> tuple:
    c, _ = roles(system)
    return (
        (Pulse(PulseSpec(c, config.theta)),)
        + root_cnot_block(config, system)
        + measurement_block(config, system)
    )


def _event_stmt(event, system) -> object:
    if isinstance(event, Pulse):
        s = event.spec
        phase = {0.0: "x", math.pi / 2: "y", math.pi: "-x", 3 * math.pi / 2: "-y"}.get(s.phase)
        return PulseStmt(
            system.spins[s.target].label, Quantity(s.flip, "rad"),
            phase if phase is not None else Quantity(s.phase, "rad"),
        )
    if isinstance(event, Delay):
        g = None if event.gradient is None else Quantity(event.gradient.strength, "T/m")
        return DelayStmt(Quantity(event.duration, "s"), g)
    if isinstance(event, Crush):
        return CrushStmt("all" if event.target == "all" else system.spins[event.target].label)
    raise TypeError(f"cannot express {event!r} as a statement")


def two_spin_ast(config: TwoSpinConfig, system: SpinSystem, n: int) -> SequenceAst:
    if config.measurement_model == "gate":
        raise ValueError("the gate model has no pulse-sequence form; use hamiltonian or ensemble")
    c, _ = roles(system)
    body = tuple(_event_stmt(e, system) for e in two_spin_iteration(config, system))
    return SequenceAst((LoopStmt(int(n), body), AcquireStmt(system.spins[c].label, "z")))


def two_spin_sequence(config: TwoSpinConfig, system: SpinSystem, n: int) -> str:
    return format_ast(two_spin_ast(config, system, n))


def _two_spin_system(config, system):
    if system is None:
        return formate_system(config.j)
    if system.nspins != 2:
        raise ValueError("the two-spin experiment needs a two-spin system")
    if not math.isclose(system.j, config.j, rel_tol=1e-12):
        raise ValueError(f"config J {config.j} Hz does not match system J {system.j} Hz")
    return system


def run_two_spin(
    config: TwoSpinConfig, system: Optional[SpinSystem] = None, seed: int = 0, workers: Optional[int] = None
) -> ZenoCurve:
    """Normalised control <I_z> after n iterations for the chosen measurement model."""
    system = _two_spin_system(config, system)
    if config.measurement_model == "gate":
        raw = run_gate_model(config.r, config.theta, config.n_values)
        return _curve(config.n_values, raw, config, seed)
    c, t = roles(system)
    rho0 = np.zeros((4, 4), dtype=complex)
    # control in |0>, target maximally mixed, whatever the spin order
    for b in (0, 1):
        rho0[b << (1 - t), b << (1 - t)] = 0.5
    body = two_spin_iteration(config, system)
    program, done = [], 0
    for n in config.n_values:
        program.append((body * (n - done), (), Acquire(c, "z")))
        done = n
    mode = "ideal" if config.measurement_model == "hamiltonian" else "ensemble"
    raw = engine.simulate(
        program, system, mode, state=rho0, geometry=config.geometry, seed=seed, workers=workers
    )
    return _curve(config.n_values, raw, config, seed, gradient_strength=two_spin_gradient(config, system))
