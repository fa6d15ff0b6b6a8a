import math

import numpy as np
import pytest

from nmrzeno import engine, experiments as ex, propagate
from nmrzeno.seqlang import Acquire, parse
from nmrzeno.spinsys import expectation, formate_system, initial_state, partial_trace, single_spin, spin_operator


def test_rabi_state_examples():
    assert np.allclose(ex.rabi_state(0.0), [1, 0])
    assert np.allclose(ex.rabi_state(math.pi), [0, 1j])
    assert np.allclose(np.abs(ex.rabi_state(math.pi / 2)) ** 2, [0.5, 0.5])


def test_survival_properties():
    prev = 0.0
    for n in range(2, 300):
        s = ex.survival_probability(n)
        assert 0 < s.exact < 1 and s.exact > prev
        prev = s.exact
        if n >= 5:
            assert abs(s.exact - s.approx) < math.pi**4 / (16 * n**2)
    assert ex.survival_probability(10**6).exact == pytest.approx(1.0, abs=1e-5)
    with pytest.raises(ValueError):
        ex.survival_probability(0)
    assert ex.survival_probability(100).approx == pytest.approx(0.975629, abs=2e-6)


def test_crush_oracle_examples():
    assert ex.crush_decay_oracle(0.3, 0) == 1.0
    assert ex.crush_decay_oracle(math.radians(1), 100) == pytest.approx(0.98488, abs=5e-6)
    assert ex.crush_decay_oracle(math.radians(5), 20) == pytest.approx(0.92658, abs=5e-6)


def test_controlled_rx_properties():
    cnot = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
    assert np.array_equal(np.abs(ex.controlled_rx(1)) ** 2, cnot)
    for r in (2, 4, 16):
        assert np.allclose(np.linalg.matrix_power(ex.controlled_rx(r), r), ex.controlled_rx(1), atol=1e-12)
    assert np.allclose(ex.controlled_rx(math.inf), np.eye(4))


def test_gate_step_examples():
    th = math.radians(5)
    system = formate_system()
    rho0 = initial_state(system, "control-polarized-target-mixed")
    out = ex.gate_step(rho0, 1, th)
    ctrl = partial_trace(out, 0)
    assert expectation(out, spin_operator(system, 0, "z")) == pytest.approx(0.5 * math.cos(th), abs=1e-15)
    assert ctrl[0, 1] == 0
    out = ex.gate_step(rho0, math.inf, th)
    assert np.allclose(out, propagate.apply_pulse(rho0, propagate.PulseSpec(0, th)), atol=1e-15)
    rho = rho0
    for _ in range(100):
        rho = ex.gate_step(rho, 16, th)
        assert np.allclose(partial_trace(rho, 1), np.eye(2) / 2, atol=1e-12)


def test_reduced_channel_examples():
    th = math.radians(5)
    for n in (0, 1, 7, 40):
        assert ex.reduced_channel_oracle(1, th, n) == pytest.approx(math.cos(th) ** n, abs=1e-15)
        assert ex.reduced_channel_oracle(math.inf, th, n) == pytest.approx(math.cos(n * th), abs=1e-13)
    z = ex.reduced_channel_oracle(16, th, 18)
    assert 2 * ex.run_gate_model(16, th, [18])[0] == pytest.approx(z, abs=1e-12)
    with pytest.raises(ValueError):
        ex.reduced_channel_oracle(0.5, th, 3)


def test_parse_and_format_range():
    assert ex.parse_range("0:400:10") == list(range(0, 401, 10))
    assert ex.parse_range("0:5") == [0, 1, 2, 3, 4, 5]
    assert ex.parse_range("1,16,64") == [1, 16, 64]
    assert ex.parse_range("0:9:4") == [0, 4, 8]
    for bad in ("5:1", "0:10:0", "a", "", "-1,2"):
        with pytest.raises(ValueError):
            ex.parse_range(bad)
    assert ex.format_range(range(0, 401, 10)) == "0:400:10"
    assert ex.format_range([1, 16, 64]) == "1,16,64"


def test_config_validation_and_text():
    with pytest.raises(ValueError):
        ex.OneSpinConfig(gradients="sometimes")
    with pytest.raises(ValueError):
        ex.OneSpinConfig(n_values=(5, 1))
    with pytest.raises(ValueError):
        ex.TwoSpinConfig(r=0.5)
    with pytest.raises(ValueError):
        ex.TwoSpinConfig(gradient_duration=4e-3)
    for cfg in (ex.OneSpinConfig(gradients="ensemble", b1_spread=0.02), ex.TwoSpinConfig(r=16, diffusion=True)):
        assert ex.config_from_text(ex.config_to_text(cfg)) == cfg
    with pytest.raises(ValueError):
        ex.config_from_text("experiment=zeno1\ntheta=1rad\n")


def test_one_spin_branches():
    th = math.radians(1)
    cfg = ex.OneSpinConfig()
    n = np.array(cfg.n_values)
    assert np.max(np.abs(ex.run_one_spin(cfg).signal - np.cos(n * th))) < 1e-9
    cfg = ex.OneSpinConfig(gradients="ideal")
    assert np.max(np.abs(ex.run_one_spin(cfg).signal - np.cos(th) ** n)) < 1e-9
    with pytest.raises(ValueError):
        ex.run_one_spin(cfg, formate_system())


def test_one_spin_ensemble_stimulated_echoes_slow_decay():
    # identical crushers every interval let stimulated-echo pathways return
    # magnetisation, so the ensemble decays more slowly than the ideal crush
    cfg = ex.OneSpinConfig(gradients="ensemble", n_values=(0, 100, 200), n_isochromats=2000)
    sig = ex.run_one_spin(cfg).signal
    ideal = np.cos(cfg.theta) ** np.array(cfg.n_values)
    assert np.all(sig[1:] > ideal[1:])


def test_two_spin_gate_matches_oracle():
    for r in (1, 16, 64):
        cfg = ex.TwoSpinConfig(r=r)
        curve = ex.run_two_spin(cfg)
        assert np.max(np.abs(curve.signal - ex.reduced_channel_curve(r, cfg.theta, cfg.n_values))) < 1e-12


def test_hamiltonian_r1_is_crush_decay():
    cfg = ex.TwoSpinConfig(r=1, measurement_model="hamiltonian", n_values=tuple(range(0, 101, 5)))
    curve = ex.run_two_spin(cfg)
    assert np.max(np.abs(curve.signal - np.cos(cfg.theta) ** np.array(cfg.n_values))) < 1e-6


@pytest.mark.parametrize("r", [1, 2, 16, 64])
def test_root_cnot_channel_is_phase_damping(r):
    """Channel extraction: root-CNOT plus measurement acting on control basis states."""
    system = formate_system()
    cfg = ex.TwoSpinConfig(r=r, measurement_model="hamiltonian")
    block = ex.root_cnot_block(cfg, system) + ex.measurement_block(cfg, system)
    lam = math.cos(math.pi / (2 * r))
    kets = {
        "0": np.array([1, 0]), "1": np.array([0, 1]),
        "+": np.array([1, 1]) / math.sqrt(2), "+i": np.array([1, 1j]) / math.sqrt(2),
    }
    single = single_spin()
    axes = [spin_operator(single, 0, a) for a in "xyz"]
    for name, k in kets.items():
        ctrl = np.outer(k, k.conj())
        rho0 = np.kron(ctrl, np.eye(2) / 2)
        out = [engine.simulate([(block, (), Acquire(0, a))], system, "ideal", state=rho0)[0] for a in "xyz"]
        x, y, z = (expectation(ctrl, a) for a in axes)
        assert out == pytest.approx([lam * x, lam * y, z], abs=1e-12), name


def test_measurement_block_zero_gradient_form():
    """With no gradient the block is a target pi pulse times a control z rotation by pi*J*T_g = pi."""
    system = formate_system()
    cfg = ex.TwoSpinConfig(r=16, measurement_model="hamiltonian")
    u = engine.sequence_unitary(ex.measurement_block(cfg, system, strength=0.0), system)
    x_t = propagate.embed(propagate.rotation(math.pi, 0.0), 1, 2)
    rz_c = np.diag(np.exp(-1j * np.array([1, 1, -1, -1]) * math.pi / 2))
    m = (x_t @ rz_c).conj().T @ u
    assert np.max(np.abs(m - m[0, 0] * np.eye(4))) < 1e-9


def test_zeno_ordering_general():
    th = math.radians(5)
    n = math.ceil(90 / 5)
    vals = [ex.reduced_channel_oracle(r, th, n) for r in (1, 16, 64)]
    assert vals[0] > vals[1] > vals[2]


def test_roles():
    assert ex.roles(formate_system()) == (0, 1)
    with pytest.raises(ValueError):
        ex.roles(single_spin())


def test_generators_emit_parseable_text():
    text = ex.one_spin_sequence(ex.OneSpinConfig(gradients="ideal"), single_spin(), 5)
    assert parse(text) == ex.one_spin_ast(ex.OneSpinConfig(gradients="ideal"), single_spin(), 5)
    cfg = ex.TwoSpinConfig(r=4, measurement_model="hamiltonian")
    assert parse(ex.two_spin_sequence(cfg, formate_system(), 3)) == ex.two_spin_ast(cfg, formate_system(), 3)
    with pytest.raises(ValueError):
        ex.two_spin_ast(ex.TwoSpinConfig(), formate_system(), 3)


def test_normalise():
    assert np.array_equal(ex.normalise([0.5, -1.0, 0.25]), [0.5, -1.0, 0.25])
    assert np.array_equal(ex.normalise([0.0, 0.0]), [0.0, 0.0])
    assert np.allclose(ex.normalise([0.25, 0.5]), [0.5, 1.0])
