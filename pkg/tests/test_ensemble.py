import math

import numpy as np
import pytest

from nmrzeno.ensemble import (
    GradientEvent,
    SampleGeometry,
    apply_gradient,
    average,
    default_crusher_strength,
    diffuse,
    echo_attenuation,
    init_ensemble,
    monte_carlo_echo,
    reflect,
    stream_normals,
    weighted_mean,
)
from nmrzeno.propagate import PulseSpec, apply_pulse
from nmrzeno.spinsys import GAMMA_1H, formate_system, single_spin, spin_operator

PLUS2 = np.full((4, 4), 0.25, dtype=complex)  # |++><++|


def test_grid_examples():
    e = init_ensemble(SampleGeometry(1.0, 0.0, 1), single_spin())
    assert np.array_equal(e.positions, [0.0])
    e = init_ensemble(SampleGeometry(1.0, 0.0, 4), single_spin())
    assert np.allclose(e.positions, [-0.375, -0.125, 0.125, 0.375])
    assert e.weights.sum() == pytest.approx(1.0)


def test_geometry_validation():
    with pytest.raises(ValueError):
        SampleGeometry(0.0)
    with pytest.raises(ValueError):
        SampleGeometry(1.0, -1.0)
    with pytest.raises(ValueError):
        SampleGeometry(1.0, 0.0, 0)
    with pytest.raises(ValueError):
        GradientEvent(0.1, 0.0)


def test_streams_deterministic_and_member_keyed():
    a = stream_normals(3, np.arange(10), 5)
    b = stream_normals(3, np.arange(10), 5)
    assert np.array_equal(a, b)
    assert np.array_equal(stream_normals(3, np.arange(4, 8), 5), a[4:8])
    assert not np.array_equal(stream_normals(4, np.arange(10), 5), a)
    big = stream_normals(0, np.arange(200_000), 1)
    assert abs(big.mean()) < 0.01 and abs(big.std() - 1) < 0.01


def test_init_deterministic_with_b1():
    g = SampleGeometry(0.01, 1e-9, 100)
    a = init_ensemble(g, single_spin(), seed=9, b1_spread=0.05)
    b = init_ensemble(g, single_spin(), seed=9, b1_spread=0.05)
    assert np.array_equal(a.b1, b.b1) and np.array_equal(a.states, b.states)
    assert a.b1.std() > 0


def test_zero_gradient_no_change():
    e = init_ensemble(SampleGeometry(0.01, 0.0, 50), formate_system(), state=PLUS2)
    out = apply_gradient(e, GradientEvent(0.0, 1e-3))
    assert np.array_equal(out.states, e.states)


def test_bipolar_pair_restores_every_member():
    e = init_ensemble(SampleGeometry(0.01, 0.0, 64), formate_system(), state=PLUS2)
    mid = apply_gradient(e, GradientEvent(0.3, 2e-3))
    assert not np.allclose(mid.states, e.states)
    out = apply_gradient(mid, GradientEvent(-0.3, 2e-3))
    assert np.max(np.abs(out.states - e.states)) < 1e-12


def test_echo_with_concurrent_180_matches_unitary_product():
    system = formate_system()
    g, d = 0.2, 1e-3
    e = init_ensemble(SampleGeometry(0.01, 0.0, 16), system, state=PLUS2)
    out = apply_gradient(e, GradientEvent(g, 2 * d, concurrent_180_target=1))
    z0, z1 = spin_operator(system, 0, "z"), spin_operator(system, 1, "z")
    for k, z in enumerate(e.positions):
        def grad(t):
            h = system.gammas[0] * g * z * z0 + system.gammas[1] * g * z * z1
            return np.diag(np.exp(-1j * np.diag(h) * t))
        rho = grad(d) @ PLUS2 @ grad(d).conj().T
        rho = apply_pulse(rho, PulseSpec(1, math.pi))
        rho = grad(d) @ rho @ grad(d).conj().T
        assert np.allclose(out.states[k], rho, atol=1e-12)
    # G, 180, G: the target refocuses, the control keeps dephasing
    tx = average(out, spin_operator(system, 1, "x"))
    ty = average(out, spin_operator(system, 1, "y"))
    assert tx**2 + ty**2 == pytest.approx(0.25, abs=1e-12)
    assert abs(average(out, spin_operator(system, 0, "x"))) < 0.25


def test_diffuse_examples():
    e = init_ensemble(SampleGeometry(1.0, 0.0, 10), single_spin())
    assert np.array_equal(diffuse(e, 1.0).positions, e.positions)
    e = init_ensemble(SampleGeometry(1.0, 1e-9, 10), single_spin())
    assert np.array_equal(diffuse(e, 0.0).positions, e.positions)
    with pytest.raises(ValueError):
        diffuse(e, -1.0)


def test_mean_square_displacement():
    d, t = 2e-9, 0.05
    e = init_ensemble(SampleGeometry(1.0, d, 100_000), single_spin(), seed=4)
    out = diffuse(e, t)
    msd = np.mean((out.positions - e.positions) ** 2)
    assert msd == pytest.approx(2 * d * t, rel=0.05)


def test_reflect_stays_inside():
    z = np.linspace(-3, 3, 101)
    r = reflect(z, 1.0)
    assert r.min() >= -0.5 and r.max() <= 0.5
    assert np.allclose(reflect(np.array([0.6, -0.7]), 1.0), [0.4, -0.3])


def test_average_examples():
    system = single_spin()
    iz = spin_operator(system, 0, "z")
    e = init_ensemble(SampleGeometry(0.01, 0.0, 7), system)
    assert average(e, iz) == pytest.approx(0.5)
    plus = np.full((2, 2), 0.5, dtype=complex)
    e = init_ensemble(SampleGeometry(0.01, 0.0, 1000), system, state=plus)
    g = 2 * math.pi * 5 / (GAMMA_1H * 0.01 * 1e-3)
    out = apply_gradient(e, GradientEvent(g, 1e-3))
    assert abs(average(out, spin_operator(system, 0, "x"))) < 1e-12
    assert abs(average(out, spin_operator(system, 0, "y"))) < 1e-12
    vals = np.array([0.1, 0.2, 0.3])
    assert weighted_mean(vals, [1, 1, 2]) == pytest.approx(weighted_mean(vals, [0.5, 0.5, 1.0]))


def test_strong_crusher_destroys_transverse():
    system = single_spin()
    plus = np.full((2, 2), 0.5, dtype=complex)
    e = init_ensemble(SampleGeometry(0.01, 0.0, 10_000), system, state=plus)
    g = default_crusher_strength(system, 0.01, 1e-3)
    out = apply_gradient(e, GradientEvent(g, 1e-3))
    assert abs(average(out, spin_operator(system, 0, "x"))) < 1e-3


def test_echo_attenuation_examples():
    assert echo_attenuation(GAMMA_1H, 0.1, 1e-3, 0.0, 5e-3) == 1.0
    a = -math.log(echo_attenuation(1e7, 0.1, 1e-3, 2e-9, 5e-3))
    b = -math.log(echo_attenuation(4e7, 0.1, 1e-3, 2e-9, 5e-3))
    assert b / a == pytest.approx(16.0, rel=1e-9)
    with pytest.raises(ValueError):
        echo_attenuation(1.0, -1.0, 1.0, 1.0, 1.0)


def test_monte_carlo_echo_small():
    system = single_spin()
    att = monte_carlo_echo(system, 0.0, 1e-3, 5e-3, 2e-9, n_isochromats=100)
    assert att[0] == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        monte_carlo_echo(system, 0.1, 2e-3, 1e-3, 2e-9, n_isochromats=10)


def test_split_covers_all_members():
    e = init_ensemble(SampleGeometry(0.01, 0.0, 10), single_spin())
    parts = e.split(3)
    assert np.array_equal(np.concatenate([p.members for p in parts]), e.members)
    assert e.isochromat(3).position == e.positions[3]
