import os
import subprocess
import sys

import numpy as np
import pytest

from crsim.device import DeviceParams, DriveSpec, DriveTerms, RotatingFrame, dressed_frequencies
from crsim.dynamics import (NOISELESS, IntegrationError, NoiseModel, NoOscillationError, SolverConfig,
                            _integrate, apply_superoperator, evolve_lindblad, evolve_unitary,
                            extract_jeff, fit_rabi_frequency, idle, measure_jeff,
                            noise_from_coherences, propagator, rabi_trace, superoperator)
from crsim.metrics import concurrence
from crsim.pulses import Gate, PulseSchedule, ScheduleEntry, build_sequence, flattop
from crsim.qlinalg import is_hermitian, ket, normalize, pauli_string, projector, trace_distance


class ConstantEnvelope:
    def __init__(self, a, length):
        self.a, self.total_length, self.sigma = a, length, length

    def sample(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t >= 0) & (t <= self.total_length)
        return np.where(inside, self.a, 0.0), np.zeros(t.shape)


def single_tone(p, port, carrier, env):
    return PulseSchedule((ScheduleEntry(0.0, DriveSpec(port, carrier, env), "tone"),), env.total_length)


def z_expect(states, label):
    op = pauli_string(label)
    if states.ndim == 2:
        return np.einsum("ti,ij,tj->t", states.conj(), op, states).real
    return np.einsum("tij,ji->t", states, op).real


# ---------------------------------------------------------------- noise model

def test_noise_rates(device):
    nm = noise_from_coherences(device)
    assert nm.gamma1[0] == pytest.approx(6.25e5)
    assert nm.gamma_phi[0] == pytest.approx(3.125e5)
    lifetime_limited = device.replace(T2_1=2 * device.T1_1)
    assert noise_from_coherences(lifetime_limited).gamma_phi[0] == 0.0
    with pytest.raises(ValueError):
        NoiseModel((-1.0, 0.0), (0.0, 0.0))


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(integrator="euler")
    with pytest.raises(ValueError):
        SolverConfig(dt=0.0)
    with pytest.raises(ValueError):
        SolverConfig(model="other")


# ---------------------------------------------------------------- closed system

def test_zero_hamiltonian_keeps_state():
    p = DeviceParams(J=0.0, zz_enabled=False)
    psi0 = normalize(np.array([1, 2j, -1, 0.5]))
    res = evolve_unitary(idle(100e-9), p, psi0, np.linspace(0, 100e-9, 5))
    assert np.allclose(res.states, psi0[None, :], atol=1e-12)


def test_resonant_rabi_oscillation():
    p = DeviceParams(m12=0.0, m21=0.0, J=0.0, zz_enabled=False)
    a = 20e6
    f1, _ = dressed_frequencies(p)
    sched = single_tone(p, 1, f1, ConstantEnvelope(a, 120e-9))
    t = np.linspace(0, 120e-9, 25)
    res = evolve_unitary(sched, p, ket("00"), t)
    p_exc = 0.5 * (1 - z_expect(res.states, "ZI"))
    assert np.allclose(p_exc, np.sin(np.pi * a * t) ** 2, atol=1e-8)


def test_pure_zx_concurrence_closed_form():
    b = 2 * np.pi * 1.3e6  # angular ZX coefficient
    terms = DriveTerms(b * pauli_string("ZX"))
    t = np.linspace(0, 400e-9, 41)
    psi0 = normalize(ket("00") + ket("10"))
    out = _integrate(terms, psi0.reshape(-1, 1), t, (), t[-1], SolverConfig())
    c = np.array([concurrence(projector(v[:, 0])) for v in out])
    assert np.allclose(c, np.abs(np.sin(2 * b * t)), atol=1e-9)


def test_adaptive_matches_fixed(device):
    sched = build_sequence(device, [Gate("X90", 1), Gate("CR", 1, 200e6, 80e-9)])
    u_fixed = propagator(sched, device)
    u_adapt = propagator(sched, device, SolverConfig(integrator="adaptive"))
    assert np.max(np.abs(u_fixed - u_adapt)) < 1e-6
    assert np.allclose(u_fixed @ u_fixed.conj().T, np.eye(4), atol=1e-8)


def test_t_eval_validation(device):
    with pytest.raises(ValueError):
        evolve_unitary(idle(10e-9), device, ket("00"), [5e-9, 1e-9])


def test_non_finite_state_raises(device):
    terms = DriveTerms(np.diag([1e30, 0, 0, 0]).astype(complex))
    with pytest.raises(IntegrationError):
        _integrate(terms, np.eye(4, dtype=complex), [1e-9], (), 1e-9, SolverConfig())


def _zz_gap(p, port, carrier, a, t):
    sched = single_tone(p, port, carrier, flattop(a, 30e-9, 4e-9, 0.0))
    psi0 = normalize(ket("00") + ket("10"))
    rwa = evolve_unitary(sched, p, psi0, t).states
    lab = evolve_unitary(sched, p, psi0, t, SolverConfig(dt=0.5e-12, model="direct"),
                         frame=RotatingFrame(0.0, 0.0), rwa=False).states
    return np.max(np.abs(z_expect(rwa, "ZZ") - z_expect(lab, "ZZ")))


def test_frame_invariance_against_lab_frame():
    """Rotating-frame RWA vs exact lab-frame integration, drives up to A = Delta/10, t <= 10 ns."""
    p = DeviceParams(m12=0.0, m21=0.0)
    f1, f2 = dressed_frequencies(p)
    t = np.linspace(0, 10e-9, 11)
    for a in (10e6, (p.omega1 - p.omega2) / 10):
        for port, carrier in ((1, f1), (2, f2), (1, f2)):
            assert _zz_gap(p, port, carrier, a, t) < 1e-3


def test_lab_frame_gap_is_counter_rotating_micromotion():
    """The RWA drops a term oscillating at twice the carrier; the Bloch vector
    wobbles by an angle A / (2 f) around the rotating-frame trajectory."""
    p = DeviceParams(m12=0.0, m21=0.0)
    f1, f2 = dressed_frequencies(p)
    t = np.linspace(0, 10e-9, 11)
    for a in (10e6, (p.omega1 - p.omega2) / 10):
        for port, carrier in ((1, f1), (2, f2), (1, f2)):
            assert _zz_gap(p, port, carrier, a, t) < 1.5 * a / (2 * min(f1, f2))


# ---------------------------------------------------------------- master equation

def test_free_decay_and_product_decay(device):
    t = np.linspace(0, 3 * device.T1_1, 31)
    res = evolve_lindblad(idle(t[-1]), device, projector(ket("11")), t_eval=t)
    z1 = 1 - 2 * np.exp(-t / device.T1_1)
    z2 = 1 - 2 * np.exp(-t / device.T1_2)
    p1 = 0.5 * (1 - z_expect(res.states, "ZI"))
    assert np.max(np.abs(p1 - np.exp(-t / device.T1_1))) < 1e-4
    assert np.max(np.abs(z_expect(res.states, "ZZ") - z1 * z2)) < 1e-4


def test_ramsey_decay(device):
    t = np.linspace(0, 3 * device.T2_1, 31)
    res = evolve_lindblad(idle(t[-1]), device, projector(normalize(ket("00") + ket("10"))), t_eval=t)
    coherence = 2 * np.abs(res.states[:, 0, 2])
    assert np.max(np.abs(coherence / np.exp(-t / device.T2_1) - 1)) < 0.01


def test_noiseless_lindblad_equals_unitary(device):
    sched = build_sequence(device, [Gate("X90", 1), Gate("CR", 1, 300e6, 100e-9)])
    solver = SolverConfig(dt=0.005e-9)
    psi = evolve_unitary(sched, device, ket("00"), None, solver).final
    rho = evolve_lindblad(sched, device, projector(ket("00")), NOISELESS, None, solver).final
    assert trace_distance(rho, projector(psi)) < 1e-6


def test_trace_hermiticity_positivity_over_1us(device):
    sched = build_sequence(device, [Gate("X90", 1), Gate("CR", 1, 553e6, 800e-9), Gate("Y90", 2)])
    t = np.linspace(0, sched.duration, 21)
    res = evolve_lindblad(sched, device, projector(ket("00")), t_eval=t)
    assert sched.duration > 800e-9
    for r in res.states:
        assert abs(np.trace(r) - 1) < 1e-6
        assert is_hermitian(r, 1e-9)
        assert np.linalg.eigvalsh(0.5 * (r + r.conj().T)).min() > -1e-6


def test_superoperator_matches_direct_evolution(device):
    sched = build_sequence(device, [Gate("X90", 2), Gate("CR", 1, 150e6, 60e-9)])
    rho0 = projector(normalize(ket("00") + 1j * ket("11")))
    s = superoperator(sched, device, noise_from_coherences(device))
    direct = evolve_lindblad(sched, device, rho0).final
    assert np.allclose(apply_superoperator(s, rho0), direct, atol=1e-12)


# ---------------------------------------------------------------- Rabi and J_eff

def synthetic(f, tau=np.inf, n=201, dt=2e-9):
    t = dt * np.arange(n)
    return t, 0.5 - 0.5 * np.cos(2 * np.pi * f * t) * np.exp(-t / tau)


def test_fit_rabi_frequency_synthetic():
    assert fit_rabi_frequency(*synthetic(5e6)).frequency == pytest.approx(5e6, rel=1e-3)
    fit = fit_rabi_frequency(*synthetic(5e6, tau=2e-6))
    assert fit.frequency == pytest.approx(5e6, rel=5e-3)
    assert fit.decay_rate == pytest.approx(0.5e6, rel=0.01)


def test_fit_rabi_frequency_rejects_flat_and_noise(rng):
    t = 2e-9 * np.arange(201)
    with pytest.raises(NoOscillationError, match="no oscillation detected"):
        fit_rabi_frequency(t, np.full(t.size, 0.3))
    with pytest.raises(NoOscillationError):
        fit_rabi_frequency(t, rng.normal(size=t.size))


def test_rabi_trace_basic(device):
    t, y = rabi_trace(device, 1e-3, "ground", 100e-9)
    assert t.size == 51 and np.max(y) < 1e-9
    with pytest.raises(ValueError):
        rabi_trace(device, 1e6, "plus")


def test_rabi_traces_equal_without_coupling(device):
    p = device.replace(J=0.0, zz_enabled=False)
    _, yg = rabi_trace(p, 50e6, "ground", 200e-9)
    _, ye = rabi_trace(p, 50e6, "excited", 200e-9)
    assert np.max(np.abs(yg - ye)) < 1e-6


def test_small_amplitude_rabi_difference(device):
    a = 30e6
    r = measure_jeff(device, a)
    assert r.rabi_difference == pytest.approx(2 * device.J / device.delta12 * a, rel=0.02)
    assert r.jeff == pytest.approx(0.5 * r.rabi_difference)
    assert r.f_ground == pytest.approx(device.m12 * a, rel=0.02)


def test_jeff_vanishes_without_coupling(device):
    r = measure_jeff(device.replace(J=0.0, zz_enabled=False), 50e6)
    assert r.jeff <= max(3 * r.uncertainty, 1e-6 * r.f_ground)
    with pytest.raises(ValueError):
        extract_jeff(device, 0.0)


def test_jeff_symmetric_in_control_swap(device):
    r = measure_jeff(device, 80e6)
    assert r.jeff == pytest.approx(0.5 * abs(r.f_excited - r.f_ground))
    assert r.jeff > 0


# ---------------------------------------------------------------- backends

def test_pure_python_backend_selected_by_env():
    code = "import crsim.kernels as k; print(k.BACKEND)"
    env = dict(os.environ, CRSIM_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_compiled_and_fallback_kernels_agree(rng):
    from crsim.kernels import _fallback
    rk4 = pytest.importorskip("crsim.kernels._rk4")
    a = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
    g0 = -1j * (a + a.conj().T) * 1e8
    gk = np.ascontiguousarray((-1j * np.array([np.diag(rng.normal(size=16))]) * 1e8).astype(complex))
    coeffs = np.ascontiguousarray(rng.normal(size=(1, 401)))
    y0 = np.eye(16, dtype=complex)
    args = (g0, gk, coeffs, y0, 1e-11, 200, 50)
    assert np.allclose(rk4.rk4_propagate(*args), _fallback.rk4_propagate(*args), atol=1e-12)
