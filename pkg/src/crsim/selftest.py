"""Fast invariant checks runnable from the command line (``crsim selftest``)."""
from __future__ import annotations

import numpy as np

from . import kernels
from .device import DeviceParams
from .dynamics import NOISELESS, SolverConfig, evolve_lindblad, evolve_unitary, noise_from_coherences
from .kernels import _fallback
from .metrics import concurrence, gate_fidelity_from_process, ideal_zx, werner_state
from .pulses import Gate, build_sequence
from .qlinalg import (BELL_PHI_PLUS, PAULIS_2Q, X, Z, is_hermitian, ket, normalize, pauli_string,
                      projector, rotation, tensor, trace_distance)
from .tomo import measure_state, mle_state_tomography, ReadoutModel


def _random_rho(rng, rank=4):
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    r = g @ g.conj().T
    return r / np.trace(r)


def check_pauli_algebra():
    xy = pauli_string("XI") @ pauli_string("ZI")
    assert np.allclose(xy, -1j * pauli_string("YI"))
    gram = np.einsum("aij,bji->ab", PAULIS_2Q, PAULIS_2Q)
    assert np.allclose(gram, 4 * np.eye(16))


def check_rotation_convention():
    assert np.allclose(rotation(X, 360), -np.eye(2))
    assert np.allclose(rotation(Z, 180), -1j * Z)


def check_concurrence():
    assert abs(concurrence(projector(BELL_PHI_PLUS)) - 1) < 1e-9
    assert concurrence(werner_state(1 / 3)) < 1e-9
    psi = ideal_zx(90).unitary @ normalize(ket("00") + ket("10"))
    assert abs(concurrence(projector(psi)) - 1) < 1e-9


def check_gate_fidelity_formula():
    assert abs(gate_fidelity_from_process(0.77) - 0.816) < 1e-12


def check_mle_roundtrip():
    rng = np.random.default_rng(7)
    model = ReadoutModel()
    for rank in (1, 2, 4):
        rho = _random_rho(rng, rank)
        est = mle_state_tomography(measure_state(rho, model), model)
        assert trace_distance(est, rho) < 1e-3


def check_kernel_backends():
    rng = np.random.default_rng(3)
    h = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    g0 = -1j * (h + h.conj().T)
    gk = (-1j * np.eye(4, dtype=complex))[None].copy()
    coeffs = np.ascontiguousarray(rng.normal(size=(1, 201)))
    y0 = np.eye(4, dtype=complex)
    a = kernels.rk4_propagate(g0, gk, coeffs, y0, 1e-3, 100, 100)
    b = _fallback.rk4_propagate(g0, gk, coeffs, y0, 1e-3, 100, 100)
    assert np.allclose(a, b, atol=1e-12)


def check_noiseless_lindblad_matches_unitary():
    p = DeviceParams()
    sched = build_sequence(p, [Gate("X90", 1), Gate("CR", 1, 100e6, 60e-9)])
    solver = SolverConfig(dt=0.02e-9)
    psi = evolve_unitary(sched, p, ket("00"), None, solver).final
    rho = evolve_lindblad(sched, p, projector(ket("00")), NOISELESS, None, solver).final
    assert trace_distance(rho, projector(psi)) < 1e-6


def check_lindblad_trace():
    p = DeviceParams()
    sched = build_sequence(p, [Gate("X90", 1), Gate("X90", 2)])
    res = evolve_lindblad(sched, p, projector(ket("00")), noise_from_coherences(p),
                          np.linspace(0, sched.duration, 5))
    for r in res.states:
        assert abs(np.trace(r) - 1) < 1e-6 and is_hermitian(r, 1e-9)


CHECKS = [check_pauli_algebra, check_rotation_convention, check_concurrence,
          check_gate_fidelity_formula, check_mle_roundtrip, check_kernel_backends,
          check_noiseless_lindblad_matches_unitary, check_lindblad_trace]


def run(stream=None) -> bool:
    ok = True
    for check in CHECKS:
        try:
            check()
            status = "PASS"
        except AssertionError:
            status, ok = "FAIL", False
        line = f"{status} {check.__name__}"
        if stream is not None:
            print(line, file=stream)
    return ok
