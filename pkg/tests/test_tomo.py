import numpy as np
import pytest

from conftest import random_density_matrix, random_unitary
from crsim.metrics import CNOT, state_fidelity
from crsim.qlinalg import (BELL_PHI_PLUS, PAULI_LABELS_2Q, PAULIS_2Q, check_density_matrix, ket,
                           pauli_expectations, pauli_string, projector, trace_distance)
from crsim.tomo import (IDEAL_READOUT, MLEConvergenceError, ReadoutModel, TomographyError,
                        TomographyRecord, chi_from_json, chi_from_states, chi_to_json, design_matrix,
                        joint_readout, linear_inversion_state, measure_state, mle_state_tomography,
                        project_density, project_psd, qpt, qpt_input_labels, qpt_inputs,
                        settings_condition_number, state_tomography, tomography_settings)

BETA = ReadoutModel()
IDX = {label: k for k, label in enumerate(PAULI_LABELS_2Q)}


def unitary_channel(u):
    return lambda rho: u @ rho @ u.conj().T


def analytic_cnot_chi():
    """CNOT = (II + IX + ZI - ZX) / 2, so chi = c c^dagger on those four entries."""
    c = np.zeros(16, dtype=complex)
    for label, coeff in (("II", 0.5), ("IX", 0.5), ("ZI", 0.5), ("ZX", -0.5)):
        c[IDX[label]] = coeff
    return np.outer(c, c.conj())


# ---------------------------------------------------------------- readout


def test_readout_ground_state():
    assert joint_readout(projector(ket("00")), ("I", "I"), BETA) == pytest.approx(3.09, abs=1e-12)


def test_readout_bell_state():
    assert joint_readout(projector(BELL_PHI_PLUS), ("I", "I"), BETA) == pytest.approx(1.6, abs=1e-12)


def test_readout_maximally_mixed_gives_beta_ii(rng):
    for s in tomography_settings():
        assert joint_readout(np.eye(4) / 4, s, BETA) == pytest.approx(1.0, abs=1e-12)


def test_readout_identity_only_beta_gives_one(rng):
    model = ReadoutModel((1.0, 0.0, 0.0, 0.0))
    for _ in range(5):
        rho = random_density_matrix(rng)
        for s in tomography_settings():
            assert joint_readout(rho, s, model) == pytest.approx(1.0, abs=1e-12)


def test_readout_prerotation_flips_qubit():
    # X on qubit 1 maps |00> to |10>: <ZI> = <ZZ> = -1
    v = joint_readout(projector(ket("00")), ("X", "I"), BETA)
    assert v == pytest.approx(1 + 0.77 - 0.72 - 0.6, abs=1e-12)


def test_readout_noise_is_seeded():
    model = ReadoutModel(sigma=0.02)
    rho = projector(ket("00"))
    a = joint_readout(rho, ("I", "I"), model, rng_seed=5)
    assert a == joint_readout(rho, ("I", "I"), model, rng_seed=5)
    assert a != joint_readout(rho, ("I", "I"), model, rng_seed=6)


def test_readout_shot_noise_converges():
    model = ReadoutModel(shots=200000)
    rho = projector(BELL_PHI_PLUS)
    assert joint_readout(rho, ("I", "I"), model, rng_seed=1) == pytest.approx(1.6, abs=0.02)


def test_readout_model_validation():
    with pytest.raises(ValueError):
        ReadoutModel((1.0, 0.5))
    with pytest.raises(ValueError):
        ReadoutModel(sigma=-1.0)
    with pytest.raises(ValueError):
        ReadoutModel(shots=0)
    with pytest.raises(ValueError):
        joint_readout(np.eye(4) / 4, ("Z", "I"))


# ---------------------------------------------------------------- settings


def test_settings_set():
    s = tomography_settings()
    assert len(s) == 16 and len(set(s)) == 16
    assert ("I", "I") in s


def test_design_matrix_rank_and_condition():
    a = design_matrix(tomography_settings(), BETA)
    assert np.linalg.matrix_rank(a) == 16
    sv = np.linalg.svd(a, compute_uv=False)
    assert sv[0] / sv[-1] == pytest.approx(settings_condition_number(BETA))
    assert settings_condition_number(BETA) < 20


def test_design_matrix_row_matches_readout(rng):
    rho = random_density_matrix(rng)
    a = design_matrix(tomography_settings(), BETA)
    direct = [joint_readout(rho, s, BETA) for s in tomography_settings()]
    assert np.allclose(a @ pauli_expectations(rho), direct, atol=1e-12)


def test_record_validation():
    with pytest.raises(ValueError):
        TomographyRecord([("I", "I"), ("I", "I")], [1.0, 1.0])
    with pytest.raises(ValueError):
        TomographyRecord([("Z", "I")], [1.0])
    with pytest.raises(ValueError):
        TomographyRecord([("I", "I")], [1.0, 2.0])


def test_record_csv_round_trip(rng):
    rec = measure_state(random_density_matrix(rng), BETA)
    text = rec.to_csv()
    assert text.splitlines()[0] == "setting_q1,setting_q2,measured_value"
    back = TomographyRecord.from_csv(text)
    assert back.settings == rec.settings
    assert np.allclose(back.values, rec.values, rtol=1e-11, atol=1e-12)


# ---------------------------------------------------------------- reconstruction


def test_linear_inversion_exact(rng):
    for rank in (1, 2, 4):
        rho = random_density_matrix(rng, rank)
        est = linear_inversion_state(measure_state(rho, BETA), BETA)
        assert np.abs(est - rho).max() < 1e-9


def test_linear_inversion_maximally_mixed():
    est = linear_inversion_state(measure_state(np.eye(4) / 4, BETA), BETA)
    assert np.allclose(est, np.eye(4) / 4, atol=1e-12)


def test_rank_deficient_record_rejected():
    rec = measure_state(np.eye(4) / 4, BETA)
    short = TomographyRecord(rec.settings[:10], rec.values[:10])
    with pytest.raises(TomographyError):
        linear_inversion_state(short, BETA)
    with pytest.raises(TomographyError):
        mle_state_tomography(short, BETA)


def test_noisy_linear_inversion_can_be_unphysical():
    rho = projector(BELL_PHI_PLUS)
    rec = measure_state(rho, ReadoutModel(sigma=0.05), rng_seed=11)
    assert np.linalg.eigvalsh(linear_inversion_state(rec, BETA)).min() < 0
    est = mle_state_tomography(rec, BETA)
    assert np.linalg.eigvalsh(est).min() >= -1e-12


def test_project_psd():
    m = np.diag([0.7, 0.5, -0.1, -0.1]).astype(complex)
    p = project_psd(m)
    assert np.allclose(p, np.diag([0.7, 0.5, 0, 0]) / 1.2)


def test_mle_round_trip_noiseless(rng):
    for rank in (1, 2, 3, 4):
        for _ in range(5):
            rho = random_density_matrix(rng, rank)
            est = mle_state_tomography(measure_state(rho, BETA), BETA)
            check_density_matrix(est)
            assert np.allclose(est, est.conj().T, atol=0)
            assert trace_distance(est, rho) < 1e-3


def test_mle_bell_fidelity():
    est = state_tomography(projector(BELL_PHI_PLUS), BETA)
    assert state_fidelity(est, BELL_PHI_PLUS) > 0.999


def test_mle_gaussian_noise_trace_distance(rng):
    model = ReadoutModel(sigma=0.01)
    worst = 0.0
    for trial in range(100):
        rho = random_density_matrix(rng, rank=1 + trial % 4)
        est = state_tomography(rho, model, rng_seed=1000 + trial)
        worst = max(worst, trace_distance(est, rho))
    assert worst < 0.05


def test_mle_reports_non_convergence():
    rec = measure_state(projector(BELL_PHI_PLUS), ReadoutModel(sigma=0.05), rng_seed=2)
    with pytest.raises(MLEConvergenceError):
        mle_state_tomography(rec, BETA, tol=0.0, max_iter=2)


def test_mle_satisfies_optimality_certificate():
    """Convex optimum over density matrices: lambda_min(G) >= Tr(G rho*), G the gradient."""
    a = design_matrix(tomography_settings(), BETA)
    for seed in range(5):
        rec = measure_state(projector(BELL_PHI_PLUS), ReadoutModel(sigma=0.05), rng_seed=seed)
        est = mle_state_tomography(rec, BETA)
        r = a @ pauli_expectations(est) - rec.values
        g = np.einsum("k,kij->ij", a.T @ r, PAULIS_2Q)
        assert np.linalg.eigvalsh(g).min() >= np.trace(g @ est).real - 1e-9


def test_project_density():
    p = project_density(np.diag([0.9, 0.4, -0.2, -0.1]).astype(complex))
    assert np.allclose(p, np.diag([0.75, 0.25, 0, 0]))
    check_density_matrix(p)


def test_unknown_method():
    with pytest.raises(ValueError):
        state_tomography(np.eye(4) / 4, BETA, method="bayes")


# ---------------------------------------------------------------- process tomography


def test_qpt_inputs():
    labels = qpt_input_labels()
    inputs = qpt_inputs()
    assert len(inputs) == 36 and len(labels) == 36
    assert labels[0] == ("I", "I")
    assert np.allclose(inputs[0], projector(ket("00")))
    span = np.array([pauli_expectations(r) for r in inputs])
    assert np.linalg.matrix_rank(span) == 16


def test_chi_from_exact_outputs_of_cnot():
    inputs = qpt_inputs()
    outputs = [CNOT @ r @ CNOT.conj().T for r in inputs]
    assert np.abs(chi_from_states(inputs, outputs) - analytic_cnot_chi()).max() < 1e-12


def test_qpt_identity_channel():
    res = qpt(lambda r: r, IDEAL_READOUT)
    expected = np.zeros((16, 16))
    expected[0, 0] = 1
    assert np.abs(res.chi - expected).max() < 1e-6


def test_qpt_pauli_channel():
    res = qpt(unitary_channel(pauli_string("IX")), BETA)
    assert res.chi[IDX["IX"], IDX["IX"]].real == pytest.approx(1.0, abs=1e-6)
    assert abs(np.trace(res.chi) - 1) < 1e-6


def test_qpt_cnot_matches_analytic_chi():
    res = qpt(unitary_channel(CNOT), BETA)
    assert np.abs(res.chi - analytic_cnot_chi()).max() < 1e-6
    assert np.linalg.eigvalsh(res.chi)[-1] >= 1 - 1e-6
    assert res.tp_error < 1e-6


def test_qpt_random_unitary_single_dominant_eigenvalue(rng):
    u = random_unitary(rng)
    res = qpt(unitary_channel(u), BETA)
    w = np.linalg.eigvalsh(res.chi)
    assert w[-1] >= 1 - 1e-6
    assert w.min() >= -1e-8


def test_qpt_projection_distance_reported_under_noise():
    res = qpt(unitary_channel(CNOT), ReadoutModel(sigma=0.02), rng_seed=3)
    assert np.allclose(res.chi, res.chi.conj().T, atol=1e-12)
    assert np.linalg.eigvalsh(res.chi).min() >= -1e-8
    assert abs(np.trace(res.chi) - 1) < 1e-9
    assert res.projection_distance == pytest.approx(np.linalg.norm(res.chi_raw - res.chi))


def test_qpt_threads_bit_identical():
    model = ReadoutModel(sigma=0.02)
    a = qpt(unitary_channel(CNOT), model, rng_seed=9, threads=1)
    b = qpt(unitary_channel(CNOT), model, rng_seed=9, threads=3)
    assert np.array_equal(a.chi_raw, b.chi_raw)


def test_chi_json_round_trip(rng):
    chi = analytic_cnot_chi() + 1e-3 * random_density_matrix(rng, dim=16)
    text = chi_to_json(chi, note="x")
    assert np.array_equal(chi_from_json(text), chi)
    assert '"basis"' in text and '"note"' in text


def test_pauli_basis_order():
    assert PAULI_LABELS_2Q[:5] == ("II", "IX", "IY", "IZ", "XI")
    assert np.allclose(PAULIS_2Q[IDX["ZX"]], pauli_string("ZX"))
