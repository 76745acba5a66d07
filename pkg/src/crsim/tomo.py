"""Joint-readout simulation, state tomography and process tomography.

The device has a single measurement channel whose mean is an affine
combination of the two-qubit Z correlators,

    <M> = b_II + b_IZ <IZ> + b_ZI <ZI> + b_ZZ <ZZ>,

so a full state estimate needs pre-rotations.  The tomography set used here
is {I, X, X90, Y90} on each qubit.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .qlinalg import (I2, PAULI_LABELS_2Q, PAULIS_2Q, X, Y, ket, pauli_expectations,
                      pauli_string, projector, rho_from_paulis, rotation, tensor)

log = logging.getLogger(__name__)

TOMO_GATES = ("I", "X", "X90", "Y90")
QPT_GATES = ("I", "X90", "X-90", "Y90", "Y-90", "X")

_GATE_UNITARIES = {
    "I": I2,
    "X": rotation(X, 180),
    "X90": rotation(X, 90),
    "X-90": rotation(X, -90),
    "Y90": rotation(Y, 90),
    "Y-90": rotation(Y, -90),
}
_READOUT_OPS = (pauli_string("II"), pauli_string("IZ"), pauli_string("ZI"), pauli_string("ZZ"))


class TomographyError(ValueError):
    pass


class MLEConvergenceError(RuntimeError):
    pass


def gate_unitary(label: str) -> np.ndarray:
    """Ideal single-qubit unitary for a tomography/preparation label."""
    key = label.replace("+", "")
    try:
        return _GATE_UNITARIES[key]
    except KeyError:
        raise ValueError(f"unknown gate label {label!r}; expected one of {sorted(_GATE_UNITARIES)}") from None


def setting_unitary(setting) -> np.ndarray:
    a, b = setting
    return tensor(gate_unitary(a), gate_unitary(b))


@dataclass(frozen=True)
class ReadoutModel:
    beta: tuple = (1.0, 0.77, 0.72, 0.6)
    sigma: float = 0.0  # Gaussian noise on <M>
    shots: int | None = None  # multinomial sampling of the Z-basis outcomes

    def __post_init__(self):
        b = np.asarray(self.beta, dtype=float)
        if b.shape != (4,) or not np.all(np.isfinite(b)):
            raise ValueError("beta must be 4 finite numbers")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.shots is not None and self.shots < 1:
            raise ValueError("shots must be a positive integer")

    @property
    def noiseless(self) -> bool:
        return self.sigma == 0 and self.shots is None


IDEAL_READOUT = ReadoutModel((1.0, 1.0, 1.0, 1.0))


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def joint_readout(rho, prerot, model: ReadoutModel = ReadoutModel(), rng_seed=None) -> float:
    """Mean joint-readout value after ideal pre-rotations."""
    u = setting_unitary(prerot)
    r = u @ np.asarray(rho, dtype=complex) @ u.conj().T
    if model.shots is None:
        z = np.array([np.trace(r @ op).real for op in _READOUT_OPS])
    else:
        pops = np.clip(np.diag(r).real, 0, None)
        counts = _rng(rng_seed).multinomial(model.shots, pops / pops.sum())
        freq = counts / model.shots
        # outcomes 00, 01, 10, 11 -> eigenvalues of IZ, ZI, ZZ
        z = np.array([1.0, freq @ [1, -1, 1, -1], freq @ [1, 1, -1, -1], freq @ [1, -1, -1, 1]])
    value = float(np.dot(model.beta, z))
    if model.sigma > 0:
        value += model.sigma * _rng(rng_seed).standard_normal()
    return value


def tomography_settings() -> list:
    return list(product(TOMO_GATES, TOMO_GATES))


def design_matrix(settings, model: ReadoutModel) -> np.ndarray:
    """Rows map the 16 Pauli expectations of rho to the mean readout of a setting."""
    rows = []
    for s in settings:
        u = setting_unitary(s)
        obs = sum(b * (u.conj().T @ op @ u) for b, op in zip(model.beta, _READOUT_OPS))
        rows.append(np.einsum("ij,kji->k", obs, PAULIS_2Q).real / 4.0)
    return np.array(rows)


def settings_condition_number(model: ReadoutModel = ReadoutModel()) -> float:
    return float(np.linalg.cond(design_matrix(tomography_settings(), model)))


@dataclass
class TomographyRecord:
    settings: list
    values: np.ndarray

    def __post_init__(self):
        self.settings = [tuple(s) for s in self.settings]
        self.values = np.asarray(self.values, dtype=float)
        if len(self.settings) != self.values.size:
            raise ValueError("settings and values differ in length")
        if len(set(self.settings)) != len(self.settings):
            raise ValueError("duplicate tomography settings")
        for s in self.settings:
            for g in s:
                if g.replace("+", "") not in TOMO_GATES:
                    raise ValueError(f"setting {s} not in the tomography set {TOMO_GATES}")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["setting_q1", "setting_q2", "measured_value"])
        for (a, b), v in zip(self.settings, self.values):
            w.writerow([a, b, f"{v:.12g}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TomographyRecord":
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls([(r["setting_q1"], r["setting_q2"]) for r in rows],
                   [float(r["measured_value"]) for r in rows])


def measure_state(rho, model: ReadoutModel = ReadoutModel(), rng_seed=None) -> TomographyRecord:
    rng = _rng(rng_seed)
    settings = tomography_settings()
    return TomographyRecord(settings, [joint_readout(rho, s, model, rng) for s in settings])


def _solve_paulis(record: TomographyRecord, model: ReadoutModel) -> np.ndarray:
    a = design_matrix(record.settings, model)
    if np.linalg.matrix_rank(a, tol=1e-8) < 16:
        raise TomographyError("tomography record is rank deficient")
    e, *_ = np.linalg.lstsq(a, record.values, rcond=None)
    return e


def linear_inversion_state(record: TomographyRecord, model: ReadoutModel = ReadoutModel()) -> np.ndarray:
    """Unconstrained estimate; may have negative eigenvalues under noise."""
    e = _solve_paulis(record, model)
    rho = rho_from_paulis(e)
    tr = np.trace(rho).real
    if abs(tr) > 1e-12:
        rho = rho / tr
    if np.linalg.eigvalsh(rho).min() < -1e-9:
        log.info("linear inversion produced a non-positive estimate")
    return rho


def project_psd(m, trace: float = 1.0):
    """Frobenius-nearest PSD matrix by eigenvalue clipping, trace rescaled."""
    m = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0, None)
    if w.sum() <= 0:
        w = np.ones_like(w)
    out = (v * w) @ v.conj().T
    return trace * out / np.trace(out).real


def _project_simplex(w: np.ndarray) -> np.ndarray:
    """Euclidean projection of a real vector onto the probability simplex."""
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.nonzero(u - css / np.arange(1, w.size + 1) > 0)[0][-1]
    return np.maximum(w - css[k] / (k + 1), 0.0)


def project_density(m) -> np.ndarray:
    """Frobenius-nearest density matrix (eigenvalues projected onto the simplex)."""
    m = 0.5 * (m + np.conj(m).T)
    w, v = np.linalg.eigh(m)
    return (v * _project_simplex(w)) @ v.conj().T


def mle_state_tomography(record: TomographyRecord, model: ReadoutModel = ReadoutModel(),
                         tol: float = 1e-12, max_iter: int = 20000) -> np.ndarray:
    """Least-squares maximum likelihood estimate over physical states.

    The Gaussian likelihood is a convex quadratic in rho, minimized over the
    set of density matrices by accelerated projected gradient descent with
    adaptive restart, starting from the projected linear inversion.  The
    iteration stops once the gradient-mapping norm drops below ``tol``.
    """
    a = design_matrix(record.settings, model)
    if np.linalg.matrix_rank(a, tol=1e-8) < 16:
        raise TomographyError("tomography record is rank deficient")
    y = record.values
    lipschitz = 4.0 * np.linalg.norm(a, 2) ** 2  # sum_k Tr(P_k rho)^2 = 4 Tr(rho^2)
    x = z = project_density(linear_inversion_state(record, model))
    momentum = 1.0
    for _ in range(max_iter):
        grad = np.einsum("k,kij->ij", a.T @ (a @ pauli_expectations(z) - y), PAULIS_2Q)
        x_new = project_density(z - grad / lipschitz)
        step = lipschitz * np.linalg.norm(x_new - z)
        m_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * momentum ** 2))
        if np.vdot(z - x_new, x_new - x).real > 0:
            z, m_new = x_new, 1.0
        else:
            z = x_new + (momentum - 1.0) / m_new * (x_new - x)
        x, momentum = x_new, m_new
        if step < tol * max(1.0, np.linalg.norm(y)):
            return 0.5 * (x + x.conj().T)
    raise MLEConvergenceError(
        f"MLE did not converge in {max_iter} iterations: gradient-mapping norm {step:.2e}, "
        f"residual {np.linalg.norm(a @ pauli_expectations(x) - y):.2e}")


def state_tomography(rho, model: ReadoutModel = ReadoutModel(), rng_seed=None,
                     method: str = "mle") -> np.ndarray:
    """Simulate the full pipeline: readout of every setting then reconstruction."""
    record = measure_state(rho, model, rng_seed)
    if method == "mle":
        return mle_state_tomography(record, model)
    if method == "linear":
        return linear_inversion_state(record, model)
    raise ValueError(f"unknown method {method!r}")


# --------------------------------------------------------------------------
# process tomography


def qpt_input_labels() -> list:
    return list(product(QPT_GATES, QPT_GATES))


def qpt_inputs() -> list:
    psi0 = ket("00")
    return [projector(setting_unitary(s) @ psi0) for s in qpt_input_labels()]


def _chi_design(inputs) -> np.ndarray:
    """Rows: vec(P_m rho_i P_n) for every input i and output entry; columns (m, n)."""
    blocks = []
    for rho in inputs:
        cols = np.einsum("mab,bc,ncd->adnm", PAULIS_2Q, rho, PAULIS_2Q)
        # cols[a, d, n, m] = (P_m rho P_n)[a, d]; reorder columns to (m, n)
        blocks.append(cols.transpose(0, 1, 3, 2).reshape(16, 256))
    return np.vstack(blocks)


def chi_from_states(inputs, outputs) -> np.ndarray:
    """Least-squares chi with E(rho) = sum_mn chi_mn P_m rho P_n."""
    a = _chi_design(inputs)
    b = np.concatenate([np.asarray(o).reshape(-1) for o in outputs])
    x, *_ = np.linalg.lstsq(a, b, rcond=None)
    chi = x.reshape(16, 16)
    return 0.5 * (chi + chi.conj().T)


def chi_trace_preservation_error(chi) -> float:
    s = np.einsum("mn,nab,mbc->ac", chi, PAULIS_2Q, PAULIS_2Q)
    return float(np.linalg.norm(s - np.eye(4)))


@dataclass
class QPTResult:
    chi_raw: np.ndarray
    chi: np.ndarray
    projection_distance: float
    tp_error: float
    outputs: list = field(default_factory=list)


def qpt(channel, model: ReadoutModel = ReadoutModel(), rng_seed=None, threads: int = 1,
        method: str = "mle") -> QPTResult:
    """Process tomography of ``channel`` (a map rho -> rho) from 36 product inputs.

    Each input gets an independent child seed so the result does not depend
    on ``threads``.
    """
    inputs = qpt_inputs()
    seeds = np.random.SeedSequence(rng_seed).spawn(len(inputs))

    def run(i):
        out = channel(inputs[i])
        return state_tomography(out, model, np.random.default_rng(seeds[i]), method)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            outputs = list(pool.map(run, range(len(inputs))))
    else:
        outputs = [run(i) for i in range(len(inputs))]
    raw = chi_from_states(inputs, outputs)
    proj = project_psd(raw)
    return QPTResult(raw, proj, float(np.linalg.norm(raw - proj)),
                     chi_trace_preservation_error(proj), outputs)


def chi_to_json(chi, **extra) -> str:
    chi = np.asarray(chi)
    data = {"basis": list(PAULI_LABELS_2Q),
            "data": [[float(z.real), float(z.imag)] for z in chi.reshape(-1)]}
    data.update(extra)
    return json.dumps(data, indent=1)


def chi_from_json(text: str) -> np.ndarray:
    d = json.loads(text)
    if list(d["basis"]) != list(PAULI_LABELS_2Q):
        raise ValueError("unexpected chi basis ordering")
    z = np.array([complex(a, b) for a, b in d["data"]])
    return z.reshape(16, 16)
