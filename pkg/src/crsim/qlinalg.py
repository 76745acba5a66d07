"""Small dense complex linear algebra for two-qubit simulation.

Basis ordering is |q1 q2>, qubit 1 being the most significant factor, and
Z|0> = +|0>.  All operators are plain ``numpy.ndarray`` objects of dtype
complex128; dimensions never exceed 16.
"""
from __future__ import annotations

from functools import reduce

import numpy as np
from scipy.linalg import expm

# single knob for the numeric checks below
TOL = 1e-10

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI_1Q = {"I": I2, "X": X, "Y": Y, "Z": Z}

# lowering operator |0><1| in the Z|0>=+|0> convention (|1> decays to |0>)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)

PAULI_LABELS_2Q = tuple(a + b for a in "IXYZ" for b in "IXYZ")


def tensor(*ops) -> np.ndarray:
    """Kronecker product, first factor is qubit 1."""
    if not ops:
        raise ValueError("tensor needs at least one operand")
    return reduce(np.kron, [np.asarray(o, dtype=complex) for o in ops])


def pauli_string(label: str) -> np.ndarray:
    """Two-qubit Pauli operator for labels such as ``"ZX"``."""
    if not isinstance(label, str) or len(label) != 2:
        raise ValueError(f"Pauli label must have 2 characters, got {label!r}")
    try:
        return tensor(*(PAULI_1Q[c] for c in label.upper()))
    except KeyError:
        raise ValueError(f"invalid Pauli label {label!r}; use characters from IXYZ") from None


PAULIS_2Q = np.array([pauli_string(lbl) for lbl in PAULI_LABELS_2Q])


def is_hermitian(op, tol: float = TOL) -> bool:
    op = np.asarray(op)
    return op.shape[0] == op.shape[1] and np.allclose(op, op.conj().T, atol=tol, rtol=0)


def expectation(rho, op) -> float:
    rho = np.asarray(rho)
    op = np.asarray(op)
    if rho.shape != op.shape:
        raise ValueError(f"dimension mismatch {rho.shape} vs {op.shape}")
    if not is_hermitian(op):
        raise ValueError("observable must be Hermitian")
    val = np.trace(rho @ op)
    if abs(val.imag) > 1e-9:
        raise ValueError(f"expectation has imaginary part {val.imag:.3e}; is rho Hermitian?")
    return float(val.real)


def eig_hermitian(op):
    """Ascending eigenvalues and orthonormal eigenvectors (as columns)."""
    op = np.asarray(op, dtype=complex)
    if not is_hermitian(op):
        raise ValueError("eig_hermitian requires a Hermitian operator")
    return np.linalg.eigh(0.5 * (op + op.conj().T))


def matrix_exp(op, scale: complex = 1.0) -> np.ndarray:
    """exp(scale * op).

    Hermitian operators go through the spectral decomposition, which keeps
    exp(-i t H) unitary to machine precision; anything else falls back to
    scaling-and-squaring.
    """
    op = np.asarray(op, dtype=complex)
    if is_hermitian(op):
        w, v = np.linalg.eigh(0.5 * (op + op.conj().T))
        return (v * np.exp(scale * w)) @ v.conj().T
    return expm(scale * op)


def rotation(op, theta_deg: float) -> np.ndarray:
    """A_theta = exp(-i theta A pi / 360) for a Pauli-type generator A."""
    return matrix_exp(op, -1j * np.pi * theta_deg / 360.0)


def ket(bits: str) -> np.ndarray:
    """Computational basis state, e.g. ``ket("10")``."""
    v = np.zeros(2 ** len(bits), dtype=complex)
    v[int(bits, 2)] = 1.0
    return v


def normalize(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    nrm = np.linalg.norm(psi)
    if nrm == 0:
        raise ValueError("cannot normalize the zero vector")
    return psi / nrm


def projector(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


BELL_PHI_PLUS = normalize(ket("00") + ket("11"))


def check_density_matrix(rho, tol: float = TOL, psd_tol: float = 1e-8) -> np.ndarray:
    """Raise ValueError unless ``rho`` is Hermitian, unit-trace and PSD."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    if not np.all(np.isfinite(rho)):
        raise ValueError("density matrix has non-finite entries")
    if not is_hermitian(rho, tol):
        raise ValueError("density matrix is not Hermitian")
    tr = np.trace(rho).real
    if abs(tr - 1) > tol:
        raise ValueError(f"density matrix trace is {tr!r}")
    if np.linalg.eigvalsh(rho).min() < -psd_tol:
        raise ValueError("density matrix has negative eigenvalues")
    return rho


def trace_distance(a, b) -> float:
    d = np.asarray(a) - np.asarray(b)
    d = 0.5 * (d + d.conj().T)
    return 0.5 * float(np.abs(np.linalg.eigvalsh(d)).sum())


def dagger(op) -> np.ndarray:
    return np.asarray(op).conj().T


def pauli_expectations(rho) -> np.ndarray:
    """All 16 two-qubit Pauli expectations, ordered as ``PAULI_LABELS_2Q``."""
    return np.einsum("kij,ji->k", PAULIS_2Q, np.asarray(rho)).real


def rho_from_paulis(exps) -> np.ndarray:
    return np.einsum("k,kij->ij", np.asarray(exps, dtype=float), PAULIS_2Q) / 4.0
