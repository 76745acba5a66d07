"""Entanglement and fidelity figures of merit for two qubits."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np

from .qlinalg import I2, PAULIS_2Q, X, Y, Z, ket, rotation, tensor, pauli_string

log = logging.getLogger(__name__)

_YY = tensor(Y, Y)
CNOT = np.eye(4, dtype=complex)[[0, 1, 3, 2]]


def _clip01(value: float, what: str) -> float:
    if value < -1e-6 or value > 1 + 1e-6:
        log.warning("%s = %.3g outside [0, 1]; clipping", what, value)
    return float(min(1.0, max(0.0, value)))


def concurrence(rho) -> float:
    """Wootters concurrence, conjugation in the computational basis.

    Uses rho = W W^dagger; the square roots of the eigenvalues of rho*rho_tilde
    are the singular values of W^T (Y x Y) W, which avoids taking square roots
    of round-off sized eigenvalues.
    """
    rho = np.asarray(rho, dtype=complex)
    p, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    keep = p > 1e-13 * max(p.max(), 1e-300)
    w = v[:, keep] * np.sqrt(p[keep])
    lam = np.zeros(4)
    sv = np.linalg.svd(w.T @ _YY @ w, compute_uv=False)
    lam[:sv.size] = sv
    c = lam[0] - lam[1] - lam[2] - lam[3]
    return float(max(0.0, min(1.0, c)))


def state_fidelity(rho, target) -> float:
    psi = np.asarray(target, dtype=complex)
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[0] != psi.shape[0]:
        raise ValueError("dimension mismatch")
    return _clip01(float(np.real(psi.conj() @ rho @ psi)), "state fidelity")


@dataclass(frozen=True)
class GateTarget:
    unitary: np.ndarray
    label: str = ""

    def __post_init__(self):
        u = np.asarray(self.unitary, dtype=complex)
        if u.shape != (4, 4) or not np.allclose(u.conj().T @ u, np.eye(4), atol=1e-10):
            raise ValueError("gate target must be a 4x4 unitary")
        object.__setattr__(self, "unitary", u)

    @property
    def chi(self) -> np.ndarray:
        return chi_from_unitary(self.unitary)


def chi_from_unitary(u) -> np.ndarray:
    """chi = c c^dagger with U = sum_m c_m P_m."""
    c = np.einsum("mij,ji->m", PAULIS_2Q.conj(), np.asarray(u)) / 4.0
    return np.outer(c, c.conj())


def process_fidelity(chi, target) -> float:
    """Tr(chi_ideal chi); ``target`` is a GateTarget, a unitary or a chi matrix."""
    if isinstance(target, GateTarget):
        ideal = target.chi
    else:
        t = np.asarray(target)
        ideal = t if t.shape == (16, 16) else chi_from_unitary(t)
    return _clip01(float(np.real(np.trace(ideal @ np.asarray(chi)))), "process fidelity")


def gate_fidelity_from_process(fp: float, d: int = 4) -> float:
    if not 0 <= fp <= 1:
        raise ValueError("process fidelity must lie in [0, 1]")
    return (d * fp + 1) / (d + 1)


def unitary_overlap(u, v) -> float:
    """|Tr(U^dagger V)| / d."""
    u = np.asarray(u)
    return float(abs(np.trace(u.conj().T @ np.asarray(v))) / u.shape[0])


def ideal_zx(theta_degrees: float) -> GateTarget:
    return GateTarget(rotation(pauli_string("ZX"), theta_degrees), f"ZX{theta_degrees:g}")


@lru_cache(maxsize=None)
def cnot_local_equivalents():
    """Local rotations (L, M) with M [ZX]_90 L = CNOT up to a global phase.

    The search runs over products of 0/+-90/180 degree Z and X rotations on
    each qubit and the first exact hit is returned after verification.
    """
    zx = ideal_zx(90).unitary
    angles = (0, 90, -90, 180)
    singles = [rotation(Z, a) @ rotation(X, b) for a, b in product(angles, angles)]
    pre_candidates = [tensor(a, b) for a, b in product(singles, [I2])]
    post_candidates = [tensor(a, b) for a, b in product(singles, singles)]
    for pre in pre_candidates:
        for post in post_candidates:
            if unitary_overlap(post @ zx @ pre, CNOT) > 1 - 1e-10:
                return pre, post
    raise RuntimeError("no local equivalent found; construction bug")


def cnot_target() -> GateTarget:
    return GateTarget(CNOT, "CNOT")


def cr_target() -> GateTarget:
    """CNOT preceded by a fixed Z90 frame on the control.

    This is the gate a calibrated [ZX]_-90 with an X_+90 crosstalk rotation
    on the target realizes, Z180 x X90 x [ZX]_-90, once the control's phase
    is tracked in software.  It differs from CNOT only by that local frame.
    """
    u = CNOT @ tensor(rotation(Z, 90), I2)
    return GateTarget(u, "CNOT.Z90")


def werner_state(p: float) -> np.ndarray:
    psi = (ket("00") + ket("11")) / np.sqrt(2)
    return p * np.outer(psi, psi.conj()) + (1 - p) * np.eye(4) / 4
