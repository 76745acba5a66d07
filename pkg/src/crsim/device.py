"""Device constants, static Hamiltonian and drive Hamiltonians.

Frequencies are cyclic (Hz).  Hamiltonians are returned in angular units
(rad/s), i.e. already multiplied by 2*pi.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .qlinalg import TOL, X, Y, Z, I2, eig_hermitian, pauli_string, tensor

TWO_PI = 2.0 * np.pi

# Derived, not measured: chosen by ``experiments.calibrate_j`` so that the
# saturated J_eff of the default amplitude sweep is 1.4 MHz.
J_CALIBRATED_HZ = 1.54506e6


@dataclass(frozen=True)
class DeviceParams:
    omega1: float = 5.854e9
    omega2: float = 5.528e9
    J: float = J_CALIBRATED_HZ
    alpha1: float = 224e6
    alpha2: float = 255e6
    T1_1: float = 1.6e-6
    T1_2: float = 1.5e-6
    T2_1: float = 1.6e-6
    T2_2: float = 1.5e-6
    m12: float = 0.5
    m21: float = 0.5
    zeta: float = 200e3
    beta: tuple = (1.0, 0.77, 0.72, 0.6)
    omegaR: float = 9.72e9
    kappa: float = 1e6
    chi1: float = 0.55e6
    chi2: float = 0.3e6
    zz_enabled: bool = True

    def __post_init__(self):
        if not self.omega1 > self.omega2:
            raise ValueError("expected omega1 > omega2")
        for name in ("T1_1", "T1_2", "T2_1", "T2_2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for t1, t2, q in ((self.T1_1, self.T2_1, 1), (self.T1_2, self.T2_2, 2)):
            if t2 > 2 * t1 + 1e-12:
                raise ValueError(f"qubit {q}: T2 > 2*T1 is unphysical")
        beta = tuple(float(b) for b in self.beta)
        if len(beta) != 4 or not np.all(np.isfinite(beta)):
            raise ValueError("beta must be 4 finite numbers")
        if beta[0] == 0:
            raise ValueError("beta_II must be nonzero")
        object.__setattr__(self, "beta", tuple(b / beta[0] for b in beta))

    @property
    def delta12(self) -> float:
        return self.omega1 - self.omega2

    def replace(self, **kw) -> "DeviceParams":
        return replace(self, **kw)


def static_hamiltonian(p: DeviceParams, include_zz: bool | None = None) -> np.ndarray:
    """2*pi*(w1/2 ZI + w2/2 IZ + J XX + zeta/2 ZZ).

    The ZZ coefficient is zeta/2, so the conditional shift
    E11 - E10 - E01 + E00 of the bare levels is 2*zeta.
    """
    if include_zz is None:
        include_zz = p.zz_enabled
    h = 0.5 * p.omega1 * pauli_string("ZI") + 0.5 * p.omega2 * pauli_string("IZ")
    h = h + p.J * pauli_string("XX")
    if include_zz:
        h = h + 0.5 * p.zeta * pauli_string("ZZ")
    return TWO_PI * h


def _dressed_order(p: DeviceParams):
    """Eigenvalues of the static Hamiltonian labelled by bare state."""
    if abs(p.J) >= abs(p.delta12) / 2:
        raise ValueError("|J| must be well below the qubit detuning for dressed labelling")
    w, v = eig_hermitian(static_hamiltonian(p))
    overlap = np.abs(v) ** 2  # rows: bare states, columns: eigenvectors
    labels = np.argmax(overlap, axis=1)
    if len(set(labels)) != 4:
        raise ValueError("ambiguous dressed-state labelling")
    return w[labels], v[:, labels]


def dressed_energies(p: DeviceParams) -> np.ndarray:
    """Exact eigenenergies (rad/s) ordered as |00>, |01>, |10>, |11>."""
    return _dressed_order(p)[0]


def dressed_frequencies(p: DeviceParams) -> tuple[float, float]:
    """Qubit transition frequencies (Hz) of the coupled system.

    With Z|0> = +|0> the Hamiltonian puts |00> at the top of the ladder, so
    transition frequencies are the level spacings E(00) - E(10) and
    E(00) - E(01).
    """
    e = dressed_energies(p) / TWO_PI
    return float(e[0] - e[2]), float(e[0] - e[1])


def residual_zz(p: DeviceParams) -> float:
    """Conditional frequency shift E11 - E10 - E01 + E00 in Hz."""
    e = dressed_energies(p) / TWO_PI
    return float(e[3] - e[2] - e[1] + e[0])


@dataclass(frozen=True)
class DriveSpec:
    """A microwave tone on one flux-bias line.

    ``envelope`` is any object with ``sample(t) -> (in_phase, quadrature)``
    in Hz, see :mod:`crsim.pulses`.
    """

    port: int
    carrier: float
    envelope: object
    phase: float = 0.0

    def __post_init__(self):
        if self.port not in (1, 2):
            raise ValueError(f"port must be 1 or 2, got {self.port}")
        if not self.carrier > 0:
            raise ValueError("carrier frequency must be positive")


@dataclass(frozen=True)
class RotatingFrame:
    """U(t) = exp(i 2 pi t (f_a ZI + f_b IZ) / 2).  Diagonal, so it acts by phases."""

    f_a: float
    f_b: float

    def __post_init__(self):
        if self.f_a < 0 or self.f_b < 0:
            raise ValueError("frame frequencies must be non-negative")

    @property
    def rates(self) -> np.ndarray:
        """Diagonal of the frame generator, rad/s, basis |00>,|01>,|10>,|11>."""
        z1 = np.array([1, 1, -1, -1])
        z2 = np.array([1, -1, 1, -1])
        return TWO_PI * 0.5 * (self.f_a * z1 + self.f_b * z2)

    def unitary(self, t: float) -> np.ndarray:
        return np.diag(np.exp(1j * self.rates * t))

    def to_frame(self, state, t: float):
        u = np.exp(1j * self.rates * t)
        state = np.asarray(state)
        if state.ndim == 1:
            return u * state
        return u[:, None] * state * u.conj()[None, :]

    def from_frame(self, state, t: float):
        u = np.exp(-1j * self.rates * t)
        state = np.asarray(state)
        if state.ndim == 1:
            return u * state
        return u[:, None] * state * u.conj()[None, :]

    def hamiltonian_terms(self, h_static: np.ndarray, rwa_cutoff: float | None = None):
        """Express a static lab Hamiltonian in this frame.

        Returns ``(h0, terms)`` where ``terms`` is a list of
        ``(operator, omega, kind)`` with coefficient cos(omega t) or
        sin(omega t).  Off-diagonal pieces rotating faster than
        ``rwa_cutoff`` (rad/s) are dropped.
        """
        nu = self.rates
        h0 = np.diag(np.diag(h_static).real - nu).astype(complex)
        terms = []
        n = h_static.shape[0]
        for j in range(n):
            for k in range(j + 1, n):
                h = h_static[j, k]
                if h == 0:
                    continue
                w = nu[j] - nu[k]
                if rwa_cutoff is not None and abs(w) > rwa_cutoff:
                    continue
                e = np.zeros((n, n), dtype=complex)
                e[j, k] = 1.0
                a = h * e
                b = 1j * h * e
                if w == 0:
                    h0 = h0 + a + a.conj().T
                    continue
                terms.append((a + a.conj().T, w, "cos"))
                terms.append((b + b.conj().T, w, "sin"))
        return h0, terms


def default_frame(p: DeviceParams) -> RotatingFrame:
    return RotatingFrame(*dressed_frequencies(p))


def _on_qubit(op1, q: int) -> np.ndarray:
    return tensor(op1, I2) if q == 1 else tensor(I2, op1)


def _conditional(op_ctrl, op_tgt, ctrl: int) -> np.ndarray:
    return tensor(op_ctrl, op_tgt) if ctrl == 1 else tensor(op_tgt, op_ctrl)


@dataclass
class DriveTerms:
    """H(t) = h0 + sum_k coeff_k(t) * ops[k]  (rad/s)."""

    h0: np.ndarray
    ops: list = field(default_factory=list)
    coeffs: list = field(default_factory=list)  # callables t -> array

    def add(self, op, fn: Callable):
        self.ops.append(np.asarray(op, dtype=complex))
        self.coeffs.append(fn)

    def extend(self, other: "DriveTerms"):
        self.h0 = self.h0 + other.h0
        self.ops.extend(other.ops)
        self.coeffs.extend(other.coeffs)

    def sample(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if not self.coeffs:
            return np.zeros((0, t.size))
        return np.array([np.broadcast_to(fn(t), t.shape) for fn in self.coeffs], dtype=float)

    def at(self, t: float) -> np.ndarray:
        c = self.sample([t])[:, 0]
        h = self.h0.copy()
        for ck, op in zip(c, self.ops):
            h = h + ck * op
        return h


def _rwa_pair(envelope, start, detuning, phase, weight):
    """Coefficients of X and Y from pi*w*[Re(Om e^{i psi}) X + Im(Om e^{i psi}) Y].

    Om = I - iQ is the complex envelope, psi = 2 pi detuning t + phase.
    """

    def cx(t):
        i, q = envelope.sample(t - start)
        psi = TWO_PI * detuning * t + phase
        return np.pi * weight * (i * np.cos(psi) + q * np.sin(psi))

    def cy(t):
        i, q = envelope.sample(t - start)
        psi = TWO_PI * detuning * t + phase
        return np.pi * weight * (i * np.sin(psi) - q * np.cos(psi))

    return cx, cy


def crosstalk(p: DeviceParams, port: int) -> float:
    return p.m12 if port == 1 else p.m21


def drive_hamiltonian(p: DeviceParams, d: DriveSpec, model: str = "effective",
                      frame: RotatingFrame | None = None, start: float = 0.0,
                      rwa: bool = True) -> DriveTerms:
    """Time-dependent drive terms for one tone.

    ``effective``: dressed-frame operator XI - (J/Delta) ZX + m IX (for a
    drive on port 1; mirrored for port 2) with the rotating-wave
    approximation.  ``direct``: the bare local drive X_p + m X_other, to be
    combined with the exact static Hamiltonian.  With ``rwa=False`` (direct
    model only) the drive is written in the lab frame, which requires
    ``frame`` to be the zero frame.
    """
    if model not in ("effective", "direct"):
        raise ValueError(f"unknown drive model {model!r}")
    if frame is None:
        frame = default_frame(p)
    terms = DriveTerms(np.zeros((4, 4), dtype=complex))
    env = d.envelope
    ctrl = d.port
    other = 2 if ctrl == 1 else 1
    f_frame = {1: frame.f_a, 2: frame.f_b}
    m = crosstalk(p, ctrl)

    if not rwa:
        if model != "direct" or frame.f_a or frame.f_b:
            raise ValueError("non-RWA drive is only defined for the direct model in the lab frame")
        op = _on_qubit(X, ctrl) + m * _on_qubit(X, other)

        def c(t):
            i, q = env.sample(t - start)
            psi = TWO_PI * d.carrier * t + d.phase
            return TWO_PI * (i * np.cos(psi) + q * np.sin(psi))

        terms.add(op, c)
        return terms

    pieces = [(ctrl, 1.0, None), (other, m, None)]
    if model == "effective":
        delta = (p.omega1 - p.omega2) if ctrl == 1 else (p.omega2 - p.omega1)
        pieces.append((other, -p.J / delta, ctrl))
    for q, w, cond in pieces:
        if w == 0:
            continue
        cx, cy = _rwa_pair(env, start, d.carrier - f_frame[q], d.phase, w)
        if cond is None:
            ox, oy = _on_qubit(X, q), _on_qubit(Y, q)
        else:
            ox, oy = _conditional(Z, X, cond), _conditional(Z, Y, cond)
        terms.add(ox, cx)
        terms.add(oy, cy)
    return terms


def static_terms(p: DeviceParams, model: str = "effective",
                 frame: RotatingFrame | None = None,
                 rwa_cutoff: float | None = TWO_PI * 2e9) -> DriveTerms:
    """Drift Hamiltonian in ``frame``.

    The effective model lives in the dressed basis, where the static part is
    diagonal with the exact dressed energies.  The direct model keeps the
    bare lab-frame form, exchange coupling included.
    """
    if frame is None:
        frame = default_frame(p)
    if model == "effective":
        e = dressed_energies(p)
        h0 = np.diag(e - frame.rates).astype(complex)
        return DriveTerms(h0)
    if model != "direct":
        raise ValueError(f"unknown drive model {model!r}")
    h_lab = static_hamiltonian(p)
    if frame.f_a == 0 and frame.f_b == 0:
        return DriveTerms(h_lab.copy())
    h0, parts = frame.hamiltonian_terms(h_lab, rwa_cutoff)
    out = DriveTerms(h0)
    for op, w, kind in parts:
        fn = np.cos if kind == "cos" else np.sin
        out.add(op, lambda t, w=w, fn=fn: fn(w * t))
    return out


def is_hermitian_terms(terms: DriveTerms) -> bool:
    return all(np.allclose(o, o.conj().T, atol=TOL) for o in [terms.h0, *terms.ops])
