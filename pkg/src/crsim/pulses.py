"""Pulse envelopes and gate schedules.

Envelope amplitudes are Rabi frequencies in Hz: a resonant envelope I(t)
rotates the addressed qubit by 2*pi*integral(I dt) radians.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import logging

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import brentq, minimize_scalar

from .device import DeviceParams, DriveSpec, dressed_frequencies
from .qlinalg import X, Y, rotation

TWO_PI = 2.0 * np.pi
log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Envelope:
    kind: str
    amplitude: float
    sigma: float
    total_length: float
    drag_scale: float = 0.0
    flat_length: float = 0.0
    alpha: float = 224e6  # anharmonicity used for the DRAG quadrature, Hz

    def __post_init__(self):
        if self.kind not in ("gaussian_drag", "flattop_gaussian_drag"):
            raise ValueError(f"unknown envelope kind {self.kind!r}")
        if self.flat_length < 0:
            raise ValueError("flat_length must be non-negative")
        if not self.total_length > 0:
            raise ValueError("total_length must be positive")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        expected = 4 * self.sigma + (self.flat_length if self.kind == "flattop_gaussian_drag" else 0.0)
        if not np.isclose(self.total_length, expected, rtol=1e-12, atol=0.0):
            if self.kind == "gaussian_drag":
                raise ValueError("gaussian_drag pulses span exactly 4 sigma")
            raise ValueError("flat-top pulses span flat_length + 4 sigma")

    def sample(self, t):
        if self.kind == "gaussian_drag":
            return sample_gaussian_drag(self, t)
        return sample_flattop(self, t)

    def with_amplitude(self, amplitude: float) -> "Envelope":
        return Envelope(self.kind, amplitude, self.sigma, self.total_length,
                        self.drag_scale, self.flat_length, self.alpha)


def gaussian_drag(amplitude, sigma=4e-9, drag_scale=-1.4, alpha=224e6) -> Envelope:
    return Envelope("gaussian_drag", amplitude, sigma, 4 * sigma, drag_scale, 0.0, alpha)


def flattop(amplitude, flat_length, ramp_sigma=12e-9, drag_scale=0.8, alpha=224e6) -> Envelope:
    return Envelope("flattop_gaussian_drag", amplitude, ramp_sigma,
                    flat_length + 4 * ramp_sigma, drag_scale, flat_length, alpha)


def _gauss(x, sigma):
    return np.exp(-0.5 * (x / sigma) ** 2)


def sample_gaussian_drag(e: Envelope, t):
    """Baseline-subtracted Gaussian and its scaled derivative.

    The envelope is exactly zero at both edges and outside [0, 4 sigma].
    """
    t = np.asarray(t, dtype=float)
    tc = 0.5 * e.total_length
    edge = _gauss(tc, e.sigma)
    x = t - tc
    g = _gauss(x, e.sigma)
    inside = (t >= 0) & (t <= e.total_length)
    i = np.where(inside, e.amplitude * (g - edge), 0.0)
    di = np.where(inside, -e.amplitude * x / e.sigma**2 * g, 0.0)
    q = e.drag_scale * di / (TWO_PI * e.alpha)
    return i, q


def sample_flattop(e: Envelope, t):
    """Gaussian rise over 2 sigma, flat top at ``amplitude``, Gaussian fall."""
    t = np.asarray(t, dtype=float)
    s = e.sigma
    ramp = 2 * s
    edge = _gauss(ramp, s)
    norm = e.amplitude / (1.0 - edge)
    t_fall = ramp + e.flat_length
    # distance from the nearest flat-top boundary, zero on the flat top
    x = np.where(t < ramp, t - ramp, np.where(t > t_fall, t - t_fall, 0.0))
    g = _gauss(x, s)
    inside = (t >= 0) & (t <= e.total_length)
    i = np.where(inside, norm * (g - edge), 0.0)
    di = np.where(inside, -norm * x / s**2 * g, 0.0)
    q = e.drag_scale * di / (TWO_PI * e.alpha)
    return i, q


def ramp_area(sigma: float) -> float:
    """Area of one unit-height baseline-subtracted Gaussian ramp of length 2 sigma."""
    from scipy.special import erf

    edge = np.exp(-2.0)
    return sigma * (np.sqrt(np.pi / 2) * erf(np.sqrt(2)) - 2 * edge) / (1 - edge)


@dataclass(frozen=True)
class PulseParams:
    sq_sigma: float = 4e-9
    sq_drag_scale: float = -1.4
    cr_drag_scale: float = 0.8
    cr_ramp_sigma: float = 12e-9
    tg_includes_ramps: bool = True

    @property
    def sq_length(self) -> float:
        return 4 * self.sq_sigma


def cr_envelope(A: float, t_g: float, pp: PulseParams, alpha: float) -> Envelope:
    """Flat-top CR envelope for gate time ``t_g``.

    By default t_g is the full pulse duration; gates shorter than the two
    ramps become a plain up/down Gaussian with a compressed sigma.

    The CR drive sits below the control's transition, and its derivative
    correction is there to counter the off-resonant control excitation.  With
    the Omega = I - iQ convention used here that needs a quadrature of the
    opposite sign to the single-qubit DRAG, so the scale enters negated: a
    positive ``cr_drag_scale`` suppresses control excitation.
    """
    s = pp.cr_ramp_sigma
    if pp.tg_includes_ramps:
        flat = t_g - 4 * s
        if flat < 0:
            s = t_g / 4
            flat = 0.0
    else:
        flat = t_g
    if s <= 0:
        raise ValueError("CR gate time must be positive")
    return flattop(A, flat, s, -pp.cr_drag_scale, alpha)


def _single_qubit_propagator(env: Envelope, phase: float = 0.0, n: int = 400) -> np.ndarray:
    """Resonant two-level propagator of a shaped pulse (midpoint exponentials)."""
    dt = env.total_length / n
    t = (np.arange(n) + 0.5) * dt
    i, q = env.sample(t)
    om = (i - 1j * q) * np.exp(1j * phase)
    u = np.eye(2, dtype=complex)
    for ox, oy in zip(om.real, om.imag):
        # exp(-i pi dt (ox X + oy Y)) in closed form
        r = np.hypot(ox, oy)
        a = np.pi * dt * r
        if r == 0:
            continue
        n_op = (ox * X + oy * Y) / r
        u = (np.cos(a) * np.eye(2) - 1j * np.sin(a) * n_op) @ u
    return u


def _gate_fidelity_1q(u, target) -> float:
    return float(abs(np.trace(target.conj().T @ u)) ** 2 / 4.0)


def _rz(angle: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * angle), np.exp(0.5j * angle)])


def _xz_decompose(u):
    """Write a symmetric SU(2) propagator as Rz(g) Rx(theta) Rz(g)."""
    u = u / np.sqrt(np.linalg.det(u))
    a = np.trace(u).real / 2
    b = -np.trace(u @ X).imag / 2
    d = -np.trace(u @ np.diag([1, -1])).imag / 2
    g = np.arctan2(d, a) if a >= 0 else np.arctan2(-d, -a)
    s = 1.0 if a >= 0 else -1.0
    theta = 2 * np.arctan2(b, s * np.hypot(a, d))
    return theta, g


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class RotationCal:
    amplitude: float
    frame: float  # virtual-Z angle applied before and after the pulse
    fidelity: float


def calibrate_rotation(p: DeviceParams, qubit: int, angle_deg: float = 90.0,
                       pp: PulseParams = PulseParams(), strict: bool = True,
                       maxiter: int = 100) -> RotationCal:
    """Amplitude and frame correction of the DRAG pulse implementing X_angle.

    In a two-level model the DRAG quadrature tilts the rotation axis toward
    Z.  The propagator is symmetric, so it factors as Rz(g) Rx(theta) Rz(g)
    and virtual Z rotations of -g on either side remove the tilt.  The
    amplitude starts from the area rule 2*pi*A*integral(shape) = angle and is
    refined by root finding on theta(A).

    Near 180 degrees the tilt cannot be framed away; with ``strict=False``
    the best amplitude is returned with a warning instead of an error.
    """
    alpha = p.alpha1 if qubit == 1 else p.alpha2
    unit = gaussian_drag(1.0, pp.sq_sigma, pp.sq_drag_scale, alpha)
    tt = np.linspace(0, unit.total_length, 4001)
    area = trapezoid(unit.sample(tt)[0], tt)
    a0 = np.deg2rad(angle_deg) / (TWO_PI * area)
    target = rotation(X, angle_deg)

    def corrected(a):
        u = _single_qubit_propagator(unit.with_amplitude(a))
        theta, g = _xz_decompose(u)
        return theta, g, _gate_fidelity_1q(_rz(-g) @ u @ _rz(-g), target)

    def angle_err(a):
        return corrected(a)[0] - np.deg2rad(angle_deg)

    lo, hi = 0.7 * a0, 1.3 * a0
    if angle_deg < 150 and angle_err(lo) * angle_err(hi) < 0:
        a, info = brentq(angle_err, lo, hi, xtol=1e-12 * a0, maxiter=maxiter, full_output=True)
        if not info.converged:
            raise CalibrationError(f"X{angle_deg:g} calibration did not converge: {info.flag}")
    else:
        res = minimize_scalar(lambda a: 1 - corrected(a)[2], bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-9 * a0, "maxiter": maxiter})
        a = res.x
    _, g, fid = corrected(a)
    if fid < 1 - 1e-6:
        msg = f"X{angle_deg:g} fidelity {fid:.9f} below 1-1e-6 at A={a:.6g} Hz"
        if strict:
            raise CalibrationError(msg)
        log.warning("%s (two-level DRAG axis tilt)", msg)
    return RotationCal(float(a), float(-g), fid)


def calibrate_x90_amplitude(p: DeviceParams, qubit: int, pp: PulseParams = PulseParams()) -> float:
    return _cached_cal(p, qubit, 90.0, pp).amplitude


@lru_cache(maxsize=64)
def _cached_cal(p, qubit, angle, pp):
    return calibrate_rotation(p, qubit, angle, pp, strict=(angle == 90.0))


# single-qubit gate label -> (rotation angle in degrees, drive phase)
SQ_GATES = {
    "X": (180.0, 0.0),
    "Y": (180.0, np.pi / 2),
    "X90": (90.0, 0.0),
    "X+90": (90.0, 0.0),
    "X-90": (90.0, np.pi),
    "Y90": (90.0, np.pi / 2),
    "Y+90": (90.0, np.pi / 2),
    "Y-90": (90.0, -np.pi / 2),
    "I": (0.0, 0.0),
}


@dataclass(frozen=True)
class ScheduleEntry:
    start: float
    drive: DriveSpec
    label: str = ""

    @property
    def stop(self) -> float:
        return self.start + self.drive.envelope.total_length


@dataclass(frozen=True)
class FrameChange:
    """Instantaneous virtual rotation exp(-i angle Z_q / 2) at ``time``."""

    time: float
    qubit: int
    angle: float


@dataclass(frozen=True)
class PulseSchedule:
    entries: tuple = ()
    duration: float = 0.0
    frames: tuple = ()

    def __post_init__(self):
        for e in self.entries:
            if e.start < 0:
                raise ValueError("schedule entries must start at t >= 0")
        by_port = {}
        for e in sorted(self.entries, key=lambda e: e.start):
            last = by_port.get(e.drive.port)
            if last is not None and e.start < last.stop - 1e-15:
                raise ValueError(f"overlapping pulses on port {e.drive.port}: "
                                 f"{last.label or 'pulse'} and {e.label or 'pulse'}")
            by_port[e.drive.port] = e
        end = max([e.stop for e in self.entries] + [f.time for f in self.frames], default=0.0)
        if self.duration < end - 1e-15:
            object.__setattr__(self, "duration", end)
        object.__setattr__(self, "frames", tuple(sorted(self.frames, key=lambda f: f.time)))

    def __len__(self):
        return len(self.entries)

    def then(self, other: "PulseSchedule") -> "PulseSchedule":
        """Append ``other`` after this schedule ends."""
        t0 = self.duration
        moved = tuple(ScheduleEntry(e.start + t0, e.drive, e.label) for e in other.entries)
        frames = tuple(FrameChange(f.time + t0, f.qubit, f.angle) for f in other.frames)
        return PulseSchedule(self.entries + moved, t0 + other.duration, self.frames + frames)


EMPTY_SCHEDULE = PulseSchedule()


@dataclass(frozen=True)
class Gate:
    """One item of a gate sequence.

    ``name`` is a single-qubit label from ``SQ_GATES``, ``"CR"`` or ``"VZ"``
    (virtual Z of angle ``phase``).  For CR, ``qubit`` is the driven
    (control) port and ``amplitude``/``t_g`` give the cross-drive.
    """

    name: str
    qubit: int
    amplitude: float = 0.0
    t_g: float = 0.0
    phase: float = 0.0


def single_qubit_drive(p: DeviceParams, label: str, qubit: int,
                       pp: PulseParams = PulseParams(), frame_freqs=None):
    """Drive and frame correction for a calibrated single-qubit gate.

    Returns ``(DriveSpec, frame_angle)`` or ``(None, 0.0)`` for the identity.
    """
    if label not in SQ_GATES:
        raise ValueError(f"unknown single-qubit gate {label!r}")
    angle, phase = SQ_GATES[label]
    if angle == 0:
        return None, 0.0
    cal = _cached_cal(p, qubit, angle, pp)
    alpha = p.alpha1 if qubit == 1 else p.alpha2
    f = frame_freqs or dressed_frequencies(p)
    env = gaussian_drag(cal.amplitude, pp.sq_sigma, pp.sq_drag_scale, alpha)
    return DriveSpec(qubit, f[qubit - 1], env, phase), cal.frame


def cr_drive(p: DeviceParams, control: int, A: float, t_g: float,
             pp: PulseParams = PulseParams(), phase: float = 0.0, frame_freqs=None) -> DriveSpec:
    f = frame_freqs or dressed_frequencies(p)
    target = 2 if control == 1 else 1
    alpha = p.alpha1 if control == 1 else p.alpha2
    return DriveSpec(control, f[target - 1], cr_envelope(A, t_g, pp, alpha), phase)


def build_sequence(p: DeviceParams, gates, pp: PulseParams = PulseParams()) -> PulseSchedule:
    """Serialize a gate list in time.

    Single-qubit gates start as soon as their own line is free, so gates on
    different qubits run in parallel.  A CR gate waits for both qubits.
    """
    free = {1: 0.0, 2: 0.0}
    entries, frames = [], []
    for g in gates:
        if g.qubit not in (1, 2):
            raise ValueError(f"qubit must be 1 or 2, got {g.qubit}")
        if g.name == "CR":
            if g.t_g <= 0 or g.amplitude < 0:
                raise ValueError("CR needs a positive gate time and non-negative amplitude")
            d = cr_drive(p, g.qubit, g.amplitude, g.t_g, pp, g.phase)
            start = max(free.values())
            entries.append(ScheduleEntry(start, d, f"CR{g.qubit}{3 - g.qubit}"))
            free[1] = free[2] = start + d.envelope.total_length
            continue
        if g.name == "VZ":
            frames.append(FrameChange(free[g.qubit], g.qubit, g.phase))
            continue
        d, fr = single_qubit_drive(p, g.name, g.qubit, pp)
        t0 = free[g.qubit]
        free[g.qubit] += pp.sq_length
        if d is None:
            continue
        entries.append(ScheduleEntry(t0, d, f"{g.name}_q{g.qubit}"))
        if fr:
            frames.append(FrameChange(t0, g.qubit, fr))
            frames.append(FrameChange(free[g.qubit], g.qubit, fr))
    duration = max(free.values()) if gates else 0.0
    return PulseSchedule(tuple(entries), duration, tuple(frames))
