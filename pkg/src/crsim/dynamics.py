"""Closed- and open-system time evolution of pulse schedules.

The generator of every evolution is linear, dy/dt = G(t) y, with
G(t) = G0 + sum_k c_k(t) G_k.  For state vectors and propagators G = -iH;
for density matrices G is the Lindblad superoperator acting on row-major
vec(rho).  The fixed-step integrator runs in the compiled kernel when
available (see :mod:`crsim.kernels`); the adaptive one uses SciPy's DOP853.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import least_squares

from . import kernels
from .device import (DeviceParams, DriveTerms, RotatingFrame, crosstalk, default_frame,
                     drive_hamiltonian, static_terms)
from .pulses import (EMPTY_SCHEDULE, PulseParams, PulseSchedule, ScheduleEntry, cr_drive,
                     flattop)
from .qlinalg import SIGMA_MINUS, I2, Z, ket, pauli_string, projector, tensor

log = logging.getLogger(__name__)
TWO_PI = 2.0 * np.pi


class IntegrationError(RuntimeError):
    pass


class NoOscillationError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    integrator: str = "fixed"
    dt: float = 0.01e-9
    rtol: float = 1e-10
    atol: float = 1e-12
    model: str = "effective"

    def __post_init__(self):
        if self.integrator not in ("fixed", "adaptive"):
            raise ValueError(f"integrator must be 'fixed' or 'adaptive', got {self.integrator!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.model not in ("effective", "direct"):
            raise ValueError(f"unknown model {self.model!r}")


DEFAULT_SOLVER = SolverConfig()


@dataclass(frozen=True)
class NoiseModel:
    gamma1: tuple  # relaxation rates 1/T1 per qubit, 1/s
    gamma_phi: tuple  # pure dephasing rates 1/T2 - 1/(2 T1), 1/s

    def __post_init__(self):
        if min(self.gamma1) < 0 or min(self.gamma_phi) < 0:
            raise ValueError("rates must be non-negative")

    def collapse_operators(self) -> list:
        """Rate-weighted jump operators.

        Dephasing uses sqrt(gamma_phi/2) Z so that single-qubit coherences
        decay at exactly gamma1/2 + gamma_phi = 1/T2.
        """
        ops = []
        for q in (1, 2):
            g1, gp = self.gamma1[q - 1], self.gamma_phi[q - 1]
            lower = tensor(SIGMA_MINUS, I2) if q == 1 else tensor(I2, SIGMA_MINUS)
            deph = tensor(Z, I2) if q == 1 else tensor(I2, Z)
            if g1 > 0:
                ops.append(np.sqrt(g1) * lower)
            if gp > 0:
                ops.append(np.sqrt(gp / 2) * deph)
        return ops


NOISELESS = NoiseModel((0.0, 0.0), (0.0, 0.0))


def noise_from_coherences(p: DeviceParams) -> NoiseModel:
    g1, gp = [], []
    for t1, t2 in ((p.T1_1, p.T2_1), (p.T1_2, p.T2_2)):
        if t2 > 2 * t1 + 1e-12:
            raise ValueError("T2 > 2 T1 is unphysical")
        g1.append(1.0 / t1)
        gp.append(max(0.0, 1.0 / t2 - 1.0 / (2 * t1)))
    return NoiseModel(tuple(g1), tuple(gp))


@dataclass
class EvolutionResult:
    times: np.ndarray
    states: np.ndarray
    expectations: dict = field(default_factory=dict)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


# --------------------------------------------------------------------------
# generator assembly


def schedule_terms(schedule: PulseSchedule, p: DeviceParams, model: str = "effective",
                   frame: RotatingFrame | None = None, rwa: bool = True) -> DriveTerms:
    """Total Hamiltonian of a schedule in ``frame`` (rad/s)."""
    if frame is None:
        frame = default_frame(p)
    terms = static_terms(p, model, frame)
    for e in schedule.entries:
        terms.extend(drive_hamiltonian(p, e.drive, model, frame, start=e.start, rwa=rwa))
    return terms


def _liouvillian(h, collapse=()):
    n = h.shape[0]
    eye = np.eye(n)
    g = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for op in collapse:
        ld = op.conj().T @ op
        g = g + np.kron(op, op.conj()) - 0.5 * np.kron(ld, eye) - 0.5 * np.kron(eye, ld.T)
    return g


def _generators(terms: DriveTerms, collapse=None):
    if collapse is None:
        g0 = -1j * terms.h0
        gk = [-1j * op for op in terms.ops]
    else:
        g0 = _liouvillian(terms.h0, collapse)
        gk = [_liouvillian(op) for op in terms.ops]
    n = g0.shape[0]
    gk = np.array(gk, dtype=complex).reshape(len(gk), n, n)
    return np.ascontiguousarray(g0), np.ascontiguousarray(gk)


def _frame_op(fc, superop: bool):
    r = np.diag([np.exp(-0.5j * fc.angle), np.exp(0.5j * fc.angle)])
    r = tensor(r, I2) if fc.qubit == 1 else tensor(I2, r)
    return np.kron(r, r.conj()) if superop else r


# --------------------------------------------------------------------------
# integration driver


def _stops(t_eval, frames, t_end, edges=()):
    pts = set(np.round(np.asarray(t_eval, dtype=float), 18).tolist())
    pts.update(round(f.time, 18) for f in frames)
    pts.update(round(e, 18) for e in edges if 0.0 < e < t_end)
    pts.add(round(t_end, 18))
    pts.add(0.0)
    return np.array(sorted(pts))


# fraction of a step by which segment end points are moved inside the segment
_INSIDE = 1e-7


def _integrate(terms, y0, t_eval, frames, t_end, solver: SolverConfig, collapse=None,
               max_step=None, edges=()):
    """Integrate from t=0 and return y at each ``t_eval``.

    Frame changes at time t are included in the state reported at t.  ``edges``
    are times where a drive switches on or off; steps never straddle them and
    the drive is sampled just inside each segment, so the integrator sees the
    one-sided limit instead of the neighbouring pulse.
    """
    g0, gk = _generators(terms, collapse)
    superop = collapse is not None
    y = np.array(y0, dtype=complex, copy=True)
    t_eval = np.asarray(t_eval, dtype=float)
    stops = _stops(t_eval, frames, t_end, edges)
    breaks = {round(fc.time, 18) for fc in frames}
    breaks.update(round(e, 18) for e in edges)
    want = {round(t, 18) for t in t_eval.tolist()}
    frame_at = {}
    for fc in frames:
        frame_at.setdefault(round(fc.time, 18), []).append(fc)
    saved = {}

    def record(t, y):
        if t in want:
            saved[t] = y.copy()

    def kick(t, y):
        for fc in frame_at.get(t, ()):
            y = _frame_op(fc, superop) @ y
        return y

    t = stops[0]
    y = kick(t, y)
    record(t, y)
    i = 1
    while i < len(stops):
        # group equal-length segments without frame changes into one call
        seg = stops[i] - t
        j = i
        while (j + 1 < len(stops) and stops[j] not in breaks
               and abs((stops[j + 1] - stops[j]) - seg) <= 1e-9 * seg):
            j += 1
        nseg = j - i + 1
        if solver.integrator == "fixed":
            per = max(1, int(np.ceil(seg / solver.dt - 1e-9)))
            h = seg / per
            times = t + 0.5 * h * np.arange(2 * per * nseg + 1)
            times[0] += _INSIDE * h
            times[-1] -= _INSIDE * h
            coeffs = np.ascontiguousarray(terms.sample(times)) if gk.shape[0] else np.zeros((0, times.size))
            out = kernels.rk4_propagate(g0, gk, coeffs, y, h, per * nseg, per)
            if not np.all(np.isfinite(out[-1])):
                raise IntegrationError("non-finite state; decrease dt")
            for k in range(1, nseg):
                record(stops[i + k - 1], out[k])
            y = out[-1].copy()
        else:
            t_seg = stops[i:j + 1]
            shape = y.shape

            lo, hi = t + _INSIDE * seg, t_seg[-1] - _INSIDE * seg

            def rhs(tt, v):
                c = terms.sample([min(max(tt, lo), hi)])[:, 0]
                g = g0 + np.tensordot(c, gk, axes=1) if gk.shape[0] else g0
                return (g @ v.reshape(shape)).ravel()

            sol = solve_ivp(rhs, (t, t_seg[-1]), y.ravel(), method="DOP853", t_eval=t_seg,
                            rtol=solver.rtol, atol=solver.atol,
                            max_step=max_step if max_step else np.inf)
            if not sol.success:
                raise IntegrationError(f"adaptive integration failed: {sol.message}")
            for k, tk in enumerate(t_seg[:-1]):
                record(tk, sol.y[:, k].reshape(shape))
            y = sol.y[:, -1].reshape(shape)
        t = stops[j]
        y = kick(t, y)
        record(t, y)
        i = j + 1
    return np.array([saved[round(tt, 18)] for tt in t_eval.tolist()])


def _edges(schedule: PulseSchedule):
    return sorted({t for e in schedule.entries for t in (e.start, e.stop)})


def _max_step(schedule: PulseSchedule):
    sig = [e.drive.envelope.sigma for e in schedule.entries]
    return 0.25 * min(sig) if sig else None


def _prepare(schedule, p, solver, frame, rwa=True):
    return schedule_terms(schedule, p, solver.model, frame, rwa)


def _t_eval(schedule, t_eval):
    if t_eval is None:
        return np.array([schedule.duration])
    t_eval = np.asarray(t_eval, dtype=float)
    if np.any(np.diff(t_eval) <= 0) or t_eval[0] < 0:
        raise ValueError("t_eval must be non-negative and increasing")
    return t_eval


def evolve_unitary(schedule: PulseSchedule, p: DeviceParams, psi0, t_eval=None,
                   solver: SolverConfig = DEFAULT_SOLVER, frame: RotatingFrame | None = None,
                   rwa: bool = True) -> EvolutionResult:
    """Schrodinger evolution of a state vector in the rotating frame."""
    psi0 = np.asarray(psi0, dtype=complex)
    t_eval = _t_eval(schedule, t_eval)
    terms = _prepare(schedule, p, solver, frame, rwa)
    t_end = max(schedule.duration, t_eval[-1])
    out = _integrate(terms, psi0[:, None], t_eval, schedule.frames, t_end, solver,
                     max_step=_max_step(schedule), edges=_edges(schedule))
    states = out[:, :, 0]
    norms = np.linalg.norm(states, axis=1)
    if np.max(np.abs(norms - 1)) > 1e-6:
        log.warning("norm drift %.2e; consider a smaller dt", np.max(np.abs(norms - 1)))
    return EvolutionResult(t_eval, states)


def evolve_lindblad(schedule: PulseSchedule, p: DeviceParams, rho0, noise: NoiseModel | None = None,
                    t_eval=None, solver: SolverConfig = DEFAULT_SOLVER,
                    frame: RotatingFrame | None = None) -> EvolutionResult:
    """Master-equation evolution with per-qubit relaxation and dephasing."""
    rho0 = np.asarray(rho0, dtype=complex)
    if noise is None:
        noise = noise_from_coherences(p)
    t_eval = _t_eval(schedule, t_eval)
    terms = _prepare(schedule, p, solver, frame)
    t_end = max(schedule.duration, t_eval[-1])
    out = _integrate(terms, rho0.reshape(-1, 1), t_eval, schedule.frames, t_end, solver,
                     collapse=noise.collapse_operators(), max_step=_max_step(schedule),
                     edges=_edges(schedule))
    n = rho0.shape[0]
    states = out[:, :, 0].reshape(-1, n, n)
    drift = np.max(np.abs(np.trace(states, axis1=1, axis2=2) - 1))
    if drift > 1e-6:
        log.warning("trace drift %.2e; consider a smaller dt", drift)
    return EvolutionResult(t_eval, states)


def propagator(schedule: PulseSchedule, p: DeviceParams, solver: SolverConfig = DEFAULT_SOLVER,
               frame: RotatingFrame | None = None) -> np.ndarray:
    """Closed-system propagator of the whole schedule (4x4)."""
    terms = _prepare(schedule, p, solver, frame)
    out = _integrate(terms, np.eye(4, dtype=complex), [schedule.duration], schedule.frames,
                     schedule.duration, solver, max_step=_max_step(schedule),
                     edges=_edges(schedule))
    return out[-1]


def superoperator(schedule: PulseSchedule, p: DeviceParams, noise: NoiseModel | None = None,
                  solver: SolverConfig = DEFAULT_SOLVER,
                  frame: RotatingFrame | None = None) -> np.ndarray:
    """Row-major superoperator S with vec(rho_out) = S vec(rho_in)."""
    if noise is None:
        noise = noise_from_coherences(p)
    terms = _prepare(schedule, p, solver, frame)
    out = _integrate(terms, np.eye(16, dtype=complex), [schedule.duration], schedule.frames,
                     schedule.duration, solver, collapse=noise.collapse_operators(),
                     max_step=_max_step(schedule), edges=_edges(schedule))
    return out[-1]


def apply_superoperator(s, rho) -> np.ndarray:
    rho = np.asarray(rho)
    n = rho.shape[0]
    return (s @ rho.reshape(-1)).reshape(n, n)


def idle(duration: float) -> PulseSchedule:
    return PulseSchedule((), duration)


# --------------------------------------------------------------------------
# Rabi experiments and J_eff


def rabi_trace(p: DeviceParams, A: float, control_state: str, t_max: float = 400e-9,
               spacing: float = 2e-9, pp: PulseParams = PulseParams(),
               noise: NoiseModel | None = None, solver: SolverConfig = DEFAULT_SOLVER):
    """Qubit-2 excited population versus CR flat-top duration.

    The control is prepared in |0> or, for ``"excited"``, flipped by an
    ideal X.  The CR tone is ramped up once and the population is sampled
    during the flat top, so sample k corresponds to a flat-top duration of
    k * spacing.  Returns ``(durations, populations)``.
    """
    if control_state not in ("ground", "excited"):
        raise ValueError("control_state must be 'ground' or 'excited'")
    if A < 0:
        raise ValueError("amplitude must be non-negative")
    n = int(round(t_max / spacing)) + 1
    durations = spacing * np.arange(n)
    ramp = 2 * pp.cr_ramp_sigma
    flat = durations[-1] + 2 * ramp  # keep the tone on past the last sample
    d = cr_drive(p, 1, A, flat + 4 * pp.cr_ramp_sigma, pp)
    sched = PulseSchedule((ScheduleEntry(0.0, d, "CR12"),), ramp + durations[-1])
    psi0 = ket("00") if control_state == "ground" else ket("10")
    t_eval = ramp + durations
    if noise is None or noise == NOISELESS:
        res = evolve_unitary(sched, p, psi0, t_eval, solver)
        iz = pauli_string("IZ")
        z2 = np.einsum("ti,ij,tj->t", res.states.conj(), iz, res.states).real
    else:
        res = evolve_lindblad(sched, p, projector(psi0), noise, t_eval, solver)
        z2 = np.einsum("tij,ji->t", res.states, pauli_string("IZ")).real
    return durations, 0.5 * (1 - z2)


@dataclass(frozen=True)
class RabiFit:
    frequency: float
    uncertainty: float
    amplitude: float
    decay_rate: float
    offset: float


def fit_rabi_frequency(times, trace) -> RabiFit:
    """Fit a*cos(2 pi f t + phi)*exp(-t/tau) + c, seeded from the spectrum peak."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(trace, dtype=float)
    if t.size < 8:
        raise NoOscillationError("no oscillation detected: too few samples")
    yc = y - y.mean()
    if np.std(yc) < 1e-9:
        raise NoOscillationError("no oscillation detected: constant trace")
    dt = t[1] - t[0]
    npad = 16 * t.size
    spec = np.abs(np.fft.rfft(yc * np.hanning(t.size), npad)) ** 2
    freqs = np.fft.rfftfreq(npad, dt)
    spec[:16] = 0.0  # below one period over the record
    k = int(np.argmax(spec))
    floor = np.median(spec[16:]) if spec.size > 32 else 0.0
    if spec[k] <= 0 or (floor > 0 and spec[k] < 50 * floor):
        raise NoOscillationError("no oscillation detected: no spectral peak above noise floor")
    if 0 < k < spec.size - 1:
        a, b, c = np.log(spec[k - 1:k + 2] + 1e-300)
        shift = 0.5 * (a - c) / (a - 2 * b + c) if (a - 2 * b + c) != 0 else 0.0
    else:
        shift = 0.0
    f0 = (k + shift) * (freqs[1] - freqs[0])

    # linear least squares for amplitude and phase at fixed f0
    basis = np.column_stack([np.cos(2 * np.pi * f0 * t), np.sin(2 * np.pi * f0 * t), np.ones_like(t)])
    cc, *_ = np.linalg.lstsq(basis, y, rcond=None)
    amp0 = np.hypot(cc[0], cc[1])
    phi0 = np.arctan2(-cc[1], cc[0])

    def model(x):
        a, f, phi, g, c = x
        return a * np.cos(2 * np.pi * f * t + phi) * np.exp(-g * t) + c

    x0 = [amp0, f0, phi0, 0.0, cc[2]]
    span = t[-1] - t[0]
    lower = [-np.inf, max(0.0, f0 - 2 / span), -np.inf, 0.0, -np.inf]
    upper = [np.inf, f0 + 2 / span, np.inf, np.inf, np.inf]
    res = least_squares(lambda x: model(x) - y, x0, bounds=(lower, upper), x_scale="jac",
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
    jac = res.jac
    dof = max(1, t.size - 5)
    s2 = float(res.fun @ res.fun) / dof
    try:
        cov = np.linalg.pinv(jac.T @ jac) * s2
        sf = float(np.sqrt(max(cov[1, 1], 0.0)))
    except np.linalg.LinAlgError:
        sf = float("nan")
    a, f, phi, g, c = res.x
    return RabiFit(float(f), sf, float(abs(a)), float(g), float(c))


@dataclass(frozen=True)
class JeffResult:
    jeff: float
    f_ground: float
    f_excited: float
    uncertainty: float

    @property
    def rabi_difference(self) -> float:
        return abs(self.f_ground - self.f_excited)


def rabi_spacing(p: DeviceParams, A: float, base: float = 2e-9) -> float:
    """Sample spacing keeping the crosstalk-driven Rabi tone below 0.4/spacing."""
    f_est = (abs(crosstalk(p, 1)) + abs(p.J / p.delta12)) * A
    n = max(1, int(np.ceil(base * f_est / 0.4)))
    return base / n


def measure_jeff(p: DeviceParams, A: float, t_max: float = 400e-9, spacing: float | None = None,
                 pp: PulseParams = PulseParams(), noise: NoiseModel | None = None,
                 solver: SolverConfig = DEFAULT_SOLVER) -> JeffResult:
    """Conditional Rabi rates of qubit 2 under a CR12 drive of amplitude A.

    J_eff is half the difference of the qubit-2 Rabi frequencies measured
    with the control in |0> and |1>, i.e. the Rabi rate the ZX term alone
    would produce.  This reading assumes the crosstalk term dominates the
    target drive (|m12| > J/Delta), as it does on this device.
    """
    if A <= 0:
        raise ValueError("amplitude must be positive")
    if spacing is None:
        spacing = rabi_spacing(p, A)
    fits = []
    for state in ("ground", "excited"):
        t, y = rabi_trace(p, A, state, t_max, spacing, pp, noise, solver)
        fits.append(fit_rabi_frequency(t, y))
    fg, fe = fits
    diff = abs(fg.frequency - fe.frequency)
    unc = 0.5 * float(np.hypot(fg.uncertainty, fe.uncertainty))
    return JeffResult(0.5 * diff, fg.frequency, fe.frequency, unc)


def extract_jeff(p: DeviceParams, A: float, **kw) -> float:
    return measure_jeff(p, A, **kw).jeff
