"""Compare the compiled RK4 kernel with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Times one 220 ns CR pulse at dt = 0.01 ns, both as a 4x4 unitary
propagation and as a 16x16 Lindblad superoperator, and checks that the two
backends agree.
"""
import argparse
import time

import numpy as np

from crsim.device import DeviceParams
from crsim.dynamics import _generators, noise_from_coherences, schedule_terms
from crsim.kernels import _fallback
from crsim.pulses import Gate, build_sequence

try:
    from crsim.kernels import _rk4
except ImportError:
    _rk4 = None


def problem(superop: bool, nsteps: int):
    p = DeviceParams()
    sched = build_sequence(p, [Gate("CR", 1, 553e6, 220e-9)])
    terms = schedule_terms(sched, p)
    collapse = noise_from_coherences(p).collapse_operators() if superop else None
    g0, gk = _generators(terms, collapse)
    dt = sched.duration / nsteps
    coeffs = np.ascontiguousarray(terms.sample(np.arange(2 * nsteps + 1) * 0.5 * dt))
    y0 = np.eye(g0.shape[0], dtype=complex)
    return g0, gk, coeffs, y0, dt


def best_time(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    nsteps = 22000
    print(f"{'case':<12}{'backend':<10}{'seconds':>10}{'speedup':>10}{'max diff':>12}")
    for name, superop in (("unitary", False), ("lindblad", True)):
        g0, gk, coeffs, y0, dt = problem(superop, nsteps)
        call = (g0, gk, coeffs, y0, dt, nsteps, nsteps)
        t_py, y_py = best_time(_fallback.rk4_propagate, call, args.repeat)
        print(f"{name:<12}{'python':<10}{t_py:>10.3f}{1.0:>10.1f}{0.0:>12.1e}")
        if _rk4 is None:
            print(f"{name:<12}{'cython':<10}{'not built':>10}")
            continue
        t_cy, y_cy = best_time(_rk4.rk4_propagate, call, args.repeat)
        diff = float(np.max(np.abs(y_cy - y_py)))
        print(f"{name:<12}{'cython':<10}{t_cy:>10.3f}{t_py / t_cy:>10.1f}{diff:>12.1e}")


if __name__ == "__main__":
    main()
