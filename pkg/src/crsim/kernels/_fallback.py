"""Pure-numpy RK4 propagator; same contract as the compiled kernel."""
import numpy as np


def rk4_propagate(G0, Gk, coeffs, y0, dt, nsteps, save_every):
    G0 = np.ascontiguousarray(G0, dtype=np.complex128)
    Gk = np.ascontiguousarray(Gk, dtype=np.complex128)
    coeffs = np.ascontiguousarray(coeffs, dtype=np.float64)
    y = np.array(y0, dtype=np.complex128, copy=True)
    n, m = y.shape
    out = np.empty((nsteps // save_every + 1, n, m), dtype=np.complex128)
    out[0] = y
    K = Gk.shape[0]
    flat = Gk.reshape(K, n * n)

    def gen(j):
        return G0 + (coeffs[:, j] @ flat).reshape(n, n) if K else G0

    h2 = 0.5 * dt
    Ga = gen(0)
    isave = 1
    for s in range(nsteps):
        Gb = gen(2 * s + 1)
        Gc = gen(2 * s + 2)
        k1 = Ga @ y
        k2 = Gb @ (y + h2 * k1)
        k3 = Gb @ (y + h2 * k2)
        k4 = Gc @ (y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        Ga = Gc
        if (s + 1) % save_every == 0:
            out[isave] = y
            isave += 1
    return out
