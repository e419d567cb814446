"""Pure-Python DDE integration loop, the fallback stepper.

Same contract as the compiled delayhinf._stepper: classic fourth-order
Runge-Kutta on a uniform grid, delayed states from cubic Hermite
interpolation of the stored solution (node values plus stored
right-hand sides), disturbance linearly interpolated at stage
midpoints.  All delays are >= dt, so every delayed lookup lands in a
completed grid interval; lookups before t = 0 return the zero
pre-history.
"""

import numpy as np


def _hermite(xs, fs, theta, dt, n):
    if theta < 0.0:
        return np.zeros(n)
    pos = theta / dt
    j = int(pos)
    if j > xs.shape[0] - 2:
        j = xs.shape[0] - 2
    u = pos - j
    u2 = u * u
    u3 = u2 * u
    h00 = 2.0 * u3 - 3.0 * u2 + 1.0
    h10 = u3 - 2.0 * u2 + u
    h01 = -2.0 * u3 + 3.0 * u2
    h11 = u3 - u2
    return (
        h00 * xs[j]
        + (h10 * dt) * fs[j]
        + h01 * xs[j + 1]
        + (h11 * dt) * fs[j + 1]
    )


def run_steps(a0, ad, taus, b_w, w, dt):
    """Integrate x' = a0 x + sum_r ad[r] x(t - taus[r]) + b_w w.

    Parameters
    ----------
    a0 : (n, n) ndarray
        Undelayed coefficient matrix.
    ad : (R, n, n) ndarray
        Coefficient matrices of the positive delays.
    taus : (R,) ndarray
        Positive delays, each >= dt.
    b_w : (n, m) ndarray
    w : (steps + 1, m) ndarray
        Disturbance samples on the grid 0, dt, ..., steps * dt.
    dt : float

    Returns
    -------
    xs, fs : (steps + 1, n) ndarrays
        States and right-hand sides at the grid points.
    """
    steps = w.shape[0] - 1
    n = a0.shape[0]
    nd = ad.shape[0]
    xs = np.zeros((steps + 1, n))
    fs = np.zeros((steps + 1, n))
    fs[0] = b_w @ w[0]
    half = 0.5 * dt
    sixth = dt / 6.0
    for k in range(steps):
        t = k * dt
        dmid = b_w @ (0.5 * (w[k] + w[k + 1]))
        dend = b_w @ w[k + 1]
        for r in range(nd):
            dmid += ad[r] @ _hermite(xs, fs, t + half - taus[r], dt, n)
            dend += ad[r] @ _hermite(xs, fs, t + dt - taus[r], dt, n)
        x = xs[k]
        k1 = fs[k]
        k2 = a0 @ (x + half * k1) + dmid
        k3 = a0 @ (x + half * k2) + dmid
        k4 = a0 @ (x + dt * k3) + dend
        xs[k + 1] = x + sixth * (k1 + 2.0 * (k2 + k3) + k4)
        fs[k + 1] = a0 @ xs[k + 1] + dend
    return xs, fs
