# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled DDE integration loop.

Same contract as delayhinf._stepper_py.run_steps; see that module for
the scheme.  The per-step work is plain dense matvecs plus cubic
Hermite history lookups, so the win over the fallback is loop
overhead, not flops.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef void _hermite(double[:, ::1] xs, double[:, ::1] fs, double theta,
                   double dt, Py_ssize_t n, double[::1] out) noexcept:
    cdef Py_ssize_t j, i, last
    cdef double pos, u, u2, u3, h00, h10, h01, h11
    if theta < 0.0:
        for i in range(n):
            out[i] = 0.0
        return
    pos = theta / dt
    j = <Py_ssize_t>pos
    last = xs.shape[0] - 2
    if j > last:
        j = last
    u = pos - j
    u2 = u * u
    u3 = u2 * u
    h00 = 2.0 * u3 - 3.0 * u2 + 1.0
    h10 = (u3 - 2.0 * u2 + u) * dt
    h01 = -2.0 * u3 + 3.0 * u2
    h11 = (u3 - u2) * dt
    for i in range(n):
        out[i] = (h00 * xs[j, i] + h10 * fs[j, i]
                  + h01 * xs[j + 1, i] + h11 * fs[j + 1, i])


cdef void _matvec_add(const double[:, ::1] mat, const double[::1] vec,
                      double[::1] out, Py_ssize_t rows,
                      Py_ssize_t cols) noexcept:
    cdef Py_ssize_t i, jj
    cdef double acc
    for i in range(rows):
        acc = 0.0
        for jj in range(cols):
            acc += mat[i, jj] * vec[jj]
        out[i] += acc


def run_steps(const double[:, ::1] a0, const double[:, :, ::1] ad,
              const double[::1] taus, const double[:, ::1] b_w,
              const double[:, ::1] w, double dt):
    """Compiled twin of delayhinf._stepper_py.run_steps."""
    cdef Py_ssize_t steps = w.shape[0] - 1
    cdef Py_ssize_t n = a0.shape[0]
    cdef Py_ssize_t nd = ad.shape[0]
    cdef Py_ssize_t m = b_w.shape[1]
    xs_arr = np.zeros((steps + 1, n))
    fs_arr = np.zeros((steps + 1, n))
    cdef double[:, ::1] xs = xs_arr
    cdef double[:, ::1] fs = fs_arr
    cdef double[::1] xhat = np.zeros(n)
    cdef double[::1] dmid = np.zeros(n)
    cdef double[::1] dend = np.zeros(n)
    cdef double[::1] wmid = np.zeros(m)
    cdef double[::1] stage = np.zeros(n)
    cdef double[::1] k2 = np.zeros(n)
    cdef double[::1] k3 = np.zeros(n)
    cdef double[::1] k4 = np.zeros(n)
    cdef Py_ssize_t k, i, r
    cdef double t, half = 0.5 * dt, sixth = dt / 6.0

    for i in range(n):
        fs[0, i] = 0.0
    _matvec_add(b_w, w[0], fs[0], n, m)

    for k in range(steps):
        t = k * dt
        for i in range(m):
            wmid[i] = 0.5 * (w[k, i] + w[k + 1, i])
        for i in range(n):
            dmid[i] = 0.0
            dend[i] = 0.0
        _matvec_add(b_w, wmid, dmid, n, m)
        _matvec_add(b_w, w[k + 1], dend, n, m)
        for r in range(nd):
            _hermite(xs, fs, t + half - taus[r], dt, n, xhat)
            _matvec_add(ad[r], xhat, dmid, n, n)
            _hermite(xs, fs, t + dt - taus[r], dt, n, xhat)
            _matvec_add(ad[r], xhat, dend, n, n)

        # k1 is the stored fs[k]
        for i in range(n):
            stage[i] = xs[k, i] + half * fs[k, i]
            k2[i] = dmid[i]
        _matvec_add(a0, stage, k2, n, n)
        for i in range(n):
            stage[i] = xs[k, i] + half * k2[i]
            k3[i] = dmid[i]
        _matvec_add(a0, stage, k3, n, n)
        for i in range(n):
            stage[i] = xs[k, i] + dt * k3[i]
            k4[i] = dend[i]
        _matvec_add(a0, stage, k4, n, n)
        for i in range(n):
            xs[k + 1, i] = xs[k, i] + sixth * (
                fs[k, i] + 2.0 * (k2[i] + k3[i]) + k4[i]
            )
            fs[k + 1, i] = dend[i]
        _matvec_add(a0, xs[k + 1], fs[k + 1], n, n)
    return xs_arr, fs_arr
