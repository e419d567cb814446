"""Time-domain simulation of closed-loop delay networks.

Integrates

    x'(t) = sum_r A_r x(t - tau_r) + B_w w(t),    z(t) = C_z x(t),

with zero pre-history, using fixed-step classic fourth-order
Runge-Kutta; delayed states are read from a cubic Hermite interpolant
of the stored solution (node values plus right-hand sides), which
matches the integrator order.  Disturbance inputs are sampled signals
on the same grid, produced by :func:`make_noise` as low-pass filtered
Gaussian noise rescaled to an exact discrete RMS.

The integration loop lives in a compiled extension when the build
produced one; a pure-Python twin with identical semantics is the
fallback.  ``STEPPER_BACKEND`` records which one is active.
"""

from dataclasses import dataclass

import numpy as np
from scipy import signal as _signal

from .errors import ValidationError
from .sysmodel import UncertainDelaySystem

try:
    from ._stepper import run_steps as _run_steps

    STEPPER_BACKEND = "compiled"
except ImportError:
    from ._stepper_py import run_steps as _run_steps

    STEPPER_BACKEND = "python"

DEFAULT_CUTOFF = 6.0 * np.pi
DEFAULT_RMS = 0.1
DEFAULT_DT = 1e-3


@dataclass(frozen=True)
class NoiseSpec:
    """Recipe for a filtered-noise disturbance.

    Parameters
    ----------
    cutoff : float
        Low-pass cutoff in rad/s.  Must be positive.
    rms : float
        Target discrete RMS per channel after scaling.  Must be >= 0.
    seed : int
        Nonnegative seed for the sample draw.
    channels : int
        Number of independent channels.
    """

    cutoff: float = DEFAULT_CUTOFF
    rms: float = DEFAULT_RMS
    seed: int = 0
    channels: int = 1

    def __post_init__(self):
        cutoff = float(self.cutoff)
        rms = float(self.rms)
        if not np.isfinite(cutoff) or cutoff <= 0.0:
            raise ValidationError(f"cutoff must be positive, got {self.cutoff}")
        if not np.isfinite(rms) or rms < 0.0:
            raise ValidationError(f"rms must be nonnegative, got {self.rms}")
        seed = self.seed
        if not isinstance(seed, (int, np.integer)) or seed < 0:
            raise ValidationError(f"seed must be a nonnegative integer, got {seed!r}")
        channels = self.channels
        if not isinstance(channels, (int, np.integer)) or channels < 1:
            raise ValidationError(f"channels must be a positive integer, got {channels!r}")
        object.__setattr__(self, "cutoff", cutoff)
        object.__setattr__(self, "rms", rms)
        object.__setattr__(self, "seed", int(seed))
        object.__setattr__(self, "channels", int(channels))


@dataclass(frozen=True)
class SimTrace:
    """Sampled simulation result on a uniform grid.

    Parameters
    ----------
    times : (steps + 1,) array
        Uniform grid 0..T.
    state : (steps + 1, n) array
    z : (steps + 1, p) array
    w : (steps + 1, m) array
    """

    times: np.ndarray
    state: np.ndarray
    z: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValidationError("times must be a 1-D grid with at least two samples")
        steps = np.diff(times)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0) or steps[0] <= 0.0:
            raise ValidationError("times must be uniformly spaced and increasing")
        cols = {}
        for name in ("state", "z", "w"):
            mat = np.asarray(getattr(self, name), dtype=float)
            if mat.ndim != 2 or mat.shape[0] != times.size:
                raise ValidationError(
                    f"{name} must be 2-D with one row per time sample"
                )
            if not np.all(np.isfinite(mat)):
                raise ValidationError(
                    f"{name} contains non-finite values; the simulated system"
                    " is unstable on this horizon or dt is too large"
                )
            cols[name] = mat
        if not np.all(np.isfinite(times)):
            raise ValidationError("times contains non-finite values")
        for name, mat in cols.items():
            mat.setflags(write=False)
            object.__setattr__(self, name, mat)
        times.setflags(write=False)
        object.__setattr__(self, "times", times)

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    @property
    def signals(self):
        """Named columns, in CSV order: x1..xn, z1..zp, w1..wm."""
        out = {}
        for name, mat in (("x", self.state), ("z", self.z), ("w", self.w)):
            for j in range(mat.shape[1]):
                out[f"{name}{j + 1}"] = mat[:, j]
        return out


def make_noise(spec, T, dt=DEFAULT_DT):
    """Sample low-pass filtered Gaussian noise with exact discrete RMS.

    Per channel: unit-variance Gaussian samples on the grid 0..T are
    passed through a bilinear-transform discretization of a
    second-order Butterworth low-pass at ``spec.cutoff``, then rescaled
    so the discrete RMS over [0, T] equals ``spec.rms`` exactly.

    Parameters
    ----------
    spec : NoiseSpec
    T : float
        Horizon in seconds, T >= dt.
    dt : float
        Sample step.

    Returns
    -------
    (steps + 1, spec.channels) array
    """
    if not isinstance(spec, NoiseSpec):
        raise ValidationError(f"spec must be a NoiseSpec, got {type(spec).__name__}")
    dt = float(dt)
    T = float(T)
    if not np.isfinite(dt) or dt <= 0.0:
        raise ValidationError(f"dt must be positive, got {dt}")
    if not np.isfinite(T) or T < dt:
        raise ValidationError(f"T must be at least dt, got T={T}, dt={dt}")
    if spec.cutoff >= np.pi / dt:
        raise ValidationError(
            f"cutoff {spec.cutoff:g} rad/s is at or above the Nyquist rate"
            f" {np.pi / dt:g} rad/s for dt={dt:g}"
        )
    samples = int(round(T / dt)) + 1
    if spec.rms == 0.0:
        return np.zeros((samples, spec.channels))
    rng = np.random.default_rng(spec.seed)
    white = rng.standard_normal((samples, spec.channels))
    # fs in rad/s keeps the cutoff in the units the spec carries
    num, den = _signal.butter(2, spec.cutoff, btype="low", fs=2.0 * np.pi / dt)
    filtered = _signal.lfilter(num, den, white, axis=0)
    level = np.sqrt(np.mean(filtered * filtered, axis=0))
    level[level == 0.0] = 1.0
    return filtered * (spec.rms / level)


def rms(sig, T):
    """Discrete RMS over [0, T]: sqrt of the mean of squared samples.

    1-D input gives a scalar, 2-D input a per-column array.
    """
    T = float(T)
    if not np.isfinite(T) or T <= 0.0:
        raise ValidationError(f"T must be positive, got {T}")
    sig = np.asarray(sig, dtype=float)
    if sig.ndim not in (1, 2) or sig.shape[0] < 1:
        raise ValidationError("signal must be a nonempty 1-D or 2-D sample array")
    out = np.sqrt(np.mean(sig * sig, axis=0))
    return float(out) if sig.ndim == 1 else out


def _fixed_matrices(sys):
    # simulation needs a concrete system; fold a pinned lambda in,
    # reject a genuine interval
    if sys.interval is None:
        return sys.h_mats
    a, b = sys.interval
    if a != b:
        raise ValidationError(
            "simulation requires a lambda-free system (or a degenerate"
            f" interval); got interval {sys.interval}"
        )
    return tuple(h + a * g for h, g in zip(sys.h_mats, sys.g_mats))


def simulate(closed_loop, w, dt=DEFAULT_DT):
    """Integrate a closed-loop delay system under a sampled disturbance.

    Parameters
    ----------
    closed_loop : UncertainDelaySystem
        Lambda-free (or with a degenerate interval, which is folded
        in).  Every positive delay must be >= dt.
    w : (steps + 1, m) array
        Disturbance samples on the grid 0..steps*dt, one column per
        input channel; a 1-D array is accepted when m = 1.
    dt : float
        Step size.

    Returns
    -------
    SimTrace
        State, performance output, and input sampled on the grid,
        starting from zero pre-history.
    """
    if not isinstance(closed_loop, UncertainDelaySystem):
        raise ValidationError(
            f"closed_loop must be an UncertainDelaySystem, got {type(closed_loop).__name__}"
        )
    dt = float(dt)
    if not np.isfinite(dt) or dt <= 0.0:
        raise ValidationError(f"dt must be positive, got {dt}")
    mats = _fixed_matrices(closed_loop)
    taus = np.asarray(closed_loop.delays[1:], dtype=float)
    if taus.size and taus.min() < dt:
        raise ValidationError(
            f"dt={dt:g} exceeds the smallest positive delay {taus.min():g};"
            " delayed lookups would leave the computed history"
        )
    w = np.asarray(w, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    if w.ndim != 2 or w.shape[1] != closed_loop.m:
        raise ValidationError(
            f"w must have {closed_loop.m} columns, got shape {w.shape}"
        )
    if w.shape[0] < 2:
        raise ValidationError("w must cover at least one step (two samples)")
    if not np.all(np.isfinite(w)):
        raise ValidationError("w contains non-finite values")
    a0 = np.ascontiguousarray(mats[0], dtype=float)
    ad = np.ascontiguousarray(np.stack(mats[1:])
                              if taus.size else np.zeros((0, closed_loop.n, closed_loop.n)))
    xs, _ = _run_steps(
        a0,
        ad,
        np.ascontiguousarray(taus),
        np.ascontiguousarray(closed_loop.b_w, dtype=float),
        np.ascontiguousarray(w),
        dt,
    )
    times = np.arange(w.shape[0]) * dt
    return SimTrace(times=times, state=xs, z=xs @ closed_loop.c_z.T, w=w)
