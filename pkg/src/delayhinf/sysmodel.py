"""Uncertain linear time-delay system model and JSON persistence.

A system is described by its characteristic matrix

    M(s; lambda, Delta) = s I - sum_r (H_r + lambda G_r) exp(-s tau_r)
                          - B_w Delta C_z,

with tau_0 = 0 < tau_1 < ... < tau_R, a scalar real uncertainty
lambda confined to an interval [a, b], and a complex full-block
uncertainty Delta of spectral norm at most eps.  For norm purposes
Delta is restricted to rank one, Delta = eps u v^H with unit u, v.
"""

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, SingularMatrixError, ValidationError

LAMBDA_TOL = 1e-12
UNIT_TOL = 1e-12


def _as_matrix(x, name):
    a = np.asarray(x, dtype=float)
    if a.ndim != 2:
        raise ValidationError(f"{name} must be a 2-d array, got ndim={a.ndim}")
    return a


@dataclass(frozen=True)
class UncertainDelaySystem:
    """Delay system with interval and complex-ball uncertainty.

    Parameters
    ----------
    delays : sequence of float
        Strictly increasing, delays[0] must be exactly 0.
    h_mats, g_mats : sequences of (n, n) arrays
        Nominal and lambda-coefficient matrices, one pair per delay.
        Zero G matrices are allowed.
    b_w : (n, m) array
        Disturbance input map (also the left uncertainty structure).
    c_z : (p, n) array
        Performance output map (also the right uncertainty structure).
    interval : (a, b) with a <= b, or None
        Range of the scalar uncertainty.  None marks a lambda-free
        system; all g_mats must then be zero.
    """

    delays: tuple
    h_mats: tuple
    g_mats: tuple
    b_w: np.ndarray
    c_z: np.ndarray
    interval: tuple = None

    def __post_init__(self):
        delays = tuple(float(t) for t in self.delays)
        if len(delays) == 0:
            raise ValidationError("at least one delay (tau_0 = 0) required")
        if delays[0] != 0.0:
            raise ValidationError(f"delays[0] must be exactly 0, got {delays[0]!r}")
        if any(b <= a for a, b in zip(delays, delays[1:])):
            raise ValidationError(f"delays must be strictly increasing, got {delays}")

        h_mats = tuple(_as_matrix(h, f"H[{r}]") for r, h in enumerate(self.h_mats))
        g_mats = tuple(_as_matrix(g, f"G[{r}]") for r, g in enumerate(self.g_mats))
        if len(h_mats) != len(delays) or len(g_mats) != len(delays):
            raise ValidationError(
                "need one H and one G matrix per delay: "
                f"{len(delays)} delays, {len(h_mats)} H, {len(g_mats)} G"
            )
        n = h_mats[0].shape[0]
        for r, mat in enumerate(h_mats + g_mats):
            if mat.shape != (n, n):
                raise ValidationError(
                    f"system matrix {r % len(h_mats)} has shape {mat.shape}, expected {(n, n)}"
                )

        b_w = _as_matrix(self.b_w, "Bw")
        c_z = _as_matrix(self.c_z, "Cz")
        if b_w.shape[0] != n:
            raise ValidationError(f"Bw has {b_w.shape[0]} rows, state size is {n}")
        if c_z.shape[1] != n:
            raise ValidationError(f"Cz has {c_z.shape[1]} columns, state size is {n}")

        interval = self.interval
        if interval is not None:
            a, b = (float(interval[0]), float(interval[1]))
            if not (np.isfinite(a) and np.isfinite(b)):
                raise ValidationError(f"interval bounds must be finite, got {interval}")
            if a > b:
                raise ValidationError(f"interval must satisfy a <= b, got {interval}")
            interval = (a, b)
        else:
            for r, g in enumerate(g_mats):
                if np.any(g != 0.0):
                    raise ValidationError(
                        f"lambda-free system has nonzero G[{r}]; provide an interval"
                    )

        for mat in h_mats + g_mats + (b_w, c_z):
            mat.setflags(write=False)
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "h_mats", h_mats)
        object.__setattr__(self, "g_mats", g_mats)
        object.__setattr__(self, "b_w", b_w)
        object.__setattr__(self, "c_z", c_z)
        object.__setattr__(self, "interval", interval)

    @property
    def n(self):
        return self.h_mats[0].shape[0]

    @property
    def m(self):
        return self.b_w.shape[1]

    @property
    def p(self):
        return self.c_z.shape[0]

    @property
    def lam_interval(self):
        """Effective uncertainty interval; [0, 0] for lambda-free systems."""
        return self.interval if self.interval is not None else (0.0, 0.0)

    def check_lambda(self, lam):
        """Validate lambda against the interval (tolerance 1e-12), return it.

        Values outside by more than the tolerance raise rather than
        clamp, so silent projection bugs upstream cannot hide.
        """
        a, b = self.lam_interval
        lam = float(lam)
        if lam < a - LAMBDA_TOL or lam > b + LAMBDA_TOL:
            raise ValidationError(f"lambda={lam!r} outside [{a}, {b}]")
        return lam


@dataclass(frozen=True)
class ComplexPerturbation:
    """Rank-one complex uncertainty Delta = eps * u v^H with unit u, v."""

    u: np.ndarray
    v: np.ndarray
    eps: float

    def __post_init__(self):
        u = np.asarray(self.u, dtype=complex).reshape(-1)
        v = np.asarray(self.v, dtype=complex).reshape(-1)
        if abs(np.linalg.norm(u) - 1.0) > UNIT_TOL:
            raise ValidationError(f"u must be unit norm, |u| = {np.linalg.norm(u)!r}")
        if abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
            raise ValidationError(f"v must be unit norm, |v| = {np.linalg.norm(v)!r}")
        eps = float(self.eps)
        if not eps >= 0.0:
            raise ValidationError(f"eps must be nonnegative, got {eps!r}")
        u.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "eps", eps)

    @property
    def delta(self):
        return self.eps * np.outer(self.u, self.v.conj())


@dataclass(frozen=True)
class SpectralPoint:
    """Characteristic root with its certificate.

    s is a root of det M(s; lam, Delta) = 0, psi/phi the associated
    right/left null vectors, and xi = phi^H M'(s) psi the (real,
    positive) normalization used by derivative formulas.
    """

    s: complex
    lam: float
    pert: ComplexPerturbation
    phi: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)
    xi: float

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=complex).reshape(-1)
        psi = np.asarray(self.psi, dtype=complex).reshape(-1)
        phi.setflags(write=False)
        psi.setflags(write=False)
        object.__setattr__(self, "s", complex(self.s))
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "xi", float(self.xi))
        if not self.xi > 0.0:
            raise ValidationError(f"xi must be positive, got {self.xi!r}")

    def residuals(self, sys):
        """Right and left null residuals |M psi| and |phi^H M|."""
        mmat = characteristic_matrix(sys, self.s, self.lam, self.pert)
        return (
            float(np.linalg.norm(mmat @ self.psi)),
            float(np.linalg.norm(self.phi.conj() @ mmat)),
        )

    def validate(self, sys, tol=1e-9):
        rr, rl = self.residuals(sys)
        bound = tol * (1.0 + abs(self.s))
        if rr > bound or rl > bound:
            raise ValidationError(
                f"spectral point residuals ({rr:.3e}, {rl:.3e}) exceed {bound:.3e}"
            )
        return self


def delay_term(sys, s, lam):
    """sum_r (H_r + lambda G_r) exp(-s tau_r) as a complex matrix."""
    acc = np.zeros((sys.n, sys.n), dtype=complex)
    for tau, h, g in zip(sys.delays, sys.h_mats, sys.g_mats):
        acc += (h + lam * g) * np.exp(-s * tau)
    return acc


def characteristic_matrix(sys, s, lam, pert=None):
    """Evaluate M(s; lambda, Delta).

    Parameters
    ----------
    sys : UncertainDelaySystem
    s : complex
    lam : float
        Must lie in the uncertainty interval (tolerance 1e-12).
    pert : ComplexPerturbation, optional
        Omitted means Delta = 0.

    Returns
    -------
    (n, n) complex array
    """
    lam = sys.check_lambda(lam)
    mmat = complex(s) * np.eye(sys.n) - delay_term(sys, s, lam)
    if pert is not None and pert.eps != 0.0:
        if pert.u.shape[0] != sys.m or pert.v.shape[0] != sys.p:
            raise ValidationError(
                f"perturbation shapes ({pert.u.shape[0]}, {pert.v.shape[0]}) "
                f"incompatible with (m, p) = ({sys.m}, {sys.p})"
            )
        mmat -= sys.b_w @ pert.delta @ sys.c_z
    return mmat


def characteristic_matrix_derivative(sys, s, lam):
    """d/ds of M(s; lambda, Delta); the Delta term is s-independent."""
    lam = sys.check_lambda(lam)
    acc = np.eye(sys.n, dtype=complex)
    for tau, h, g in zip(sys.delays, sys.h_mats, sys.g_mats):
        if tau != 0.0:
            acc += tau * (h + lam * g) * np.exp(-s * tau)
    return acc


def transfer_eval(sys, s, lam):
    """Transfer matrix T(s; lambda) = C_z M(s; lambda, 0)^{-1} B_w."""
    mmat = characteristic_matrix(sys, s, lam)
    try:
        x = np.linalg.solve(mmat, sys.b_w)
    except np.linalg.LinAlgError:
        raise SingularMatrixError(
            f"characteristic matrix singular at s = {s!r}", s=s
        ) from None
    cond = np.linalg.cond(mmat)
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularMatrixError(
            f"characteristic matrix numerically singular at s = {s!r}", s=s
        )
    return sys.c_z @ x


def sigma_max(sys, s, lam):
    """Largest singular value of T(s; lambda)."""
    return float(np.linalg.norm(transfer_eval(sys, s, lam), ord=2))


# ---------------------------------------------------------------------------
# JSON persistence
#
# Schema: {"delays": [...], "H": [[[..]..]..], "G": [...], "Bw": [[..]..],
#          "Cz": [[..]..], "interval": [a, b] | null}


def system_to_dict(sys):
    return {
        "delays": list(sys.delays),
        "H": [h.tolist() for h in sys.h_mats],
        "G": [g.tolist() for g in sys.g_mats],
        "Bw": sys.b_w.tolist(),
        "Cz": sys.c_z.tolist(),
        "interval": list(sys.interval) if sys.interval is not None else None,
    }


def _require(doc, key, kind):
    if key not in doc:
        raise ParseError(f"missing field '{key}'", field=key)
    val = doc[key]
    if not isinstance(val, kind):
        raise ParseError(
            f"field '{key}' must be {kind.__name__}, got {type(val).__name__}",
            field=key,
        )
    return val


def _numeric_array(val, key, ndim):
    try:
        arr = np.array(val, dtype=float)
    except (TypeError, ValueError):
        raise ParseError(f"field '{key}' is not numeric", field=key) from None
    if arr.ndim != ndim:
        raise ParseError(
            f"field '{key}' must be {ndim}-dimensional, got shape {arr.shape}",
            field=key,
        )
    return arr


def system_from_dict(doc):
    if not isinstance(doc, dict):
        raise ParseError("system document must be a JSON object", field=None)
    delays = _numeric_array(_require(doc, "delays", list), "delays", 1)
    h_raw = _require(doc, "H", list)
    g_raw = _require(doc, "G", list)
    h_mats = [_numeric_array(h, f"H[{r}]", 2) for r, h in enumerate(h_raw)]
    g_mats = [_numeric_array(g, f"G[{r}]", 2) for r, g in enumerate(g_raw)]
    b_w = _numeric_array(_require(doc, "Bw", list), "Bw", 2)
    c_z = _numeric_array(_require(doc, "Cz", list), "Cz", 2)
    if "interval" not in doc:
        raise ParseError("missing field 'interval'", field="interval")
    interval = doc["interval"]
    if interval is not None:
        if not isinstance(interval, list) or len(interval) != 2:
            raise ParseError(
                "field 'interval' must be [a, b] or null", field="interval"
            )
        interval = (float(interval[0]), float(interval[1]))
    return UncertainDelaySystem(
        delays=tuple(delays),
        h_mats=tuple(h_mats),
        g_mats=tuple(g_mats),
        b_w=b_w,
        c_z=c_z,
        interval=interval,
    )


def load_system(path):
    """Load an UncertainDelaySystem from a JSON file.

    Schema violations raise ParseError naming the offending field;
    well-formed files violating a model invariant raise ValidationError.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON in {path}: {exc}", field=None) from None
    return system_from_dict(doc)


def write_json_atomic(doc, path):
    """Serialize doc to path via a same-directory temp file + rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_system(sys, path):
    """Write the system as JSON; load_system(save_system(...)) is lossless."""
    write_json_atomic(system_to_dict(sys), path)
