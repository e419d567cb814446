"""Pseudo-spectral abscissa of the uncertain characteristic matrix.

The rightmost point of the spectral value set

    alpha_eps = max { Re s : det M(s; lambda, eps u v^H) = 0,
                      lambda in [a, b], |u| = |v| = 1 }

is found by integrating a projected gradient flow in (u, v, lambda)
with explicit Euler steps, backtracking step search, and projection
(renormalize u, v; clamp lambda) after every trial.  Acceptance is
decided at the projected trial point, so the Re(s) trace is monotone
by construction.
"""

from dataclasses import dataclass

import numpy as np

from ._threads import ordered_map
from .errors import (
    ConvergenceError,
    DegenerateRootError,
    NonsmoothError,
    NormalizationError,
    ValidationError,
)
from .roots import (
    Discretization,
    char_mat_deriv,
    combined_mats,
    newton_refine,
    rightmost_point,
    svd_triple,
)
from .sysmodel import ComplexPerturbation, SpectralPoint

AUTO = "auto"
ALPHA_TIE_TOL = 1e-8
LOCATION_TOL = 1e-6
ANCHOR_EVERY = 25
POLISH_MAX = 80


@dataclass(frozen=True)
class FlowConfig:
    """Step-control parameters of the flow discretization.

    starts is either the token "auto" (three lambda seeds with
    growth-aligned u, v) or an explicit sequence of (lambda0, u0, v0).
    """

    h0: float = 0.1
    h_min: float = 1e-8
    grow: float = 1.5
    rel_tol: float = 1e-8
    max_iters: int = 2000
    starts: object = AUTO

    def __post_init__(self):
        if not self.h0 > 0:
            raise ValidationError(f"h0 must be positive, got {self.h0}")
        if not (0 < self.h_min < self.h0):
            raise ValidationError(
                f"h_min must satisfy 0 < h_min < h0, got {self.h_min}"
            )
        if not self.grow > 1:
            raise ValidationError(f"grow must exceed 1, got {self.grow}")
        if not self.rel_tol > 0:
            raise ValidationError(f"rel_tol must be positive, got {self.rel_tol}")
        if self.max_iters < 1:
            raise ValidationError(f"max_iters must be positive, got {self.max_iters}")


@dataclass(frozen=True)
class StartRecord:
    """Outcome of the flow from one start.

    iterates rows are (k, re_s, im_s, lambda, h) for every accepted
    step; row 0 is the initial point with h = 0.
    """

    index: int
    iterates: tuple
    converged: bool
    optimizer: SpectralPoint

    @property
    def alpha(self):
        return self.iterates[-1][1]


@dataclass(frozen=True)
class AbscissaResult:
    """Max-over-starts abscissa with per-start traces.

    degenerate marks the fallback case where no start could move and
    the eps = 0 abscissa was returned instead; nonsmooth marks ties in
    alpha between starts whose optimizers sit at different (omega,
    lambda) locations, which invalidates the eps-derivative formula.
    """

    alpha: float
    optimizer: SpectralPoint
    records: tuple
    degenerate: bool = False
    nonsmooth: bool = False

    @property
    def iterates(self):
        best = max(self.records, key=lambda r: (r.alpha, -r.index))
        return best.iterates

    @property
    def converged(self):
        return tuple(r.converged for r in self.records)


def _raw_xi(sys, pt):
    As = combined_mats(sys, pt.lam)
    return pt.phi.conj() @ char_mat_deriv(As, sys.delays, pt.s) @ pt.psi


def flow_derivatives(pt, sys):
    """Right-hand side of the flow at a spectral point.

    Returns (du, dv, dlambda).  du/dv are tangent to the unit spheres
    (Re(u^H du) = Re(v^H dv) = 0); dlambda carries the clamping
    branches at the interval ends, including the degenerate a = b case
    where it is identically zero.
    """
    lam = sys.check_lambda(pt.lam)
    xi_raw = _raw_xi(sys, pt)
    if xi_raw.real <= 0.0 or abs(xi_raw.imag) > 1e-8 * (1.0 + abs(xi_raw)):
        raise NormalizationError(
            f"xi = {xi_raw!r} is not real positive; re-normalize the triple"
        )
    xi = xi_raw.real
    eps = pt.pert.eps
    u, v = pt.pert.u, pt.pert.v
    phi, psi = pt.phi, pt.psi

    bt_phi = sys.b_w.T @ phi
    cz_psi = sys.c_z @ psi
    du_raw = bt_phi * (psi.conj() @ sys.c_z.T @ v)
    dv_raw = cz_psi * (phi.conj() @ sys.b_w @ u)
    cu = u.conj() @ du_raw
    cv = v.conj() @ dv_raw
    du = (eps / xi) * (du_raw - cu * u + 0.5j * cu.imag * u)
    dv = (eps / xi) * (dv_raw - cv * v + 0.5j * cv.imag * v)

    a, b = sys.lam_interval
    if a == b:
        dlam = 0.0
    else:
        gsum = 0.0
        for g, tau in zip(sys.g_mats, sys.delays):
            gsum += (phi.conj() @ g @ psi * np.exp(-pt.s * tau)).real
        if (lam >= b and gsum > 0.0) or (lam <= a and gsum < 0.0):
            dlam = 0.0
        else:
            dlam = gsum / xi
    return du, dv, float(dlam)


def _derivatives(sys, eps, s, lam, u, v, phi, psi, xi):
    # inline twin of flow_derivatives for the hot loop: xi already
    # phase-normalized by the root solver, no revalidation
    bt_phi = sys.b_w.T @ phi
    cz_psi = sys.c_z @ psi
    du_raw = bt_phi * (psi.conj() @ sys.c_z.T @ v)
    dv_raw = cz_psi * (phi.conj() @ sys.b_w @ u)
    cu = u.conj() @ du_raw
    cv = v.conj() @ dv_raw
    du = (eps / xi) * (du_raw - cu * u + 0.5j * cu.imag * u)
    dv = (eps / xi) * (dv_raw - cv * v + 0.5j * cv.imag * v)
    a, b = sys.lam_interval
    if a == b:
        dlam = 0.0
    else:
        gsum = 0.0
        for g, tau in zip(sys.g_mats, sys.delays):
            gsum += (phi.conj() @ g @ psi * np.exp(-s * tau)).real
        if (lam >= b and gsum > 0.0) or (lam <= a and gsum < 0.0):
            dlam = 0.0
        else:
            dlam = gsum / xi
    return du, dv, float(dlam)


def _pmat(sys, eps, u, v):
    if eps == 0.0:
        return None
    return sys.b_w @ (eps * np.outer(u, v.conj())) @ sys.c_z


def _random_unit(rng, size):
    vec = rng.normal(size=size) + 1j * rng.normal(size=size)
    return vec / np.linalg.norm(vec)


def auto_starts(sys, disc):
    """Initial (lambda0, u0, v0) triples.

    lambda0 sweeps {a, midpoint, b} (deduplicated); u0, v0 align the
    rank-one perturbation with the first-order growth direction at the
    nominal rightmost root: u0 prop B_w^T phi, v0 prop C_z psi.  Near-
    zero directions fall back to a seeded random unit pair.
    """
    a, b = sys.lam_interval
    lam0s = sorted({a, (a + b) / 2.0, b})
    starts = []
    for idx, lam0 in enumerate(lam0s):
        _, phi, psi, _ = rightmost_point(sys, lam0, disc)
        u0 = sys.b_w.T @ phi
        v0 = sys.c_z @ psi
        rng = np.random.default_rng(12345 + idx)
        nu = np.linalg.norm(u0)
        nv = np.linalg.norm(v0)
        u0 = u0 / nu if nu >= 1e-12 else _random_unit(rng, sys.m)
        v0 = v0 / nv if nv >= 1e-12 else _random_unit(rng, sys.p)
        starts.append((lam0, u0, v0))
    return starts


def _track_root(sys, eps, lam, u, v, s_prev, psi_prev):
    """Continue the tracked root to a trial point by Newton alone.

    Returns (s, phi, psi, xi) or None when Newton does not certify a
    root from the previous iterate.
    """
    pmat = _pmat(sys, eps, u, v)
    As = combined_mats(sys, lam)
    s, psi, ok = newton_refine(As, sys.delays, pmat, s_prev, psi_prev)
    if not ok:
        return None
    try:
        phi, psi, xi, _ = svd_triple(As, sys.delays, pmat, s)
    except DegenerateRootError:
        return None
    return s, phi, psi, xi


def _polish(sys, eps, lam, u, v, s, phi, psi, xi):
    """Fixed-point refinement of a terminal flow point.

    The Euler flow resolves alpha to its tolerance but leaves the
    optimizer location on a flat ridge, with scatter far above the
    nonsmooth-detection tolerance.  Alignment iteration on (u, v) with
    a guarded secant on the lambda-slope contracts onto the stationary
    point; every step is a tracked root, so the cost stays small.
    Returns the contracted point (s, phi, psi, xi, lam, u, v); its
    Re s can sit below the entry value by root-solver noise, never
    more, because flow endpoints carry noise-inflated Re s while the
    contraction target is the true stationary point.
    """
    a, b = sys.lam_interval
    entry = (s, phi, psi, xi, lam, u, v)
    entry_re = s.real
    lam_prev = None
    g_prev = None
    for _ in range(POLISH_MAX):
        if a == b:
            g = 0.0
        else:
            gsum = 0.0
            for gm, tau in zip(sys.g_mats, sys.delays):
                gsum += (phi.conj() @ gm @ psi * np.exp(-s * tau)).real
            g = gsum / xi
        lam_new = lam
        if g != 0.0:
            if lam_prev is not None and g != g_prev:
                lam_new = lam - g * (lam - lam_prev) / (g - g_prev)
            else:
                lam_new = lam + 0.01 * (b - a) * np.sign(g)
            step_cap = 0.1 * (b - a)
            if abs(lam_new - lam) > step_cap:
                lam_new = lam + step_cap * np.sign(lam_new - lam)
            lam_new = min(max(lam_new, a), b)
        u_new = (sys.b_w.T @ phi) * (psi.conj() @ sys.c_z.T @ v)
        v_new = (sys.c_z @ psi) * (phi.conj() @ sys.b_w @ u)
        nu = np.linalg.norm(u_new)
        nv = np.linalg.norm(v_new)
        if nu < 1e-14 or nv < 1e-14:
            break
        u_new = u_new / nu
        v_new = v_new / nv
        trial = _track_root(sys, eps, lam_new, u_new, v_new, s, psi)
        if trial is None:
            break
        s_new = trial[0]
        # transient dips of order curvature * offset^2 are part of the
        # contraction; only a clear drop means the basin was left
        if s_new.real < entry_re - 1e-7 * (1.0 + abs(s_new)):
            break
        lam_prev, g_prev = lam, g
        moved = abs(s_new - s) + abs(lam_new - lam)
        lam, u, v = lam_new, u_new, v_new
        s, phi, psi, xi = trial
        if moved <= 1e-13 * (1.0 + abs(s)):
            break
    if s.real >= entry_re - 1e-9 * (1.0 + abs(s)):
        return s, phi, psi, xi, lam, u, v
    return entry


def _run_start(sys, eps, start, cfg, disc, index):
    lam, u, v = start
    lam = float(np.clip(lam, *sys.lam_interval))
    u = np.asarray(u, dtype=complex) / np.linalg.norm(u)
    v = np.asarray(v, dtype=complex) / np.linalg.norm(v)
    a, b = sys.lam_interval

    s, phi, psi, xi = rightmost_point(sys, lam, disc, _pmat(sys, eps, u, v))
    iterates = [(0, s.real, s.imag, lam, 0.0)]
    h = cfg.h0
    h_cap = 10.0 * cfg.h0
    converged = False
    failed_first = False
    accepted_steps = 0
    anchored = 0

    def full_anchor():
        # Re-solve the discretized eigenproblem at the current point;
        # adopt its root when continuation has slipped off the
        # rightmost branch.
        nonlocal s, phi, psi, xi, anchored
        anchored = accepted_steps
        try:
            full = rightmost_point(sys, lam, disc, _pmat(sys, eps, u, v))
        except ConvergenceError:
            return False
        if full[0].real > s.real + 1e-12 * (1.0 + abs(s)):
            s, phi, psi, xi = full
            return True
        return False

    for k in range(1, cfg.max_iters + 1):
        du, dv, dlam = _derivatives(sys, eps, s, lam, u, v, phi, psi, xi)
        if np.linalg.norm(du) == 0.0 and np.linalg.norm(dv) == 0.0 and dlam == 0.0:
            converged = True
            break
        accepted = None
        while h >= cfg.h_min:
            lam_t = min(max(lam + h * dlam, a), b)
            u_t = u + h * du
            u_t /= np.linalg.norm(u_t)
            v_t = v + h * dv
            v_t /= np.linalg.norm(v_t)
            trial = _track_root(sys, eps, lam_t, u_t, v_t, s, psi)
            if trial is None:
                h *= 0.5
                continue
            if trial[0].real >= s.real:
                accepted = (lam_t, u_t, v_t, trial)
                break
            h *= 0.5
        if accepted is None:
            if accepted_steps > anchored and full_anchor():
                h = cfg.h0
                continue
            failed_first = k == 1
            break
        lam, u, v = accepted[0], accepted[1], accepted[2]
        s_prev = s
        s, phi, psi, xi = accepted[3]
        iterates.append((k, s.real, s.imag, lam, h))
        h = min(h * cfg.grow, h_cap)
        accepted_steps += 1
        if accepted_steps - anchored >= ANCHOR_EVERY:
            full_anchor()
        if abs(s - s_prev) <= cfg.rel_tol * abs(s + s_prev) / 2.0:
            if accepted_steps > anchored and full_anchor():
                continue
            converged = True
            break

    s, phi, psi, xi, lam, u, v = _polish(sys, eps, lam, u, v, s, phi, psi, xi)
    if s.real > iterates[-1][1]:
        iterates.append((iterates[-1][0] + 1, s.real, s.imag, lam, 0.0))

    pert = ComplexPerturbation(u=u, v=v, eps=eps)
    optimizer = SpectralPoint(s=s, lam=lam, pert=pert, phi=phi, psi=psi, xi=xi)
    record = StartRecord(
        index=index, iterates=tuple(iterates), converged=converged,
        optimizer=optimizer,
    )
    return record, failed_first


def _location(pt):
    return (pt.s.real, abs(pt.s.imag), pt.lam)


def _assemble(records, degenerate=False):
    best = max(records, key=lambda r: (r.alpha, -r.index))
    alpha = best.alpha
    top = [r for r in records if r.alpha >= alpha - ALPHA_TIE_TOL]
    nonsmooth = False
    for i in range(len(top)):
        for j in range(i + 1, len(top)):
            la, lb = _location(top[i].optimizer), _location(top[j].optimizer)
            if any(abs(x - y) > LOCATION_TOL for x, y in zip(la, lb)):
                nonsmooth = True
    return AbscissaResult(
        alpha=alpha,
        optimizer=best.optimizer,
        records=tuple(records),
        degenerate=degenerate,
        nonsmooth=nonsmooth,
    )


def pseudo_spectral_abscissa(sys, eps, cfg=None, root_req=None):
    """alpha_eps over all starts of the discretized flow.

    Per start, iteration stops when |s_k - s_{k-1}| <= rel_tol *
    |s_k + s_{k-1}| / 2, when no step h > h_min improves Re(s), or at
    max_iters.  If every start fails its first step the eps = 0
    abscissa is returned with the degenerate flag set.
    """
    if not eps >= 0.0:
        raise ValidationError(f"eps must be nonnegative, got {eps!r}")
    if cfg is None:
        cfg = FlowConfig()
    degree = root_req.disc_degree if root_req is not None else 20
    disc = Discretization(sys, degree)
    starts = cfg.starts
    if isinstance(starts, str):
        if starts != AUTO:
            raise ValidationError(f"unknown starts token {starts!r}")
        starts = auto_starts(sys, disc)
    starts = list(starts)
    if not starts:
        raise ValidationError("at least one start required")

    outcomes = ordered_map(
        lambda iv: _run_start(sys, eps, iv[1], cfg, disc, iv[0]),
        list(enumerate(starts)),
    )
    records = [rec for rec, _ in outcomes]
    if eps > 0.0 and all(failed for _, failed in outcomes):
        base = pseudo_spectral_abscissa(
            sys, 0.0, FlowConfig(
                h0=cfg.h0, h_min=cfg.h_min, grow=cfg.grow,
                rel_tol=cfg.rel_tol, max_iters=cfg.max_iters,
            ),
            root_req=root_req,
        )
        return AbscissaResult(
            alpha=base.alpha,
            optimizer=base.optimizer,
            records=base.records,
            degenerate=True,
            nonsmooth=base.nonsmooth,
        )
    return _assemble(records)


def alpha_eps_derivative(sys, eps, result):
    """d alpha / d eps at the converged optimizer (rank-one formula).

    Requires a unique optimizer; a result carrying the nonsmooth flag
    raises NonsmoothError so the radius search can fall back to pure
    bisection.
    """
    if result.nonsmooth:
        raise NonsmoothError(
            "alpha ties with distinct optimizer locations: derivative undefined"
        )
    pt = result.optimizer
    if abs(pt.pert.eps - eps) > 1e-9 * (1.0 + eps):
        raise ValidationError(
            f"result was computed at eps = {pt.pert.eps!r}, not {eps!r}"
        )
    xi_raw = _raw_xi(sys, pt)
    if xi_raw.real <= 0.0:
        raise NormalizationError(f"xi = {xi_raw!r} is not positive at the optimizer")
    num = (pt.phi.conj() @ sys.b_w @ pt.pert.u) * (
        pt.pert.v.conj() @ sys.c_z @ pt.psi
    )
    return float(num.real / xi_raw.real)
