"""Robust stability radius and H-infinity norms.

The robust H-infinity norm over lambda in [a, b] equals the reciprocal
of the robust stability radius: the smallest eps at which the spectral
value set touches the imaginary axis.  The radius is located by
Newton-bisection on eps -> alpha_eps, where each abscissa evaluation
re-seeds the gradient flow from every branch optimizer of the previous
evaluation (warm tracking across all starts, not just the incumbent
best, so no local branch is silently dropped), and the converged
radius is confirmed with a fresh cold-started evaluation merged by max.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from ._threads import ordered_map
from .errors import (
    ConvergenceError,
    InstabilityError,
    NonsmoothError,
    UnboundedRadiusError,
    ValidationError,
)
from .roots import Discretization, combined_mats
from .svset import (
    AUTO,
    FlowConfig,
    alpha_eps_derivative,
    auto_starts,
    pseudo_spectral_abscissa,
)
from .sysmodel import (
    ComplexPerturbation,
    SpectralPoint,
    UncertainDelaySystem,
    characteristic_matrix,
    sigma_max,
)

EPS_CAP = 2.0**64
EPS_FLOOR = 1e-14
ALPHA_TOL = 1e-8
BRACKET_REL = 1e-10
MAX_BISECT = 200


@dataclass(frozen=True)
class RadiusResult:
    """Smallest destabilizing perturbation level with its certificate."""

    radius: float
    critical_point: SpectralPoint
    bracket_history: tuple
    evaluations: int


@dataclass(frozen=True)
class NormResult:
    """Worst-case energy gain with the peak location."""

    norm: float
    peak_omega: float
    peak_lambda: float


def _conjugate_point(sys, pt):
    """Flip a spectral point to its Im(s) >= 0 representative.

    Valid because all system matrices are real: conjugating s, the null
    pair, and the rank-one perturbation yields another certified root
    with the same xi.
    """
    if pt.s.imag >= 0.0:
        return pt
    pert = ComplexPerturbation(
        u=pt.pert.u.conj(), v=pt.pert.v.conj(), eps=pt.pert.eps
    )
    return SpectralPoint(
        s=np.conj(pt.s), lam=pt.lam, pert=pert,
        phi=pt.phi.conj(), psi=pt.psi.conj(), xi=pt.xi,
    )


def _flow_cfg(cfg, starts):
    return FlowConfig(
        h0=cfg.h0, h_min=cfg.h_min, grow=cfg.grow,
        rel_tol=cfg.rel_tol, max_iters=cfg.max_iters, starts=starts,
    )


def _warm(result, cap=8):
    """Branch seeds from a previous evaluation, deduplicated by
    optimizer location and capped at the highest-alpha branches."""
    picked, keys = [], set()
    for rec in sorted(result.records, key=lambda r: -r.alpha):
        opt = rec.optimizer
        key = (
            round(opt.s.real, 5),
            round(abs(opt.s.imag), 5),
            round(opt.lam, 5),
        )
        if key in keys:
            continue
        keys.add(key)
        picked.append((opt.lam, opt.pert.u, opt.pert.v))
        if len(picked) == cap:
            break
    return picked


def _merge(a, b):
    if b.alpha > a.alpha:
        return b
    return a


def _transfer_gains(sys, omegas, lam):
    """sigma_1(T(j omega; lam)) on a frequency grid, NaN where singular."""
    jw = 1j * np.asarray(omegas, dtype=float)
    phases = np.exp(-np.outer(jw, sys.delays))
    As = np.stack(combined_mats(sys, lam))
    mats = jw[:, None, None] * np.eye(sys.n) - np.einsum(
        "wr,rij->wij", phases, As
    )
    gains = np.full(len(jw), np.nan)
    try:
        sol = np.linalg.solve(
            mats, np.broadcast_to(sys.b_w, (len(jw),) + sys.b_w.shape)
        )
        sv = np.linalg.svd(np.matmul(sys.c_z, sol), compute_uv=False)
        gains[:] = sv[..., 0]
    except np.linalg.LinAlgError:
        for i in range(len(jw)):
            try:
                tf = sys.c_z @ np.linalg.solve(mats[i], sys.b_w)
                gains[i] = np.linalg.svd(tf, compute_uv=False)[0]
            except np.linalg.LinAlgError:
                pass
    return gains


def _gain_peak_seeds(sys, top=4):
    """Flow starts aimed at the worst-case gain peaks.

    At a boundary crossing of the spectral value set the rank-one
    perturbation is formed from the singular vectors of the transfer
    function at the peak, so starts built that way target the branch
    that decides the radius even when spectrum-based starts drift to
    other local optima.  The frequency scan is logarithmic (plus zero)
    because matrix-norm bounds wildly overestimate where the dynamics
    live when gains are large; candidates are refined locally before
    taking the singular vectors.
    """
    a, b = sys.lam_interval
    if a == b:
        lams = np.array([a])
    else:
        mid, half = (a + b) / 2.0, (b - a) / 2.0
        lams = np.sort(mid + half * np.cos(np.pi * np.arange(7) / 6.0))
    scale = sum(np.linalg.norm(h, 2) for h in sys.h_mats)
    scale += max(abs(a), abs(b)) * sum(np.linalg.norm(g, 2) for g in sys.g_mats)
    w_cap = 4.0 * (1.0 + scale)
    omegas = np.concatenate([[0.0], np.geomspace(1e-2, w_cap, 120)])
    flat = []
    for lam in lams:
        gains = _transfer_gains(sys, omegas, lam)
        for i, (w, g) in enumerate(zip(omegas, gains)):
            if np.isfinite(g):
                flat.append((float(g), float(w), float(lam), i))
    flat.sort(reverse=True)
    seeds = []
    kept = []
    for gain, omega, lam, i in flat:
        close = any(
            abs(omega - w0) <= 0.15 * (1.0 + w0)
            and abs(lam - l0) <= max(1e-12, (b - a) / 10.0)
            for w0, l0 in kept
        )
        if close:
            continue
        lo = omegas[max(i - 1, 0)]
        hi = omegas[min(i + 1, len(omegas) - 1)]
        if hi > lo:
            opt = minimize_scalar(
                lambda w: -float(_transfer_gains(sys, [w], lam)[0]),
                bounds=(lo, hi),
                method="bounded",
                options={"xatol": 1e-6 * (1.0 + omega)},
            )
            if np.isfinite(opt.fun) and -opt.fun > gain:
                omega = float(opt.x)
        mats = characteristic_matrix(sys, 1j * omega, lam)
        try:
            tf = sys.c_z @ np.linalg.solve(mats, sys.b_w)
        except np.linalg.LinAlgError:
            continue
        left, _, right_h = np.linalg.svd(tf)
        seeds.append((lam, right_h[0].conj(), left[:, 0]))
        kept.append((omega, lam))
        if len(seeds) == top:
            break
    return seeds


def robust_stability_radius(sys, cfg=None, root_req=None, alpha_tol=ALPHA_TOL,
                            eps0=1.0):
    """Smallest eps with alpha_eps = 0, by bracketed Newton-bisection.

    The bracket starts at [0, eps_ub] with eps_ub found by doubling
    from eps0 (halving instead when eps0 already destabilizes, so a
    warm eps0 from a nearby problem costs two sweeps); doubling past
    2^64 raises UnboundedRadiusError.  A Newton step from the
    eps-derivative is used when it stays inside the bracket and the
    optimizer is smooth, otherwise the bracket is bisected.  Stops at
    |alpha| <= alpha_tol or bracket width <= 1e-10 (1 + eps).
    """
    if cfg is None:
        cfg = FlowConfig()
    if not (np.isfinite(eps0) and eps0 > 0.0):
        raise ValidationError(f"eps0 must be a positive real, got {eps0!r}")
    degree = root_req.disc_degree if root_req is not None else 20
    if cfg.starts is AUTO or (isinstance(cfg.starts, str) and cfg.starts == AUTO):
        base = auto_starts(sys, Discretization(sys, degree))
    else:
        base = list(cfg.starts)
    # every evaluation keeps the gain-peak starts in play so the branch
    # that decides the radius cannot be lost between evaluations
    seeds = _gain_peak_seeds(sys)

    def evaluate(eps, starts):
        cfg_eps = _flow_cfg(cfg, list(starts) + seeds)
        return pseudo_spectral_abscissa(sys, eps, cfg_eps, root_req)

    nominal = evaluate(0.0, base)
    history = [(0.0, nominal.alpha)]
    evaluations = 1
    if nominal.alpha >= 0.0:
        raise InstabilityError(
            f"nominal system is not exponentially stable over the interval "
            f"(alpha(0) = {nominal.alpha:.6e}); the radius is undefined"
        )

    warm = _warm(nominal)
    eps_lo, eps = 0.0, float(eps0)
    hi_res = None
    halving = False
    while True:
        res = evaluate(eps, warm)
        evaluations += 1
        history.append((eps, res.alpha))
        warm = _warm(res)
        if res.alpha >= 0.0:
            eps_hi, hi_res = eps, res
            if eps_lo > 0.0 or eps <= EPS_FLOOR:
                break
            halving = True
            eps *= 0.5
        else:
            eps_lo = eps
            if halving:
                break
            eps *= 2.0
            if eps > EPS_CAP:
                raise UnboundedRadiusError(
                    f"alpha stayed negative up to eps = {EPS_CAP:.3e}; "
                    "no bounded destabilizing perturbation found",
                    eps_cap=EPS_CAP,
                )

    cur_eps, cur = eps_hi, hi_res
    for _ in range(5):
        iters = 0
        while abs(cur.alpha) > alpha_tol and (eps_hi - eps_lo) > BRACKET_REL * (
            1.0 + cur_eps
        ):
            iters += 1
            if iters > MAX_BISECT:
                raise ConvergenceError(
                    f"radius bracket stalled after {MAX_BISECT} refinements",
                    best=cur_eps,
                )
            eps_next = None
            try:
                slope = alpha_eps_derivative(sys, cur_eps, cur)
                if slope > 0.0:
                    eps_next = cur_eps - cur.alpha / slope
            except NonsmoothError:
                eps_next = None
            if eps_next is None or not (eps_lo < eps_next < eps_hi):
                eps_next = 0.5 * (eps_lo + eps_hi)
            res = evaluate(eps_next, warm)
            evaluations += 1
            history.append((eps_next, res.alpha))
            warm = _warm(res)
            if res.alpha < 0.0:
                eps_lo = eps_next
            else:
                eps_hi = eps_next
            cur_eps, cur = eps_next, res

        # cold confirmation: fresh auto starts can only raise alpha
        conf = evaluate(cur_eps, base)
        evaluations += 1
        history.append((cur_eps, max(cur.alpha, conf.alpha)))
        if conf.alpha <= cur.alpha + 1e-12:
            break
        # a missed branch raised alpha at cur_eps, so every earlier
        # lower-bracket value is suspect; restart from the two points
        # that remain certified (stable nominal, crossing at cur_eps)
        # with the warm set now tracking both branches
        warm = _warm(cur) + _warm(conf)
        cur = _merge(cur, conf)
        eps_hi = cur_eps
        eps_lo = 0.0

    best = cur if cur.alpha >= conf.alpha else conf
    bound = max(alpha_tol, ALPHA_TOL) * (1.0 + cur_eps)
    if abs(best.alpha) > bound:
        raise ConvergenceError(
            f"|alpha| = {abs(best.alpha):.3e} at eps = {cur_eps:.12g} exceeds "
            f"the certificate bound {bound:.3e}",
            best=cur_eps,
        )
    point = _conjugate_point(sys, best.optimizer)
    return RadiusResult(
        radius=float(cur_eps),
        critical_point=point,
        bracket_history=tuple(history),
        evaluations=evaluations,
    )


def robust_hinf_norm(sys, cfg=None, root_req=None, alpha_tol=ALPHA_TOL):
    """Worst-case H-infinity norm over the uncertainty (1/radius)."""
    rad = robust_stability_radius(sys, cfg, root_req, alpha_tol)
    pt = rad.critical_point
    return NormResult(
        norm=1.0 / rad.radius,
        peak_omega=float(pt.s.imag),
        peak_lambda=float(pt.lam),
    )


def hinf_norm_fixed(sys, lam, cfg=None, root_req=None, alpha_tol=ALPHA_TOL):
    """H-infinity norm at a pinned lambda (degenerate interval reuse)."""
    lam = float(lam)
    fixed = UncertainDelaySystem(
        delays=sys.delays,
        h_mats=sys.h_mats,
        g_mats=sys.g_mats,
        b_w=sys.b_w,
        c_z=sys.c_z,
        interval=(lam, lam),
    )
    return robust_hinf_norm(fixed, cfg, root_req, alpha_tol)


def grid_oracle(sys, omega_max, n_omega, n_lambda):
    """Brute-force lower bound: max sigma_1(T(j omega; lambda)) over a
    uniform grid on [0, omega_max] x [a, b].

    Independent of the radius machinery (direct batched solves), so it
    cross-checks the solver.  Singular grid points are skipped; their
    count is reported through a warning.
    """
    if n_omega < 2 or n_lambda < 2:
        raise ValidationError("grid oracle needs n_omega, n_lambda >= 2")
    omegas = np.linspace(0.0, float(omega_max), int(n_omega))
    a, b = sys.lam_interval
    lams = np.linspace(a, b, int(n_lambda)) if a < b else np.array([a])
    jw = 1j * omegas
    phases = np.exp(-np.outer(jw, sys.delays))
    eye = np.eye(sys.n)
    rhs = np.broadcast_to(sys.b_w, (len(omegas),) + sys.b_w.shape)
    best = 0.0
    skipped = 0
    for lam in lams:
        As = np.stack(combined_mats(sys, lam))
        mats = jw[:, None, None] * eye - np.einsum("wr,rij->wij", phases, As)
        try:
            sol = np.linalg.solve(mats, rhs)
        except np.linalg.LinAlgError:
            sol = np.empty((len(omegas), sys.n, sys.m), dtype=complex)
            keep = np.ones(len(omegas), dtype=bool)
            for i in range(len(omegas)):
                try:
                    sol[i] = np.linalg.solve(mats[i], sys.b_w)
                except np.linalg.LinAlgError:
                    keep[i] = False
                    skipped += 1
            sol = sol[keep]
        if len(sol) == 0:
            continue
        tfs = np.matmul(sys.c_z, sol)
        sv = np.linalg.svd(tfs, compute_uv=False)
        best = max(best, float(sv[..., 0].max()))
    if skipped:
        warnings.warn(f"grid oracle skipped {skipped} singular grid points")
    return best


def worst_case_gain_curve(sys, omegas, n_lambda=21):
    """Per-frequency worst-case gain max_lambda sigma_1(T(j omega)).

    The inner maximization samples a Chebyshev grid on [a, b] and
    refines around the best sample with bounded scalar maximization
    (lambda resolved to 1e-8).
    """
    if n_lambda < 2:
        raise ValidationError("n_lambda must be at least 2")
    a, b = sys.lam_interval
    if a < b:
        t = np.cos(np.pi * np.arange(n_lambda) / (n_lambda - 1))
        lam_grid = np.sort((a + b) / 2.0 + (b - a) / 2.0 * t)
    else:
        lam_grid = np.array([a])

    def one(omega):
        s = 1j * float(omega)
        gains = [sigma_max(sys, s, lam) for lam in lam_grid]
        j = int(np.argmax(gains))
        gain = gains[j]
        if len(lam_grid) > 1:
            lo = lam_grid[max(j - 1, 0)]
            hi = lam_grid[min(j + 1, len(lam_grid) - 1)]
            if hi > lo:
                opt = minimize_scalar(
                    lambda lam: -sigma_max(sys, s, float(np.clip(lam, a, b))),
                    bounds=(lo, hi),
                    method="bounded",
                    options={"xatol": 1e-9},
                )
                gain = max(gain, float(-opt.fun))
        return (float(omega), float(gain))

    return ordered_map(one, list(omegas))
