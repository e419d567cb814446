"""Decentralized controller tuning by nonsmooth norm minimization.

The tunable entries of one local controller are optimized against the
worst-case H-infinity norm of the decoupled closed-loop subsystem.
That objective is locally Lipschitz but nonsmooth (peak frequency and
worst interconnection eigenvalue can coalesce), so every restart runs
BFGS with a weak Wolfe line search and finishes with gradient sampling
at shrinking radii.  Parameter points whose closed loop is unstable
evaluate to +inf; the line searches treat the sentinel as a failed
trial, which keeps iterates inside the stable region found by the
initializer.

Norm evaluations inside the optimizer run in a coarse mode (reduced
collocation degree, relaxed radius tolerance); the returned best point
is re-evaluated at full precision.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize as _slsqp_minimize

from ._threads import ordered_map
from .errors import (
    ConvergenceError,
    InstabilityError,
    NonsmoothError,
    NoStabilizerError,
    UnboundedRadiusError,
    ValidationError,
)
from .hinf import robust_hinf_norm, robust_stability_radius
from .network import MATRIX_ORDER, build_decoupled_subsystem
from .roots import RootRequest
from .svset import FlowConfig, pseudo_spectral_abscissa
from .sysmodel import characteristic_matrix

COARSE_DEGREE = 12
COARSE_ALPHA_TOL = 1e-5
COARSE_FLOW_ITERS = 300
COARSE_REL_TOL = 1e-7
SIGMA_GAP_TOL = 1e-8
LINE_SEARCH_MAX = 50
BACKTRACK_MAX = 25


@dataclass(frozen=True)
class SynthConfig:
    """Budget and tolerance knobs of the synthesis loop."""

    restarts: int = 5
    seed: int = 0
    max_iters: int = 1000
    grad_tol: float = 1e-6
    c1: float = 1e-4
    c2: float = 0.9
    sample_radii: tuple = (1e-2, 1e-4, 1e-6)
    stab_margin: float = 1e-3

    def __post_init__(self):
        if self.restarts < 1:
            raise ValidationError(f"restarts must be >= 1, got {self.restarts}")
        if self.max_iters < 1:
            raise ValidationError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.grad_tol > 0:
            raise ValidationError(f"grad_tol must be positive, got {self.grad_tol}")
        if not (0.0 < self.c1 < self.c2 < 1.0):
            raise ValidationError(
                f"need 0 < c1 < c2 < 1, got c1 = {self.c1}, c2 = {self.c2}"
            )
        if not self.sample_radii or any(not r > 0 for r in self.sample_radii):
            raise ValidationError("sample_radii must be positive reals")
        if not self.stab_margin > 0:
            raise ValidationError(
                f"stab_margin must be positive, got {self.stab_margin}"
            )


@dataclass(frozen=True)
class SynthesisResult:
    """Best parameters over restarts with per-restart progress traces."""

    p_star: np.ndarray
    objective: float
    traces: tuple
    stationarity: float


def _entry_gradients(plant, s, lam, left, right):
    """d/d(entry) of left^T A(s) right for each controller matrix.

    A(s) is the delay-weighted closed-loop coefficient sum; every
    tunable entry enters through exactly one rank-one block, so the
    per-matrix derivative grids are outer products scaled by the
    block's exp(-s tau) and lambda factors.
    """
    n = plant.n
    y_c = left[n:]
    c_p, c_c = right[:n], right[n:]
    yb = plant.b_u.T @ left[:n]
    cy = plant.c_y @ c_p
    e_u = np.exp(-s * plant.tau_u)
    e_nc = np.exp(-s * plant.tau_nc)
    return {
        "J": np.outer(y_c, c_c),
        "F": np.outer(y_c, cy),
        "Fn": lam * e_nc * np.outer(y_c, cy),
        "L": e_u * np.outer(yb, c_c),
        "K": e_u * np.outer(yb, cy),
        "Kn": lam * e_u * e_nc * np.outer(yb, cy),
    }


def _mask_ravel(template, blocks, scale):
    parts = [
        (scale * blocks[name]).real[sel]
        for name, sel in zip(MATRIX_ORDER, template.mask)
    ]
    return np.concatenate(parts) if parts else np.zeros(0)


def _peak_pair(sub, omega, lam):
    """Transfer row/column solves and singular triple at a gain peak."""
    s = 1j * float(omega)
    x = characteristic_matrix(sub, s, lam)
    tmat = sub.c_z @ np.linalg.solve(x, sub.b_w)
    umat, sig, vh = np.linalg.svd(tmat)
    u1 = umat[:, 0]
    v1 = vh[0].conj()
    col = np.linalg.solve(x, sub.b_w @ v1)
    row = np.linalg.solve(x.T, sub.c_z.T @ u1.conj())
    return s, sig, row, col


class _NormObjective:
    """Robust-norm value and peak gradient as a function of p."""

    def __init__(self, plant, template, coarse):
        self.plant = plant
        self.template = template
        self.eps0 = 1.0
        if coarse:
            # guidance-quality evaluations: gain-peak seeds only, relaxed
            # flow and radius tolerances; the caller re-evaluates the
            # accepted minimizer at full precision
            self.flow = FlowConfig(
                max_iters=COARSE_FLOW_ITERS, rel_tol=COARSE_REL_TOL, starts=[]
            )
            self.root_req = RootRequest(disc_degree=COARSE_DEGREE)
            self.alpha_tol = COARSE_ALPHA_TOL
        else:
            self.flow = None
            self.root_req = None
            self.alpha_tol = 1e-8

    def __call__(self, p):
        return self._eval(p, self.eps0, update=True)

    def batch_view(self):
        """Non-mutating evaluator pinned at the current bracket seed.

        Sampling batches may run on threads; a shared warm seed would
        make the evaluation order observable, so batch points all use
        the seed captured here.
        """
        eps = self.eps0
        return lambda p: self._eval(p, eps, update=False)

    def _eval(self, p, eps0, update):
        sub = build_decoupled_subsystem(self.plant, self.template.with_p(p))
        try:
            rad = robust_stability_radius(
                sub, self.flow, self.root_req, self.alpha_tol, eps0=eps0
            )
        except (InstabilityError, ConvergenceError):
            return np.inf, None
        except UnboundedRadiusError:
            return 0.0, np.zeros(np.asarray(p).size)
        if update:
            # seed the next bracket at this radius: nearby parameter
            # points have nearby radii, so doubling costs two sweeps
            self.eps0 = rad.radius
        pt = rad.critical_point
        s, _, row, col = _peak_pair(sub, pt.s.imag, pt.lam)
        grad = _mask_ravel(self.template, _entry_gradients(self.plant, s, pt.lam, row, col), 1.0)
        return 1.0 / rad.radius, grad


class _AbscissaObjective:
    """Spectral abscissa over the interval and its parameter gradient."""

    def __init__(self, plant, template):
        self.plant = plant
        self.template = template
        self.flow = FlowConfig(max_iters=COARSE_FLOW_ITERS)
        self.root_req = RootRequest(disc_degree=COARSE_DEGREE)

    def __call__(self, p):
        sub = build_decoupled_subsystem(self.plant, self.template.with_p(p))
        try:
            res = pseudo_spectral_abscissa(sub, 0.0, self.flow, self.root_req)
        except ConvergenceError:
            return np.inf, None
        opt = res.optimizer
        blocks = _entry_gradients(
            self.plant, opt.s, opt.lam, opt.phi.conj(), opt.psi
        )
        return res.alpha, _mask_ravel(self.template, blocks, 1.0 / opt.xi)


def objective(plant, template, p):
    """Worst-case closed-loop norm at p; +inf when not stabilizing."""
    value, _ = _NormObjective(plant, template, coarse=False)(p)
    return float(value)


def gradient(plant, template, p):
    """Norm gradient at p from the peak singular pair.

    Parameters
    ----------
    plant : NetworkedPlant
    template : ControllerParams
        Its mask selects which entries p addresses.
    p : array_like
        Tunable entry values, template.n_params long.

    Returns
    -------
    ndarray
        One component per tunable entry, in p order.

    Raises
    ------
    NonsmoothError
        When the largest singular value at the peak is not simple, so
        the derivative formula does not apply.
    """
    sub = build_decoupled_subsystem(plant, template.with_p(p))
    res = robust_hinf_norm(sub)
    s, sig, row, col = _peak_pair(sub, res.peak_omega, res.peak_lambda)
    if sig.size > 1 and sig[0] - sig[1] <= SIGMA_GAP_TOL * (1.0 + sig[0]):
        raise NonsmoothError(
            f"largest singular value is not simple at the peak "
            f"(gap {sig[0] - sig[1]:.3e}); use sampled gradients"
        )
    blocks = _entry_gradients(plant, s, res.peak_lambda, row, col)
    return _mask_ravel(template, blocks, 1.0)


def _heuristic_draw(plant, template, rng):
    # restart spread matched to the loop gains each block multiplies
    bu = 1.0 / (1.0 + np.linalg.norm(plant.b_u, 2))
    cy = 1.0 / (1.0 + np.linalg.norm(plant.c_y, 2))
    scales = {"J": 1.0, "F": cy, "Fn": cy, "L": bu, "K": bu, "Kn": bu}
    parts = [
        scales[name] * rng.uniform(-1.0, 1.0, size=int(sel.sum()))
        for name, sel in zip(MATRIX_ORDER, template.mask)
    ]
    return np.concatenate(parts) if parts else np.zeros(0)


def _ball_point(rng, dim):
    x = rng.standard_normal(dim)
    nrm = np.linalg.norm(x)
    if nrm == 0.0:
        return np.zeros(dim)
    return (rng.random() ** (1.0 / dim) / nrm) * x


def _line_search(fg, p, f, g, d, cfg):
    """Weak Wolfe step by bracketed bisection; None when no step holds."""
    gd = float(g @ d)
    if not gd < 0.0:
        return None
    lo, hi = 0.0, np.inf
    t = 1.0
    for _ in range(LINE_SEARCH_MAX):
        f_t, g_t = fg(p + t * d)
        if not np.isfinite(f_t) or f_t > f + cfg.c1 * t * gd:
            hi = t
        elif float(g_t @ d) < cfg.c2 * gd:
            lo = t
        else:
            return t, p + t * d, f_t, g_t
        t = 0.5 * (lo + hi) if np.isfinite(hi) else 2.0 * t
        if hi <= 1e-16:
            return None
    return None


def _bfgs_phase(fg, p, f, g, cfg, trace, target):
    dim = p.size
    hmat = np.eye(dim)
    for _ in range(cfg.max_iters):
        if target is not None and f <= target:
            break
        if np.linalg.norm(g) <= cfg.grad_tol:
            break
        hit = _line_search(fg, p, f, g, -(hmat @ g), cfg)
        if hit is None:
            break
        _, p_new, f_new, g_new = hit
        step = p_new - p
        dg = g_new - g
        sy = float(step @ dg)
        if sy > 1e-12 * np.linalg.norm(step) * np.linalg.norm(dg):
            rho = 1.0 / sy
            vmat = np.eye(dim) - rho * np.outer(step, dg)
            hmat = vmat @ hmat @ vmat.T + rho * np.outer(step, step)
        stalled = f - f_new <= 1e-14 * (1.0 + abs(f))
        p, f, g = p_new, f_new, g_new
        trace.append(f)
        if stalled:
            break
    return p, f, g


def _min_norm_element(grads):
    """Smallest vector in the convex hull of the sampled gradients."""
    gmat = np.stack(grads, axis=1)
    k = gmat.shape[1]
    if k == 1:
        return gmat[:, 0]
    qmat = gmat.T @ gmat
    res = _slsqp_minimize(
        lambda w: float(w @ qmat @ w),
        np.full(k, 1.0 / k),
        jac=lambda w: 2.0 * (qmat @ w),
        bounds=[(0.0, 1.0)] * k,
        constraints=[{
            "type": "eq",
            "fun": lambda w: float(w.sum() - 1.0),
            "jac": lambda w: np.ones_like(w),
        }],
        method="SLSQP",
        options={"maxiter": 200, "ftol": 1e-14},
    )
    w = np.clip(res.x, 0.0, None)
    total = w.sum()
    w = np.full(k, 1.0 / k) if total <= 0.0 else w / total
    return gmat @ w


def _sampling_phase(fg, p, f, g, cfg, rng, trace, target):
    """One min-norm descent step per sampling radius."""
    stationarity = float(np.linalg.norm(g))
    dim = p.size
    if dim == 0:
        return p, f, 0.0
    for rel in cfg.sample_radii:
        if target is not None and f <= target:
            break
        radius = rel * (1.0 + float(np.linalg.norm(p)))
        pts = [p] + [p + radius * _ball_point(rng, dim) for _ in range(2 * dim)]
        batch_fn = fg.batch_view() if hasattr(fg, "batch_view") else fg
        outs = ordered_map(batch_fn, pts)
        grads = [gq for fq, gq in outs if np.isfinite(fq) and gq is not None]
        if not grads:
            continue
        gmin = _min_norm_element(grads)
        stationarity = float(np.linalg.norm(gmin))
        if stationarity <= cfg.grad_tol:
            continue
        direction = -gmin / stationarity
        t = radius
        for _ in range(BACKTRACK_MAX):
            f_t, g_t = fg(p + t * direction)
            if np.isfinite(f_t) and f_t < f - cfg.c1 * t * stationarity:
                p = p + t * direction
                f, g = f_t, g_t
                trace.append(f)
                break
            t *= 0.5
    return p, f, stationarity


def _descend(fg, p, cfg, rng, trace, target=None):
    f, g = fg(p)
    if not np.isfinite(f):
        return p, f, np.inf
    trace.append(f)
    if target is not None and f <= target:
        return p, f, float(np.linalg.norm(g))
    p, f, g = _bfgs_phase(fg, p, f, g, cfg, trace, target)
    return _sampling_phase(fg, p, f, g, cfg, rng, trace, target)


def _stabilize_from(plant, template, p0, cfg, rng):
    fg = _AbscissaObjective(plant, template)
    target = -cfg.stab_margin
    best_alpha = np.inf
    best_p = None
    p_try = np.asarray(p0, dtype=float).ravel()
    for attempt in range(cfg.restarts):
        alpha0, _ = fg(p_try)
        if alpha0 <= target:
            return p_try
        p_new, alpha, _ = _descend(fg, p_try, cfg, rng, [], target)
        if alpha < best_alpha:
            best_alpha, best_p = alpha, p_new
        if alpha <= target:
            return p_new
        p_try = _heuristic_draw(plant, template, rng)
    raise NoStabilizerError(
        f"no parameters reached abscissa <= {target:.3e} after "
        f"{cfg.restarts} attempts (best {best_alpha:.6e})",
        best_abscissa=best_alpha,
        best_params=best_p,
    )


def stabilize(plant, template, p0, cfg=None):
    """Parameters with interval spectral abscissa <= -stab_margin.

    Starts from p0 (returned unchanged when already stable enough),
    descending the abscissa with the synthesis optimizer; further
    attempts restart from heuristic random draws.
    """
    cfg = SynthConfig() if cfg is None else cfg
    rng = np.random.default_rng([cfg.seed, 104729])
    return _stabilize_from(plant, template, p0, cfg, rng)


def synthesize(plant, template, cfg=None):
    """Minimize the worst-case closed-loop norm over the template mask.

    Every restart stabilizes its start point, minimizes the coarse
    objective by BFGS plus gradient sampling, and records the accepted
    objective values.  The best restart's parameters are re-evaluated
    at full precision.

    Parameters
    ----------
    plant : NetworkedPlant
    template : ControllerParams
        Mask must select at least one tunable entry.
    cfg : SynthConfig, optional

    Returns
    -------
    SynthesisResult

    Raises
    ------
    NoStabilizerError
        When no restart finds a stabilizing start point.
    """
    cfg = SynthConfig() if cfg is None else cfg
    if template.n_params == 0:
        raise ValidationError("template mask selects no tunable entries")
    coarse = _NormObjective(plant, template, coarse=True)
    candidates = []
    traces = []
    for k in range(cfg.restarts):
        rng = np.random.default_rng([cfg.seed, k])
        p0 = template.p if k == 0 else _heuristic_draw(plant, template, rng)
        try:
            p_s = _stabilize_from(plant, template, p0, cfg, rng)
        except NoStabilizerError:
            traces.append(())
            continue
        trace = []
        p_k, f_k, stat_k = _descend(coarse, p_s, cfg, rng, trace)
        traces.append(tuple(trace))
        if np.isfinite(f_k):
            candidates.append((float(f_k), k, p_k, float(stat_k)))
    if not candidates:
        raise NoStabilizerError(
            f"all {cfg.restarts} restarts failed to find a stabilizing point"
        )
    _, _, p_best, stat_best = min(candidates, key=lambda c: (c[0], c[1]))
    p_best = np.array(p_best)
    p_best.setflags(write=False)
    full_value, _ = _NormObjective(plant, template, coarse=False)(p_best)
    return SynthesisResult(
        p_star=p_best,
        objective=float(full_value),
        traces=tuple(traces),
        stationarity=stat_best,
    )
