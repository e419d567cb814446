"""Rightmost characteristic roots via spectral discretization + Newton.

The infinitesimal generator of the solution operator is collocated on
Chebyshev nodes over [-tau_max, 0]; its eigenvalues approximate the
rightmost characteristic roots, which are then refined to full accuracy
by Newton iteration on a bordered system.  The public entry point
validates the reported roots by recomputing at doubled degree; the
solvers in svset/hinf reuse the fixed-degree fast path through a shared
Discretization object.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DegenerateRootError, ValidationError
from .sysmodel import ComplexPerturbation, SpectralPoint

MAX_DEGREE = 320
ROOT_MATCH_TOL = 1e-8
TIE_TOL = 1e-9


@dataclass(frozen=True)
class RootRequest:
    """Tuning knobs for the rightmost-root computation."""

    count: int = 5
    disc_degree: int = 20
    newton_tol: float = 1e-12
    max_newton: int = 30

    def __post_init__(self):
        if self.count < 1:
            raise ValidationError(f"count must be positive, got {self.count}")
        if self.disc_degree < 4:
            raise ValidationError(
                f"disc_degree must be at least 4, got {self.disc_degree}"
            )
        if not self.newton_tol > 0:
            raise ValidationError(f"newton_tol must be positive, got {self.newton_tol}")
        if self.max_newton < 1:
            raise ValidationError(f"max_newton must be positive, got {self.max_newton}")


def chebyshev_diff(degree):
    """Chebyshev points cos(j pi / N) and differentiation matrix."""
    n = degree
    x = np.cos(np.pi * np.arange(n + 1) / n)
    c = np.ones(n + 1)
    c[0] = 2.0
    c[n] = 2.0
    c *= (-1.0) ** np.arange(n + 1)
    dx = x[:, None] - x[None, :]
    d = np.outer(c, 1.0 / c) / (dx + np.eye(n + 1))
    d -= np.diag(d.sum(axis=1))
    return x, d


def combined_mats(sys, lam):
    """A_r = H_r + lambda G_r for each delay."""
    lam = sys.check_lambda(lam)
    return [h + lam * g for h, g in zip(sys.h_mats, sys.g_mats)]


def perturbation_matrix(sys, pert):
    """B_w Delta C_z as a dense matrix, or None when absent/zero."""
    if pert is None or pert.eps == 0.0:
        return None
    if pert.u.shape[0] != sys.m or pert.v.shape[0] != sys.p:
        raise ValidationError(
            f"perturbation shapes ({pert.u.shape[0]}, {pert.v.shape[0]}) "
            f"incompatible with (m, p) = ({sys.m}, {sys.p})"
        )
    return sys.b_w @ pert.delta @ sys.c_z


def char_mat(As, taus, s, pmat=None):
    m = s * np.eye(As[0].shape[0], dtype=complex)
    # exp overflows for trial points deep in the left half-plane; the
    # resulting non-finite matrix makes the caller reject the point
    with np.errstate(over="ignore", invalid="ignore"):
        for a, tau in zip(As, taus):
            m -= a * np.exp(-s * tau)
    if pmat is not None:
        m = m - pmat
    return m


def char_mat_deriv(As, taus, s):
    m = np.eye(As[0].shape[0], dtype=complex)
    with np.errstate(over="ignore", invalid="ignore"):
        for a, tau in zip(As, taus):
            if tau != 0.0:
                m += tau * a * np.exp(-s * tau)
    return m


class Discretization:
    """Collocation of the solution-operator generator at a fixed degree.

    Rows 1..N impose y' = s y at the interior/left nodes; row block 0
    imposes the delayed boundary condition sum_r A_r y(-tau_r) = s y(0)
    through barycentric Lagrange evaluation weights.  Everything except
    the boundary row is lambda/perturbation independent and precomputed.
    """

    def __init__(self, sys, degree):
        self.sys = sys
        self.degree = int(degree)
        self.tau_max = sys.delays[-1]
        n = sys.n
        if self.tau_max == 0.0:
            self.base = None
            self.lagrange = None
            return
        x, d = chebyshev_diff(self.degree)
        theta = (x - 1.0) * self.tau_max / 2.0
        d_mapped = d * (2.0 / self.tau_max)
        npts = self.degree + 1
        base = np.zeros((npts * n, npts * n))
        base[n:, :] = np.kron(d_mapped[1:, :], np.eye(n))
        self.base = base
        wts = (-1.0) ** np.arange(npts)
        wts[0] *= 0.5
        wts[-1] *= 0.5
        lagrange = []
        for tau in sys.delays:
            diff = -tau - theta
            hit = np.where(np.abs(diff) < 1e-13)[0]
            ell = np.zeros(npts)
            if len(hit):
                ell[hit[0]] = 1.0
            else:
                t = wts / diff
                ell = t / t.sum()
            lagrange.append(ell)
        self.lagrange = lagrange

    def eigenvalues(self, lam, pmat=None):
        """Spectrum of the discretized generator (root candidates)."""
        sys = self.sys
        n = sys.n
        As = combined_mats(sys, lam)
        if self.base is None:
            a_eff = As[0].astype(complex) if pmat is not None else As[0]
            if pmat is not None:
                a_eff = a_eff + pmat
            return np.linalg.eigvals(a_eff)
        dtype = complex if pmat is not None else float
        mat = self.base.astype(dtype) if pmat is not None else self.base.copy()
        row = np.zeros((n, mat.shape[1]), dtype=dtype)
        for a, ell in zip(As, self.lagrange):
            row += np.kron(ell, a)
        if pmat is not None:
            row[:, :n] += pmat
        mat[:n, :] = row
        return np.linalg.eigvals(mat)


def newton_refine(As, taus, pmat, s0, psi0=None, tol=1e-12, maxit=30):
    """Newton on the bordered system [M psi; w^H psi - 1] = 0.

    The normalization vector w is the previous iterate's psi.  Returns
    (s, psi, converged); psi is unit-norm on success.
    """
    n = As[0].shape[0]
    s = complex(s0)
    if psi0 is None:
        _, _, vh = np.linalg.svd(char_mat(As, taus, s, pmat))
        psi = vh[-1].conj()
    else:
        psi = np.asarray(psi0, dtype=complex)
        psi = psi / np.linalg.norm(psi)
    for _ in range(maxit):
        m0 = char_mat(As, taus, s, pmat)
        resid = m0 @ psi
        if np.linalg.norm(resid) <= tol * (1.0 + abs(s)):
            return s, psi / np.linalg.norm(psi), True
        w = psi
        jac = np.zeros((n + 1, n + 1), dtype=complex)
        jac[:n, :n] = m0
        jac[:n, n] = char_mat_deriv(As, taus, s) @ psi
        jac[n, :n] = w.conj()
        rhs = np.concatenate([-resid, [1.0 - w.conj() @ psi]])
        try:
            step = np.linalg.solve(jac, rhs)
        except np.linalg.LinAlgError:
            return s, psi, False
        if not np.all(np.isfinite(step)):
            return s, psi, False
        psi = psi + step[:n]
        nrm = np.linalg.norm(psi)
        if nrm == 0.0:
            return s, psi, False
        psi = psi / nrm
        s = s + step[n]
    m0 = char_mat(As, taus, s, pmat)
    ok = np.linalg.norm(m0 @ psi) <= tol * (1.0 + abs(s))
    return s, psi, ok


def svd_triple(As, taus, pmat, s):
    """Left/right null pair at a root, with xi made real positive.

    Returns (phi, psi, xi, sigma_min).  phi carries the phase rotation
    that makes xi = phi^H M'(s) psi real and positive.
    """
    m0 = char_mat(As, taus, s, pmat)
    u, sig, vh = np.linalg.svd(m0)
    psi = vh[-1].conj()
    phi = u[:, -1]
    xi_raw = phi.conj() @ char_mat_deriv(As, taus, s) @ psi
    scale = abs(xi_raw)
    if scale < 1e-12:
        raise DegenerateRootError(
            f"xi vanishes at s = {s!r}: root is numerically defective"
        )
    phi = phi * (xi_raw / scale)
    return phi, psi, float(scale), float(sig[-1])


def rightmost_point(sys, lam, disc, pmat=None, refine_k=7, tol=1e-12, maxit=30):
    """Fixed-degree rightmost root with certificate (internal fast path).

    Returns (s, phi, psi, xi).  Used by the gradient flow, which needs
    one rightmost point per trial step; no degree adaptation here.
    """
    As = combined_mats(sys, lam)
    taus = sys.delays
    ev = disc.eigenvalues(lam, pmat)
    cands = ev[np.argsort(-ev.real)][:refine_k]
    best = None
    for s0 in cands:
        s, psi, ok = newton_refine(As, taus, pmat, s0, tol=tol, maxit=maxit)
        if ok and (best is None or s.real > best.real + 1e-12):
            best = s
    if best is None:
        raise ConvergenceError(
            f"no discretization candidate refined at degree {disc.degree}",
            best=cands[0] if len(cands) else None,
        )
    phi, psi, xi, _ = svd_triple(As, taus, pmat, best)
    return best, phi, psi, xi


def _refined_root_set(sys, lam, pmat, disc, req):
    """Certified, deduplicated, representative-filtered, sorted roots."""
    As = combined_mats(sys, lam)
    taus = sys.delays
    ev = disc.eigenvalues(lam, pmat)
    if disc.base is None:
        roots = list(ev)
    else:
        refine_k = req.count + 6
        cands = ev[np.argsort(-ev.real)][:refine_k]
        roots = []
        for s0 in cands:
            s, psi, ok = newton_refine(
                As, taus, pmat, s0, tol=req.newton_tol, maxit=req.max_newton
            )
            if ok:
                roots.append(s)
        if not roots:
            raise ConvergenceError(
                f"no root certified at degree {disc.degree}",
                best=cands[0] if len(cands) else None,
            )
    # dedupe Newton runs that landed on the same root
    roots.sort(key=lambda s: (-s.real, s.imag))
    unique = []
    for s in roots:
        if all(abs(s - t) > 1e-9 * (1.0 + abs(s)) for t in unique):
            unique.append(s)
    # keep Im >= 0 representatives; unpaired negatives survive (complex
    # perturbations break conjugate symmetry)
    kept = []
    for s in unique:
        if s.imag < 0.0 and any(
            abs(np.conj(s) - t) <= 1e-8 * (1.0 + abs(s)) for t in unique
        ):
            continue
        kept.append(s)
    kept.sort(key=lambda s: -s.real)
    ordered = []
    i = 0
    while i < len(kept):
        j = i
        while j + 1 < len(kept) and kept[i].real - kept[j + 1].real <= TIE_TOL:
            j += 1
        ordered.extend(sorted(kept[i : j + 1], key=lambda s: abs(s.imag)))
        i = j + 1
    return ordered[: req.count]


def rightmost_roots(sys, lam, pert=None, req=None):
    """Rightmost characteristic roots of M(s; lambda, Delta).

    Roots are reported through Im(s) >= 0 representatives (conjugates
    implied for real systems), sorted by decreasing real part with ties
    within 1e-9 broken by ascending |Im|.  The reported set is validated
    by recomputation at doubled collocation degree; degrees beyond 320
    raise ConvergenceError carrying the best iterate.
    """
    if req is None:
        req = RootRequest()
    pmat = perturbation_matrix(sys, pert)
    if sys.delays[-1] == 0.0:
        disc = Discretization(sys, req.disc_degree)
        return _refined_root_set(sys, lam, pmat, disc, req)
    degree = req.disc_degree
    prev = _refined_root_set(sys, lam, pmat, Discretization(sys, degree), req)
    while True:
        if 2 * degree > MAX_DEGREE:
            raise ConvergenceError(
                f"root set unstable up to degree {degree}", best=prev
            )
        cur = _refined_root_set(sys, lam, pmat, Discretization(sys, 2 * degree), req)
        k = min(len(prev), len(cur))
        if k > 0 and all(abs(prev[i] - cur[i]) < ROOT_MATCH_TOL for i in range(k)):
            return cur
        degree *= 2
        prev = cur


def eig_triple(sys, lam, pert, s0, req=None):
    """Refine s0 to a SpectralPoint (root + null pair + xi certificate).

    Raises DegenerateRootError when the bordered Jacobian is singular or
    xi vanishes (numerically defective root), ConvergenceError when the
    Newton iteration stalls.
    """
    if req is None:
        req = RootRequest()
    lam = sys.check_lambda(lam)
    if pert is None:
        pert = ComplexPerturbation(
            u=np.eye(sys.m)[:, 0], v=np.eye(sys.p)[:, 0], eps=0.0
        )
    pmat = perturbation_matrix(sys, pert)
    As = combined_mats(sys, lam)
    taus = sys.delays
    s, psi, ok = newton_refine(
        As, taus, pmat, s0, tol=req.newton_tol, maxit=req.max_newton
    )
    if not ok:
        resid = np.linalg.norm(char_mat(As, taus, s, pmat) @ psi)
        if resid > 1e-6 * (1.0 + abs(s)):
            raise ConvergenceError(
                f"Newton stalled from s0 = {s0!r} (residual {resid:.2e})", best=s
            )
        raise DegenerateRootError(
            f"bordered Jacobian singular near s = {s!r}: root appears defective"
        )
    phi, psi, xi, _ = svd_triple(As, taus, pmat, s)
    point = SpectralPoint(s=s, lam=lam, pert=pert, phi=phi, psi=psi, xi=xi)
    return point.validate(sys)


def spectral_abscissa(sys, lam, pert=None, req=None):
    """Real part of the rightmost characteristic root."""
    return rightmost_roots(sys, lam, pert, req)[0].real
