"""Projected-gradient-flow pseudo-spectral abscissa.

Analytic anchors used here:
  - scalar dx/dt = -2x + w, z = x (no delay, no lambda): the perturbed
    characteristic function is s + 2 - eps u conj(v), so
    alpha(eps) = -2 + eps exactly and d alpha/d eps = 1.
  - scalar dx/dt = (-2 + lambda) x with lambda in [-1, 1]: nominal
    root s = -2 + lambda, so the lambda-flow alone must climb to -1.
"""

import numpy as np
import pytest

from conftest import random_stable_system
from delayhinf.errors import NonsmoothError, NormalizationError, ValidationError
from delayhinf.roots import eig_triple, spectral_abscissa
from delayhinf.svset import (
    FlowConfig,
    alpha_eps_derivative,
    flow_derivatives,
    pseudo_spectral_abscissa,
)
from delayhinf.sysmodel import ComplexPerturbation, SpectralPoint, UncertainDelaySystem


def scalar_shift():
    """dx/dt = -2x + w, z = x."""
    return UncertainDelaySystem(
        delays=(0.0,),
        h_mats=(np.array([[-2.0]]),),
        g_mats=(np.zeros((1, 1)),),
        b_w=np.array([[1.0]]),
        c_z=np.array([[1.0]]),
        interval=None,
    )


def scalar_lambda(gain=1.0, interval=(-1.0, 1.0)):
    """dx/dt = (-2 + gain*lambda) x."""
    return UncertainDelaySystem(
        delays=(0.0,),
        h_mats=(np.array([[-2.0]]),),
        g_mats=(np.array([[gain]]),),
        b_w=np.array([[1.0]]),
        c_z=np.array([[1.0]]),
        interval=interval,
    )


def unit_pert(eps=0.0):
    return ComplexPerturbation(u=np.array([1.0]), v=np.array([1.0]), eps=eps)


class TestFlowConfig:
    def test_h_min_below_h0(self):
        with pytest.raises(ValidationError):
            FlowConfig(h0=1e-9)

    def test_grow_above_one(self):
        with pytest.raises(ValidationError):
            FlowConfig(grow=0.9)


class TestFlowDerivatives:
    def test_stationary_point_du_vanishes(self):
        sys = scalar_shift()
        pt = SpectralPoint(
            s=-1.7, lam=0.0, pert=unit_pert(0.3),
            phi=np.array([1.0]), psi=np.array([1.0]), xi=1.0,
        )
        du, dv, dlam = flow_derivatives(pt, sys)
        assert np.linalg.norm(du) <= 1e-10
        assert np.linalg.norm(dv) <= 1e-10
        assert dlam == 0.0

    def test_tangency_on_random_triples(self, eq15):
        rng = np.random.default_rng(9)
        for _ in range(5):
            u = rng.normal(size=1) + 1j * rng.normal(size=1)
            u = u / np.linalg.norm(u)
            v = rng.normal(size=1) + 1j * rng.normal(size=1)
            v = v / np.linalg.norm(v)
            pert = ComplexPerturbation(u=u, v=v, eps=0.15)
            lam = float(rng.uniform(-1, 1))
            from delayhinf.roots import rightmost_roots

            s0 = rightmost_roots(eq15, lam, pert)[0]
            pt = eig_triple(eq15, lam, pert, s0)
            du, dv, _ = flow_derivatives(pt, eq15)
            assert abs((pt.pert.u.conj() @ du).real) <= 1e-10
            assert abs((pt.pert.v.conj() @ dv).real) <= 1e-10

    def test_clamp_at_upper_end(self):
        sys = scalar_lambda(gain=1.0)
        # root of s - (-2 + lambda) at lambda = 1: s = -1, phi = psi = 1
        pt = SpectralPoint(
            s=-1.0, lam=1.0, pert=unit_pert(0.0),
            phi=np.array([1.0]), psi=np.array([1.0]), xi=1.0,
        )
        _, _, dlam = flow_derivatives(pt, sys)
        assert dlam == 0.0  # gsum = +1 pushes outward, clamped

    def test_clamp_at_lower_end_negative_drift(self):
        sys = scalar_lambda(gain=-1.0)
        pt = SpectralPoint(
            s=-1.0, lam=-1.0, pert=unit_pert(0.0),
            phi=np.array([1.0]), psi=np.array([1.0]), xi=1.0,
        )
        _, _, dlam = flow_derivatives(pt, sys)
        assert dlam == 0.0

    def test_interior_drift_positive(self):
        sys = scalar_lambda(gain=1.0)
        pt = SpectralPoint(
            s=-2.0, lam=0.0, pert=unit_pert(0.0),
            phi=np.array([1.0]), psi=np.array([1.0]), xi=1.0,
        )
        _, _, dlam = flow_derivatives(pt, sys)
        assert dlam == pytest.approx(1.0, abs=1e-14)

    def test_zero_g_means_zero_dlam(self, eq15):
        sys = scalar_shift()
        pt = SpectralPoint(
            s=-2.0, lam=0.0, pert=unit_pert(0.0),
            phi=np.array([1.0]), psi=np.array([1.0]), xi=1.0,
        )
        assert flow_derivatives(pt, sys)[2] == 0.0

    def test_unnormalized_triple_rejected(self, eq15):
        from delayhinf.roots import rightmost_roots

        s0 = rightmost_roots(eq15, 0.2)[0]
        pt = eig_triple(eq15, 0.2, None, s0)
        skewed = SpectralPoint(
            s=pt.s, lam=pt.lam, pert=pt.pert,
            phi=pt.phi * 1j, psi=pt.psi, xi=pt.xi,
        )
        with pytest.raises(NormalizationError):
            flow_derivatives(skewed, eq15)


class TestAbscissa:
    def test_scalar_shift_alpha(self):
        sys = scalar_shift()
        res = pseudo_spectral_abscissa(sys, 1.0)
        assert res.alpha == pytest.approx(-1.0, abs=1e-8)
        assert not res.degenerate

    def test_eps_zero_no_uncertainty_matches_roots(self):
        sys = scalar_shift()
        res = pseudo_spectral_abscissa(sys, 0.0)
        assert res.alpha == pytest.approx(spectral_abscissa(sys, 0.0), abs=1e-12)

    def test_lambda_flow_climbs_to_interval_end(self):
        sys = scalar_lambda(gain=1.0)
        res = pseudo_spectral_abscissa(sys, 0.0)
        assert res.alpha == pytest.approx(-1.0, abs=1e-7)
        assert res.optimizer.lam == pytest.approx(1.0, abs=1e-7)

    def test_monotone_iterates_and_constraints(self, eq15):
        res = pseudo_spectral_abscissa(eq15, 0.15)
        for rec in res.records:
            res_parts = [row[1] for row in rec.iterates]
            assert all(
                b >= a for a, b in zip(res_parts, res_parts[1:])
            ), "Re s trace must be monotone"
            assert all(-1.0 <= row[3] <= 1.0 for row in rec.iterates)
            pt = rec.optimizer
            assert abs(np.linalg.norm(pt.pert.u) - 1.0) <= 1e-12
            assert abs(np.linalg.norm(pt.pert.v) - 1.0) <= 1e-12

    def test_eps_monotonicity_random(self):
        rng = np.random.default_rng(21)
        for _ in range(3):
            sys = random_stable_system(rng, n_max=3, r_max=1)
            values = [
                pseudo_spectral_abscissa(sys, e).alpha for e in (0.0, 0.25, 0.6)
            ]
            assert values[0] <= values[1] + 1e-8
            assert values[1] <= values[2] + 1e-8

    def test_degenerate_interval_fixed_lambda(self):
        sys = scalar_lambda(gain=1.0, interval=(0.25, 0.25))
        res = pseudo_spectral_abscissa(sys, 0.0)
        assert res.alpha == pytest.approx(-1.75, abs=1e-10)
        assert res.optimizer.lam == 0.25

    def test_explicit_starts(self, eq15):
        cfg = FlowConfig(starts=[(0.0, np.array([1.0]), np.array([1.0]))])
        res = pseudo_spectral_abscissa(eq15, 0.1, cfg)
        assert len(res.records) == 1

    def test_negative_eps_rejected(self, eq15):
        with pytest.raises(ValidationError):
            pseudo_spectral_abscissa(eq15, -0.1)


class TestEpsDerivative:
    def test_scalar_shift_derivative_is_one(self):
        sys = scalar_shift()
        res = pseudo_spectral_abscissa(sys, 0.5)
        d = alpha_eps_derivative(sys, 0.5, res)
        assert d == pytest.approx(1.0, abs=1e-8)

    def test_eq15_matches_central_difference(self, eq15):
        eps = 0.1
        delta = 1e-5
        tight = FlowConfig(rel_tol=1e-13, max_iters=4000)
        center = pseudo_spectral_abscissa(eq15, eps, tight)
        d_analytic = alpha_eps_derivative(eq15, eps, center)
        warm = [
            (r.optimizer.lam, r.optimizer.pert.u, r.optimizer.pert.v)
            for r in center.records
        ]
        cfg = FlowConfig(rel_tol=1e-13, max_iters=4000, starts=warm)
        hi = pseudo_spectral_abscissa(eq15, eps + delta, cfg)
        lo = pseudo_spectral_abscissa(eq15, eps - delta, cfg)
        d_fd = (hi.alpha - lo.alpha) / (2 * delta)
        assert d_analytic == pytest.approx(d_fd, rel=1e-4)

    def test_nonsmooth_flag_raises(self, eq15):
        res = pseudo_spectral_abscissa(eq15, 0.1)
        forced = type(res)(
            alpha=res.alpha,
            optimizer=res.optimizer,
            records=res.records,
            degenerate=False,
            nonsmooth=True,
        )
        with pytest.raises(NonsmoothError):
            alpha_eps_derivative(eq15, 0.1, forced)
