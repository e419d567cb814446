"""System model: construction invariants, evaluation, JSON round trips.

Hand-checked values for the two-delay worked example (fixtures/eq15.json):
at s = 0, lambda = 0 the characteristic matrix is
    -(H_0 + H_1) = [[8, -2], [-2, 4]],
and with adj([[8,-2],[-2,4]]) = [[4,2],[2,8]], det = 28:
    T(0; 0) = Cz adj(M) Bw / det = (2*(-2) + 5*(-22)) / 28 = -57/14.
"""

import json

import numpy as np
import pytest

from conftest import fixture_path, random_stable_system
from delayhinf.errors import ParseError, SingularMatrixError, ValidationError
from delayhinf.sysmodel import (
    ComplexPerturbation,
    SpectralPoint,
    UncertainDelaySystem,
    characteristic_matrix,
    characteristic_matrix_derivative,
    load_system,
    save_system,
    sigma_max,
    system_from_dict,
    system_to_dict,
    transfer_eval,
)


def scalar_system(a0=-2.0, interval=(-1.0, 1.0)):
    return UncertainDelaySystem(
        delays=(0.0,),
        h_mats=(np.array([[a0]]),),
        g_mats=(np.array([[0.0]]),),
        b_w=np.array([[1.0]]),
        c_z=np.array([[1.0]]),
        interval=interval,
    )


class TestConstruction:
    def test_basic_properties(self, eq15):
        assert eq15.n == 2
        assert eq15.m == 1
        assert eq15.p == 1
        assert eq15.delays == (0.0, 1.0)
        assert eq15.interval == (-1.0, 1.0)

    def test_delays_must_start_at_zero(self):
        with pytest.raises(ValidationError, match="exactly 0"):
            UncertainDelaySystem(
                delays=(0.5, 1.0),
                h_mats=(np.eye(1), np.eye(1)),
                g_mats=(np.zeros((1, 1)), np.zeros((1, 1))),
                b_w=np.eye(1),
                c_z=np.eye(1),
                interval=(0.0, 1.0),
            )

    def test_delays_strictly_increasing(self):
        with pytest.raises(ValidationError, match="strictly increasing"):
            UncertainDelaySystem(
                delays=(0.0, 1.0, 1.0),
                h_mats=(np.eye(1),) * 3,
                g_mats=(np.zeros((1, 1)),) * 3,
                b_w=np.eye(1),
                c_z=np.eye(1),
                interval=(0.0, 1.0),
            )

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            UncertainDelaySystem(
                delays=(0.0,),
                h_mats=(np.eye(2),),
                g_mats=(np.zeros((2, 2)),),
                b_w=np.ones((3, 1)),
                c_z=np.ones((1, 2)),
                interval=(0.0, 1.0),
            )

    def test_interval_order(self):
        with pytest.raises(ValidationError, match="a <= b"):
            scalar_system(interval=(1.0, -1.0))

    def test_lambda_free_requires_zero_g(self):
        with pytest.raises(ValidationError, match="lambda-free"):
            UncertainDelaySystem(
                delays=(0.0,),
                h_mats=(np.eye(1),),
                g_mats=(np.eye(1),),
                b_w=np.eye(1),
                c_z=np.eye(1),
                interval=None,
            )

    def test_lambda_free_interval_property(self):
        sys = UncertainDelaySystem(
            delays=(0.0,),
            h_mats=(-np.eye(1),),
            g_mats=(np.zeros((1, 1)),),
            b_w=np.eye(1),
            c_z=np.eye(1),
            interval=None,
        )
        assert sys.lam_interval == (0.0, 0.0)

    def test_matrices_read_only(self, eq15):
        with pytest.raises(ValueError):
            eq15.b_w[0, 0] = 5.0


class TestPerturbation:
    def test_unit_norm_enforced(self):
        with pytest.raises(ValidationError, match="unit norm"):
            ComplexPerturbation(u=np.array([2.0]), v=np.array([1.0]), eps=1.0)

    def test_negative_eps_rejected(self):
        with pytest.raises(ValidationError, match="nonnegative"):
            ComplexPerturbation(u=np.array([1.0]), v=np.array([1.0]), eps=-0.5)

    def test_delta_rank_one(self):
        rng = np.random.default_rng(7)
        u = rng.normal(size=3) + 1j * rng.normal(size=3)
        u /= np.linalg.norm(u)
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        v /= np.linalg.norm(v)
        pert = ComplexPerturbation(u=u, v=v, eps=0.3)
        delta = pert.delta
        assert delta.shape == (3, 2)
        assert np.linalg.matrix_rank(delta) == 1
        assert np.linalg.norm(delta, 2) == pytest.approx(0.3, abs=1e-14)


class TestCharacteristicMatrix:
    def test_eq15_at_origin(self, eq15):
        mmat = characteristic_matrix(eq15, 0.0, 0.0)
        assert np.allclose(mmat, [[8.0, -2.0], [-2.0, 4.0]], atol=1e-14)

    def test_lambda_outside_interval_raises(self, eq15):
        with pytest.raises(ValidationError, match="outside"):
            characteristic_matrix(eq15, 0.0, 1.0 + 1e-6)

    def test_lambda_within_tolerance_accepted(self, eq15):
        characteristic_matrix(eq15, 0.0, 1.0 + 0.5e-12)

    def test_perturbation_term(self, eq15):
        pert = ComplexPerturbation(u=np.array([1.0]), v=np.array([1.0]), eps=0.25)
        base = characteristic_matrix(eq15, 0.3 + 1j, 0.5)
        full = characteristic_matrix(eq15, 0.3 + 1j, 0.5, pert)
        expected = base - 0.25 * eq15.b_w @ eq15.c_z
        assert np.allclose(full, expected, atol=1e-14)

    def test_perturbation_dim_mismatch(self, eq15):
        bad = ComplexPerturbation(
            u=np.array([1.0, 0.0]), v=np.array([1.0]), eps=1.0
        )
        with pytest.raises(ValidationError, match="perturbation"):
            characteristic_matrix(eq15, 0.0, 0.0, bad)

    def test_derivative_matches_finite_difference(self, eq15):
        s0 = 0.2 + 0.9j
        d = 1e-7
        fd = (
            characteristic_matrix(eq15, s0 + d, 0.3)
            - characteristic_matrix(eq15, s0 - d, 0.3)
        ) / (2 * d)
        an = characteristic_matrix_derivative(eq15, s0, 0.3)
        assert np.allclose(fd, an, atol=1e-6)


class TestTransfer:
    def test_eq15_dc_gain(self, eq15):
        t = transfer_eval(eq15, 0.0, 0.0)
        assert t.shape == (1, 1)
        assert t[0, 0] == pytest.approx(-57.0 / 14.0, rel=1e-12)
        assert sigma_max(eq15, 0.0, 0.0) == pytest.approx(57.0 / 14.0, rel=1e-12)

    def test_scalar_frequency_response(self):
        # dx/dt = -2x + w, z = x: T(jw) = 1/(jw + 2)
        sys = scalar_system()
        for w in (0.0, 1.0, 5.5):
            val = transfer_eval(sys, 1j * w, 0.0)[0, 0]
            assert val == pytest.approx(1.0 / (1j * w + 2.0), rel=1e-14)

    def test_singular_point_raises_with_location(self):
        sys = scalar_system()
        with pytest.raises(SingularMatrixError) as err:
            transfer_eval(sys, -2.0, 0.0)
        assert err.value.s == pytest.approx(-2.0)

    def test_random_system_solve_identity(self):
        rng = np.random.default_rng(11)
        sys = random_stable_system(rng)
        s = 0.1 + 2.3j
        lam = 0.4
        t = transfer_eval(sys, s, lam)
        mmat = characteristic_matrix(sys, s, lam)
        assert np.allclose(sys.c_z @ np.linalg.solve(mmat, sys.b_w), t, atol=1e-12)


class TestSpectralPoint:
    def test_xi_positive_enforced(self):
        pert = ComplexPerturbation(u=np.array([1.0]), v=np.array([1.0]), eps=0.0)
        with pytest.raises(ValidationError, match="positive"):
            SpectralPoint(
                s=0.0, lam=0.0, pert=pert,
                phi=np.array([1.0]), psi=np.array([1.0]), xi=-1.0,
            )

    def test_residual_validation(self):
        # dx/dt = -x: root at s = -1, phi = psi = 1, xi = 1
        sys = scalar_system(a0=-1.0)
        pert = ComplexPerturbation(u=np.array([1.0]), v=np.array([1.0]), eps=0.0)
        pt = SpectralPoint(
            s=-1.0, lam=0.0, pert=pert,
            phi=np.array([1.0]), psi=np.array([1.0]), xi=1.0,
        )
        pt.validate(sys)
        bad = SpectralPoint(
            s=-0.9, lam=0.0, pert=pert,
            phi=np.array([1.0]), psi=np.array([1.0]), xi=1.0,
        )
        with pytest.raises(ValidationError, match="residual"):
            bad.validate(sys)


class TestPersistence:
    def test_round_trip_lossless(self, tmp_path):
        rng = np.random.default_rng(3)
        sys = random_stable_system(rng)
        path = tmp_path / "sys.json"
        save_system(sys, str(path))
        back = load_system(str(path))
        assert back.delays == sys.delays
        for a, b in zip(back.h_mats, sys.h_mats):
            assert np.array_equal(a, b)
        for a, b in zip(back.g_mats, sys.g_mats):
            assert np.array_equal(a, b)
        assert np.array_equal(back.b_w, sys.b_w)
        assert np.array_equal(back.c_z, sys.c_z)
        assert back.interval == sys.interval

    def test_lambda_free_round_trip(self, tmp_path):
        sys = UncertainDelaySystem(
            delays=(0.0, 0.7),
            h_mats=(-2 * np.eye(2), 0.1 * np.eye(2)),
            g_mats=(np.zeros((2, 2)), np.zeros((2, 2))),
            b_w=np.eye(2),
            c_z=np.eye(2),
            interval=None,
        )
        path = tmp_path / "sys.json"
        save_system(sys, str(path))
        assert load_system(str(path)).interval is None

    def test_missing_field_names_it(self, tmp_path):
        doc = system_to_dict(load_system(fixture_path("eq15.json")))
        del doc["Bw"]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(ParseError) as err:
            load_system(str(path))
        assert err.value.field == "Bw"

    def test_non_numeric_field_names_it(self):
        doc = {
            "delays": [0.0],
            "H": [[["x"]]],
            "G": [[[0.0]]],
            "Bw": [[1.0]],
            "Cz": [[1.0]],
            "interval": [0.0, 1.0],
        }
        with pytest.raises(ParseError) as err:
            system_from_dict(doc)
        assert err.value.field == "H[0]"

    def test_invalid_json_is_parse_error(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ParseError):
            load_system(str(path))

    def test_invariant_violation_is_validation_error(self, tmp_path):
        doc = system_to_dict(load_system(fixture_path("eq15.json")))
        doc["delays"] = [0.5, 1.0]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(ValidationError):
            load_system(str(path))

    def test_eq15_fixture_contents(self, eq15):
        assert np.array_equal(eq15.h_mats[0], [[-5.0, 3.0], [2.0, -6.0]])
        assert np.array_equal(eq15.g_mats[1], [[1.0, 1.0], [-1.0, 1.0]])
        assert np.array_equal(eq15.b_w, [[1.0], [-3.0]])
        assert np.array_equal(eq15.c_z, [[2.0, 5.0]])
