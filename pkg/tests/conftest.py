"""Shared fixtures and random-instance generators for the test suite."""

import json

import numpy as np
import pytest

from delayhinf.network import controller_from_dict, plant_from_dict
from delayhinf.sysmodel import UncertainDelaySystem, load_system

try:
    from importlib.resources import files as _pkg_files
except ImportError:  # pragma: no cover
    _pkg_files = None


def fixture_path(name):
    return str(_pkg_files("delayhinf") / "fixtures" / name)


def _load_json(name):
    with open(fixture_path(name), "r", encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def eq15():
    return load_system(fixture_path("eq15.json"))


@pytest.fixture(scope="session")
def cart_plant():
    return plant_from_dict(_load_json("cart_plant.json"))


@pytest.fixture(scope="session")
def eq20_controller():
    return controller_from_dict(_load_json("eq20_controller.json"))


def random_stable_system(rng, n_max=4, r_max=2, interval=(-1.0, 1.0), margin=0.1):
    """Sample an uncertain delay system that is exponentially stable for
    every lambda in the interval.

    Stability is by construction: shift H_0 by -c I with c chosen from
    the log-norm bound  Re s <= mu2(A_0(lambda)) + sum_r ||A_r(lambda)||
    e^{-Re s tau_r},  so every characteristic root satisfies
    Re s < -margin for all admissible lambda.
    """
    n = int(rng.integers(1, n_max + 1))
    n_delays = int(rng.integers(1, r_max + 1))
    delays = [0.0] + sorted(rng.uniform(0.2, 1.5, size=n_delays).tolist())
    h_mats = [rng.uniform(-1.0, 1.0, (n, n)) for _ in delays]
    g_mats = [rng.uniform(-0.5, 0.5, (n, n)) for _ in delays]
    lam_mag = max(abs(interval[0]), abs(interval[1]))

    mu0 = np.linalg.eigvalsh((h_mats[0] + h_mats[0].T) / 2.0)[-1]
    mu0 += lam_mag * np.linalg.norm(g_mats[0], 2)
    tail = sum(
        np.linalg.norm(h, 2) + lam_mag * np.linalg.norm(g, 2)
        for h, g in zip(h_mats[1:], g_mats[1:])
    )
    growth = np.exp(margin * delays[-1])
    c = mu0 + growth * tail + margin
    h_mats[0] = h_mats[0] - c * np.eye(n)

    m = int(rng.integers(1, 3))
    p = int(rng.integers(1, 3))
    b_w = rng.uniform(-1.0, 1.0, (n, m))
    c_z = rng.uniform(-1.0, 1.0, (p, n))
    return UncertainDelaySystem(
        delays=tuple(delays),
        h_mats=tuple(h_mats),
        g_mats=tuple(g_mats),
        b_w=b_w,
        c_z=c_z,
        interval=interval,
    )
