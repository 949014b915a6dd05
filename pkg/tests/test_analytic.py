from __future__ import annotations

import numpy as np
import pytest

from varimorph.analytic import (
    _trapezoid_weights,
    alpha_tilde_path,
    gamma_limit_costs,
    geodesic_dirac0,
    geodesic_dirac1,
    implicit_nu_residual,
    optimal_eta_fixed_flow,
    weight_control_cost,
)
from varimorph.errors import AntipodalDirections, InvalidWeights, NonPositiveJacobian
from varimorph.kernels import DeformKernelSpec

K = DeformKernelSpec(1.0)  # tau = 1/2


def _chi(tau, gamma, r0):
    return np.sqrt(1 + tau / (gamma * r0))


class TestDirac0:
    def test_trivial(self):
        g = geodesic_dirac0([1.0, 2.0], 0.7, [1.0, 2.0], 0.7, 3.0)
        assert g.cost == 0.0
        x, r = g(np.linspace(0, 1, 5))
        np.testing.assert_allclose(r, 0.7)

    def test_growth(self):
        g = geodesic_dirac0([0, 0], 1.0, [0, 0], 4.0, 1.0)
        assert g.cost == pytest.approx(2.0)
        assert g(0.5)[1] == pytest.approx(2.25)

    def test_vanishing(self):
        g = geodesic_dirac0([0, 0], 1.0, [0, 0], 0.0, 1.0)
        assert g.cost == pytest.approx(2.0)
        t = np.linspace(0, 1, 11)
        np.testing.assert_allclose(g(t)[1], (1 - t) ** 2)

    def test_invalid(self):
        with pytest.raises(InvalidWeights):
            geodesic_dirac0([0, 0], 0.0, [0, 0], 1.0, 1.0)


ROTATING_PAIR = dict(x0=[0.0, 0.0], u0=[1.0, 0.0], r0=0.5, x1=[1.0, 0.0], u1=[0.0, 1.0], r1=1.0)


def rotating_pair(gamma):
    return geodesic_dirac1(ROTATING_PAIR["x0"], ROTATING_PAIR["u0"], ROTATING_PAIR["r0"], ROTATING_PAIR["x1"], ROTATING_PAIR["u1"], ROTATING_PAIR["r1"], gamma, K)


class TestDirac1:
    def test_trivial(self):
        g = geodesic_dirac1([0, 0], [1, 0], 1.0, [0, 0], [1, 0], 1.0, 1.0, K)
        assert g.cost == 0.0

    def test_half_to_unit_weight_instance(self):
        # branch 0 < r0 <= r1, evaluated by hand: chi = sqrt(1 + tau/(gamma r0)),
        # nu = ln( sqrt(r1/r0) (1 + sqrt(1 + (r0/r1)(chi^2 - 1))) / (chi + 1) )
        gamma, tau = 10.0, 0.5
        chi = _chi(tau, gamma, 0.5)
        nu = np.log(np.sqrt(2.0) * (1 + np.sqrt(1 + 0.5 * (chi**2 - 1))) / (chi + 1))
        g = rotating_pair(gamma)
        assert g.params.chi == pytest.approx(chi)
        assert g.params.nu == pytest.approx(nu, rel=1e-12)
        assert g.params.theta == pytest.approx(np.pi / 2)
        assert g.cost == pytest.approx(0.5 + tau / 2 * (np.pi / 2) ** 2 + 2 * tau * nu**2, rel=1e-12)
        assert g.cost == pytest.approx(1.2288972098015145, rel=1e-12)

    def test_half_to_unit_weight_frozen_values(self):
        # frozen from the branch formula at sigma_V = 1
        expect = {0.001: 1.1170215958718461, 10.0: 1.2288972098015145, 200.0: 1.2365319144857019}
        for gamma, cost in expect.items():
            assert rotating_pair(gamma).cost == pytest.approx(cost, rel=1e-12)

    def test_vanishing_target(self):
        gamma, r0 = 2.0, 1.5
        g = geodesic_dirac1([0, 0], [1, 0], r0, [0, 0], [1, 0], 0.0, gamma, K)
        chi = _chi(0.5, gamma, r0)
        assert abs(g.params.nu) == pytest.approx(abs(-0.5 * np.log((chi - 1) / (chi + 1))), rel=1e-12)
        assert g(1.0)[2] == pytest.approx(0.0, abs=1e-15)

    def test_endpoints_and_positivity(self, rng):
        for _ in range(20):
            a, b = rng.normal(size=(2, 2))
            u0, u1 = a / np.linalg.norm(a), b / np.linalg.norm(b)
            if u0 @ u1 < -0.99:
                continue
            r0, r1 = rng.uniform(0.1, 3.0, 2)
            x0, x1 = rng.normal(size=(2, 2))
            g = geodesic_dirac1(x0, u0, r0, x1, u1, r1, rng.uniform(0.01, 10), K)
            t = np.linspace(0, 1, 1001)
            x, u, r = g(t)
            assert r[0] == pytest.approx(r0, rel=1e-12) and r[-1] == pytest.approx(r1, rel=1e-12)
            np.testing.assert_allclose(x[[0, -1]], [x0, x1], atol=1e-14)
            np.testing.assert_allclose(u[[0, -1]], [u0, u1], atol=1e-12)
            assert np.all(r >= 0)

    def test_symmetry(self, rng):
        for _ in range(20):
            a, b = rng.normal(size=(2, 3))
            u0, u1 = a / np.linalg.norm(a), b / np.linalg.norm(b)
            r0, r1 = rng.uniform(0.1, 3.0, 2)
            x0, x1 = rng.normal(size=(2, 3))
            gamma = rng.uniform(0.01, 10)
            fwd = geodesic_dirac1(x0, u0, r0, x1, u1, r1, gamma, K)
            bwd = geodesic_dirac1(x1, u1, r1, x0, u0, r0, gamma, K)
            assert fwd.cost == pytest.approx(bwd.cost, abs=1e-10)

    def test_equal_weights_branch(self):
        g = geodesic_dirac1([0, 0], [1, 0], 0.8, [1, 1], [0, 1], 0.8, 1.0, K)
        assert g.params.nu == 0.0
        np.testing.assert_allclose(g(np.linspace(0, 1, 7))[2], 0.8)
        assert g.cost == pytest.approx(1.0 + 0.25 * (np.pi / 2) ** 2)

    def test_theta_zero_keeps_direction(self):
        g = geodesic_dirac1([0, 0], [0, 1], 1.0, [1, 0], [0, 1], 2.0, 1.0, K)
        np.testing.assert_allclose(g(np.linspace(0, 1, 5))[1], [[0, 1]] * 5)

    def test_errors(self):
        with pytest.raises(AntipodalDirections):
            geodesic_dirac1([0, 0], [1, 0], 1, [0, 0], [-1, 0], 1, 1, K)
        with pytest.raises(InvalidWeights):
            geodesic_dirac1([0, 0], [1, 0], 1, [0, 0], [0, 1], -1, 1, K)
        with pytest.raises(ValueError):
            geodesic_dirac1([0, 0], [2, 0], 1, [0, 0], [0, 1], 1, 1, K)

    def test_implicit_relation(self, rng):
        for r0, r1 in [(0.5, 1.0), (1.0, 0.5), (2.0, 0.1), (0.3, 3.0)]:
            gamma = rng.uniform(0.05, 5)
            g = geodesic_dirac1([0, 0], [1, 0], r0, [0, 0], [1, 0], r1, gamma, K)
            res = implicit_nu_residual(g.params.nu, r0, r1, g.params.chi)
            assert abs(res) < 1e-10
            assert abs(implicit_nu_residual(-g.params.nu, r0, r1, g.params.chi)) > 1e-3

    def test_implicit_relation_near_equal_weights(self):
        # as r1 -> r0 the solution nu -> 0 and the relation stays satisfied
        r0, gamma = 1.0, 1.0
        chi = _chi(0.5, gamma, r0)
        for eps in (1e-2, 1e-4, 1e-6):
            g = geodesic_dirac1([0, 0], [1, 0], r0, [0, 0], [1, 0], r0 * (1 + eps), gamma, K)
            assert abs(implicit_nu_residual(g.params.nu, r0, r0 * (1 + eps), chi)) < 1e-6
            assert abs(g.params.nu) < 2 * eps

    def test_gamma_limits(self):
        big = rotating_pair(1e6)
        lim = gamma_limit_costs(big)
        assert big.cost == pytest.approx(lim["gamma_to_inf"], rel=1e-2)
        small = rotating_pair(1e-6)
        assert small.cost == pytest.approx(gamma_limit_costs(small)["gamma_to_zero"], rel=1e-2)
        # the infinite-gamma value is the LDDMM cost with logarithmic weight change
        assert lim["gamma_to_inf"] == pytest.approx(0.5 + 0.25 * (np.pi / 2) ** 2 + 0.25 * np.log(2) ** 2)


class TestLemma2:
    def test_identity_flow(self):
        eta = optimal_eta_fixed_flow(np.ones((15, 1)), 3.0)
        np.testing.assert_allclose(eta, 4.0)
        t = np.linspace(0, 1, 15)
        np.testing.assert_allclose(alpha_tilde_path(eta)[:, 0], 1 + 2 * t)

    def test_no_change(self, rng):
        eta = optimal_eta_fixed_flow(rng.uniform(0.5, 2, (15, 3)), 1.0)
        np.testing.assert_array_equal(eta, 0.0)

    def test_reaches_target(self, rng):
        h = rng.uniform(0.3, 3.0, (15, 4))
        target = rng.uniform(0, 2, 4)
        eta = optimal_eta_fixed_flow(h, target)
        np.testing.assert_allclose(alpha_tilde_path(eta)[-1], target, atol=1e-12)

    def test_optimal_against_perturbations(self, rng):
        h = rng.uniform(0.3, 3.0, (15, 2))
        eta = optimal_eta_fixed_flow(h, [0.2, 1.7])
        base = weight_control_cost(eta, h)
        w = _trapezoid_weights(np.linspace(0, 1, 15))
        for _ in range(20):
            pert = rng.normal(size=(15, 2))
            pert -= np.outer(np.ones(15), w @ pert) / w.sum()  # keep the endpoint
            assert np.allclose(w @ pert, 0)
            assert weight_control_cost(eta + 0.1 * pert, h) >= base

    def test_nonpositive_jacobian(self):
        with pytest.raises(NonPositiveJacobian):
            optimal_eta_fixed_flow(np.zeros((5, 1)), 2.0)
        with pytest.raises(InvalidWeights):
            optimal_eta_fixed_flow(np.ones((5, 1)), -1.0)
