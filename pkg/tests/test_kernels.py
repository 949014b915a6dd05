from __future__ import annotations

import numpy as np
import pytest

from varimorph.kernels import (
    DeformKernelSpec,
    FidelityKernelSpec,
    dipole_matrices,
    fidelity_kernel_eval,
    kv_eval,
    kv_grad1,
    kv_grad2,
    kv_hess12,
    velocity_field,
    velocity_jets,
)
from varimorph.varifold import grassmann_inner

from helpers import rel_err

K = DeformKernelSpec(0.7)


def test_spec_validation():
    with pytest.raises(ValueError):
        DeformKernelSpec(0.0)
    with pytest.raises(ValueError):
        FidelityKernelSpec(1.0, grass_kind="binet")
    assert DeformKernelSpec(2.0).tau == pytest.approx(2.0)


def test_kv_values():
    x = np.array([0.3, -0.1])
    assert kv_eval(x, x, K) == 1.0
    assert kv_eval(x, x + [K.sigma_v, 0], K) == pytest.approx(np.exp(-1))
    assert kv_eval(x, x + [10 * K.sigma_v, 0], K) == pytest.approx(np.exp(-100), rel=1e-12)


def test_kv_symmetric(rng):
    x, y = rng.normal(size=(2, 3))
    assert kv_eval(x, y, K) == kv_eval(y, x, K)


def test_grad_at_coincidence_and_hessian():
    x = np.array([0.2, 0.5, -1.0])
    np.testing.assert_array_equal(kv_grad1(x, x, K), 0.0)
    np.testing.assert_allclose(kv_hess12(x, x, K), 2 / K.sigma_v**2 * np.eye(3))


def test_derivatives_match_finite_differences(rng):
    h = 1e-5
    for _ in range(100):
        x, y = 0.5 * rng.normal(size=(2, 3))
        fd1 = np.array([(kv_eval(x + h * e, y, K) - kv_eval(x - h * e, y, K)) / (2 * h) for e in np.eye(3)])
        fd2 = np.array([(kv_eval(x, y + h * e, K) - kv_eval(x, y - h * e, K)) / (2 * h) for e in np.eye(3)])
        fd12 = np.array([(kv_grad1(x, y + h * e, K) - kv_grad1(x, y - h * e, K)) / (2 * h) for e in np.eye(3)]).T
        assert rel_err(kv_grad1(x, y, K), fd1) < 1e-6
        assert rel_err(kv_grad2(x, y, K), fd2) < 1e-6
        assert rel_err(kv_hess12(x, y, K), fd12) < 1e-6


def naive_field(x, px, u, pu, spec, y):
    """Direct sum of kernel columns and kernel-gradient dipoles."""
    out = np.zeros_like(y)
    for m in range(len(y)):
        for i in range(len(x)):
            out[m] += kv_eval(x[i], y[m], spec) * px[i]
            for k in range(u.shape[1]):
                # derivative of K(x_i, .) in its first slot along u, paired with pu
                out[m] += kv_grad1(x[i], y[m], spec) @ u[i, k] * pu[i, k]
    return out


class TestVelocityField:
    def test_single_atom(self):
        x = np.array([[0.1, 0.2]])
        px = np.array([[1.0, -2.0]])
        (v,) = velocity_field(x, px, np.zeros((1, 1, 2)), np.zeros((1, 1, 2)), K, x)
        np.testing.assert_allclose(v, px)

    def test_zero_costate(self, rng):
        x = rng.normal(size=(3, 2))
        out = velocity_field(x, np.zeros((3, 2)), rng.normal(size=(3, 1, 2)), np.zeros((3, 1, 2)), K,
                             rng.normal(size=(5, 2)), order=2)
        for arr in out:
            assert np.all(arr == 0)

    def test_matches_naive_sum(self, rng):
        for d, n in [(1, 2), (2, 3)]:
            x, px = rng.normal(size=(2, 2, n))
            u, pu = rng.normal(size=(2, 2, d, n))
            y = rng.normal(size=(4, n))
            (v,) = velocity_field(x, px, u, pu, K, y)
            np.testing.assert_allclose(v, naive_field(x, px, u, pu, K, y), atol=1e-12)

    def test_derivatives_fd(self, rng):
        x, px = rng.normal(size=(2, 3, 3))
        u, pu = rng.normal(size=(2, 3, 2, 3))
        y = rng.normal(size=(2, 3))
        _, Dv, D2v = velocity_field(x, px, u, pu, K, y, order=2)
        h = 1e-5
        for b in range(3):
            e = np.zeros(3)
            e[b] = h
            (vp,), (vm,) = velocity_field(x, px, u, pu, K, y + e), velocity_field(x, px, u, pu, K, y - e)
            assert rel_err(Dv[:, :, b], (vp - vm) / (2 * h)) < 1e-6
            _, Dp = velocity_field(x, px, u, pu, K, y + e, order=1)
            _, Dm = velocity_field(x, px, u, pu, K, y - e, order=1)
            assert rel_err(D2v[:, :, :, b], (Dp - Dm) / (2 * h)) < 1e-6

    def test_jets_agree_with_full_tensor(self, rng):
        for d, n in [(0, 2), (1, 2), (1, 3), (2, 3)]:
            x, px = rng.normal(size=(2, 4, n))
            u, pu = rng.normal(size=(2, 4, d, n))
            v, Dv, D2v = velocity_field(x, px, u, pu, K, x, order=2)
            vj, Dvj, S = velocity_jets(x, px, u, pu, K)
            np.testing.assert_allclose(vj, v, atol=1e-13)
            np.testing.assert_allclose(Dvj, Dv, atol=1e-13)
            np.testing.assert_allclose(S, np.einsum("mabe,mae->mb", D2v, dipole_matrices(u, pu)), atol=1e-12)


class TestFidelityKernel:
    def test_identical_atoms(self):
        spec = FidelityKernelSpec(0.5)
        assert fidelity_kernel_eval([0, 0], [[1, 0]], [0, 0], [[2, 0]], spec) == pytest.approx(1.0)

    def test_orthogonal_linear(self):
        spec = FidelityKernelSpec(0.5, grass_kind="linear")
        assert fidelity_kernel_eval([0, 0], [[1, 0]], [0, 0], [[0, 1]], spec) == pytest.approx(0.0)

    def test_hand_evaluation_and_symmetry(self, rng):
        spec = FidelityKernelSpec(0.8, sigma_g=0.6)
        for _ in range(10):
            x, y = rng.normal(size=(2, 3))
            a, b = rng.normal(size=(2, 2, 3))
            s = grassmann_inner(a, b)
            expect = np.exp(-np.sum((x - y) ** 2) / 0.64) * np.exp(2 * (s - 1) / 0.36)
            assert fidelity_kernel_eval(x, a, y, b, spec) == pytest.approx(expect, rel=1e-12)
            assert fidelity_kernel_eval(y, b, x, a, spec) == pytest.approx(expect, rel=1e-12)
            assert expect > 0

    def test_points(self):
        spec = FidelityKernelSpec(1.0)
        assert fidelity_kernel_eval([0, 0], None, [1, 0], None, spec) == pytest.approx(np.exp(-1))
