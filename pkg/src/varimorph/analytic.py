"""Closed-form LDDMM-FR geodesics between single Diracs, and the optimal
weight control for a fixed deformation.

These are the oracles for the numerical engine.  Every ``cost`` returned here
is the minimal path energy, i.e. the *squared* distance; the distance is its
square root.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import AntipodalDirections, ConsistencyError, InvalidWeights, NonPositiveJacobian
from .kernels import DeformKernelSpec

_UNIT_TOL = 1e-10
_NU_CHECK = 1e-8


@dataclass(frozen=True)
class Dirac1GeodesicParams:
    tau: float
    chi: float
    nu: float
    theta: float


@dataclass(frozen=True)
class Dirac0Geodesic:
    cost: float
    x0: NDArray
    x1: NDArray
    r0: float
    r1: float

    def __call__(self, t: ArrayLike) -> tuple[NDArray, NDArray]:
        t = np.asarray(t, dtype=float)
        x = (1.0 - t)[..., None] * self.x0 + t[..., None] * self.x1
        r = ((1.0 - t) * np.sqrt(self.r0) + t * np.sqrt(self.r1)) ** 2
        return x, r


def geodesic_dirac0(x0: ArrayLike, r0: float, x1: ArrayLike, r1: float, gamma: float,
                    kernel: DeformKernelSpec | None = None) -> Dirac0Geodesic:
    """Geodesic between ``r0 delta_x0`` and ``r1 delta_x1`` for a radial kernel.

    The point moves on a straight line and the weight follows the Fisher-Rao
    square-root interpolation; ``kernel`` is accepted for interface symmetry
    (any radial kernel with unit diagonal gives the same answer).
    """
    if not r0 > 0 or r1 < 0:
        raise InvalidWeights("need r0 > 0 and r1 >= 0")
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    cost = 0.5 * float(np.sum((x1 - x0) ** 2)) + 2.0 * gamma * (np.sqrt(r1) - np.sqrt(r0)) ** 2
    return Dirac0Geodesic(float(cost), x0, x1, float(r0), float(r1))


def _nu_branch(r0: float, r1: float, chi: float, tau: float, gamma: float) -> float:
    # chi^2 - 1 = tau / (gamma r0) evaluated directly to avoid cancellation
    chi2m1 = tau / (gamma * r0)
    if r1 == 0:
        return 0.5 * np.log((chi + 1.0) ** 2 / chi2m1)
    a = (r0 / r1) * chi2m1
    if r1 <= r0:
        # -sqrt(r1/r0) (1 - sqrt(1 + a)) / (chi - 1), rationalised
        return float(np.log(np.sqrt(r0 / r1) * (chi + 1.0) / (1.0 + np.sqrt(1.0 + a))))
    return float(np.log(np.sqrt(r1 / r0) * (1.0 + np.sqrt(1.0 + a)) / (chi + 1.0)))


def implicit_nu_residual(nu: float, r0: float, r1: float, chi: float) -> float:
    """``sqrt(r1/r0)/sinh(nu) - coth(nu) - s chi`` with ``s = +1`` if r1 > r0 else -1.

    Zero at the geodesic's nu.  The left-hand side is odd in nu, so the
    branch sign is what separates nu from -nu.
    """
    if nu == 0:
        raise ValueError("the relation is singular at nu = 0")
    sign = 1.0 if r1 > r0 else -1.0
    return float(np.sqrt(r1 / r0) / np.sinh(nu) - 1.0 / np.tanh(nu) - sign * chi)


@dataclass(frozen=True)
class Dirac1Geodesic:
    cost: float
    params: Dirac1GeodesicParams
    x0: NDArray
    x1: NDArray
    u0: NDArray
    u1: NDArray
    r0: float
    r1: float

    @property
    def deformation_energy(self) -> float:
        """Translation plus rotation part of the cost."""
        tau, theta = self.params.tau, self.params.theta
        return 0.5 * float(np.sum((self.x1 - self.x0) ** 2)) + 0.5 * tau * theta**2

    def __call__(self, t: ArrayLike) -> tuple[NDArray, NDArray, NDArray]:
        t = np.asarray(t, dtype=float)
        x = (1.0 - t)[..., None] * self.x0 + t[..., None] * self.x1
        th = self.params.theta
        if th == 0:
            u = np.broadcast_to(self.u0, x.shape).copy()
        else:
            u = (np.sin((1.0 - t) * th)[..., None] * self.u0 + np.sin(t * th)[..., None] * self.u1) / np.sin(th)
        nu = self.params.nu
        if nu == 0:
            r = ((1.0 - t) * np.sqrt(self.r0) + t * np.sqrt(self.r1)) ** 2
        else:
            r = ((np.sqrt(self.r0) * np.sinh((1.0 - t) * nu) + np.sqrt(self.r1) * np.sinh(nu * t)) / np.sinh(nu)) ** 2
        return x, u, r


def geodesic_dirac1(x0: ArrayLike, u0: ArrayLike, r0: float, x1: ArrayLike, u1: ArrayLike, r1: float,
                    gamma: float, kernel: DeformKernelSpec) -> Dirac1Geodesic:
    """Geodesic between single Dirac 1-varifolds ``r0 delta_(x0,u0)`` and ``r1 delta_(x1,u1)``."""
    x0, x1 = np.asarray(x0, dtype=float), np.asarray(x1, dtype=float)
    u0, u1 = np.asarray(u0, dtype=float), np.asarray(u1, dtype=float)
    if abs(np.linalg.norm(u0) - 1) > _UNIT_TOL or abs(np.linalg.norm(u1) - 1) > _UNIT_TOL:
        raise ValueError("u0 and u1 must be unit vectors")
    if not r0 > 0 or r1 < 0:
        raise InvalidWeights("need r0 > 0 and r1 >= 0")
    cos = float(np.clip(u0 @ u1, -1.0, 1.0))
    if cos <= -1.0 + 1e-12:
        raise AntipodalDirections("u1 = -u0: the geodesic is not unique")
    theta = float(np.arccos(cos))
    tau = kernel.tau
    chi = float(np.sqrt(1.0 + tau / (gamma * r0)))
    nu = 0.0 if r1 == r0 else _nu_branch(r0, r1, chi, tau, gamma)
    if nu > _NU_CHECK and r1 > 0:
        res = implicit_nu_residual(nu, r0, r1, chi)
        if abs(res) > 1e-8 * max(1.0, chi):
            raise ConsistencyError(f"nu = {nu} does not satisfy its implicit relation (residual {res:.2e})")
    cost = 0.5 * float(np.sum((x1 - x0) ** 2)) + 0.5 * tau * theta**2 + 2.0 * tau * nu**2
    return Dirac1Geodesic(cost, Dirac1GeodesicParams(tau, chi, nu, theta), x0, x1, u0, u1, float(r0), float(r1))


def _trapezoid_weights(times: NDArray) -> NDArray:
    dt = np.diff(times)
    w = np.zeros_like(times)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def optimal_eta_fixed_flow(jacobians: ArrayLike, alpha1_target: ArrayLike,
                           times: ArrayLike | None = None) -> NDArray:
    """Optimal weight control for a frozen deformation, shape (T + 1, N).

    ``jacobians[j, i]`` is the d-dimensional Jacobian of atom i at grid time
    ``times[j]``; integrals use the trapezoidal rule on that grid, so the
    control reaches ``alpha1_target`` exactly under the same quadrature.
    """
    h = np.asarray(jacobians, dtype=float)
    if h.ndim == 1:
        h = h[:, None]
    if np.any(h <= 0):
        raise NonPositiveJacobian("Jacobians must be positive on the grid")
    a1 = np.broadcast_to(np.asarray(alpha1_target, dtype=float), h.shape[1:])
    if np.any(a1 < 0):
        raise InvalidWeights("target square-root weights must be >= 0")
    t = np.linspace(0.0, 1.0, h.shape[0]) if times is None else np.asarray(times, dtype=float)
    integral = _trapezoid_weights(t) @ (1.0 / h)
    return 2.0 * (a1 - 1.0) / (h * integral)


def alpha_tilde_path(eta: ArrayLike, times: ArrayLike | None = None) -> NDArray:
    """``1 + 1/2 int_0^t eta`` by cumulative trapezoid."""
    eta = np.asarray(eta, dtype=float)
    if eta.ndim == 1:
        eta = eta[:, None]
    t = np.linspace(0.0, 1.0, eta.shape[0]) if times is None else np.asarray(times, dtype=float)
    dt = np.diff(t)[:, None]
    cum = np.concatenate([np.zeros((1, eta.shape[1])), np.cumsum(0.5 * dt * (eta[1:] + eta[:-1]), axis=0)])
    return 1.0 + 0.5 * cum


def weight_control_cost(eta: ArrayLike, jacobians: ArrayLike, times: ArrayLike | None = None) -> float:
    """Discrete ``int sum_i eta_i^2 h_i dt`` with the trapezoidal rule."""
    eta = np.asarray(eta, dtype=float)
    h = np.asarray(jacobians, dtype=float)
    if eta.ndim == 1:
        eta, h = eta[:, None], h.reshape(-1, 1)
    t = np.linspace(0.0, 1.0, eta.shape[0]) if times is None else np.asarray(times, dtype=float)
    return float(_trapezoid_weights(t) @ np.sum(eta**2 * h, axis=1))


def gamma_limit_costs(geo: Dirac1Geodesic) -> dict[str, float]:
    """Limits of the cost as gamma -> 0 and gamma -> infinity."""
    base = geo.deformation_energy
    out = {"gamma_to_zero": base}
    out["gamma_to_inf"] = base + 0.5 * geo.params.tau * np.log(geo.r1 / geo.r0) ** 2 if geo.r1 > 0 else np.inf
    return out

