"""Deformation kernel with its derivative stack, and the varifold fidelity kernel.

The deformation kernel is the scalar Gaussian ``exp(-|x - y|^2 / sigma_v^2)``
times the identity (no factor 2 in the denominator).  Everything that feeds the
Hamiltonian right-hand side is written with plain arithmetic and ``exp`` only,
so it stays valid for complex arguments; the adjoint sweep relies on that.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .varifold import grassmann_inner


@dataclass(frozen=True)
class DeformKernelSpec:
    sigma_v: float
    kind: Literal["gaussian"] = "gaussian"

    def __post_init__(self) -> None:
        if not self.sigma_v > 0:
            raise ValueError("sigma_v must be positive")
        if self.kind != "gaussian":
            raise ValueError(f"unknown deformation kernel {self.kind!r}")

    @property
    def tau(self) -> float:
        # -sigma^2 / (2 rho'(0)) with rho(s) = exp(-s)
        return 0.5 * self.sigma_v**2

    @property
    def c(self) -> float:
        """Curvature ``2 / sigma_v^2`` of the kernel at the origin."""
        return 2.0 / self.sigma_v**2


@dataclass(frozen=True)
class FidelityKernelSpec:
    sigma_w: float
    grass_kind: Literal["linear", "oriented_gaussian"] = "oriented_gaussian"
    sigma_g: float = 1.0
    pos_kind: Literal["gaussian"] = "gaussian"

    def __post_init__(self) -> None:
        if not (self.sigma_w > 0 and self.sigma_g > 0):
            raise ValueError("kernel widths must be positive")
        if self.grass_kind not in ("linear", "oriented_gaussian"):
            raise ValueError(f"unknown Grassmann kernel {self.grass_kind!r}")
        if self.pos_kind != "gaussian":
            raise ValueError(f"unknown position kernel {self.pos_kind!r}")


def kv_eval(x: ArrayLike, y: ArrayLike, spec: DeformKernelSpec) -> float:
    diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return float(np.exp(-diff @ diff / spec.sigma_v**2))


def kv_grad1(x: ArrayLike, y: ArrayLike, spec: DeformKernelSpec) -> NDArray:
    diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return -spec.c * diff * kv_eval(x, y, spec)


def kv_grad2(x: ArrayLike, y: ArrayLike, spec: DeformKernelSpec) -> NDArray:
    return -kv_grad1(x, y, spec)


def kv_hess12(x: ArrayLike, y: ArrayLike, spec: DeformKernelSpec) -> NDArray:
    """Mixed derivative ``d^2 k / dx dy`` as an (n, n) matrix."""
    diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    c = spec.c
    k = kv_eval(x, y, spec)
    return k * (c * np.eye(diff.size) - c**2 * np.outer(diff, diff))


def dipole_matrices(frames: NDArray, frame_momenta: NDArray) -> NDArray:
    """``B_i = sum_k p_i^{u_k} (u_i^{(k)})^T`` with shape (N, n, n)."""
    return np.einsum("ika,ikb->iab", frame_momenta, frames)


def velocity_field(
    x: NDArray,
    px: NDArray,
    u: NDArray,
    pu: NDArray,
    spec: DeformKernelSpec,
    targets: NDArray,
    order: int = 0,
) -> tuple[NDArray, ...]:
    """Evaluate the momentum-generated field and optionally its derivatives.

    ``x, px``: (N, n); ``u, pu``: (N, d, n) (d may be 0); ``targets``: (M, n).
    Returns ``(v,)``, ``(v, Dv)`` or ``(v, Dv, D2v)`` for ``order`` 0, 1, 2
    where ``Dv[m, a, b] = dv_a/dy_b`` and ``D2v[m, a, b, e]`` is the second
    derivative.  Complex inputs are supported.
    """
    c = spec.c
    B = dipole_matrices(u, pu)
    diff = targets[:, None, :] - x[None, :, :]
    g = np.exp(-0.5 * c * np.einsum("mja,mja->mj", diff, diff))
    Bd = np.einsum("jab,mjb->mja", B, diff)
    w = px[None, :, :] + c * Bd
    v = np.einsum("mj,mja->ma", g, w)
    if order == 0:
        return (v,)
    Dv = c * (np.einsum("mj,jab->mab", g, B) - np.einsum("mj,mja,mjb->mab", g, w, diff))
    if order == 1:
        return v, Dv
    n = x.shape[1]
    c2 = c * c
    D2v = c2 * np.einsum("mj,mja,mjb,mje->mabe", g, w, diff, diff)
    D2v -= c2 * np.einsum("mj,jab,mje->mabe", g, B, diff)
    D2v -= c2 * np.einsum("mj,jae,mjb->mabe", g, B, diff)
    D2v -= c * np.einsum("mj,mja,be->mabe", g, w, np.eye(n))
    return v, Dv, D2v


def velocity_jets(
    x: NDArray,
    px: NDArray,
    u: NDArray,
    pu: NDArray,
    spec: DeformKernelSpec,
) -> tuple[NDArray, NDArray, NDArray]:
    """Field, Jacobian and contracted second derivative at the atoms themselves.

    Returns ``v (N, n)``, ``Dv (N, n, n)`` and
    ``S[i, b] = sum_{a,e} D2v(x_i)[a, b, e] B_i[a, e]`` with ``B_i`` the dipole
    matrix of atom i.  This is what the costate equation needs; forming the
    full third-order tensor is avoided.  Complex inputs are supported.
    """
    # Loops run over the (at most 3) coordinates so that every operation is a
    # flat (N, N) array op; small trailing einsum axes are much slower.
    c = spec.c
    N, n = x.shape
    B = dipole_matrices(u, pu)
    diff = [x[:, a, None] - x[None, :, a] for a in range(n)]  # x_m - x_j
    g = np.exp(-0.5 * c * sum(dd * dd for dd in diff))
    w = [px[None, :, a] + c * sum(B[None, :, a, b] * diff[b] for b in range(n)) for a in range(n)]
    gw = [g * wa for wa in w]
    v = np.stack([gwa.sum(axis=1) for gwa in gw], axis=1)
    gB = g @ B.reshape(N, n * n)
    Dv = np.empty((N, n, n), dtype=v.dtype)
    for a in range(n):
        for b in range(n):
            Dv[:, a, b] = c * (gB[:, a * n + b] - np.sum(gw[a] * diff[b], axis=1))
    Cd = [sum(B[:, a, e, None] * diff[e] for e in range(n)) for a in range(n)]
    Bf = B.reshape(N, n * n)
    coef = g * (sum(wa * cda for wa, cda in zip(w, Cd)) - Bf @ Bf.T)
    S = np.empty((N, n), dtype=v.dtype)
    for b in range(n):
        btcd = sum(B[None, :, a, b] * Cd[a] for a in range(n))
        S[:, b] = c * c * np.sum(coef * diff[b] - g * btcd, axis=1) - c * np.sum(B[:, :, b] * v, axis=1)
    return v, Dv, S


def position_kernel(x: NDArray, y: NDArray, sigma: float) -> tuple[NDArray, NDArray]:
    """Gaussian position kernel matrix and the difference tensor ``x_i - y_j``."""
    diff = x[:, None, :] - y[None, :, :]
    return np.exp(-np.einsum("ija,ija->ij", diff, diff) / sigma**2), diff


def grass_profile(s: NDArray, spec: FidelityKernelSpec) -> tuple[NDArray, NDArray]:
    """Zonal profile ``h(s)`` and its derivative."""
    if spec.grass_kind == "linear":
        return s, np.ones_like(s)
    a = 2.0 / spec.sigma_g**2
    h = np.exp(a * (s - 1.0))
    return h, a * h


def fidelity_kernel_eval(
    x: ArrayLike,
    frame: ArrayLike | None,
    x2: ArrayLike,
    frame2: ArrayLike | None,
    spec: FidelityKernelSpec,
) -> float:
    """``k^pos(x, x') * h^G(<U, U'>)``; the Grassmann factor is 1 for d = 0."""
    diff = np.asarray(x, dtype=float) - np.asarray(x2, dtype=float)
    kpos = float(np.exp(-diff @ diff / spec.sigma_w**2))
    if frame is None:
        return kpos
    s = grassmann_inner(frame, frame2)
    h, _ = grass_profile(np.asarray(s), spec)
    return kpos * float(h)
