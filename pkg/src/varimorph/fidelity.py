"""Kernel (dual RKHS) distance between discrete varifolds and its gradient.

The terminal cost of a registration is ``lam / 2 * |mu_1 - mu'|^2`` where the
transported atoms carry weight ``coef_i * vol_i``: ``coef = alpha`` in the
static L2 model, ``alpha_tilde ** 2`` in the Fisher-Rao model and 1 for pure
deformation.  Gradients are analytic; finite differences live in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from .errors import ConsistencyError, DegenerateFrame
from .kernels import FidelityKernelSpec, grass_profile, position_kernel
from .varifold import DEGENERATE_TOL, DiracVarifold, frame_volumes

_NEG_TOL = 1e-12


@dataclass
class FidelityGradient:
    d_position: NDArray
    d_frame: NDArray
    d_alpha: NDArray


def _adjugate(m: NDArray) -> NDArray:
    d = m.shape[-1]
    if d == 1:
        return np.ones_like(m)
    if d == 2:
        adj = np.empty_like(m)
        adj[..., 0, 0] = m[..., 1, 1]
        adj[..., 1, 1] = m[..., 0, 0]
        adj[..., 0, 1] = -m[..., 0, 1]
        adj[..., 1, 0] = -m[..., 1, 0]
        return adj
    raise ValueError(f"adjugate only implemented for d <= 2, got {d}")


def _pair_sum(
    x: NDArray,
    frames: NDArray | None,
    vol: NDArray,
    coef: NDArray,
    y: NDArray,
    frames_y: NDArray | None,
    vol_y: NDArray,
    w_y: NDArray,
    spec: FidelityKernelSpec,
    grad: bool,
):
    """``sum_ij coef_i vol_i w_y_j k_ij`` and its derivatives in the first slot."""
    N = x.shape[0]
    live = vol >= DEGENERATE_TOL
    live_y = vol_y >= DEGENERATE_TOL
    kp, diff = position_kernel(x, y, spec.sigma_w)
    if frames is None:
        h = np.ones_like(kp)
        dh = np.zeros_like(kp)
        s = np.ones_like(kp)
        M = None
    else:
        M = np.einsum("ika,jla->ijkl", frames, frames_y)
        det = np.linalg.det(M) if M.size else np.zeros((N, y.shape[0]))
        denom = np.outer(np.where(live, vol, 1.0), np.where(live_y, vol_y, 1.0))
        s = det / denom
        h, dh = grass_profile(s, spec)
    mask = np.outer(live, live_y)
    w = coef * vol
    K = np.where(mask, kp * h, 0.0)
    total = float(w @ K @ w_y)
    if not grad:
        return total, None, None, None
    Kw = K @ w_y
    d_coef = vol * Kw
    d_x = -(2.0 / spec.sigma_w**2) * w[:, None] * np.einsum("ij,ija,j->ia", K, diff, w_y)
    if frames is None:
        return total, d_x, np.zeros((N, 0, x.shape[1])), d_coef
    gram = np.einsum("ika,ila->ikl", frames, frames)
    safe = np.where(live, vol, 1.0)
    d_vol = np.einsum("ikl,ila->ika", _adjugate(gram), frames) / safe[:, None, None]
    d_det = np.einsum("ijlk,jla->ijka", _adjugate(M), frames_y)
    safe_y = np.where(live_y, vol_y, 1.0)
    kpw = np.where(mask, kp, 0.0) * w_y[None, :]
    hs = np.where(mask, h - dh * s, 0.0)
    term_vol = np.einsum("ij,ij->i", kpw, hs)[:, None, None] * d_vol
    term_det = np.einsum("ij,ijka->ika", kpw * np.where(mask, dh, 0.0) / safe_y[None, :], d_det)
    d_f = coef[:, None, None] * (term_vol + term_det)
    return total, d_x, d_f, d_coef


def _check_live(v: DiracVarifold) -> None:
    if v.frames is not None and v.frames.size:
        vol = frame_volumes(v.frames)
        bad = (vol < DEGENERATE_TOL) & (v.weights >= DEGENERATE_TOL)
        if np.any(bad):
            raise DegenerateFrame(f"{int(bad.sum())} weighted atoms have degenerate frames")


def wstar_inner(a: DiracVarifold, b: DiracVarifold, spec: FidelityKernelSpec) -> float:
    """``sum_ij k(x_i, U_i, x'_j, U'_j) r_i r'_j``."""
    if a.n != b.n or a.d != b.d:
        raise ValueError("varifolds live in different spaces")
    if len(a) == 0 or len(b) == 0:
        return 0.0
    _check_live(a)
    _check_live(b)
    total, *_ = _pair_sum(
        a.positions, a.frames, a.weights, np.ones(len(a)),
        b.positions, b.frames, b.weights, b.weights, spec, grad=False,
    )
    return total


def _clamp(value: float, scale: float) -> float:
    if value < 0:
        if value < -_NEG_TOL * max(1.0, scale):
            raise ConsistencyError(f"kernel distance squared is negative: {value:.3e}")
        return 0.0
    return value


def wstar_dist2(a: DiracVarifold, b: DiracVarifold, spec: FidelityKernelSpec) -> float:
    aa = wstar_inner(a, a, spec)
    bb = wstar_inner(b, b, spec)
    return _clamp(aa - 2.0 * wstar_inner(a, b, spec) + bb, aa + bb)


def terminal_cost_and_grad(
    positions: NDArray,
    frames: NDArray | None,
    alpha: NDArray,
    target: DiracVarifold,
    spec: FidelityKernelSpec,
    lam: float,
    weights_model: Literal["l2", "fr", "none"] = "l2",
    base_weights: NDArray | None = None,
    target_norm2: float | None = None,
) -> tuple[float, FidelityGradient]:
    """Terminal fidelity ``lam/2 |mu_1 - target|^2`` and its partial derivatives.

    ``frames`` is (N, d, n) for d >= 1 (their volumes are the transported
    weights) or ``None`` for point measures, in which case ``base_weights``
    supplies the static masses.  ``alpha`` is the weight factor (``alpha``
    for l2, ``alpha_tilde`` for fr, ignored for none).
    """
    N, n = positions.shape
    d = 0 if frames is None else frames.shape[1]
    zero = FidelityGradient(np.zeros((N, n)), np.zeros((N, d, n)), np.zeros(N))
    if lam == 0:
        return 0.0, zero
    if frames is None:
        vol = np.asarray(base_weights, dtype=float)
    else:
        vol = frame_volumes(frames)
    alpha = np.asarray(alpha, dtype=float)
    if weights_model == "fr":
        coef = alpha**2
    elif weights_model == "l2":
        coef = alpha
    else:
        coef = np.ones(N)
    if target_norm2 is None:
        target_norm2 = wstar_inner(target, target, spec)
    w = coef * vol
    ss, dx_s, df_s, dc_s = _pair_sum(positions, frames, vol, coef, positions, frames, vol, w, spec, True)
    if len(target):
        st, dx_t, df_t, dc_t = _pair_sum(
            positions, frames, vol, coef,
            target.positions, target.frames, target.weights, target.weights, spec, True,
        )
    else:
        st, dx_t, df_t, dc_t = 0.0, 0.0, 0.0, 0.0
    dist2 = _clamp(ss - 2.0 * st + target_norm2, ss + target_norm2)
    cost = 0.5 * lam * dist2
    d_coef = lam * (dc_s - dc_t)
    if weights_model == "fr":
        d_alpha = 2.0 * alpha * d_coef
    elif weights_model == "l2":
        d_alpha = d_coef
    else:
        d_alpha = np.zeros(N)
    grad = FidelityGradient(lam * (dx_s - dx_t), lam * (df_s - df_t), d_alpha)
    return cost, grad
