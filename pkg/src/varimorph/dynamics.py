"""Hamiltonian geodesic shooting for LDDMM, LDDMM-L2 and LDDMM-FR.

State ``q = (x_i, u_i^{(k)}[, alpha_tilde_i])`` and costate
``p = (p_i^x, p_i^{u_k}[, p_i^alpha])`` evolve under the optimality system of
the control problem.  The system is integrated with classical RK4 on a uniform
grid and the objective gradient is obtained by an exact reverse sweep through
the stored RK4 stages.

The right-hand side is the Hamiltonian vector field ``(dH/dp, -dH/dq)`` of the
reduced Hamiltonian, so the Jacobian of the right-hand side is ``J Hess(H)``
with a symmetric Hessian.  Vector-Jacobian products are therefore one
Hessian-vector product, which is taken as a complex-step directional
derivative of the (holomorphic) right-hand side: exact up to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from .errors import DegenerateFrame, NonFinite
from .fidelity import terminal_cost_and_grad
from .kernels import DeformKernelSpec, FidelityKernelSpec, velocity_field, velocity_jets
from .varifold import DiracVarifold, frame_volumes

Model = Literal["lddmm", "l2", "fr"]
MODELS = ("lddmm", "l2", "fr")

FR_VOLUME_FLOOR = 1e-12
_CSTEP = 1e-30


@dataclass
class ShootingState:
    x: NDArray
    u: NDArray
    alpha: NDArray | None = None


@dataclass
class Costate:
    px: NDArray
    pu: NDArray
    palpha: NDArray | None = None

    @classmethod
    def zeros(cls, N: int, n: int, d: int, fr: bool = False) -> Costate:
        return cls(np.zeros((N, n)), np.zeros((N, d, n)), np.zeros(N) if fr else None)


@dataclass(frozen=True)
class DynamicsParams:
    kernel: DeformKernelSpec
    gamma: float = 1.0
    base_weights: NDArray | None = None  # static masses of d = 0 atoms


@dataclass(frozen=True)
class Layout:
    """Flat-vector layout ``[x, u, (alpha), px, pu, (palpha)]``."""

    N: int
    n: int
    d: int
    fr: bool

    @property
    def half(self) -> int:
        return self.N * self.n * (1 + self.d) + (self.N if self.fr else 0)

    @property
    def size(self) -> int:
        return 2 * self.half

    def _split(self, v: NDArray):
        N, n, d = self.N, self.n, self.d
        i0 = N * n
        i1 = i0 + N * d * n
        x = v[:i0].reshape(N, n)
        u = v[i0:i1].reshape(N, d, n)
        a = v[i1:i1 + N] if self.fr else None
        return x, u, a

    def unpack(self, z: NDArray) -> tuple[ShootingState, Costate]:
        x, u, a = self._split(z[: self.half])
        px, pu, pa = self._split(z[self.half:])
        return ShootingState(x, u, a), Costate(px, pu, pa)

    def pack(self, q: ShootingState, p: Costate) -> NDArray:
        parts = [q.x.ravel(), q.u.ravel()]
        if self.fr:
            parts.append(np.asarray(q.alpha).ravel())
        parts += [p.px.ravel(), p.pu.ravel()]
        if self.fr:
            parts.append(np.asarray(p.palpha).ravel())
        return np.concatenate(parts)


def _volumes(u: NDArray, base: NDArray | None) -> NDArray:
    """Frame volumes written with arithmetic only (complex-step safe)."""
    d = u.shape[1]
    if d == 0:
        return base
    gram = np.einsum("ika,ila->ikl", u, u)
    if d == 1:
        det = gram[:, 0, 0]
    else:
        det = gram[:, 0, 0] * gram[:, 1, 1] - gram[:, 0, 1] * gram[:, 1, 0]
    return np.sqrt(det)


def _cofactor_pull(u: NDArray) -> NDArray:
    """``sum_l C^{kl} u^{(l)}``: half the gradient of det(Gram) in each frame vector."""
    d = u.shape[1]
    if d == 1:
        return u
    gram = np.einsum("ika,ila->ikl", u, u)
    cof = np.empty_like(gram)
    cof[:, 0, 0] = gram[:, 1, 1]
    cof[:, 1, 1] = gram[:, 0, 0]
    cof[:, 0, 1] = -gram[:, 0, 1]
    cof[:, 1, 0] = -gram[:, 1, 0]
    return np.einsum("ikl,ila->ika", cof, u)


def _deform_rhs(q: ShootingState, p: Costate, kernel: DeformKernelSpec):
    v, Dv, S = velocity_jets(q.x, p.px, q.u, p.pu, kernel)
    dx = v
    du = np.einsum("iab,ikb->ika", Dv, q.u)
    dpx = -np.einsum("iab,ia->ib", Dv, p.px) - S
    dpu = -np.einsum("iab,ika->ikb", Dv, p.pu)
    return dx, du, dpx, dpu


def hamiltonian_rhs_l2(q: ShootingState, p: Costate, kernel: DeformKernelSpec):
    """Time derivatives for the deformation-only dynamics (LDDMM and static L2)."""
    dx, du, dpx, dpu = _deform_rhs(q, p, kernel)
    return ShootingState(dx, du, None), Costate(dpx, dpu, None)


def hamiltonian_rhs_fr(q: ShootingState, p: Costate, kernel: DeformKernelSpec, gamma: float,
                       base_weights: NDArray | None = None):
    """Time derivatives for the Fisher-Rao metamorphosis dynamics."""
    dx, du, dpx, dpu = _deform_rhs(q, p, kernel)
    vol = _volumes(q.u, base_weights)
    if np.any(np.real(vol) < FR_VOLUME_FLOOR):
        raise DegenerateFrame("frame volume fell below the Fisher-Rao floor")
    pa = p.palpha
    dalpha = pa / (4.0 * gamma * vol)
    if q.u.shape[1] > 0:
        dpu = dpu + (pa**2 / (8.0 * gamma * vol**3))[:, None, None] * _cofactor_pull(q.u)
    return ShootingState(dx, du, dalpha), Costate(dpx, dpu, np.zeros_like(pa))


def hamiltonian(q: ShootingState, p: Costate, model: Model, params: DynamicsParams):
    """Reduced Hamiltonian ``1/2 |v|_V^2 + gamma/2 sum vol_i eta_i^2`` at (q, p)."""
    v, Dv = velocity_field(q.x, p.px, q.u, p.pu, params.kernel, q.x, order=1)
    B = np.einsum("ika,ikb->iab", p.pu, q.u)
    H = 0.5 * (np.sum(p.px * v) + np.sum(B * Dv))
    if model == "fr":
        vol = _volumes(q.u, params.base_weights)
        H = H + np.sum(p.palpha**2 / (8.0 * params.gamma * vol))
    return H


def reduced_hamiltonian(q0: ShootingState, p0: Costate, model: Model, params: DynamicsParams) -> float:
    """Total transformation energy of the geodesic shot from (q0, p0)."""
    return float(np.real(hamiltonian(q0, p0, model, params)))


class _System:
    """Flat-vector right-hand side plus its exact vector-Jacobian product."""

    def __init__(self, layout: Layout, model: Model, params: DynamicsParams):
        self.layout = layout
        self.model = model
        self.params = params

    def rhs(self, z: NDArray) -> NDArray:
        q, p = self.layout.unpack(z)
        if self.model == "fr":
            dq, dp = hamiltonian_rhs_fr(q, p, self.params.kernel, self.params.gamma, self.params.base_weights)
        else:
            dq, dp = hamiltonian_rhs_l2(q, p, self.params.kernel)
        return self.layout.pack(dq, dp)

    def vjp(self, z: NDArray, lam: NDArray) -> NDArray:
        h = self.layout.half
        w = np.concatenate([-lam[h:], lam[:h]])
        f = self.rhs(z + 1j * _CSTEP * w).imag / _CSTEP
        return np.concatenate([-f[h:], f[:h]])


@dataclass
class Trajectory:
    times: NDArray
    states: NDArray  # (T + 1, size) flat vectors
    stages: NDArray  # (T, 4, size) RK4 stage inputs
    layout: Layout
    model: Model

    @property
    def T(self) -> int:
        return len(self.times) - 1

    def at(self, j: int) -> tuple[ShootingState, Costate]:
        return self.layout.unpack(self.states[j])

    def final(self) -> tuple[ShootingState, Costate]:
        return self.at(-1)


def _layout_for(q0: ShootingState, model: Model) -> Layout:
    N, n = q0.x.shape
    return Layout(N, n, q0.u.shape[1], model == "fr")


def rk4_shoot(q0: ShootingState, p0: Costate, model: Model, params: DynamicsParams, T: int = 15) -> Trajectory:
    """Integrate the Hamiltonian system on ``[0, 1]`` with ``T`` RK4 steps."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}")
    layout = _layout_for(q0, model)
    system = _System(layout, model, params)
    h = 1.0 / T
    z = layout.pack(q0, p0)
    states = np.empty((T + 1, layout.size))
    stages = np.empty((T, 4, layout.size))
    states[0] = z
    for j in range(T):
        s1 = z
        k1 = system.rhs(s1)
        s2 = z + 0.5 * h * k1
        k2 = system.rhs(s2)
        s3 = z + 0.5 * h * k2
        k3 = system.rhs(s3)
        s4 = z + h * k3
        k4 = system.rhs(s4)
        z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(z)):
            raise NonFinite(f"state became non-finite at step {j + 1}")
        stages[j] = (s1, s2, s3, s4)
        states[j + 1] = z
    return Trajectory(np.linspace(0.0, 1.0, T + 1), states, stages, layout, model)


def rk4_adjoint(traj: Trajectory, terminal: NDArray, params: DynamicsParams) -> NDArray:
    """Pull a cotangent on the final state back to the initial state exactly."""
    system = _System(traj.layout, traj.model, params)
    h = 1.0 / traj.T
    lam = np.asarray(terminal, dtype=float).copy()
    for j in range(traj.T - 1, -1, -1):
        s1, s2, s3, s4 = traj.stages[j]
        bk4 = (h / 6.0) * lam
        bk3 = (h / 3.0) * lam
        bk2 = (h / 3.0) * lam
        bk1 = (h / 6.0) * lam
        bz = lam.copy()
        b = system.vjp(s4, bk4)
        bz += b
        bk3 = bk3 + h * b
        b = system.vjp(s3, bk3)
        bz += b
        bk2 = bk2 + 0.5 * h * b
        b = system.vjp(s2, bk2)
        bz += b
        bk1 = bk1 + 0.5 * h * b
        bz += system.vjp(s1, bk1)
        lam = bz
    return lam


def hamiltonian_drift(traj: Trajectory, params: DynamicsParams) -> float:
    """Max relative deviation of the Hamiltonian from its initial value."""
    values = np.array([reduced_hamiltonian(*traj.at(j), traj.model, params) for j in range(traj.T + 1)])
    return float(np.max(np.abs(values - values[0])) / max(abs(values[0]), 1e-30))


def initial_state(source: DiracVarifold, model: Model) -> ShootingState:
    N, n = source.positions.shape
    u = np.zeros((N, 0, n)) if source.frames is None else source.frames.copy()
    return ShootingState(source.positions.copy(), u, np.ones(N) if model == "fr" else None)


@dataclass
class ShootingObjective:
    """Cost and exact gradient of a relaxed registration in shooting form.

    The optimisation variable is the flat vector ``[px, pu, control]`` where
    ``control`` is ``alpha`` (l2), ``palpha`` (fr) or empty (lddmm).
    """

    source: DiracVarifold
    target: DiracVarifold
    model: Model
    kernel: DeformKernelSpec
    fidelity: FidelityKernelSpec
    lam: float
    gamma: float = 1.0
    T: int = 15
    target_norm2: float = field(init=False)
    params: DynamicsParams = field(init=False)
    layout: Layout = field(init=False)

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        from .fidelity import wstar_inner

        self.target_norm2 = wstar_inner(self.target, self.target, self.fidelity) if len(self.target) else 0.0
        base = self.source.weights.copy() if self.source.frames is None else None
        self.params = DynamicsParams(self.kernel, self.gamma, base)
        self.q0 = initial_state(self.source, self.model)
        self.layout = _layout_for(self.q0, self.model)

    @property
    def n_deform(self) -> int:
        N, n, d = self.layout.N, self.layout.n, self.layout.d
        return N * n * (1 + d)

    @property
    def size(self) -> int:
        return self.n_deform + (0 if self.model == "lddmm" else self.layout.N)

    def initial_point(self) -> NDArray:
        x = np.zeros(self.size)
        if self.model == "l2":
            x[self.n_deform:] = 1.0
        return x

    def split(self, theta: NDArray) -> tuple[Costate, NDArray | None]:
        N, n, d = self.layout.N, self.layout.n, self.layout.d
        px = theta[: N * n].reshape(N, n)
        pu = theta[N * n: self.n_deform].reshape(N, d, n)
        ctrl = theta[self.n_deform:] if self.model != "lddmm" else None
        p0 = Costate(px, pu, ctrl if self.model == "fr" else None)
        return p0, ctrl

    def shoot(self, theta: NDArray) -> Trajectory:
        p0, _ = self.split(theta)
        return rk4_shoot(self.q0, p0, self.model, self.params, self.T)

    def energies(self, theta: NDArray, traj: Trajectory | None = None) -> dict[str, float]:
        """Deformation / weight / fidelity / total breakdown at ``theta``."""
        p0, ctrl = self.split(theta)
        traj = traj if traj is not None else self.shoot(theta)
        zero_alpha = Costate(p0.px, p0.pu, None)
        deform = reduced_hamiltonian(self.q0, zero_alpha, "l2", self.params)
        if self.model == "fr":
            weight = float(np.sum(ctrl**2 / (8.0 * self.gamma * self.source.weights)))
        elif self.model == "l2":
            weight = float(0.5 * self.gamma * np.sum(self.source.weights * (ctrl - 1.0) ** 2))
        else:
            weight = 0.0
        fid, _ = self._terminal(traj, ctrl)
        return {"deformation": deform, "weight": weight, "fidelity": fid, "total": deform + weight + fid}

    def _terminal(self, traj: Trajectory, ctrl: NDArray | None):
        q1, _ = traj.final()
        frames = q1.u if self.layout.d > 0 else None
        if self.model == "fr":
            alpha, wm = q1.alpha, "fr"
        elif self.model == "l2":
            alpha, wm = ctrl, "l2"
        else:
            alpha, wm = np.ones(self.layout.N), "none"
        return terminal_cost_and_grad(
            q1.x, frames, alpha, self.target, self.fidelity, self.lam, wm,
            base_weights=self.params.base_weights, target_norm2=self.target_norm2,
        )

    def __call__(self, theta: NDArray) -> tuple[float, NDArray]:
        return self.cost_and_grad(theta)

    def cost_and_grad(self, theta: NDArray) -> tuple[float, NDArray]:
        theta = np.asarray(theta, dtype=float)
        p0, ctrl = self.split(theta)
        traj = self.shoot(theta)
        layout = self.layout
        z0 = traj.states[0]
        energy = reduced_hamiltonian(self.q0, p0, self.model, self.params)
        if self.model == "l2":
            energy += 0.5 * self.gamma * float(np.sum(self.source.weights * (ctrl - 1.0) ** 2))
        fid, fgrad = self._terminal(traj, ctrl)
        terminal = np.zeros(layout.size)
        dq = ShootingState(fgrad.d_position, fgrad.d_frame,
                           fgrad.d_alpha if self.model == "fr" else None)
        dp = Costate.zeros(layout.N, layout.n, layout.d, layout.fr)
        terminal[:] = layout.pack(dq, dp)
        lam0 = rk4_adjoint(traj, terminal, self.params)
        # dH/dp at t = 0 is the state velocity
        system = _System(layout, self.model, self.params)
        dH_dp = system.rhs(z0)[: layout.half]
        g_p = lam0[layout.half:] + dH_dp
        _, gp = layout.unpack(np.concatenate([np.zeros(layout.half), g_p]))
        grad = np.zeros(self.size)
        grad[: self.n_deform] = np.concatenate([gp.px.ravel(), gp.pu.ravel()])
        if self.model == "fr":
            grad[self.n_deform:] = gp.palpha
        elif self.model == "l2":
            grad[self.n_deform:] = fgrad.d_alpha + self.gamma * self.source.weights * (ctrl - 1.0)
        return energy + fid, grad


def shoot_cost_and_grad(p0: Costate, weights_control: NDArray | None, source: DiracVarifold,
                        target: DiracVarifold, model: Model, kernel: DeformKernelSpec,
                        fidelity: FidelityKernelSpec, lam: float, gamma: float = 1.0, T: int = 15):
    """Functional form of :class:`ShootingObjective`; returns (cost, gradient)."""
    obj = ShootingObjective(source, target, model, kernel, fidelity, lam, gamma, T)
    theta = np.concatenate([p0.px.ravel(), p0.pu.ravel()]
                           + ([] if model == "lddmm" else [np.asarray(weights_control, dtype=float)]))
    return obj.cost_and_grad(theta)


def weight_path(traj: Trajectory, params: DynamicsParams, alpha: NDArray | None = None) -> NDArray:
    """Per-atom displayed weights on the time grid, shape (T + 1, N).

    Fisher-Rao: ``alpha_tilde^2 * vol``.  Static L2: ``((1 - t) + t alpha) * vol``.
    Pure deformation: ``vol``.
    """
    out = np.empty((traj.T + 1, traj.layout.N))
    for j, t in enumerate(traj.times):
        q, _ = traj.at(j)
        vol = params.base_weights if traj.layout.d == 0 else frame_volumes(q.u)
        if traj.model == "fr":
            out[j] = q.alpha**2 * vol
        elif traj.model == "l2" and alpha is not None:
            out[j] = ((1.0 - t) + t * alpha) * vol
        else:
            out[j] = vol
    return out
