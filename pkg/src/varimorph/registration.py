"""End-to-end registration: build the shooting objective, optimise, package.

The optimiser works on ``[px, pu, control]`` where the control is ``alpha``
(static L2 weights, bounded below by 0) or a rescaled Fisher-Rao momentum
``xi = palpha / sqrt(8 gamma r)`` whose weight energy is simply ``sum xi^2``.
The rescaling keeps the problem well conditioned across many decades of
gamma and does not change the minimiser.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Literal

import numpy as np
from numpy.typing import NDArray

from .dynamics import (
    Costate,
    MODELS,
    ShootingObjective,
    Trajectory,
    hamiltonian_drift,
    weight_path,
)
from .errors import DegenerateFrame, EmptySet, InfeasibleInit, NonFinite
from .kernels import DeformKernelSpec, FidelityKernelSpec
from .optimizer import OptimizeResult, OptimizerConfig, minimize
from .varifold import DiracVarifold, Polyline, curve_to_varifold

logger = logging.getLogger(__name__)

Model = Literal["lddmm", "l2", "fr"]

# Parameter presets for the synthetic experiments.
PRESETS: dict[str, dict[str, float]] = {
    "surface": {"lam": 10.0, "gamma": 0.1},
    "dirac_bundle": {"lam": 10.0, "gamma": 0.01},
}


@dataclass
class RegistrationProblem:
    source: DiracVarifold
    target: DiracVarifold
    model: Model = "fr"
    lam: float = 10.0
    gamma: float = 0.1
    deform_kernel: DeformKernelSpec = field(default_factory=lambda: DeformKernelSpec(1.0))
    fidelity_kernel: FidelityKernelSpec = field(default_factory=lambda: FidelityKernelSpec(1.0))
    T: int = 15
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    init: NDArray | None = None  # flat [px, pu, control] in unscaled units
    freeze_deformation: bool = False  # optimise the weight control only, costates kept at init

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        if len(self.source) == 0:
            raise EmptySet("source varifold is empty")
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if self.model != "lddmm" and not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.source.n != self.target.n or self.source.d != self.target.d:
            raise ValueError("source and target live in different spaces")
        if self.freeze_deformation and self.model == "lddmm":
            raise ValueError("freezing the deformation leaves nothing to optimise for lddmm")

    def objective(self) -> ShootingObjective:
        return ShootingObjective(self.source, self.target, self.model, self.deform_kernel,
                                 self.fidelity_kernel, self.lam, self.gamma, self.T)


@dataclass
class RegistrationResult:
    problem: RegistrationProblem
    theta: NDArray
    p0: Costate
    control: NDArray | None
    trajectory: Trajectory
    energies: dict[str, float]
    drift: float
    weights: NDArray  # (T + 1, N) displayed weights
    min_alpha_tilde: float | None
    diagnostics: OptimizeResult
    runtime: float

    @property
    def final_weights(self) -> NDArray:
        return self.weights[-1]

    @property
    def transformation_energy(self) -> float:
        return self.energies["deformation"] + self.energies["weight"]

    def final_positions(self) -> NDArray:
        q1, _ = self.trajectory.final()
        return q1.x

    def to_dict(self) -> dict:
        d = self.diagnostics
        return {
            "model": self.problem.model,
            "lam": self.problem.lam,
            "gamma": self.problem.gamma,
            "T": self.problem.T,
            "energies": self.energies,
            "hamiltonian_drift": self.drift,
            "min_alpha_tilde": self.min_alpha_tilde,
            "initial_costate": {"px": self.p0.px.tolist(), "pu": self.p0.pu.tolist()},
            "control": None if self.control is None else self.control.tolist(),
            "final_weights": self.final_weights.tolist(),
            "diagnostics": {
                "iterations": d.iterations,
                "function_evaluations": d.n_evals,
                "reason": d.reason,
                "projected_gradient_norm": d.grad_norm,
                "runtime_seconds": self.runtime,
            },
        }


_FAILED = 1e300


class _Scaled:
    """Objective in optimiser coordinates (Fisher-Rao control rescaled).

    Only the entries listed in ``free`` are exposed; the others keep their
    values from ``base``.
    """

    def __init__(self, obj: ShootingObjective, scale: NDArray, base: NDArray, free: NDArray):
        self.obj = obj
        self.scale = scale[free]
        self.base = base.copy()
        self.free = free

    def to_theta(self, y: NDArray) -> NDArray:
        theta = self.base.copy()
        theta[self.free] = y * self.scale
        return theta

    def from_theta(self, theta: NDArray) -> NDArray:
        return theta[self.free] / self.scale

    def __call__(self, y: NDArray) -> tuple[float, NDArray]:
        try:
            # trial steps may blow up; that is detected and reported as NonFinite
            with np.errstate(over="ignore", invalid="ignore"):
                f, g = self.obj.cost_and_grad(self.to_theta(y))
        except (NonFinite, DegenerateFrame) as exc:
            # a huge finite value makes the line search back off
            logger.debug("shooting failed inside line search: %s", exc)
            return _FAILED, np.zeros_like(y)
        return f, g[self.free] * self.scale


def _variable_scale(obj: ShootingObjective) -> NDArray:
    scale = np.ones(obj.size)
    if obj.model == "fr":
        scale[obj.n_deform:] = np.sqrt(8.0 * obj.gamma * obj.source.weights)
    return scale


def multiscale_levels(problem: RegistrationProblem) -> list[RegistrationProblem]:
    """Extension point for coarse-to-fine schedules; currently a single level."""
    return [problem]


def register(problem: RegistrationProblem,
             callback: Callable[[int, NDArray, float], None] | None = None) -> RegistrationResult:
    """Solve the relaxed registration problem from the given initialisation."""
    start = time.perf_counter()
    theta = None if problem.init is None else np.asarray(problem.init, dtype=float)
    res = None
    for level in multiscale_levels(problem):
        obj = level.objective()
        x0 = obj.initial_point() if theta is None else theta
        if x0.shape != (obj.size,):
            raise ValueError(f"init has shape {x0.shape}, expected ({obj.size},)")
        free = np.arange(obj.n_deform if level.freeze_deformation else 0, obj.size)
        wrapped = _Scaled(obj, _variable_scale(obj), x0, free)
        try:
            obj.cost_and_grad(x0)
        except (NonFinite, DegenerateFrame) as exc:
            raise InfeasibleInit(f"initial shoot failed: {exc}") from exc
        lower = None
        if level.model == "l2":
            lower = np.full(obj.size, -np.inf)
            lower[obj.n_deform:] = 0.0
        cfg = replace(level.optimizer, lower=None if lower is None else lower[free])
        res = minimize(wrapped, wrapped.from_theta(x0), cfg, callback)
        theta = wrapped.to_theta(res.x)
        if level.model == "fr":
            theta, res = _repair_sign(obj, wrapped, theta, res, cfg, callback)
    assert res is not None
    return _package(problem, obj, theta, res, time.perf_counter() - start)


def _repair_sign(obj, wrapped, theta, res, cfg, callback):
    """Restart once if some square-root factor ends negative.

    ``alpha_tilde`` and ``-alpha_tilde`` give the same measure, but reaching the
    negative root passes through zero mass and costs more.  The affected
    momenta are rescaled so the shot lands near ``|alpha_tilde(1)|`` and the
    better of the two optima is kept.
    """
    q1, _ = obj.shoot(theta).final()
    a1 = q1.alpha
    bad = a1 < 0
    if not np.any(bad):
        return theta, res
    logger.info("%d square-root weight factors ended negative; restarting from the positive branch",
                int(bad.sum()))
    trial = theta.copy()
    ctrl = trial[obj.n_deform:]
    ctrl[bad] *= (np.abs(a1[bad]) - 1.0) / (a1[bad] - 1.0)
    res2 = minimize(wrapped, wrapped.from_theta(trial), cfg, callback)
    if res2.fun < res.fun:
        return wrapped.to_theta(res2.x), res2
    return theta, res



def _package(problem: RegistrationProblem, obj: ShootingObjective, theta: NDArray,
             res: OptimizeResult, runtime: float) -> RegistrationResult:
    p0, ctrl = obj.split(theta)
    traj = obj.shoot(theta)
    energies = obj.energies(theta, traj)
    drift = hamiltonian_drift(traj, obj.params)
    alpha = ctrl if problem.model == "l2" else None
    weights = weight_path(traj, obj.params, alpha)
    min_at = None
    if problem.model == "fr":
        min_at = float(np.min(traj.states[:, _alpha_slice(obj)]))
        if min_at < -1e-6:
            logger.warning("square-root weight factor went negative along the path (min %.3e)", min_at)
    logger.info("%s registration: %s after %d iterations, total %.6g (deformation %.4g, weight %.4g, fidelity %.4g)",
                problem.model, res.reason, res.iterations, energies["total"], energies["deformation"],
                energies["weight"], energies["fidelity"])
    return RegistrationResult(problem, theta, Costate(p0.px.copy(), p0.pu.copy(),
                              None if p0.palpha is None else p0.palpha.copy()),
                              None if ctrl is None else ctrl.copy(), traj, energies, drift, weights,
                              min_at, res, runtime)


def _alpha_slice(obj: ShootingObjective) -> slice:
    L = obj.layout
    start = L.N * L.n * (1 + L.d)
    return slice(start, start + L.N)


# --- synthetic instances ----------------------------------------------------

QUADRANT_WEIGHTS = (0.5, 0.75, 1.25, 1.75)


def _ring(n_seg: int, a: float, b: float, phase: float = 0.0) -> Polyline:
    t = 2.0 * np.pi * (np.arange(n_seg) + phase) / n_seg
    return Polyline(np.stack([a * np.cos(t), b * np.sin(t)], axis=1), closed=True)


def quadrant_of(points: NDArray) -> NDArray:
    """Angular quadrant index 0..3 of each 2-D point."""
    ang = np.mod(np.arctan2(points[:, 1], points[:, 0]), 2.0 * np.pi)
    return np.minimum((ang // (np.pi / 2)).astype(int), 3)


def synth_circle_ellipse(n_segments: int = 64, axes: tuple[float, float] = (1.4, 0.7)
                         ) -> tuple[DiracVarifold, DiracVarifold]:
    """Unit circle with unit weight density to an ellipse with quadrant-wise weights.

    Target weight of a segment is ``w_q * length``; frames are rescaled so
    the volume carries it.
    """
    source = curve_to_varifold(_ring(n_segments, 1.0, 1.0))
    ell = curve_to_varifold(_ring(n_segments, *axes))
    dens = np.asarray(QUADRANT_WEIGHTS)[quadrant_of(ell.positions)]
    target = DiracVarifold.from_frames(ell.positions, ell.frames * dens[:, None, None])
    return source, target


def target_densities(target: DiracVarifold) -> NDArray:
    return np.asarray(QUADRANT_WEIGHTS)[quadrant_of(target.positions)]


def synth_partial(shape: str = "blob", removed_fraction: float = 0.25, n_segments: int = 64,
                  seed: int = 0, scale: float = 1.0, size_ratio: float = 0.6
                  ) -> tuple[DiracVarifold, DiracVarifold, DiracVarifold]:
    """Source shape, partially observed target and the full ground-truth target.

    The ground truth is a smooth deformation of the source shrunk by
    ``size_ratio``, so the observed part carries less mass than the source
    and weight change competes with contraction.  A contiguous arc of
    ``removed_fraction`` of its segments is deleted, starting at a position
    drawn from ``seed``.  ``scale`` multiplies all coordinates (unit-size
    shapes by default).
    """
    if not 0.0 <= removed_fraction < 1.0:
        raise ValueError("removed_fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    t = 2.0 * np.pi * np.arange(n_segments) / n_segments
    if shape == "circle":
        r_src = np.ones_like(t)
    elif shape == "blob":
        r_src = 1.0 + 0.15 * np.cos(3.0 * t)
    else:
        raise ValueError(f"unknown shape {shape!r}")
    src = np.stack([r_src * np.cos(t), r_src * np.sin(t)], axis=1)
    r_tgt = r_src * (1.0 + 0.2 * np.cos(2.0 * t + 0.5))
    tgt = np.stack([1.1 * r_tgt * np.cos(t) + 0.1, 0.9 * r_tgt * np.sin(t)], axis=1)
    if not (scale > 0 and size_ratio > 0):
        raise ValueError("scale and size_ratio must be positive")
    source = curve_to_varifold(Polyline(scale * src, closed=True))
    truth = curve_to_varifold(Polyline(scale * size_ratio * tgt, closed=True))
    n_remove = int(round(removed_fraction * n_segments))
    if n_remove == 0:
        return source, truth, truth
    first = int(rng.integers(n_segments))
    removed = (first + np.arange(n_remove)) % n_segments
    keep = np.setdiff1d(np.arange(n_segments), removed)
    target = DiracVarifold.from_frames(truth.positions[keep], truth.frames[keep])
    return source, target, truth
