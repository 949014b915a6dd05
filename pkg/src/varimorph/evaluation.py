"""Evaluation helpers: Chamfer distance, weight histograms, gamma sweeps."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import EmptySet
from .registration import RegistrationProblem, RegistrationResult, register

logger = logging.getLogger(__name__)


def chamfer(a: ArrayLike, b: ArrayLike) -> float:
    """Symmetric mean nearest-neighbour distance ``(mean_a min_b + mean_b min_a) / 2``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise EmptySet("chamfer distance needs two nonempty point sets")
    if a.shape[1] != b.shape[1]:
        raise ValueError("point sets live in different dimensions")
    dist = np.sqrt(np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1))
    return 0.5 * float(dist.min(axis=1).mean() + dist.min(axis=0).mean())


@dataclass
class Histogram:
    counts: NDArray
    edges: NDArray

    def rows(self) -> list[list[float]]:
        return [[float(lo), float(hi), int(c)] for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts)]


def weight_histogram(result: RegistrationResult | ArrayLike, bins: int | ArrayLike = 20,
                     density: bool = True) -> Histogram:
    """Histogram of final per-atom weights.

    With ``density`` the weights are divided by the transported frame volume
    (weight per unit length/area), which is what piecewise-constant targets
    prescribe; otherwise raw weights are binned.
    """
    if isinstance(result, RegistrationResult):
        values = final_densities(result) if density else result.final_weights
    else:
        values = np.asarray(result, dtype=float)
    counts, edges = np.histogram(values, bins=bins)
    return Histogram(counts, edges)


def final_densities(result: RegistrationResult) -> NDArray:
    """Final weight divided by final frame volume: ``alpha`` (L2), ``alpha_tilde^2`` (FR), 1 (LDDMM)."""
    model = result.problem.model
    if model == "fr":
        q1, _ = result.trajectory.final()
        return q1.alpha**2
    if model == "l2":
        return np.asarray(result.control, dtype=float).copy()
    return np.ones(len(result.problem.source))


@dataclass
class SweepRow:
    gamma: float
    deformation: float
    weight: float
    fidelity: float
    weight_change: float  # max_i |final density_i - 1|
    final_weights: NDArray

    def as_list(self) -> list:
        return [self.gamma, self.deformation, self.weight, self.fidelity, self.weight_change]


SWEEP_HEADER = ["gamma", "deformation", "weight", "fidelity", "max_weight_change"]


def gamma_sweep(problem: RegistrationProblem, gammas: ArrayLike) -> list[SweepRow]:
    """Re-run ``register`` for each gamma; rows in the given order."""
    rows = []
    for gamma in np.asarray(gammas, dtype=float):
        res = register(replace(problem, gamma=float(gamma)))
        dens = final_densities(res)
        rows.append(SweepRow(float(gamma), res.energies["deformation"], res.energies["weight"],
                             res.energies["fidelity"], float(np.max(np.abs(dens - 1.0))),
                             res.final_weights.copy()))
        logger.info("gamma = %.4g: deformation %.4g, weight %.4g", gamma, rows[-1].deformation, rows[-1].weight)
    return rows
