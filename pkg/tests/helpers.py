from __future__ import annotations

import numpy as np

from varimorph.varifold import DiracVarifold


def random_varifold(rng, N: int, d: int, n: int, spread: float = 0.6) -> DiracVarifold:
    x = spread * rng.normal(size=(N, n))
    if d == 0:
        return DiracVarifold.from_points(x, rng.uniform(0.5, 1.5, size=N))
    frames = 0.5 * rng.normal(size=(N, d, n))
    return DiracVarifold.from_frames(x, frames)


def central_diff(f, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        g[idx] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))
