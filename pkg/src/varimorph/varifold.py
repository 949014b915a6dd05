"""Discrete oriented varifolds: weighted Diracs on position x oriented-plane space.

An atom ``r delta_(x, U)`` is stored as a position and a frame of ``d`` row
vectors spanning ``U``.  The parallelotope volume of the frame *is* the weight,
so a frame fully determines the atom; the ``weights`` array is a cache that is
revalidated on construction.  ``d = 0`` atoms are plain weighted points and
carry no frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DegenerateFrame, SchemaError, SingularMap

DEGENERATE_TOL = 1e-14
_WEIGHT_RTOL = 1e-12


def frame_volume(frame: ArrayLike) -> float:
    """Return sqrt(det(Gram)) of a ``d x n`` frame; 0 for rank-deficient input."""
    f = np.atleast_2d(np.asarray(frame, dtype=float))
    if f.shape[0] > f.shape[1]:
        raise ValueError(f"frame has {f.shape[0]} vectors in R^{f.shape[1]}")
    det = np.linalg.det(f @ f.T)
    return float(np.sqrt(det)) if det > 0 else 0.0


def frame_volumes(frames: NDArray) -> NDArray:
    """Vectorised :func:`frame_volume` over an ``(N, d, n)`` stack."""
    frames = np.asarray(frames, dtype=float)
    if frames.shape[0] == 0:
        return np.zeros(0)
    gram = np.einsum("ika,ila->ikl", frames, frames)
    det = np.linalg.det(gram)
    return np.sqrt(np.clip(det, 0.0, None))


def grassmann_inner(frame_a: ArrayLike, frame_b: ArrayLike) -> float:
    """Inner product of the oriented planes spanned by two frames.

    Computed as ``det(A B^T) / (vol(A) vol(B))`` so it only depends on the
    oriented planes, not on the particular spanning frames.
    """
    a = np.atleast_2d(np.asarray(frame_a, dtype=float))
    b = np.atleast_2d(np.asarray(frame_b, dtype=float))
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")
    va, vb = frame_volume(a), frame_volume(b)
    if va < DEGENERATE_TOL or vb < DEGENERATE_TOL:
        raise DegenerateFrame(f"frame volume below {DEGENERATE_TOL} (got {va:.3g}, {vb:.3g})")
    return float(np.linalg.det(a @ b.T) / (va * vb))


@dataclass(frozen=True)
class DiracAtom:
    position: NDArray
    weight: float
    frame: NDArray | None = None


@dataclass(frozen=True)
class DiracVarifold:
    """Finite sum of weighted oriented Diracs.

    ``positions`` has shape (N, n), ``frames`` (N, d, n) or ``None`` when
    d = 0, ``weights`` (N,).  Use :meth:`from_frames` or :meth:`from_points`
    rather than the raw constructor.
    """

    positions: NDArray
    weights: NDArray
    frames: NDArray | None = None
    dim_ambient: int = field(default=0)

    def __post_init__(self) -> None:
        pos = np.asarray(self.positions, dtype=float)
        n = self.dim_ambient or (pos.shape[1] if pos.ndim == 2 and pos.size else 0)
        if pos.size == 0:
            pos = pos.reshape(0, n)
        if pos.ndim != 2:
            raise SchemaError(f"positions must be (N, n), got shape {pos.shape}")
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.shape[0] != pos.shape[0]:
            raise SchemaError("positions and weights disagree on atom count")
        if np.any(w < 0):
            raise SchemaError("negative weights")
        if not np.all(np.isfinite(pos)) or not np.all(np.isfinite(w)):
            raise SchemaError("non-finite positions or weights")
        frames = self.frames
        if frames is not None:
            frames = np.asarray(frames, dtype=float)
            if frames.ndim != 3 or frames.shape[0] != pos.shape[0] or frames.shape[2] != n:
                raise SchemaError(f"frames must be (N, d, n), got {frames.shape}")
            d = frames.shape[1]
            if not 1 <= d <= min(2, n):
                raise SchemaError(f"unsupported plane dimension d={d} for n={n}")
            if not np.all(np.isfinite(frames)):
                raise SchemaError("non-finite frames")
            vol = frame_volumes(frames)
            if not np.allclose(w, vol, rtol=_WEIGHT_RTOL, atol=DEGENERATE_TOL):
                raise SchemaError("weights do not match frame volumes")
            frames.setflags(write=False)
            object.__setattr__(self, "frames", frames)
        if n < 2:
            raise SchemaError(f"ambient dimension must be >= 2, got {n}")
        pos.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "dim_ambient", n)

    @classmethod
    def from_frames(cls, positions: ArrayLike, frames: ArrayLike) -> DiracVarifold:
        frames = np.asarray(frames, dtype=float)
        positions = np.asarray(positions, dtype=float)
        if frames.ndim == 2:
            frames = frames[:, None, :]
        return cls(positions, frame_volumes(frames), frames, dim_ambient=positions.shape[-1])

    @classmethod
    def from_points(cls, positions: ArrayLike, weights: ArrayLike) -> DiracVarifold:
        positions = np.asarray(positions, dtype=float)
        return cls(positions, np.asarray(weights, dtype=float), None, dim_ambient=positions.shape[-1])

    @classmethod
    def empty(cls, n: int, d: int) -> DiracVarifold:
        frames = None if d == 0 else np.zeros((0, d, n))
        return cls(np.zeros((0, n)), np.zeros(0), frames, dim_ambient=n)

    @classmethod
    def from_atoms(cls, atoms: list[DiracAtom], n: int, d: int) -> DiracVarifold:
        if not atoms:
            return cls.empty(n, d)
        pos = np.array([a.position for a in atoms], dtype=float)
        if d == 0:
            return cls.from_points(pos, [a.weight for a in atoms])
        frames = np.array([np.atleast_2d(a.frame) for a in atoms], dtype=float)
        return cls.from_frames(pos, frames)

    @property
    def n(self) -> int:
        return self.dim_ambient

    @property
    def d(self) -> int:
        return 0 if self.frames is None else self.frames.shape[1]

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def degenerate(self) -> NDArray:
        """Boolean mask of zero-weight atoms."""
        return self.weights < DEGENERATE_TOL

    def atoms(self) -> Iterator[DiracAtom]:
        for i in range(len(self)):
            frame = None if self.frames is None else self.frames[i]
            yield DiracAtom(self.positions[i], float(self.weights[i]), frame)

    def unit_frames(self) -> NDArray:
        """Frames rescaled to unit volume (degenerate atoms left as is)."""
        if self.frames is None:
            raise DegenerateFrame("d = 0 varifold has no frames")
        vol = self.weights.copy()
        vol[vol < DEGENERATE_TOL] = 1.0
        return self.frames / vol[:, None, None] ** (1.0 / self.d)


@dataclass(frozen=True)
class Polyline:
    vertices: NDArray
    closed: bool = False

    def __post_init__(self) -> None:
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] < 2:
            raise SchemaError("polyline needs at least two vertices in an (M, n) array")
        if not np.all(np.isfinite(v)):
            raise SchemaError("NaN or infinite polyline coordinates")
        object.__setattr__(self, "vertices", v)

    def edges(self) -> tuple[NDArray, NDArray]:
        v = self.vertices
        tail = v
        head = np.roll(v, -1, axis=0)
        if not self.closed:
            tail, head = v[:-1], v[1:]
        return tail, head


@dataclass(frozen=True)
class TriMesh:
    vertices: NDArray
    triangles: NDArray

    def __post_init__(self) -> None:
        v = np.asarray(self.vertices, dtype=float)
        t = np.asarray(self.triangles, dtype=int).reshape(-1, 3)
        if v.ndim != 2:
            raise SchemaError("mesh vertices must be an (M, n) array")
        if not np.all(np.isfinite(v)):
            raise SchemaError("NaN or infinite mesh coordinates")
        if t.size and (t.min() < 0 or t.max() >= v.shape[0]):
            raise SchemaError("triangle index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)


def curve_to_varifold(curve: Polyline) -> DiracVarifold:
    """One atom per segment: midpoint, edge vector as frame, length as weight."""
    tail, head = curve.edges()
    if tail.shape[0] == 0:
        raise SchemaError("curve has no segments")
    return DiracVarifold.from_frames(0.5 * (tail + head), (head - tail)[:, None, :])


def mesh_to_varifold(mesh: TriMesh) -> DiracVarifold:
    """One atom per triangle at its barycenter.

    The frame is ``(e1, e2 / 2)`` with e1, e2 the edges leaving the first
    vertex, whose volume is exactly the triangle area.
    """
    if mesh.triangles.shape[0] == 0:
        raise SchemaError("mesh has no triangles")
    if mesh.vertices.shape[1] != 3:
        raise SchemaError("surface varifolds require n = 3")
    p = mesh.vertices[mesh.triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return DiracVarifold.from_frames(p.mean(axis=1), np.stack([e1, 0.5 * e2], axis=1))


def pushforward_affine(v: DiracVarifold, A: ArrayLike, b: ArrayLike) -> DiracVarifold:
    """Transport ``v`` by ``x -> A x + b``; weights follow the mapped frame volume."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if abs(np.linalg.det(A)) < 1e-14:
        raise SingularMap("affine map is not invertible")
    pos = v.positions @ A.T + b
    if v.frames is None:
        return DiracVarifold.from_points(pos, v.weights)
    return DiracVarifold.from_frames(pos, v.frames @ A.T)


def total_mass(v: DiracVarifold) -> float:
    return float(np.sum(v.weights))
