"""File formats: varifold JSON, OBJ triangle meshes, CSV polylines, legacy VTK,
trajectory JSON and per-atom weight tables."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .dynamics import Trajectory, weight_path, DynamicsParams
from .errors import ParseError, SchemaError
from .varifold import DiracVarifold, Polyline, TriMesh


# --- varifold JSON -------------------------------------------------------

def varifold_to_dict(v: DiracVarifold) -> dict[str, Any]:
    atoms = []
    for i in range(len(v)):
        atom: dict[str, Any] = {"x": v.positions[i].tolist()}
        if v.d > 0:
            atom["frame"] = v.frames[i].tolist()
        atom["weight"] = float(v.weights[i])
        atoms.append(atom)
    return {"n": v.n, "d": v.d, "atoms": atoms}


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise SchemaError(msg)


def varifold_from_dict(doc: Any) -> DiracVarifold:
    _require(isinstance(doc, dict), "varifold document must be an object")
    for key in ("n", "d", "atoms"):
        _require(key in doc, f"missing key {key!r}")
    n, d, atoms = doc["n"], doc["d"], doc["atoms"]
    _require(isinstance(n, int) and n >= 2, "n must be an integer >= 2")
    _require(isinstance(d, int) and 0 <= d <= min(2, n), "d must be an integer in [0, min(2, n)]")
    _require(isinstance(atoms, list), "atoms must be a list")
    if not atoms:
        return DiracVarifold.empty(n, d)
    xs, frames, weights = [], [], []
    for k, atom in enumerate(atoms):
        _require(isinstance(atom, dict) and "x" in atom, f"atom {k}: missing position 'x'")
        x = np.asarray(atom["x"], dtype=float)
        _require(x.shape == (n,), f"atom {k}: position must have length {n}")
        xs.append(x)
        if d > 0:
            _require("frame" in atom, f"atom {k}: missing 'frame'")
            f = np.asarray(atom["frame"], dtype=float)
            _require(f.shape == (d, n), f"atom {k}: frame must be {d}x{n}")
            frames.append(f)
        else:
            _require("weight" in atom, f"atom {k}: missing 'weight'")
        if "weight" in atom:
            w = atom["weight"]
            _require(isinstance(w, (int, float)) and w >= 0, f"atom {k}: weight must be a number >= 0")
            weights.append(float(w))
    if d == 0:
        return DiracVarifold.from_points(np.array(xs), np.array(weights))
    v = DiracVarifold.from_frames(np.array(xs), np.array(frames))
    if len(weights) == len(atoms):
        given = np.array(weights)
        _require(bool(np.all(np.abs(given - v.weights) <= 1e-12 * np.maximum(1.0, v.weights) + 1e-15)),
                 "atom weights disagree with their frame volumes")
    return v


def save_varifold(v: DiracVarifold, path: str | Path) -> None:
    Path(path).write_text(json.dumps(varifold_to_dict(v), indent=1, sort_keys=True) + "\n")


def load_json(path: str | Path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc


def load_varifold(path: str | Path) -> DiracVarifold:
    return varifold_from_dict(load_json(path))


# --- geometry readers ----------------------------------------------------

def read_polyline_csv(path: str | Path, closed: bool = False) -> Polyline:
    """One vertex per line, comma separated, 2 or 3 coordinates."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            row = [c.strip() for c in row if c.strip()]
            if not row or row[0].startswith("#"):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: non-numeric value") from exc
    if not rows:
        raise ParseError(f"{path}: no vertices")
    if len({len(r) for r in rows}) != 1 or len(rows[0]) not in (2, 3):
        raise ParseError(f"{path}: every line needs the same 2 or 3 coordinates")
    return Polyline(np.array(rows), closed=closed)


def read_obj(path: str | Path) -> TriMesh:
    """Vertices (``v``) and triangular faces (``f``) only; other records ignored."""
    verts, faces = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            try:
                if parts[0] == "v":
                    verts.append([float(c) for c in parts[1:4]])
                elif parts[0] == "f":
                    idx = [int(p.split("/")[0]) for p in parts[1:]]
                    if len(idx) != 3:
                        raise ParseError(f"{path}:{lineno}: only triangles are supported")
                    faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: malformed record") from exc
    if not verts or not faces:
        raise ParseError(f"{path}: needs at least one vertex and one face")
    try:
        return TriMesh(np.array(verts), np.array(faces, dtype=int))
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc


# --- outputs ---------------------------------------------------------------

def write_vtk_atoms(path: str | Path, positions: NDArray, frames: NDArray | None, weights: NDArray,
                    title: str = "varifold") -> None:
    """Legacy ASCII polydata: one vertex per atom with weight and frame data."""
    pts = np.zeros((len(positions), 3))
    pts[:, : positions.shape[1]] = positions
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET POLYDATA",
             f"POINTS {len(pts)} double"]
    lines += [" ".join(f"{c:.17g}" for c in p) for p in pts]
    lines.append(f"VERTICES {len(pts)} {2 * len(pts)}")
    lines += [f"1 {i}" for i in range(len(pts))]
    lines += [f"POINT_DATA {len(pts)}", "SCALARS weight double 1", "LOOKUP_TABLE default"]
    lines += [f"{w:.17g}" for w in weights]
    if frames is not None:
        for k in range(frames.shape[1]):
            vec = np.zeros((len(pts), 3))
            vec[:, : frames.shape[2]] = frames[:, k]
            lines.append(f"VECTORS frame{k} double")
            lines += [" ".join(f"{c:.17g}" for c in row) for row in vec]
    Path(path).write_text("\n".join(lines) + "\n")


def export_trajectory(out_dir: str | Path, traj: Trajectory, params: DynamicsParams,
                      alpha: NDArray | None = None) -> Path:
    """Write ``trajectory.json`` and ``trajectory/step_XXX.vtk`` under ``out_dir``."""
    out = Path(out_dir)
    vtk_dir = out / "trajectory"
    vtk_dir.mkdir(parents=True, exist_ok=True)
    weights = weight_path(traj, params, alpha)
    snaps = []
    for j, t in enumerate(traj.times):
        q, _ = traj.at(j)
        frames = q.u if traj.layout.d > 0 else None
        write_vtk_atoms(vtk_dir / f"step_{j:03d}.vtk", q.x, frames, weights[j], f"t = {t:.6f}")
        snap: dict[str, Any] = {"t": float(t), "x": q.x.tolist(), "weight": weights[j].tolist()}
        if frames is not None:
            snap["frame"] = frames.tolist()
        snaps.append(snap)
    doc = {"model": traj.model, "n": traj.layout.n, "d": traj.layout.d, "snapshots": snaps}
    path = out / "trajectory.json"
    path.write_text(json.dumps(doc) + "\n")
    return path


def write_weights_csv(path: str | Path, times: NDArray, weights: NDArray) -> None:
    """Rows ``t, w_0, ..., w_{N-1}``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"atom_{i}" for i in range(weights.shape[1])])
        for t, row in zip(times, weights):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in row])


def write_table_csv(path: str | Path, header: list[str], rows: list[list[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
