"""Command-line front end: ``varimorph <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path
from typing import Any

import numpy as np

from . import io
from .analytic import geodesic_dirac0, geodesic_dirac1
from .dynamics import Costate, DynamicsParams, initial_state, rk4_shoot, hamiltonian_drift, reduced_hamiltonian
from .errors import ALL_ERRORS, SchemaError, VarimorphError
from .evaluation import SWEEP_HEADER, chamfer, final_densities, gamma_sweep, weight_histogram
from .kernels import DeformKernelSpec, FidelityKernelSpec
from .optimizer import OptimizerConfig
from .registration import RegistrationProblem, register, synth_circle_ellipse, synth_partial
from .varifold import curve_to_varifold, mesh_to_varifold

logger = logging.getLogger("varimorph")

THREADS_ENV = "VARIMORPH_THREADS"


def _exit_code_table() -> str:
    lines = ["exit codes:", "  0  success", "  1  other error"]
    lines += [f"  {cls.exit_code:<2} {cls.__name__}" for cls in ALL_ERRORS]
    return "\n".join(lines)


# --- config documents --------------------------------------------------------

def _get(doc: dict, key: str, kind, default=None, required: bool = False):
    if key not in doc:
        if required:
            raise SchemaError(f"missing key {key!r}")
        return default
    value = doc[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise SchemaError(f"{key!r} must be of type {getattr(kind, '__name__', kind)}")
    return value


def problem_from_config(doc: Any, base_dir: Path) -> RegistrationProblem:
    """Build a problem from a registration config document."""
    if not isinstance(doc, dict):
        raise SchemaError("config must be a JSON object")
    known = {"source", "target", "model", "lam", "gamma", "deform_kernel", "fidelity_kernel", "T",
             "optimizer", "init"}
    unknown = set(doc) - known
    if unknown:
        raise SchemaError(f"unknown config keys: {sorted(unknown)}")
    source = io.load_varifold(base_dir / _get(doc, "source", str, required=True))
    target = io.load_varifold(base_dir / _get(doc, "target", str, required=True))
    model = _get(doc, "model", str, "fr")
    if model not in ("lddmm", "l2", "fr"):
        raise SchemaError("model must be one of lddmm, l2, fr")
    dk = _get(doc, "deform_kernel", dict, {})
    fk = _get(doc, "fidelity_kernel", dict, {})
    oc = _get(doc, "optimizer", dict, {})
    try:
        deform = DeformKernelSpec(_get(dk, "sigma_v", float, 1.0), _get(dk, "kind", str, "gaussian"))
        fid = FidelityKernelSpec(_get(fk, "sigma_w", float, 1.0), _get(fk, "grass_kind", str, "oriented_gaussian"),
                                 _get(fk, "sigma_g", float, 1.0), _get(fk, "pos_kind", str, "gaussian"))
        opt = OptimizerConfig(memory=_get(oc, "memory", int, 10), max_iters=_get(oc, "max_iters", int, 500),
                              grad_tol=_get(oc, "grad_tol", float, 1e-6), c1=_get(oc, "c1", float, 1e-4),
                              c2=_get(oc, "c2", float, 0.9))
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc
    init = _get(doc, "init", str, "zero")
    init_vec = None
    if init != "zero":
        init_vec = np.asarray(io.load_json(base_dir / init)["theta"], dtype=float)
    try:
        return RegistrationProblem(source, target, model, _get(doc, "lam", float, 10.0),
                                   _get(doc, "gamma", float, 0.1), deform, fid, _get(doc, "T", int, 15), opt,
                                   init_vec)
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


# --- commands -----------------------------------------------------------------

def cmd_convert(args: argparse.Namespace) -> int:
    if args.kind == "curve":
        v = curve_to_varifold(io.read_polyline_csv(args.input, closed=args.closed))
    else:
        v = mesh_to_varifold(io.read_obj(args.input))
    io.save_varifold(v, args.output)
    logger.info("wrote %d atoms (total mass %.6g) to %s", len(v), float(v.weights.sum()), args.output)
    return 0


def _write_result_bundle(out: Path, res, plots: bool) -> None:
    from . import plotting

    out.mkdir(parents=True, exist_ok=True)
    doc = res.to_dict()
    doc["theta"] = res.theta.tolist()
    (out / "result.json").write_text(json.dumps(doc, indent=1) + "\n")
    traj = res.trajectory
    obj = res.problem.objective()
    io.export_trajectory(out, traj, obj.params, res.control if res.problem.model == "l2" else None)
    io.write_weights_csv(out / "weights.csv", traj.times, res.weights)
    hist = weight_histogram(res)
    io.write_table_csv(out / "histogram.csv", ["lo", "hi", "count"], hist.rows())
    if plots:
        q1, _ = traj.final()
        frames = q1.u if traj.layout.d > 0 else None
        plotting.plot_registration(out / "registration.png", res.problem.source, res.problem.target, q1.x, frames,
                                   res.final_weights, f"{res.problem.model}")
        plotting.plot_weight_paths(out / "weights.png", traj.times, res.weights)
        plotting.plot_histogram(out / "histogram.png", hist.counts, hist.edges, "final weight density")


def cmd_register(args: argparse.Namespace) -> int:
    cfg = Path(args.config)
    problem = problem_from_config(io.load_json(cfg), cfg.parent)
    res = register(problem)
    _write_result_bundle(Path(args.output), res, not args.no_plots)
    e = res.energies
    print(f"{problem.model}: {res.diagnostics.reason} after {res.diagnostics.iterations} iterations; "
          f"total {e['total']:.6g} (deformation {e['deformation']:.6g}, weight {e['weight']:.6g}, "
          f"fidelity {e['fidelity']:.6g})")
    return 0


def cmd_shoot(args: argparse.Namespace) -> int:
    src = io.load_varifold(args.varifold)
    doc = io.load_json(args.costates)
    N, n, d = len(src), src.n, src.d
    try:
        px = np.asarray(doc["px"], dtype=float).reshape(N, n)
        pu = np.asarray(doc.get("pu", np.zeros((N, d, n))), dtype=float).reshape(N, d, n)
        pa = np.asarray(doc.get("palpha", np.zeros(N)), dtype=float).reshape(N) if args.model == "fr" else None
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"costate document: {exc}") from exc
    params = DynamicsParams(DeformKernelSpec(args.sigma_v), args.gamma,
                            src.weights.copy() if d == 0 else None)
    q0 = initial_state(src, args.model)
    p0 = Costate(px, pu, pa)
    traj = rk4_shoot(q0, p0, args.model, params, args.T)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    io.export_trajectory(out, traj, params)
    from .dynamics import weight_path

    io.write_weights_csv(out / "weights.csv", traj.times, weight_path(traj, params))
    summary = {"energy": reduced_hamiltonian(q0, p0, args.model, params),
               "hamiltonian_drift": hamiltonian_drift(traj, params)}
    (out / "shoot.json").write_text(json.dumps(summary, indent=1) + "\n")
    print(f"energy {summary['energy']:.6g}, drift {summary['hamiltonian_drift']:.3e}")
    return 0


def cmd_geodesic_dirac(args: argparse.Namespace) -> int:
    t = np.linspace(0.0, 1.0, args.samples)
    if args.d == 0:
        geo = geodesic_dirac0(args.x0, args.r0, args.x1, args.r1, args.gamma)
        x, r = geo(t)
        header = ["t"] + [f"x{k}" for k in range(x.shape[1])] + ["r"]
        rows = [[ti, *xi, ri] for ti, xi, ri in zip(t, x, r)]
    else:
        if args.u0 is None or args.u1 is None:
            raise SchemaError("--u0 and --u1 are required for d = 1")
        geo = geodesic_dirac1(args.x0, args.u0, args.r0, args.x1, args.u1, args.r1, args.gamma,
                              DeformKernelSpec(args.sigma_v))
        x, u, r = geo(t)
        n = x.shape[1]
        header = ["t"] + [f"x{k}" for k in range(n)] + [f"u{k}" for k in range(n)] + ["r"]
        rows = [[ti, *xi, *ui, ri] for ti, xi, ui, ri in zip(t, x, u, r)]
    rows = [[repr(float(c)) for c in row] for row in rows]
    io.write_table_csv(args.output, header, rows)
    if args.plot:
        from . import plotting

        plotting.plot_geodesic(Path(args.output).with_suffix(".png"), t, x, r)
    print(f"cost {geo.cost:.12g} (distance {np.sqrt(geo.cost):.12g})")
    return 0


def _final_snapshot(result_dir: Path) -> dict:
    doc = io.load_json(result_dir / "trajectory.json")
    try:
        return doc["snapshots"][-1]
    except (KeyError, IndexError, TypeError) as exc:
        raise SchemaError("trajectory.json has no snapshots") from exc


def cmd_eval(args: argparse.Namespace) -> int:
    result_dir = Path(args.result_dir)
    snap = _final_snapshot(result_dir)
    final = np.asarray(snap["x"], dtype=float)
    rows = [["final_atoms", len(final)], ["total_weight", float(np.sum(snap["weight"]))]]
    if args.ground_truth:
        gt = io.load_varifold(args.ground_truth)
        rows.append(["chamfer", chamfer(final, gt.positions)])
    io.write_table_csv(args.output, ["metric", "value"], rows)
    for name, value in rows:
        print(f"{name}: {value}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = Path(args.config)
    problem = problem_from_config(io.load_json(cfg), cfg.parent)
    rows = gamma_sweep(problem, args.gammas)
    io.write_table_csv(args.output, SWEEP_HEADER, [r.as_list() for r in rows])
    if args.plot:
        from . import plotting

        plotting.plot_gamma_sweep(Path(args.output).with_suffix(".png"), [r.gamma for r in rows],
                                  [r.deformation for r in rows], [r.weight for r in rows])
    for r in rows:
        print(", ".join(f"{h} {v:.6g}" for h, v in zip(SWEEP_HEADER, r.as_list())))
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    if args.instance == "circle-ellipse":
        src, tgt = synth_circle_ellipse(args.segments)
        io.save_varifold(src, out / "source.json")
        io.save_varifold(tgt, out / "target.json")
    else:
        src, tgt, truth = synth_partial(args.shape, args.removed, args.segments, seed=args.seed,
                                        size_ratio=args.size_ratio)
        io.save_varifold(src, out / "source.json")
        io.save_varifold(tgt, out / "target.json")
        io.save_varifold(truth, out / "ground_truth.json")
    print(f"wrote {args.instance} instance to {out}")
    return 0


def _vec(text: str) -> list[float]:
    try:
        return [float(c) for c in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="varimorph",
        description="Diffeomorphic registration of discrete varifolds with weight change.",
        epilog=_exit_code_table() + f"\n\nenvironment:\n  {THREADS_ENV}  thread count for linear algebra",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--seed", type=int, default=0, help="seed for synthetic generators (default 0)")
    parser.add_argument("--deterministic", action="store_true",
                        help="single-threaded, ordered reductions for bitwise reproducibility")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="polyline CSV or OBJ mesh to varifold JSON")
    p.add_argument("input")
    p.add_argument("--kind", choices=["curve", "mesh"], required=True)
    p.add_argument("--closed", action="store_true", help="close the polyline")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("register", help="run a registration from a JSON config")
    p.add_argument("config")
    p.add_argument("-o", "--output", required=True, help="result bundle directory")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("shoot", help="integrate the geodesic from given initial costates")
    p.add_argument("varifold")
    p.add_argument("costates", help="JSON with px, pu and (fr) palpha")
    p.add_argument("--model", choices=["lddmm", "l2", "fr"], default="fr")
    p.add_argument("--sigma-v", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--T", type=int, default=15)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_shoot)

    p = sub.add_parser("geodesic-dirac", help="closed-form single-Dirac geodesic sampled to CSV")
    p.add_argument("--d", type=int, choices=[0, 1], default=1)
    p.add_argument("--x0", type=_vec, required=True)
    p.add_argument("--x1", type=_vec, required=True)
    p.add_argument("--u0", type=_vec)
    p.add_argument("--u1", type=_vec)
    p.add_argument("--r0", type=float, required=True)
    p.add_argument("--r1", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--sigma-v", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=101)
    p.add_argument("--plot", action="store_true")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_geodesic_dirac)

    p = sub.add_parser("eval", help="metrics for a result bundle")
    p.add_argument("result_dir")
    p.add_argument("--ground-truth")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="gamma sweep of a registration config")
    p.add_argument("config")
    p.add_argument("--gammas", type=_vec, required=True)
    p.add_argument("--plot", action="store_true")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="write a synthetic benchmark instance")
    p.add_argument("instance", choices=["circle-ellipse", "partial"])
    p.add_argument("--segments", type=int, default=64)
    p.add_argument("--shape", choices=["blob", "circle"], default="blob")
    p.add_argument("--removed", type=float, default=0.25)
    p.add_argument("--size-ratio", type=float, default=0.6, help="ground-truth size relative to the source")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def _thread_limit(deterministic: bool):
    limit = 1 if deterministic else os.environ.get(THREADS_ENV)
    if limit is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(limit))


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit(args.deterministic):
            return args.func(args)
    except VarimorphError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
