"""Batch command-line front end.

Subcommands wrap the library operations, read problem/function JSON files,
and write reports (JSON), residual and trace tables (CSV, full 17
significant digits, '.' decimal), and one manifest per run. All output
files are written atomically (temp file + rename). Exit codes: 0 success,
1 input error, 2 constraint failure.

The EXTENDER_THREADS environment variable caps internal parallelism
(slicewise extremal computation); results do not depend on it.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .errors import ConvextError, InputError
from .extension import extend_convex
from .extremal import extremal_function, extremal_oracle
from .grids import GridFunction, ProductGridFunction, check_midpoint_convexity, joint_check
from .integrals import constraint_residuals, prekopa_marginal
from .problems import load_problem
from .transforms import GridSpec, auto_dual_spec, legendre_transform

CONVEXITY_TOL = 1e-6


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else "-inf"
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (np.floating, np.integer)):
        return _jsonable(float(x))
    return x


def _write_json(path: str, obj: dict, indent=None) -> None:
    _atomic_write(path, json.dumps(_jsonable(obj), indent=indent))


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def _convexity_dict(report) -> dict:
    return {
        "worst_violation": report.worst_violation,
        "witness": report.witness,
        "checked_count": report.checked_count,
    }


def _t_value_field(phi_like, j: int) -> str:
    coords = phi_like.t_coords(j)
    return ";".join(_fmt(float(c)) for c in coords)


def _residuals_csv(Psi, phi) -> str:
    res = constraint_residuals(Psi, phi)
    lines = ["t_index,t_value,residual_nats"]
    for j in range(phi.n_slices):
        lines.append(f"{j},{_t_value_field(phi, j)},{_fmt(float(res[j]))}")
    return "\n".join(lines) + "\n"


def _trace_csv(trace) -> str:
    lines = ["k,log_A,theoretical"]
    for k in range(trace.log_A.shape[0]):
        lines.append(f"{k},{_fmt(float(trace.log_A[k]))},{_fmt(float(trace.theoretical[k]))}")
    return "\n".join(lines) + "\n"


class _Manifest:
    def __init__(self, argv, input_path):
        self.t0 = time.monotonic()
        self.data = {
            "command": list(argv),
            "input": input_path,
            "input_sha256": _sha256(input_path) if input_path else None,
            "parameters": {},
            "versions": {
                "convext": __version__,
                "numpy": np.__version__,
                "python": sys.version.split()[0],
            },
            "outputs": [],
        }

    def write(self, out_dir: str) -> None:
        self.data["wall_time_s"] = time.monotonic() - self.t0
        _write_json(os.path.join(out_dir, "manifest.json"), self.data, indent=2)


def _dual_spec_from_args(args, default=None) -> GridSpec | None:
    los = args.dual_lo or []
    his = args.dual_hi or []
    counts = args.dual_count or []
    if not (los or his or counts):
        return default
    if not (len(los) == len(his) == len(counts)):
        raise InputError("--dual-lo/--dual-hi/--dual-count must repeat equally often")
    return GridSpec(list(zip(los, his, counts)))


def _load_grid_function(path: str) -> GridFunction:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(
                f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    return GridFunction.from_dict(d)


def cmd_extend(args, argv) -> int:
    manifest = _Manifest(argv, args.problem)
    overrides = {
        "lambda": getattr(args, "lambda"),
        "tol": args.tol,
        "max_iter": args.max_iter,
        "seed": args.seed,
        "samples": args.samples,
    }
    dual = _dual_spec_from_args(args)
    if dual is not None:
        overrides["dual_axes"] = [
            {"lo": a.lo, "hi": a.hi, "count": a.count} for a in dual.axes]
    problem = load_problem(args.problem, overrides)
    os.makedirs(args.out, exist_ok=True)
    manifest.data["parameters"] = {
        "lambda": problem.params.lam,
        "dual_axes": problem.params.dual_spec.to_dict()["axes"],
        "tol": problem.tol, "max_iter": problem.max_iter,
        "seed": problem.seed, "samples": problem.samples,
    }
    rep = extend_convex(problem.psi, problem.phi, problem.params,
                        tol=problem.tol, max_iter=problem.max_iter,
                        samples=problem.samples, seed=problem.seed)
    psi_target = GridFunction(problem.x_spec,
                              problem.psi.values - rep.normalization_shift)
    report = {
        "kind": "extension_report",
        "problem_path": os.path.abspath(args.problem),
        "problem_sha256": manifest.data["input_sha256"],
        "lambda": problem.params.lam,
        "tol": problem.tol,
        "seed": problem.seed,
        "samples": problem.samples,
        "max_residual": rep.max_residual,
        "restriction_error": rep.restriction_error,
        "normalization_shift": rep.normalization_shift,
        "converged": rep.trace.converged if rep.trace is not None else True,
        "joint_convexity": _convexity_dict(rep.joint_convexity),
        "trace": rep.trace.to_dict() if rep.trace is not None else None,
        "psi_target": psi_target.to_dict(),
        "phi": problem.phi.to_dict(),
        "Psi": rep.Psi.to_dict(),
    }
    _write_json(os.path.join(args.out, "report.json"), report)
    _atomic_write(os.path.join(args.out, "residuals.csv"),
                  _residuals_csv(rep.Psi, problem.phi))
    if rep.trace is not None:
        _atomic_write(os.path.join(args.out, "trace.csv"), _trace_csv(rep.trace))
        manifest.data["outputs"].append("trace.csv")
    manifest.data["outputs"] += ["report.json", "residuals.csv"]
    manifest.write(args.out)
    ok = (report["converged"] and rep.max_residual <= problem.tol
          and rep.joint_convexity.worst_violation <= CONVEXITY_TOL)
    print(f"extend: max_residual={rep.max_residual:.3e} "
          f"joint_convexity={rep.joint_convexity.worst_violation:.3e} "
          f"restriction_gap={rep.restriction_error:.3e} "
          f"converged={report['converged']}")
    return 0 if ok else 2


def cmd_prekopa(args, argv) -> int:
    manifest = _Manifest(argv, args.problem)
    problem = load_problem(args.problem, {"seed": args.seed, "samples": args.samples})
    os.makedirs(args.out, exist_ok=True)
    marg = prekopa_marginal(problem.phi)
    conv = check_midpoint_convexity(marg, samples=problem.samples, seed=problem.seed)
    _write_json(os.path.join(args.out, "marginal.json"), marg.to_dict())
    lines = ["t_index,t_value,marginal_nats"]
    for j in range(problem.phi.n_slices):
        lines.append(f"{j},{_t_value_field(problem.phi, j)},{_fmt(float(marg.flat[j]))}")
    _atomic_write(os.path.join(args.out, "marginal.csv"), "\n".join(lines) + "\n")
    _write_json(os.path.join(args.out, "convexity.json"), _convexity_dict(conv), indent=2)
    manifest.data["parameters"] = {"seed": problem.seed, "samples": problem.samples}
    manifest.data["outputs"] = ["marginal.json", "marginal.csv", "convexity.json"]
    manifest.write(args.out)
    print(f"prekopa: convexity_violation={conv.worst_violation:.3e}")
    return 0 if conv.worst_violation <= CONVEXITY_TOL else 2


def cmd_legendre(args, argv) -> int:
    manifest = _Manifest(argv, args.function)
    f = _load_grid_function(args.function)
    dual = _dual_spec_from_args(args, default=auto_dual_spec(f))
    os.makedirs(args.out, exist_ok=True)
    g = legendre_transform(f, dual, method=args.method)
    _write_json(os.path.join(args.out, "conjugate.json"), g.to_dict())
    manifest.data["parameters"] = {"dual_axes": dual.to_dict()["axes"],
                                   "method": args.method}
    manifest.data["outputs"] = ["conjugate.json"]
    manifest.write(args.out)
    print(f"legendre: wrote conjugate on {dual.counts} dual grid")
    return 0


def cmd_extremal(args, argv) -> int:
    manifest = _Manifest(argv, args.function)
    phi = _load_grid_function(args.function)
    dual = _dual_spec_from_args(args, default=auto_dual_spec(phi))
    os.makedirs(args.out, exist_ok=True)
    res = extremal_function(phi, dual)
    _write_json(os.path.join(args.out, "extremal.json"), res.E.to_dict())
    _write_json(os.path.join(args.out, "logz.json"), res.logZ.to_dict())
    conv = check_midpoint_convexity(res.E, samples=args.samples or 1000,
                                    seed=args.seed or 0)
    _write_json(os.path.join(args.out, "summary.json"), {
        "feasibility_residual": res.feasibility_residual,
        "E_convexity": _convexity_dict(conv),
    }, indent=2)
    outputs = ["extremal.json", "logz.json", "summary.json"]
    if args.oracle_x0:
        lines = ["x0,dual_path_value,oracle_value,gap"]
        for idx in args.oracle_x0:
            dual_val = float(res.E.flat[idx])
            ov = extremal_oracle(phi, idx, iterations=args.oracle_iterations)
            lines.append(f"{_fmt(float(phi.spec.points()[idx][0]))},"
                         f"{_fmt(dual_val)},{_fmt(ov)},{_fmt(dual_val - ov)}")
        _atomic_write(os.path.join(args.out, "oracle.csv"), "\n".join(lines) + "\n")
        outputs.append("oracle.csv")
    manifest.data["parameters"] = {"dual_axes": dual.to_dict()["axes"],
                                   "oracle_x0": args.oracle_x0,
                                   "oracle_iterations": args.oracle_iterations}
    manifest.data["outputs"] = outputs
    manifest.write(args.out)
    print(f"extremal: feasibility_residual={res.feasibility_residual:.4f}")
    return 0


def cmd_verify(args, argv) -> int:
    with open(args.report) as fh:
        try:
            rep = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(
                f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    if rep.get("kind") != "extension_report":
        raise InputError("not an extension report")
    Psi = ProductGridFunction.from_dict(rep["Psi"])
    phi = ProductGridFunction.from_dict(rep["phi"])
    psi_target = GridFunction.from_dict(rep["psi_target"])
    if args.problem:
        problem = load_problem(args.problem)
        if not np.array_equal(problem.phi.values, phi.values):
            print("verify: embedded phi differs from the problem file", file=sys.stderr)
            return 2
    tol = float(rep["tol"])
    res = constraint_residuals(Psi, phi)
    max_res = float(np.max(res))
    conv = joint_check(Psi, samples=int(rep.get("samples", 1000)),
                       seed=int(rep.get("seed", 0)))
    j0 = phi.t_zero_index()
    restr = float(np.max(np.abs(Psi.slices_matrix[j0] - psi_target.flat)))
    ok_res = max_res <= max(tol, float(rep["max_residual"]) + 1e-9)
    ok_conv = conv.worst_violation <= CONVEXITY_TOL
    ok_restr = restr <= float(rep["restriction_error"]) + 1e-9
    ok_claimed = bool(rep.get("converged", True))
    print(f"verify: max_residual={max_res:.3e} (claimed {float(rep['max_residual']):.3e}) "
          f"joint_convexity={conv.worst_violation:.3e} restriction={restr:.3e}")
    return 0 if (ok_res and ok_conv and ok_restr and ok_claimed) else 2


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", required=True, help="output directory")


def _add_dual_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dual-lo", type=float, action="append",
                   help="dual axis lower bound (repeat per axis)")
    p.add_argument("--dual-hi", type=float, action="append",
                   help="dual axis upper bound (repeat per axis)")
    p.add_argument("--dual-count", type=int, action="append",
                   help="dual axis node count (repeat per axis)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="convext",
        description="Convex extension under log-concave integral constraints")
    sub = ap.add_subparsers(dest="command", required=True)

    pe = sub.add_parser("extend", help="run the extension pipeline on a problem file")
    pe.add_argument("--problem", required=True)
    _add_common(pe)
    pe.add_argument("--lambda", type=float, default=None, dest="lambda")
    pe.add_argument("--tol", type=float, default=None)
    pe.add_argument("--max-iter", type=int, default=None)
    pe.add_argument("--seed", type=int, default=None)
    pe.add_argument("--samples", type=int, default=None)
    _add_dual_flags(pe)
    pe.set_defaults(fn=cmd_extend)

    pp = sub.add_parser("prekopa", help="marginal of the problem's weight")
    pp.add_argument("--problem", required=True)
    _add_common(pp)
    pp.add_argument("--seed", type=int, default=None)
    pp.add_argument("--samples", type=int, default=None)
    pp.set_defaults(fn=cmd_prekopa)

    pl = sub.add_parser("legendre", help="discrete conjugate of a grid function")
    pl.add_argument("--function", required=True)
    _add_common(pl)
    pl.add_argument("--method", choices=["sweep", "direct"], default="sweep")
    _add_dual_flags(pl)
    pl.set_defaults(fn=cmd_legendre)

    px = sub.add_parser("extremal", help="extremal function of a weight")
    px.add_argument("--function", required=True)
    _add_common(px)
    px.add_argument("--seed", type=int, default=None)
    px.add_argument("--samples", type=int, default=None)
    px.add_argument("--oracle-x0", type=int, action="append",
                    help="flat node index for an oracle comparison (repeatable)")
    px.add_argument("--oracle-iterations", type=int, default=2000)
    _add_dual_flags(px)
    px.set_defaults(fn=cmd_extremal)

    pv = sub.add_parser("verify", help="re-check a stored extension report")
    pv.add_argument("--report", required=True)
    pv.add_argument("--problem", default=None,
                    help="optionally re-expand and compare the problem file")
    pv.set_defaults(fn=cmd_verify)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args, argv)
    except ConvextError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
