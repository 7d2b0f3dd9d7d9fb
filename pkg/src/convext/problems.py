"""Problem files: JSON descriptors that expand deterministically to grids.

A problem file carries the t and x axes, descriptors (or raw grids) for
the weight phi(t, x) and the source psi(x), and solver parameters. The
descriptor language is closed-form families; expansion evaluates them on
the grid nodes, so a problem file plus a seed fully determines every
artifact the CLI writes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .extension import SofteningParams
from .grids import GridFunction, GridSpec, ProductGridFunction

__all__ = ["ProblemSpec", "expand_descriptor", "load_problem"]

INF = float("inf")


def expand_descriptor(desc: dict, dim_t: int, dim_x: int) -> "np.ndarray | None":
    """Evaluate a descriptor on (size, dim_t + dim_x) points.

    Returns a callable-applied array factory via closure: callers pass the
    node points. Descriptors over x only use dim_t = 0.
    """
    kind = desc.get("kind")
    if kind is None:
        raise InputError("descriptor missing 'kind'")
    dim = dim_t + dim_x

    if kind == "zero":
        return lambda pts: np.zeros(pts.shape[0])

    if kind == "constant":
        c = float(desc["value"])
        return lambda pts: np.full(pts.shape[0], c)

    if kind == "quadratic":
        Mt = np.asarray(desc["matrix"], dtype=np.float64)
        if Mt.shape != (dim, dim):
            raise InputError(f"quadratic matrix must be {dim}x{dim}, got {Mt.shape}")
        lin = np.asarray(desc.get("linear", np.zeros(dim)), dtype=np.float64)
        off = float(desc.get("offset", 0.0))
        return lambda pts: 0.5 * np.einsum("pi,ij,pj->p", pts, Mt, pts) + pts @ lin + off

    if kind == "max_affine":
        affs = desc.get("affines", [])
        if not affs:
            raise InputError("max_affine needs at least one affine")
        slopes = np.asarray([a["slope"] for a in affs], dtype=np.float64)
        offs = np.asarray([a["offset"] for a in affs], dtype=np.float64)
        if slopes.shape[1] != dim:
            raise InputError(f"max_affine slopes must have length {dim}")
        return lambda pts: np.max(pts @ slopes.T + offs[None, :], axis=1)

    if kind == "gaussian_shift":
        s = float(desc.get("scale", 1.0))
        const = 0.5 * dim_x * math.log(2.0 * math.pi)

        def gauss(pts):
            x = pts[:, dim_t:]
            if dim_t > 0:
                t = pts[:, :dim_t]
                mean = s * t[:, np.arange(dim_x) % dim_t]
            else:
                mean = 0.0
            return 0.5 * np.sum((x - mean) ** 2, axis=1) + const

        return gauss

    if kind == "sum":
        parts = [expand_descriptor(t, dim_t, dim_x) for t in desc.get("terms", [])]
        if not parts:
            raise InputError("sum needs at least one term")
        return lambda pts: sum(p(pts) for p in parts)

    raise InputError(f"unknown descriptor kind {kind!r}")


def _expand_phi(desc: dict, t_spec: GridSpec, x_spec: GridSpec) -> ProductGridFunction:
    if desc.get("kind") == "grid":
        token = desc.get("inf_token", "inf")
        vals = np.array([INF if v == token else float(v) for v in desc["values"]])
        return ProductGridFunction(t_spec, x_spec, vals)
    fn = expand_descriptor(desc, t_spec.dim, x_spec.dim)
    return ProductGridFunction.sample(t_spec, x_spec, fn)


def _expand_psi(desc: dict, x_spec: GridSpec) -> GridFunction:
    if desc.get("kind") == "grid":
        token = desc.get("inf_token", "inf")
        vals = np.array([INF if v == token else float(v) for v in desc["values"]])
        return GridFunction(x_spec, vals)
    fn = expand_descriptor(desc, 0, x_spec.dim)
    return GridFunction.sample(x_spec, fn)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """A fully expanded problem: grids, weight, source, parameters."""

    t_spec: GridSpec
    x_spec: GridSpec
    phi: ProductGridFunction
    psi: GridFunction
    params: SofteningParams
    tol: float
    max_iter: int
    seed: int
    samples: int

    @classmethod
    def from_dict(cls, d: dict, overrides: dict | None = None) -> "ProblemSpec":
        try:
            t_spec = GridSpec([(a["lo"], a["hi"], a["count"]) for a in d.get("t_axes", [])])
            x_spec = GridSpec([(a["lo"], a["hi"], a["count"]) for a in d["x_axes"]])
            phi = _expand_phi(d["phi"], t_spec, x_spec)
            psi = _expand_psi(d.get("psi", {"kind": "zero"}), x_spec)
            p = dict(d.get("params", {}))
            if overrides:
                p.update({k: v for k, v in overrides.items() if v is not None})
            lam = float(p.get("lambda", 100.0))
            if "dual_axes" in p:
                dual = GridSpec([(a["lo"], a["hi"], a["count"]) for a in p["dual_axes"]])
            else:
                from .transforms import auto_dual_spec
                dual = auto_dual_spec(psi)
            params = SofteningParams(lam, dual)
            return cls(
                t_spec=t_spec, x_spec=x_spec, phi=phi, psi=psi, params=params,
                tol=float(p.get("tol", 1e-9)),
                max_iter=int(p.get("max_iter", 200)),
                seed=int(p.get("seed", 0)),
                samples=int(p.get("samples", 1000)),
            )
        except KeyError as exc:
            raise InputError(f"problem file missing field {exc}") from exc


def load_problem(path: str, overrides: dict | None = None) -> ProblemSpec:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(
                f"malformed problem JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    return ProblemSpec.from_dict(d, overrides)
