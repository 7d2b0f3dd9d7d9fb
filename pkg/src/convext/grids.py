"""Tensor grids over boxes and grid-sampled extended-real functions.

All functions in this library live in the exponent of e (units: nats) and
are represented by their values on a uniform tensor grid. +inf is a
first-class value marking points outside the effective domain; -inf and NaN
are rejected. Arithmetic follows x + inf = inf and, in `scale`, 0 * inf = 0.

Grid coordinates are reproducible bit-exactly from (lo, hi, count) by

    step      = (hi - lo) / (count - 1)
    coords[i] = lo + i * step

evaluated in IEEE double precision, and the row-major value layout with the
last axis fastest is normative for file I/O.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import _kernels
from .errors import DomainError, ShapeError

__all__ = [
    "Axis",
    "GridSpec",
    "GridFunction",
    "ProductGridFunction",
    "ConvexityReport",
    "check_midpoint_convexity",
    "joint_check",
    "shift",
    "add",
    "scale",
    "tilt",
]

INF = float("inf")


class Axis(NamedTuple):
    lo: float
    hi: float
    count: int


@dataclass(frozen=True)
class GridSpec:
    """Uniform tensor grid over a box.

    `axes` may be empty: the zero-dimensional grid has a single node (the
    empty point) and unit cell volume, and stands in for "no parameter
    variables" in product functions.
    """

    axes: tuple[Axis, ...]

    def __init__(self, axes: Sequence[Sequence[float]]):
        parsed = []
        for k, ax in enumerate(axes):
            lo, hi, count = float(ax[0]), float(ax[1]), int(ax[2])
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise DomainError(f"axis {k}: need finite lo < hi, got [{lo}, {hi}]")
            if count < 2:
                raise DomainError(f"axis {k}: need count >= 2, got {count}")
            parsed.append(Axis(lo, hi, count))
        object.__setattr__(self, "axes", tuple(parsed))

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(ax.count for ax in self.axes)

    @property
    def steps(self) -> tuple[float, ...]:
        return tuple((ax.hi - ax.lo) / (ax.count - 1) for ax in self.axes)

    @property
    def size(self) -> int:
        n = 1
        for ax in self.axes:
            n *= ax.count
        return n

    @property
    def cell_volume(self) -> float:
        v = 1.0
        for s in self.steps:
            v *= s
        return v

    @property
    def volume(self) -> float:
        v = 1.0
        for ax in self.axes:
            v *= ax.hi - ax.lo
        return v

    def coords(self, axis: int) -> np.ndarray:
        ax = self.axes[axis]
        step = (ax.hi - ax.lo) / (ax.count - 1)
        return ax.lo + np.arange(ax.count) * step

    def points(self) -> np.ndarray:
        """All grid nodes as a (size, dim) array, row-major node order."""
        if self.dim == 0:
            return np.zeros((1, 0))
        mesh = np.meshgrid(*(self.coords(k) for k in range(self.dim)), indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def point_at(self, index: Sequence[int]) -> np.ndarray:
        return np.array([self.coords(k)[i] for k, i in enumerate(index)])

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        ok = np.ones(pts.shape[0], dtype=bool)
        for k, ax in enumerate(self.axes):
            ok &= (pts[:, k] >= ax.lo) & (pts[:, k] <= ax.hi)
        return ok

    def concat(self, other: "GridSpec") -> "GridSpec":
        return GridSpec(self.axes + other.axes)

    def to_dict(self) -> dict:
        return {"axes": [{"lo": a.lo, "hi": a.hi, "count": a.count} for a in self.axes]}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls([(a["lo"], a["hi"], a["count"]) for a in d["axes"]])


def _check_values(values: np.ndarray, what: str) -> None:
    if np.isnan(values).any():
        raise DomainError(f"{what}: NaN values are not allowed")
    if (values == -INF).any():
        raise DomainError(f"{what}: -inf values are not allowed")
    if not np.isfinite(values).any():
        raise DomainError(f"{what}: at least one finite value is required")


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Extended-real function sampled on a tensor grid (values in nats)."""

    spec: GridSpec
    values: np.ndarray

    def __init__(self, spec: GridSpec, values: np.ndarray):
        arr = np.asarray(values, dtype=np.float64)
        if arr.size != spec.size:
            raise ShapeError(f"expected {spec.size} values, got {arr.size}")
        arr = np.ascontiguousarray(arr.reshape(spec.counts))
        _check_values(arr, "GridFunction")
        arr.flags.writeable = False
        object.__setattr__(self, "spec", spec)
        object.__setattr__(self, "values", arr)

    @classmethod
    def sample(cls, spec: GridSpec, fn: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        """Evaluate `fn` on all grid nodes ((size, dim) points -> values)."""
        return cls(spec, np.asarray(fn(spec.points()), dtype=np.float64))

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def eval(self, points: np.ndarray) -> np.ndarray | float:
        """Multilinear interpolation at one point (d,) or a batch (P, d).

        Node values are reproduced exactly at nodes; a corner with value
        +inf forces +inf only when its interpolation weight is nonzero.
        Points outside the box raise DomainError.
        """
        pts = np.asarray(points, dtype=np.float64)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[1] != self.spec.dim:
            raise ShapeError(f"points have dim {pts.shape[1]}, grid has {self.spec.dim}")
        inside = self.spec.contains(pts)
        if not inside.all():
            bad = pts[np.argmin(inside)]
            raise DomainError(f"point {bad.tolist()} outside the grid box")
        los = [a.lo for a in self.spec.axes]
        out = _kernels.interp_eval(los, self.spec.steps, self.spec.counts, self.values, pts)
        return float(out[0]) if single else out

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.spec, values)

    def to_dict(self) -> dict:
        vals = [v if math.isfinite(v) else "inf" for v in self.flat.tolist()]
        return {"spec": self.spec.to_dict(), "values": vals, "inf_token": "inf"}

    @classmethod
    def from_dict(cls, d: dict) -> "GridFunction":
        spec = GridSpec.from_dict(d["spec"])
        token = d.get("inf_token", "inf")
        vals = np.array([INF if v == token else float(v) for v in d["values"]])
        return cls(spec, vals)


@dataclass(frozen=True, eq=False)
class ProductGridFunction:
    """Function of (t, x) on the product of a t grid and an x grid.

    Values are indexed row-major with the t axes leading, so slice(j)
    is a contiguous GridFunction on the x grid for every flat t index j.
    """

    t_spec: GridSpec
    x_spec: GridSpec
    values: np.ndarray

    def __init__(self, t_spec: GridSpec, x_spec: GridSpec, values: np.ndarray):
        arr = np.asarray(values, dtype=np.float64)
        shape = t_spec.counts + x_spec.counts
        if arr.size != t_spec.size * x_spec.size:
            raise ShapeError(f"expected {t_spec.size * x_spec.size} values, got {arr.size}")
        arr = np.ascontiguousarray(arr.reshape(shape))
        _check_values(arr, "ProductGridFunction")
        for j in range(t_spec.size):
            sl = arr.reshape(t_spec.size, -1)[j]
            if not np.isfinite(sl).any():
                raise DomainError(f"t slice {j} has no finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "t_spec", t_spec)
        object.__setattr__(self, "x_spec", x_spec)
        object.__setattr__(self, "values", arr)

    @classmethod
    def sample(cls, t_spec: GridSpec, x_spec: GridSpec,
               fn: Callable[[np.ndarray], np.ndarray]) -> "ProductGridFunction":
        """Evaluate `fn` on all (t, x) nodes ((size, m+n) points -> values)."""
        pts = t_spec.concat(x_spec).points()
        return cls(t_spec, x_spec, np.asarray(fn(pts), dtype=np.float64))

    @classmethod
    def _wrap(cls, t_spec: GridSpec, x_spec: GridSpec, values: np.ndarray) -> "ProductGridFunction":
        """Internal constructor skipping validation (hot loops only; the
        caller guarantees shape and finiteness invariants)."""
        obj = object.__new__(cls)
        arr = np.ascontiguousarray(values.reshape(t_spec.counts + x_spec.counts))
        arr.flags.writeable = False
        object.__setattr__(obj, "t_spec", t_spec)
        object.__setattr__(obj, "x_spec", x_spec)
        object.__setattr__(obj, "values", arr)
        return obj

    @property
    def combined_spec(self) -> GridSpec:
        return self.t_spec.concat(self.x_spec)

    @property
    def n_slices(self) -> int:
        return self.t_spec.size

    @property
    def slices_matrix(self) -> np.ndarray:
        """(n_slices, x_size) view of the values."""
        return self.values.reshape(self.t_spec.size, -1)

    def slice(self, j) -> GridFunction:
        """GridFunction on the x grid at flat t index (or t multi-index) j."""
        if isinstance(j, (tuple, list)):
            j = int(np.ravel_multi_index(tuple(j), self.t_spec.counts)) if j else 0
        return GridFunction(self.x_spec, self.slices_matrix[j])

    def t_coords(self, j: int) -> np.ndarray:
        if self.t_spec.dim == 0:
            return np.zeros(0)
        idx = np.unravel_index(j, self.t_spec.counts)
        return self.t_spec.point_at(idx)

    def t_zero_index(self) -> int:
        """Flat index of the t = 0 node (|coord| <= 1e-12 scale per axis)."""
        if self.t_spec.dim == 0:
            return 0
        from .errors import ConfigurationError

        idx = []
        for k, ax in enumerate(self.t_spec.axes):
            c = self.t_spec.coords(k)
            i = int(np.argmin(np.abs(c)))
            tol = 1e-12 * max(1.0, abs(ax.lo), abs(ax.hi))
            if abs(c[i]) > tol:
                raise ConfigurationError("no t node at 0 (required anchor slice)")
            idx.append(i)
        return int(np.ravel_multi_index(tuple(idx), self.t_spec.counts))

    def as_grid_function(self) -> GridFunction:
        """The same data as a plain GridFunction on the combined (t, x) grid."""
        return GridFunction(self.combined_spec, self.values)

    def to_dict(self) -> dict:
        vals = [v if math.isfinite(v) else "inf" for v in self.values.reshape(-1).tolist()]
        return {"t_spec": self.t_spec.to_dict(), "x_spec": self.x_spec.to_dict(),
                "values": vals, "inf_token": "inf"}

    @classmethod
    def from_dict(cls, d: dict) -> "ProductGridFunction":
        t_spec = GridSpec.from_dict(d["t_spec"])
        x_spec = GridSpec.from_dict(d["x_spec"])
        token = d.get("inf_token", "inf")
        vals = np.array([INF if v == token else float(v) for v in d["values"]])
        return cls(t_spec, x_spec, vals)


@dataclass(frozen=True)
class ConvexityReport:
    """Worst midpoint-convexity defect found: max f((p+q)/2) - (f(p)+f(q))/2,
    clamped below at 0. `witness` holds (p, q, midpoint) for the worst case."""

    worst_violation: float
    witness: tuple[tuple[float, ...], tuple[float, ...], tuple[float, ...]] | None
    checked_count: int


def _triple_defects(values: np.ndarray, lo_sl, mid_sl, hi_sl):
    left = values[lo_sl]
    right = values[hi_sl]
    mid = values[mid_sl]
    with np.errstate(invalid="ignore"):
        side = 0.5 * (left + right)
        d = mid - side
    # inf endpoints make the midpoint condition vacuous
    d[np.isinf(side)] = -INF
    return d


def _axis_slices(dim: int, axis: int):
    lo = [slice(None)] * dim
    mid = [slice(None)] * dim
    hi = [slice(None)] * dim
    lo[axis] = slice(None, -2)
    mid[axis] = slice(1, -1)
    hi[axis] = slice(2, None)
    return tuple(lo), tuple(mid), tuple(hi)


def _diag_slices(dim: int, a: int, b: int, sign: int):
    lo = [slice(None)] * dim
    mid = [slice(None)] * dim
    hi = [slice(None)] * dim
    lo[a] = slice(None, -2)
    mid[a] = slice(1, -1)
    hi[a] = slice(2, None)
    if sign > 0:
        lo[b] = slice(None, -2)
        hi[b] = slice(2, None)
    else:
        lo[b] = slice(2, None)
        hi[b] = slice(None, -2)
    mid[b] = slice(1, -1)
    return tuple(lo), tuple(mid), tuple(hi)


def check_midpoint_convexity(f: GridFunction, samples: int = 1000, seed: int = 0) -> ConvexityReport:
    """Seeded midpoint-convexity probe.

    Exhausts all axis-aligned and diagonal adjacent node triples, then
    draws `samples` random pairs of finite-valued nodes with even index
    differences, whose midpoints are nodes themselves. Every defect
    f((p+q)/2) - (f(p)+f(q))/2 is therefore exact node arithmetic; triples
    with an infinite endpoint are vacuous and skipped, while an infinite
    midpoint between finite endpoints is a genuine violation.
    """
    if samples < 1:
        raise DomainError("samples must be >= 1")
    spec = f.spec
    v = f.values
    best = -INF
    witness = None
    checked = 0

    def consider(defects: np.ndarray, lo_sl, mid_sl, hi_sl):
        nonlocal best, witness, checked
        checked += int(np.sum(defects != -INF))
        if defects.size == 0:
            return
        k = int(np.argmax(defects))
        d = float(defects.reshape(-1)[k])
        if d > best:
            best = d
            mi = np.unravel_index(k, defects.shape)

            # reconstruct node multi-indices from slice starts
            def node(slices):
                out = []
                for sl, n, i in zip(slices, v.shape, mi):
                    start, _, _ = sl.indices(n)
                    out.append(start + i)
                return tuple(out)

            p, m, q = node(lo_sl), node(mid_sl), node(hi_sl)
            witness = (tuple(float(c) for c in spec.point_at(p)),
                       tuple(float(c) for c in spec.point_at(q)),
                       tuple(float(c) for c in spec.point_at(m)))

    if spec.dim >= 1 and min(spec.counts) >= 1:
        for ax in range(spec.dim):
            if spec.counts[ax] >= 3:
                lo_sl, mid_sl, hi_sl = _axis_slices(spec.dim, ax)
                consider(_triple_defects(v, lo_sl, mid_sl, hi_sl), lo_sl, mid_sl, hi_sl)
        for a in range(spec.dim):
            for b in range(a + 1, spec.dim):
                if spec.counts[a] >= 3 and spec.counts[b] >= 3:
                    for sign in (+1, -1):
                        lo_sl, mid_sl, hi_sl = _diag_slices(spec.dim, a, b, sign)
                        consider(_triple_defects(v, lo_sl, mid_sl, hi_sl), lo_sl, mid_sl, hi_sl)

    # random pairs with even index differences: the midpoint is itself a
    # node, so the defect is exact node arithmetic (multilinear
    # interpolation off the nodes is not convexity-preserving in dim >= 2
    # and would inflate defects of genuinely convex functions)
    finite_idx = np.flatnonzero(np.isfinite(f.flat))
    if finite_idx.size >= 2 and spec.dim >= 1:
        rng = np.random.default_rng(seed)
        ia = finite_idx[rng.integers(0, finite_idx.size, size=samples)]
        pa = np.column_stack(np.unravel_index(ia, spec.counts))
        pb = np.empty_like(pa)
        for k in range(spec.dim):
            c = spec.counts[k]
            dlo = -(pa[:, k] // 2)
            dhi = (c - 1 - pa[:, k]) // 2
            delta = rng.integers(dlo, dhi + 1)
            pb[:, k] = pa[:, k] + 2 * delta
        pm = (pa + pb) // 2
        ib = np.ravel_multi_index(tuple(pb.T), spec.counts)
        im = np.ravel_multi_index(tuple(pm.T), spec.counts)
        fa = f.flat[ia]
        fb = f.flat[ib]
        fm = f.flat[im]
        with np.errstate(invalid="ignore"):
            side = 0.5 * (fa + fb)
            defects = fm - side
        defects[np.isinf(side)] = -INF
        checked += int(np.sum(defects != -INF))
        if defects.size:
            k = int(np.argmax(defects))
            if float(defects[k]) > best:
                best = float(defects[k])
                coords = [spec.coords(a) for a in range(spec.dim)]

                def pt(rowidx):
                    return tuple(float(coords[a][rowidx[a]]) for a in range(spec.dim))

                witness = (pt(pa[k]), pt(pb[k]), pt(pm[k]))

    return ConvexityReport(worst_violation=max(0.0, best), witness=witness,
                           checked_count=checked)


def joint_check(F: ProductGridFunction, samples: int = 1000, seed: int = 0) -> ConvexityReport:
    """Midpoint-convexity probe of F over the joint (t, x) grid."""
    return check_midpoint_convexity(F.as_grid_function(), samples=samples, seed=seed)


def _require_same_spec(f: GridFunction, g: GridFunction) -> None:
    if f.spec != g.spec:
        raise ShapeError("grid specs do not match")


def shift(f: GridFunction, c: float) -> GridFunction:
    """f + c pointwise (inf stays inf)."""
    if not math.isfinite(c):
        raise DomainError("shift constant must be finite")
    return f.with_values(f.values + c)


def add(f: GridFunction, g: GridFunction) -> GridFunction:
    """f + g pointwise; +inf absorbs."""
    _require_same_spec(f, g)
    return f.with_values(f.values + g.values)


def scale(f: GridFunction, s: float) -> GridFunction:
    """s * f pointwise for s >= 0, with the convention 0 * inf = 0."""
    if not (math.isfinite(s) and s >= 0.0):
        raise DomainError("scale factor must be finite and >= 0")
    if s == 0.0:
        return f.with_values(np.zeros_like(f.values))
    return f.with_values(s * f.values)


def tilt(f: GridFunction, a) -> GridFunction:
    """f - (a . x + b) pointwise, the change of weight behind affine tilting."""
    pts = f.spec.points()
    lin = (pts @ np.asarray(a.slope, dtype=np.float64) + a.offset).reshape(f.spec.counts)
    return f.with_values(f.values - lin)
