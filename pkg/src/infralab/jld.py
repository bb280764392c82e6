"""Wedge-vanishing criteria on Minkowski rasters.

Regions of ``R^{1+s}`` (momentum-space supports) are boolean rasters on a
:class:`MinkowskiGrid`; cell centres stand for the points of the open set.
Every result is stated for the bounded window and quantified up to a
boundary layer.

Metric: ``x y = x0 y0 - x1 y1 - ... - xs ys``.  ``V+`` and ``V-`` are the open
forward and backward light cones.

Main operations
---------------
* :func:`make_region` rasterizes boolean combinations of primitives
  (cones, double cones, wedges, half-line cones ``l + C``, mass bands,
  boxes).
* :func:`two_cone_feasible` decides whether a finite point set lies in
  ``(a+ + V+) u (a- + V-)`` with ``a+ - a-`` in ``V+``.  In the plane
  ``M_par`` it is exact: with light-cone coordinates ``u = t + s``,
  ``v = t - s`` a split ``(L, U)`` works iff ``max_L u < min_U u`` and
  ``max_L v < min_U v``, and because every ``L`` point must have smaller
  ``u`` than every ``U`` point, only splits along the ``u``-order need to
  be scanned.  Perpendicular extent is handled by demanding a light-cone
  depth ``d`` (``du, dv > d`` implies ``du dv > d^2``), a sufficient
  condition, and apices are confined to the window (unbounded sets cannot
  be cut at the window edge).
* :func:`r_w_step`, :func:`r_tilde_step`, :func:`r_fixpoint` implement the
  support reductions with neighbourhoods ``M_par x N_perp`` drawn from a
  dictionary of dyadic perpendicular slabs.  A slab removes only its
  interior cells: each removed cell has a one-cell collar inside the slab,
  which models the openness of the neighbourhood.
* :func:`breve_lift` lifts a ``1+1`` raster to ``1+2`` through the union of
  lifted double cones with lattice apices.
* :func:`jld_transform_1p1` realizes the wave-equation correspondence
  ``F(x, sigma) = FT[f_check(p) cos(sigma sqrt(p^2))]`` by FFT.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "SceneError",
    "FrameError",
    "BudgetError",
    "SupportError",
    "MinkowskiGrid",
    "Region",
    "WedgeFrame",
    "SlabDictionary",
    "BandDictionary",
    "FixpointResult",
    "JldReport",
    "minkowski_dot",
    "make_region",
    "load_scene",
    "rasterize_scene",
    "two_cone_feasible",
    "r_w_step",
    "r_tilde_step",
    "r_fixpoint",
    "breve_lift",
    "lifted_double_cone",
    "jld_transform_1p1",
    "jld_convergence_study",
    "direct_inverse_transform",
    "vanishing_on_double_cone",
    "d3_grid",
    "d3_scene",
    "d3_wedge",
    "d3_expected",
    "geom_fixture",
    "hyperboloid_bump",
]


class SceneError(ValueError):
    """Malformed scene or unknown primitive."""


class FrameError(ValueError):
    """The wedge frame is invalid or does not fit the grid."""


class BudgetError(MemoryError):
    """The requested raster exceeds the cell budget."""


class SupportError(ValueError):
    """Momentum samples violate the support condition."""


def minkowski_dot(x, y) -> np.ndarray:
    """``x0 y0 - sum_i xi yi`` along the last axis."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    return x[..., 0] * y[..., 0] - np.sum(x[..., 1:] * y[..., 1:], axis=-1)


# ---------------------------------------------------------------------------
# Grid and regions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MinkowskiGrid:
    """Cell-centred raster of a box in ``R^{1+s}``.

    Parameters
    ----------
    extent : tuple of (lo, hi)
        Bounds per axis (axis 0 is time).
    spacing : float or tuple of float
        Cell size per axis.
    """

    extent: tuple
    spacing: tuple

    def __post_init__(self):
        ext = tuple((float(a), float(b)) for a, b in self.extent)
        sp = self.spacing
        sp = tuple(float(sp) for _ in ext) if np.isscalar(sp) else tuple(float(h) for h in sp)
        if len(ext) < 2 or len(sp) != len(ext):
            raise SceneError("grid needs at least two axes and one spacing per axis")
        if any(h <= 0 for h in sp) or any(b <= a for a, b in ext):
            raise SceneError("spacing must be positive and extents non-empty")
        object.__setattr__(self, "extent", ext)
        object.__setattr__(self, "spacing", sp)

    @classmethod
    def symmetric(cls, s: int, half_width: float, spacing: float) -> "MinkowskiGrid":
        return cls(tuple((-half_width, half_width) for _ in range(s + 1)), spacing)

    @classmethod
    def from_dict(cls, d: dict) -> "MinkowskiGrid":
        if "extent" in d:
            return cls(tuple(tuple(e) for e in d["extent"]), d["spacing"])
        try:
            s, hw, h = int(d["dim"]), float(d["half_width"]), float(d["spacing"])
        except KeyError as exc:
            raise SceneError(f"grid spec missing {exc}") from None
        return cls.symmetric(s, hw, h)

    def to_dict(self) -> dict:
        return {"extent": [list(e) for e in self.extent], "spacing": list(self.spacing)}

    @property
    def s(self) -> int:
        return len(self.extent) - 1

    @property
    def dim(self) -> int:
        return len(self.extent)

    @property
    def shape(self) -> tuple:
        return tuple(int(round((b - a) / h)) for (a, b), h in zip(self.extent, self.spacing))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axis(self, i: int) -> np.ndarray:
        (a, _), h = self.extent[i], self.spacing[i]
        return a + h * (np.arange(self.shape[i]) + 0.5)

    def mesh(self) -> list:
        return np.meshgrid(*[self.axis(i) for i in range(self.dim)], indexing="ij")

    def points(self) -> np.ndarray:
        """Cell centres, shape ``(size, 1+s)`` in C order."""
        return np.stack([m.ravel() for m in self.mesh()], axis=1)

    def same_as(self, other: "MinkowskiGrid") -> bool:
        return self.extent == other.extent and self.spacing == other.spacing


@dataclass(frozen=True, eq=False)
class Region:
    """Boolean raster with an optional symbolic description."""

    grid: MinkowskiGrid
    mask: np.ndarray
    spec: object = None

    def __post_init__(self):
        m = np.array(self.mask, dtype=bool)
        if m.shape != self.grid.shape:
            raise SceneError(f"mask shape {m.shape} does not match grid {self.grid.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @classmethod
    def empty(cls, grid):
        return cls(grid, np.zeros(grid.shape, bool))

    def with_mask(self, mask) -> "Region":
        return Region(self.grid, mask)

    def count(self) -> int:
        return int(self.mask.sum())

    def is_empty(self) -> bool:
        return not self.mask.any()

    def _chk(self, other):
        if not self.grid.same_as(other.grid):
            raise SceneError("regions live on different grids")

    def __or__(self, other):
        self._chk(other)
        return self.with_mask(self.mask | other.mask)

    def __and__(self, other):
        self._chk(other)
        return self.with_mask(self.mask & other.mask)

    def __sub__(self, other):
        self._chk(other)
        return self.with_mask(self.mask & ~other.mask)

    def __invert__(self):
        return self.with_mask(~self.mask)

    def subset_of(self, other) -> bool:
        self._chk(other)
        return not np.any(self.mask & ~other.mask)

    def equals(self, other) -> bool:
        self._chk(other)
        return bool(np.array_equal(self.mask, other.mask))

    def translate(self, shift_cells) -> "Region":
        """Shift by whole cells; content leaving the window is dropped."""
        out = np.zeros_like(self.mask)
        src, dst = [], []
        for k, n in zip(shift_cells, self.mask.shape):
            k = int(k)
            if abs(k) >= n:
                return self.with_mask(out)
            src.append(slice(max(0, -k), min(n, n - k)))
            dst.append(slice(max(0, k), min(n, n + k)))
        out[tuple(dst)] = self.mask[tuple(src)]
        return self.with_mask(out)

    def verify_spec(self) -> bool:
        """Re-rasterizing the stored primitives reproduces the mask."""
        if self.spec is None:
            return True
        return bool(np.array_equal(rasterize_scene(self.grid, self.spec), self.mask))

    def points(self) -> np.ndarray:
        return self.grid.points()[self.mask.ravel()]

    def boundary_distance(self) -> np.ndarray:
        """Cell distance of every cell to the window boundary (min over axes)."""
        idx = np.meshgrid(*[np.arange(n) for n in self.grid.shape], indexing="ij")
        d = [np.minimum(i, n - 1 - i) for i, n in zip(idx, self.grid.shape)]
        return np.min(np.stack(d), axis=0)

    # -- export -----------------------------------------------------------
    def to_pbm(self, path) -> Path:
        """Write the mask as a plain PBM (time slices stacked vertically) plus JSON metadata."""
        path = Path(path)
        m = self.mask.reshape(self.mask.shape[0], -1) if self.mask.ndim > 2 else self.mask
        if self.mask.ndim > 2:
            # stack slices along the last axis for readability
            m = np.concatenate([self.mask[..., k] for k in range(self.mask.shape[-1])], axis=0)
        rows = [" ".join("1" if b else "0" for b in row) for row in m]
        path.write_text(f"P1\n{m.shape[1]} {m.shape[0]}\n" + "\n".join(rows) + "\n")
        meta = {"grid": self.grid.to_dict(), "shape": list(self.grid.shape),
                "layout": "slices along the last axis stacked vertically" if self.mask.ndim > 2
                else "axis0 rows, axis1 columns",
                "cells": self.count(), "spec": self.spec if _jsonable(self.spec) else None}
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2))
        return path


def _jsonable(x) -> bool:
    try:
        json.dumps(x)
        return True
    except TypeError:
        return False


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------


def _vec(p, dim, name):
    v = np.asarray(p, float)
    if v.shape != (dim,):
        raise SceneError(f"{name} must have {dim} components, got {list(np.shape(v))}")
    return v


def _prim_mask(grid: MinkowskiGrid, prim: dict, X: np.ndarray) -> np.ndarray:
    """Membership of cell centres ``X`` (shape ``(..., 1+s)``) in one primitive."""
    kind = prim.get("kind")
    D = grid.dim
    tol = 1e-12
    if kind == "cone":
        y = X - _vec(prim.get("apex", [0.0] * D), D, "apex")
        sgn = float(prim.get("sign", 1))
        r = np.sqrt(np.sum(y[..., 1:] ** 2, axis=-1))
        t = sgn * y[..., 0]
        return t >= r - tol if prim.get("closed") else t > r + tol
    if kind == "double_cone":
        a = _vec(prim["a"], D, "a")
        b = _vec(prim["b"], D, "b")
        up = _prim_mask(grid, {"kind": "cone", "apex": a.tolist(), "sign": -1,
                               "closed": prim.get("closed")}, X)
        lo = _prim_mask(grid, {"kind": "cone", "apex": b.tolist(), "sign": 1,
                               "closed": prim.get("closed")}, X)
        return up & lo
    if kind == "wedge":
        kp = _vec(prim["k_plus"], D, "k_plus")
        km = _vec(prim["k_minus"], D, "k_minus")
        w = _vec(prim.get("offset", [0.0] * D), D, "offset")
        y = X - w
        return (minkowski_dot(y, kp) < -tol) & (minkowski_dot(y, km) < -tol)
    if kind == "halfline_cone":
        p0 = _vec(prim["point"], D, "point")
        d = _vec(prim["direction"], D, "direction")
        et, es = (_vec(e, D, "plane vector") for e in prim.get("plane", _default_plane(D)))
        B = np.stack([d, et, es], axis=1)                    # D x 3
        y = (X - p0).reshape(-1, D)
        coef, *_ = np.linalg.lstsq(B, y.T, rcond=None)
        resid = np.linalg.norm(B @ coef - y.T, axis=0)
        if D != 3:
            # l + C is three-dimensional: it has interior points only in 1+2
            raise SceneError("halfline_cone primitives are supported in 1+2 dimensions only")
        t, al, be = coef
        lo, hi = prim.get("range", [None, None])
        ok = resid < 1e-9 * max(1.0, np.max(np.abs(X)))
        if lo is not None:
            ok &= t > float(lo) + tol
        if hi is not None:
            ok &= t < float(hi) - tol
        sgn = float(prim.get("sign", 1))
        ok &= sgn * al > np.abs(be) + tol
        return ok.reshape(X.shape[:-1])
    if kind == "mass_band":
        b = _vec(prim.get("center", [0.0] * D), D, "center")
        mlo, mhi = (float(m) for m in prim["mass"])
        y = X - b
        m2 = minkowski_dot(y, y)
        ok = (m2 > mlo ** 2 + tol if mlo > 0 else m2 >= 0) & (m2 < mhi ** 2 - tol)
        sheet = prim.get("sheet", "both")
        if sheet == "+":
            ok &= y[..., 0] > 0
        elif sheet == "-":
            ok &= y[..., 0] < 0
        elif sheet != "both":
            raise SceneError(f"unknown sheet {sheet!r}")
        return ok
    if kind == "box":
        lo = _vec(prim["lo"], D, "lo")
        hi = _vec(prim["hi"], D, "hi")
        return np.all((X > lo + tol) & (X < hi - tol), axis=-1)
    raise SceneError(f"unknown primitive kind {kind!r}")


def _default_plane(D):
    et = [1.0] + [0.0] * (D - 1)
    es = [0.0, 1.0] + [0.0] * (D - 2)
    return [et, es]


def _eval_tree(node, masks):
    if isinstance(node, int):
        if not 0 <= node < len(masks):
            raise SceneError(f"primitive index {node} out of range")
        return masks[node]
    if not isinstance(node, dict) or "op" not in node:
        raise SceneError(f"malformed op node {node!r}")
    op, args = node["op"], [_eval_tree(a, masks) for a in node.get("args", [])]
    if op == "union":
        return np.logical_or.reduce(args)
    if op == "intersect":
        return np.logical_and.reduce(args)
    if op == "complement":
        if len(args) != 1:
            raise SceneError("complement takes one argument")
        return ~args[0]
    if op == "difference":
        if len(args) != 2:
            raise SceneError("difference takes two arguments")
        return args[0] & ~args[1]
    raise SceneError(f"unknown op {op!r}")


def rasterize_scene(grid: MinkowskiGrid, spec) -> np.ndarray:
    """Boolean mask of a primitive list (``union``) or ``{"primitives", "ops"}`` dict."""
    if isinstance(spec, dict):
        prims = spec.get("primitives", [])
        ops = spec.get("ops")
    else:
        prims, ops = list(spec), None
    if not isinstance(prims, list):
        raise SceneError("primitives must be a list")
    X = np.stack(grid.mesh(), axis=-1)
    masks = [_prim_mask(grid, p, X) for p in prims]
    if ops is None:
        return np.logical_or.reduce(masks) if masks else np.zeros(grid.shape, bool)
    return _eval_tree(ops, masks)


def make_region(grid: MinkowskiGrid, spec) -> Region:
    """Rasterize a scene (primitive list or ``{"primitives", "ops"}``) on ``grid``.

    Raises
    ------
    SceneError
        Unknown primitive or inconsistent dimensions.
    """
    return Region(grid, rasterize_scene(grid, spec), spec)


def load_scene(path_or_dict) -> Region:
    """Read a scene JSON ``{"grid": {...}, "primitives": [...], "ops": ...}``."""
    d = path_or_dict
    if not isinstance(d, dict):
        d = json.loads(Path(path_or_dict).read_text())
    if "grid" not in d:
        raise SceneError("scene has no grid")
    grid = MinkowskiGrid.from_dict(d["grid"])
    return make_region(grid, {"primitives": d.get("primitives", []), "ops": d.get("ops")})


# ---------------------------------------------------------------------------
# Wedge frames
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WedgeFrame:
    """Wedge ``w + W_{k+,k-}`` with its plane decomposition.

    ``e_t = (k+ - k-)/|.|`` and ``e_s = (k+ + k-)/|.|`` span ``M_par``
    (``u = t + s`` and ``v = t - s`` are then proportional to ``-k- x`` and
    ``k+ x``); ``e_perp`` is a Minkowski-orthonormal basis of ``M_perp``.
    """

    k_plus: np.ndarray
    k_minus: np.ndarray
    offset: np.ndarray | None = None
    tol: float = 1e-10

    def __post_init__(self):
        kp = np.asarray(self.k_plus, float)
        km = np.asarray(self.k_minus, float)
        if kp.shape != km.shape or kp.ndim != 1 or kp.size < 2:
            raise FrameError("k_plus and k_minus must be vectors of equal dimension >= 2")
        scale = max(np.linalg.norm(kp), np.linalg.norm(km))
        if abs(minkowski_dot(kp, kp)) > self.tol * scale ** 2 or \
                abs(minkowski_dot(km, km)) > self.tol * scale ** 2:
            raise FrameError("k_plus and k_minus must be lightlike")
        if kp[0] <= 0 or km[0] >= 0:
            raise FrameError("need k_plus in the boundary of V+ and k_minus in that of V-")
        if minkowski_dot(kp, km) >= 0:
            raise FrameError("need k_plus k_minus < 0")
        off = np.zeros_like(kp) if self.offset is None else np.asarray(self.offset, float)
        object.__setattr__(self, "k_plus", kp)
        object.__setattr__(self, "k_minus", km)
        object.__setattr__(self, "offset", off)
        et = kp - km
        et = et / math.sqrt(minkowski_dot(et, et))
        es = kp + km
        es = es / math.sqrt(-minkowski_dot(es, es))
        # M_perp: Minkowski-orthogonal to k+ and k-
        eta = np.diag([1.0] + [-1.0] * (kp.size - 1))
        A = np.stack([eta @ kp, eta @ km])
        _, _, vt = np.linalg.svd(A)
        perp = []
        for v in vt[2:]:
            for e in perp:
                v = v + minkowski_dot(v, e) * e      # e spacelike: (e, e) = -1
            n = math.sqrt(-minkowski_dot(v, v))
            perp.append(v / n)
        object.__setattr__(self, "e_t", et)
        object.__setattr__(self, "e_s", es)
        object.__setattr__(self, "e_perp", np.array(perp).reshape(len(perp), kp.size))

    @classmethod
    def from_dict(cls, d: dict) -> "WedgeFrame":
        return cls(d["k_plus"], d["k_minus"], d.get("offset"))

    def to_dict(self) -> dict:
        return {"k_plus": self.k_plus.tolist(), "k_minus": self.k_minus.tolist(),
                "offset": self.offset.tolist()}

    @property
    def dim(self) -> int:
        return self.k_plus.size

    def coords(self, X) -> tuple:
        """``(t, s, perp)`` coordinates of points (last axis is the vector)."""
        X = np.asarray(X, float)
        t = minkowski_dot(X, self.e_t)
        s = -minkowski_dot(X, self.e_s)
        perp = np.stack([-minkowski_dot(X, e) for e in self.e_perp], axis=-1) \
            if len(self.e_perp) else np.zeros(X.shape[:-1] + (0,))
        return t, s, perp

    def reconstruct(self, t, s, perp) -> np.ndarray:
        out = np.multiply.outer(t, self.e_t) + np.multiply.outer(s, self.e_s)
        for k, e in enumerate(self.e_perp):
            out = out + np.multiply.outer(perp[..., k], e)
        return out

    def check_invariants(self, n: int = 32, seed: int = 0) -> dict:
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(n, self.dim))
        t, s, p = self.coords(X)
        res = float(np.max(np.abs(self.reconstruct(t, s, p) - X)))
        return {"k_plus_null": float(abs(minkowski_dot(self.k_plus, self.k_plus))),
                "k_minus_null": float(abs(minkowski_dot(self.k_minus, self.k_minus))),
                "k_plus_k_minus": float(minkowski_dot(self.k_plus, self.k_minus)),
                "reconstruction_residual": res}

    def contains(self, X) -> np.ndarray:
        y = np.asarray(X, float) - self.offset
        return (minkowski_dot(y, self.k_plus) < 0) & (minkowski_dot(y, self.k_minus) < 0)

    def reflected(self) -> "WedgeFrame":
        """The opposite wedge ``-W`` (same planes)."""
        return WedgeFrame(-self.k_minus, -self.k_plus, -self.offset)


# ---------------------------------------------------------------------------
# Two-cone feasibility
# ---------------------------------------------------------------------------


def _halfplanes_uv(window, frame: WedgeFrame | None, perp_center, margin):
    """Apex constraints ``A u + B v <= C`` (window shrunk by ``margin``)."""
    rows = []
    for i, (lo, hi) in enumerate(window):
        if frame is None:
            et = np.eye(len(window))[0]
            es = np.eye(len(window))[1]
            base = np.zeros(len(window))
            if len(window) > 2:
                base[2:] = perp_center
        else:
            et, es = frame.e_t, frame.e_s
            base = frame.reconstruct(np.float64(0), np.float64(0), np.asarray(perp_center, float))
        # x_i = base_i + t et_i + s es_i, t = (u+v)/2, s = (u-v)/2
        a = 0.5 * (et[i] + es[i])
        b = 0.5 * (et[i] - es[i])
        rows.append((a, b, hi - margin - base[i]))
        rows.append((-a, -b, -(lo + margin - base[i])))
    return np.array(rows, float)


def _feasible_uv(u, v, depth, hp):
    """Vectorized split scan.  Returns (feasible, (u*, v*)) for point arrays ``u, v``."""
    n = u.size
    if n == 0:
        return True, None
    order = np.argsort(u, kind="stable")
    us, vs = u[order], v[order]
    # split i: L = first i points (i = 0..n)
    inf = np.inf
    maxLu = np.r_[-inf, us]
    minUu = np.r_[us, inf]
    maxLv = np.r_[-inf, np.maximum.accumulate(vs)]
    minUv = np.r_[np.minimum.accumulate(vs[::-1])[::-1], inf]
    u1, u2 = maxLu + depth, minUu - depth
    v1, v2 = maxLv + depth, minUv - depth
    ok = (u2 > u1) & (v2 > v1)
    idx = np.flatnonzero(ok)
    if idx.size == 0:
        return False, None
    u1, u2, v1, v2 = u1[idx], u2[idx], v1[idx], v2[idx]
    A, B, C = hp[:, 0], hp[:, 1], hp[:, 2]
    # candidate u values: rectangle corners' u, and pairwise line intersections
    # unbounded sides are clipped to a finite box around the data (keeps witnesses finite)
    span = float(max(np.ptp(u), np.ptp(v))) + 2.0 * depth + 1.0
    lines = [(a, b, c) for a, b, c in zip(A, B, C)]
    U1 = np.clip(u1, u.min() - span, u.max() + span)
    U2 = np.clip(u2, u.min() - span, u.max() + span)
    V1 = np.clip(v1, v.min() - span, v.max() + span)
    V2 = np.clip(v2, v.min() - span, v.max() + span)
    cands = [U1, U2]
    # v = const lines vs half-plane lines
    for a, b, c in lines:
        if a != 0:
            cands.append(np.clip((c - b * V1) / a, U1, U2))
            cands.append(np.clip((c - b * V2) / a, U1, U2))
    for i in range(len(lines)):
        for j in range(i + 1, len(lines)):
            a1, b1, c1 = lines[i]
            a2, b2, c2 = lines[j]
            det = a1 * b2 - a2 * b1
            if abs(det) > 1e-14:
                uc = (c1 * b2 - c2 * b1) / det
                cands.append(np.clip(np.full_like(U1, uc), U1, U2))
    best = np.full(idx.size, -inf)
    best_u = np.zeros(idx.size)
    best_v = np.zeros(idx.size)
    for uc in cands:
        lo = V1.copy()
        hi = V2.copy()
        for a, b, c in lines:
            if b > 0:
                hi = np.minimum(hi, (c - a * uc) / b)
            elif b < 0:
                lo = np.maximum(lo, (c - a * uc) / b)
            else:
                bad = a * uc > c
                hi = np.where(bad, -inf, hi)
        # g is concave on [U1, U2]; g > 0 anywhere there means the open polygon is non-empty
        g = hi - lo
        better = g > best
        best = np.where(better, g, best)
        best_u = np.where(better, uc, best_u)
        best_v = np.where(better, 0.5 * (hi + lo), best_v)
    k = int(np.argmax(best))
    if not best[k] > 0:
        return False, None
    # move the witness slightly into the interior of the polygon
    uc = best_u[k] + 1e-3 * (0.5 * (U1[k] + U2[k]) - best_u[k])
    lo, hi = V1[k], V2[k]
    for a, b, c in lines:
        if b > 0:
            hi = min(hi, (c - a * uc) / b)
        elif b < 0:
            lo = max(lo, (c - a * uc) / b)
    return True, (float(uc), float(0.5 * (lo + hi)))


def two_cone_feasible(points, window=None, depth: float = 0.0, margin: float = 0.0,
                      frame: WedgeFrame | None = None, perp_center=None):
    """Is there ``a+ - a- in V+`` with every point in ``(a+ + V+) u (a- + V-)``?

    Parameters
    ----------
    points : array_like, shape (n, 1+s)
    window : sequence of (lo, hi), optional
        Apices must lie in the window shrunk by ``margin`` (sets reaching the
        window edge are treated as continuing beyond it).  ``None``: no
        confinement.
    depth : float
        Extra light-cone depth demanded of every point.
    frame : WedgeFrame, optional
        Plane decomposition; default ``M_par = span(e0, e1)``.
    perp_center : array_like, optional
        Perpendicular position of the apices (default: centre of the
        points' perpendicular range); the perpendicular spread is added to
        ``depth``.

    Returns
    -------
    (bool, tuple or None)
        Feasibility and a witness ``(a_plus, a_minus)`` in the input
        coordinates.  An empty point set is feasible with a canonical
        witness.
    """
    P = np.atleast_2d(np.asarray(points, float))
    D = P.shape[1] if P.size else (len(window) if window is not None else 2)
    if frame is not None and frame.dim != D:
        raise FrameError("frame dimension does not match the points")
    if P.size == 0:
        a_plus = np.zeros(D)
        a_plus[0] = 1.0
        return True, (a_plus, -a_plus)
    if frame is None:
        t, s = P[:, 0], P[:, 1]
        perp = P[:, 2:]
    else:
        t, s, perp = frame.coords(P)
    if perp_center is None:
        perp_center = 0.5 * (perp.min(axis=0) + perp.max(axis=0)) if perp.shape[1] else np.zeros(0)
    perp_center = np.asarray(perp_center, float)
    r = np.sqrt(np.sum((perp - perp_center) ** 2, axis=1)) if perp.shape[1] else np.zeros(len(P))
    d = float(depth + (r.max() if r.size else 0.0))
    u, v = t + s, t - s
    if window is None:
        hp = np.zeros((0, 3))
    else:
        hp = _halfplanes_uv(window, frame, perp_center, margin)
    ok, w = _feasible_uv(u, v, d, hp)
    if not ok:
        return False, None
    us, vs = w
    ta, sa = 0.5 * (us + vs), 0.5 * (us - vs)
    eta = 1e-9 * max(1.0, abs(us), abs(vs))
    if frame is None:
        base = np.zeros(D)
        base[0], base[1] = ta, sa
        if D > 2:
            base[2:] = perp_center
        e0 = np.zeros(D)
        e0[0] = 1.0
    else:
        base = frame.reconstruct(np.float64(ta), np.float64(sa), perp_center)
        e0 = frame.e_t
    return True, (base + eta * e0, base - eta * e0)


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SlabDictionary:
    """Axis-aligned boxes in ``M_perp`` coordinates with dyadic radii (in cells)."""

    radii: tuple = (1, 2, 4, 8, 16, 32)
    center_stride: int = 1
    margin_cells: float = 1.0


@dataclass(frozen=True)
class BandDictionary:
    """Suitable-set dictionary: apex lattice stride (cells) and dyadic masses (cells)."""

    slabs: SlabDictionary = SlabDictionary()
    b_stride: int = 4
    masses: tuple = (1, 2, 4, 8, 16, 32)


def _frame_setup(G: Region, W: WedgeFrame):
    if W.dim != G.grid.dim:
        raise FrameError(f"wedge of dimension {W.dim} on a {G.grid.dim}-dimensional grid")
    X = G.grid.points()
    t, s, perp = W.coords(X)
    return X, t, s, perp


def _slabs(perp, h, dic: SlabDictionary):
    """Yield (center, radius, in_slab index mask, interior mask) over the dictionary."""
    if perp.shape[1] == 0:
        yield None, 0, np.ones(perp.shape[0], bool), np.ones(perp.shape[0], bool)
        return
    lo = perp.min(axis=0)
    hi = perp.max(axis=0)
    axes = [np.arange(lo[k], hi[k] + 0.5 * h, h * dic.center_stride) for k in range(perp.shape[1])]
    centers = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, perp.shape[1])
    extent = float(np.max(hi - lo)) if perp.size else 0.0
    tol = 1e-9 * h
    for k in dic.radii:
        if (k - 1) * h > extent + h:
            break
        for c in centers:
            dist = np.max(np.abs(perp - c), axis=1)
            yield c, k, dist <= k * h + tol, dist <= (k - 1) * h + tol


def _window(grid: MinkowskiGrid):
    return list(grid.extent)


def r_w_step(G: Region, W: WedgeFrame, dictionary: SlabDictionary | None = None,
             map_fn=map, return_info: bool = False):
    """One reduction ``G -> r_W(G)`` relative to a slab dictionary.

    Every slab ``N = M_par x N_perp`` whose cells of ``G`` pass
    :func:`two_cone_feasible` (apices confined to the window shrunk by
    ``margin_cells``, light-cone depth equal to the slab's perpendicular
    radius) removes the cells of its interior.  Removals of different slabs
    are merged by union, so the result does not depend on the order in
    which ``map_fn`` evaluates them.

    Returns
    -------
    Region (and a dict of diagnostics with ``return_info``)
    """
    dic = dictionary or SlabDictionary()
    X, t, s, perp = _frame_setup(G, W)
    h = min(G.grid.spacing)
    inG = G.mask.ravel()
    window = _window(G.grid)
    margin = dic.margin_cells * h
    slabs = list(_slabs(perp, h, dic))

    def check(item):
        c, k, in_slab, interior = item
        sel = in_slab & inG
        if not sel.any():
            return None
        rem = interior & inG
        if not rem.any():
            return None
        pc = c if c is not None else np.zeros(0)
        r = np.sqrt(np.sum((perp[sel] - pc) ** 2, axis=1)) if perp.shape[1] else np.zeros(sel.sum())
        hp = _halfplanes_uv(window, W, pc, margin)
        ok, _ = _feasible_uv(t[sel] + s[sel], t[sel] - s[sel], float(r.max()), hp)
        return np.flatnonzero(rem) if ok else None

    removed = np.zeros(inG.size, bool)
    n_feasible = 0
    for res in map_fn(check, slabs):
        if res is not None:
            removed[res] = True
            n_feasible += 1
    out = G.with_mask((inG & ~removed).reshape(G.grid.shape))
    if return_info:
        return out, {"slabs": len(slabs), "feasible_slabs": n_feasible,
                     "removed": int(removed.sum())}
    return out


def r_tilde_step(G: Region, W: WedgeFrame, band_dictionary: BandDictionary | None = None,
                 map_fn=map) -> Region:
    """One reduction ``G -> r~_W(G)`` with suitable sets ``slab n (b + I~)``.

    A pair ``(b, I)`` (``b`` on a lattice of stride ``b_stride`` cells in the
    plane through the slab centre, ``I`` a symmetric mass interval
    ``]-m, m[`` or ``]m1, m2[ u ]-m2, -m1[`` with dyadic ``m``) is suitable
    when the slab's cells of ``G`` lie in ``b + closure(V)`` and avoid
    ``b + I~_+`` or ``b + I~_-``.  Interior slab cells with mass about ``b``
    in ``I`` are removed.
    """
    dic = band_dictionary or BandDictionary()
    X, t, s, perp = _frame_setup(G, W)
    h = min(G.grid.spacing)
    inG = G.mask.ravel()
    ts = np.arange(t.min(), t.max() + 0.5 * h, h * dic.b_stride)
    ss = np.arange(s.min(), s.max() + 0.5 * h, h * dic.b_stride)
    TB, SB = np.meshgrid(ts, ss, indexing="ij")
    TB, SB = TB.ravel(), SB.ravel()
    ms = sorted({float(m) * h for m in dic.masses})
    intervals = [(0.0, m) for m in ms] + [(a, b) for a, b in zip(ms[:-1], ms[1:])] + \
        [(a, b) for i, a in enumerate(ms) for b in ms[i + 2:]]
    tol = 1e-9 * h * h

    def check(item):
        c, k, in_slab, interior = item
        sel = np.flatnonzero(in_slab & inG)
        rem_idx = np.flatnonzero(interior & inG)
        if sel.size == 0 or rem_idx.size == 0:
            return None
        pc = c if c is not None else np.zeros(0)
        # differences y = p - b in frame coordinates (b carries the slab centre)
        dt = t[sel][:, None] - TB[None, :]
        dsv = s[sel][:, None] - SB[None, :]
        dp2 = np.sum((perp[sel] - pc) ** 2, axis=1)[:, None] if perp.shape[1] else 0.0
        m2 = dt ** 2 - dsv ** 2 - dp2
        cond1 = np.all(m2 >= -tol, axis=0)
        if not cond1.any():
            return None
        good_b = np.flatnonzero(cond1)
        m2 = m2[:, good_b]
        up = dt[:, good_b] > 0
        mass = np.sqrt(np.maximum(m2, 0.0))
        dtr = t[rem_idx][:, None] - TB[None, good_b]
        dsr = s[rem_idx][:, None] - SB[None, good_b]
        dpr = np.sum((perp[rem_idx] - pc) ** 2, axis=1)[:, None] if perp.shape[1] else 0.0
        mass_r = np.sqrt(np.maximum(dtr ** 2 - dsr ** 2 - dpr, 0.0))
        valid_r = (dtr ** 2 - dsr ** 2 - dpr) >= -tol
        hit = np.zeros(rem_idx.size, bool)
        for lo_m, hi_m in intervals:
            inI = ((mass > lo_m) if lo_m > 0 else (m2 >= -tol)) & (mass < hi_m)
            plus_empty = ~np.any(inI & up, axis=0)
            minus_empty = ~np.any(inI & ~up, axis=0)
            suit = plus_empty | minus_empty
            if not suit.any():
                continue
            inIr = (((mass_r > lo_m) if lo_m > 0 else valid_r) & (mass_r < hi_m))[:, suit]
            hit |= inIr.any(axis=1)
        return rem_idx[hit] if hit.any() else None

    removed = np.zeros(inG.size, bool)
    for res in map_fn(check, list(_slabs(perp, h, dic.slabs))):
        if res is not None:
            removed[res] = True
    return G.with_mask((inG & ~removed).reshape(G.grid.shape))


@dataclass
class FixpointResult:
    """Fixed point of the iterated reduction with its cell-count trace."""

    region: Region
    trace: list
    converged: bool
    iterations: int

    def csv_rows(self):
        return list(self.trace)


def r_fixpoint(G: Region, wedges, mode: str = "plain", max_iter: int = 20, dictionary=None,
               map_fn=map) -> FixpointResult:
    """Iterate ``G -> intersection over W of r_W(G)`` until the mask stabilizes.

    Returns
    -------
    FixpointResult
        ``trace`` holds ``(iteration, cell_count)`` with iteration 0 the
        input; ``converged`` is False when ``max_iter`` was reached first
        (partial result).  ``iterations`` counts the applications of the
        reduction: an empty result stops at once, otherwise the final
        application confirming stability is included.
    """
    wedges = list(wedges)
    if not wedges:
        raise ValueError("need at least one wedge")
    if mode not in ("plain", "tilde"):
        raise ValueError("mode must be 'plain' or 'tilde'")
    step = r_w_step if mode == "plain" else r_tilde_step
    cur = G
    trace = [(0, G.count())]
    for it in range(1, max_iter + 1):
        nxt = cur
        for W in wedges:
            nxt = nxt & step(cur, W, dictionary, map_fn=map_fn)
        trace.append((it, nxt.count()))
        if nxt.equals(cur) or nxt.is_empty():      # the empty set is a fixed point
            return FixpointResult(nxt, trace, True, it)
        cur = nxt
    return FixpointResult(cur, trace, False, max_iter)


# ---------------------------------------------------------------------------
# Scenes used by the worked example and the lts fixture
# ---------------------------------------------------------------------------


def d3_grid(cells: int = 48, spacing: float = 0.25) -> MinkowskiGrid:
    """``cells x cells x (cells+1)`` window; the perpendicular axis has a row at ``x2 = 0``."""
    hw = 0.5 * cells * spacing
    return MinkowskiGrid(((-hw, hw), (-hw, hw), (-hw - 0.5 * spacing, hw + 0.5 * spacing)),
                         spacing)


def d3_wedge() -> WedgeFrame:
    """``W = {x1 > |x0|}``: ``k+ = (1, 1, 0)``, ``k- = (-1, 1, 0)``."""
    return WedgeFrame([1.0, 1.0, 0.0], [-1.0, 1.0, 0.0])


def d3_scene(grid: MinkowskiGrid | None = None) -> Region:
    """``G = G1 u G2 u G3`` with ``G_j = (l_j^+ + C) u (l_j^- - C)``, ``C = M_par n V+``."""
    grid = grid or d3_grid()
    prims = []
    for x1, rng in ((2.0, [0, None]), (-2.0, [None, 0]), (0.0, [None, None])):
        x0 = 3.0 if x1 == 0.0 else 1.0
        for sg in (1, -1):
            prims.append({"kind": "halfline_cone", "point": [sg * x0, x1, 0.0],
                          "direction": [0.0, 0.0, 1.0], "range": rng, "sign": sg,
                          "plane": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]})
    return make_region(grid, {"primitives": prims})


def d3_expected(grid: MinkowskiGrid | None = None) -> Region:
    """``G3 n M_par``: the cells of ``G3`` in the ``x2 = 0`` row."""
    grid = grid or d3_grid()
    G3 = make_region(grid, {"primitives": d3_scene(grid).spec["primitives"][4:]})
    on_plane = np.abs(grid.axis(2)) < 0.5 * grid.spacing[2]
    return G3.with_mask(G3.mask & on_plane[None, None, :])


def geom_fixture(grid: MinkowskiGrid, a_plus, a_minus) -> Region:
    """``((a+ + closed V+) u (a- + closed V-)) + M_perp`` for ``M_par = span(e0, e1)``."""
    D = grid.dim
    a_plus = np.asarray(a_plus, float)
    a_minus = np.asarray(a_minus, float)
    X = np.stack(grid.mesh(), axis=-1)
    up = X[..., 0] - a_plus[0] >= np.abs(X[..., 1] - a_plus[1])
    lo = a_minus[0] - X[..., 0] >= np.abs(X[..., 1] - a_minus[1])
    dpar = (a_plus - a_minus)[:2]
    if not dpar[0] > abs(dpar[1]):
        raise ValueError("need (a+ - a-)_par in V+")
    return Region(grid, up | lo)


# ---------------------------------------------------------------------------
# Breve lift (1+1 -> 1+2)
# ---------------------------------------------------------------------------


def _lattice(G: Region):
    g = G.grid
    if g.s != 1:
        raise SceneError("breve_lift is implemented for 1+1 regions")
    h0, h1 = g.spacing
    if abs(h0 - h1) > 1e-12 * h0:
        raise SceneError("breve_lift needs equal spacing on both axes")
    n0, n1 = g.shape
    i, j = np.meshgrid(np.arange(n0), np.arange(n1), indexing="ij")
    U = i + j
    V = i - j + (n1 - 1)                    # shifted to be non-negative
    nu, nv = n0 + n1 - 1, n0 + n1 - 1
    return h0, n0, n1, U, V, nu, nv


def _bad_prefix(G: Region, closed: bool):
    h, n0, n1, U, V, nu, nv = _lattice(G)
    bad = np.zeros((nu, nv), np.int32)
    # lattice sites outside the window count as bad; non-lattice sites (wrong parity) are neutral
    Ug, Vg = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    par = (Ug + Vg - (n1 - 1)) % 2 == 0
    bad[par] = 1
    bad[U, V] = (~G.mask).astype(np.int32)
    P = np.zeros((nu + 1, nv + 1), np.int64)
    P[1:, 1:] = np.cumsum(np.cumsum(bad, axis=0), axis=1)
    return P


def _rect_bad(P, u_lo, u_hi, v_lo, v_hi):
    """Number of bad sites in the index box ``[u_lo, u_hi] x [v_lo, v_hi]`` (inclusive)."""
    nu, nv = P.shape[0] - 1, P.shape[1] - 1
    out_of = (u_lo < 0) | (v_lo < 0) | (u_hi > nu - 1) | (v_hi > nv - 1)
    ul = np.clip(u_lo, 0, nu)
    uh = np.clip(u_hi + 1, 0, nu)
    vl = np.clip(v_lo, 0, nv)
    vh = np.clip(v_hi + 1, 0, nv)
    cnt = P[uh, vh] - P[ul, vh] - P[uh, vl] + P[ul, vl]
    return np.where(out_of, 1, cnt)


def _min_pairs(k: int, limit: int):
    """Lattice extents ``(alpha, beta)``, ``alpha = beta mod 2``, minimal with ``alpha beta > k^2``."""
    out = []
    for a in range(1, limit + 1):
        b = k * k // a + 1
        if (b - a) % 2:
            b += 1
        if b <= limit:
            out.append((a, b))
    # drop dominated pairs
    res = []
    for a, b in out:
        if not any(a2 <= a and b2 <= b and (a2, b2) != (a, b) for a2, b2 in out):
            res.append((a, b))
    return res


def breve_lift(G: Region, sigma_cells: int | None = None, closed: bool = False,
               cell_budget: int = 50_000_000) -> Region:
    """``G -> G_breve``: union of lifted double cones over lattice double cones in ``G``.

    Double cones ``O_{a,b}`` have apices at cell centres; in light-cone
    lattice coordinates they are open rectangles, and ``O subset G`` means
    every lattice site inside is a cell of ``G`` (sites outside the window
    count as not in ``G``).  ``(x, sigma)`` lies in the lift of ``O_{a,b}``
    iff ``(x - b)^2 > sigma^2`` and ``(a - x)^2 > sigma^2``.

    Parameters
    ----------
    G : Region
        ``1+1`` region with equal spacing on both axes.
    sigma_cells : int, optional
        The extra axis has ``2 sigma_cells + 1`` cells centred on 0 (default
        half the smaller window side).
    closed : bool
        Require the closed double cone (edges included) to lie in ``G``.
    cell_budget : int
        Memory guard on the output size.

    Returns
    -------
    Region
        On the ``1+2`` grid ``extent x [-(K+1/2) h, (K+1/2) h]``.
    """
    h, n0, n1, U, V, nu, nv = _lattice(G)
    K = int(sigma_cells if sigma_cells is not None else min(n0, n1) // 2)
    total = n0 * n1 * (2 * K + 1)
    if total > cell_budget:
        raise BudgetError(f"lift needs {total} cells > budget {cell_budget}")
    P = _bad_prefix(G, closed)
    e = 0 if closed else 1                      # open rectangles exclude their edges
    lift = np.zeros((n0, n1, K + 1), bool)
    alive = G.mask.copy()
    lift[..., 0] = alive
    limit = max(nu, nv)
    for k in range(1, K + 1):
        if not alive.any():
            break
        ii, jj = np.nonzero(alive)
        Uc, Vc = U[ii, jj], V[ii, jj]
        pairs = _min_pairs(k, limit)
        if not pairs:
            break
        pa = np.array(pairs)
        ok = np.zeros(ii.size, bool)
        for g_, d_ in pairs:                     # upper extents
            todo = ~ok
            if not todo.any():
                break
            uc, vc = Uc[todo][:, None], Vc[todo][:, None]
            cnt = _rect_bad(P, uc - pa[None, :, 0] + e, uc + g_ - e,
                            vc - pa[None, :, 1] + e, vc + d_ - e)
            hit = np.any(cnt == 0, axis=1)
            idx = np.flatnonzero(todo)
            ok[idx[hit]] = True
        new = np.zeros_like(alive)
        new[ii[ok], jj[ok]] = True
        lift[..., k] = new
        alive = new
    full = np.concatenate([lift[..., :0:-1], lift], axis=2)
    g = G.grid
    grid3 = MinkowskiGrid(g.extent + ((-(K + 0.5) * h, (K + 0.5) * h),), h)
    return Region(grid3, full)


def lifted_double_cone(grid3: MinkowskiGrid, a, b) -> np.ndarray:
    """Raster of the lifted double cone with apices ``a`` (upper) and ``b`` (lower) in ``1+1``."""
    X = np.stack(grid3.mesh(), axis=-1)
    a3 = np.r_[np.asarray(a, float), 0.0]
    b3 = np.r_[np.asarray(b, float), 0.0]
    ya, yb = a3 - X, X - b3
    return (minkowski_dot(ya, ya) > 0) & (ya[..., 0] > 0) & (minkowski_dot(yb, yb) > 0) & \
        (yb[..., 0] > 0)


# ---------------------------------------------------------------------------
# 1+1 wave-equation correspondence
# ---------------------------------------------------------------------------


@dataclass
class JldReport:
    """Diagnostics of :func:`jld_transform_1p1`."""

    wave_residual: float
    symmetry_defect: float
    restriction_defect: float
    x0: np.ndarray = field(repr=False, default=None)
    x1: np.ndarray = field(repr=False, default=None)
    sigma: np.ndarray = field(repr=False, default=None)

    def to_dict(self):
        return {"wave_residual": self.wave_residual, "symmetry_defect": self.symmetry_defect,
                "restriction_defect": self.restriction_defect}


def _momentum_axes(n: int, dp: float):
    return dp * (np.arange(n) - n // 2)


def _x_axes(n: int, dp: float):
    dx = 2 * np.pi / (n * dp)
    return dx * (np.arange(n) - n // 2), dx


def direct_inverse_transform(f_check, dp: float, x_points) -> np.ndarray:
    """``f(x) = sum_p f_check(p) exp(-i (p0 x0 - p1 x1)) dp^2`` by explicit summation."""
    n0, n1 = f_check.shape
    p0 = _momentum_axes(n0, dp)
    p1 = _momentum_axes(n1, dp)
    i, j = np.nonzero(f_check)
    amp = f_check[i, j] * dp * dp
    X = np.atleast_2d(np.asarray(x_points, float))
    out = np.zeros(len(X), complex)
    for s in range(0, len(X), 2048):
        blk = X[s:s + 2048]
        ph = np.outer(blk[:, 0], p0[i]) - np.outer(blk[:, 1], p1[j])
        out[s:s + 2048] = np.exp(-1j * ph) @ amp
    return out


def _ft(arr, dp):
    """``sum_p arr(p) exp(-i (p0 x0 - p1 x1)) dp^2`` on the FFT position grid."""
    a = np.fft.ifftshift(arr, axes=(0, 1))
    out = np.fft.fft(a, axis=0)
    out = np.fft.ifft(out, axis=1) * arr.shape[1]
    return np.fft.fftshift(out, axes=(0, 1)) * dp * dp


def jld_transform_1p1(f_check, dp: float, sigma=None, check_support: bool = True):
    """``F(x, sigma) = FT[f_check(p) cos(sigma sqrt(p^2))](x)`` on the FFT grid.

    Parameters
    ----------
    f_check : ndarray, shape (n0, n1)
        Momentum samples at ``p = dp (k - n // 2)``; must vanish outside the
        closed double light cone ``p0^2 >= p1^2``.
    dp : float
        Momentum spacing; the position spacing is ``2 pi / (n dp)``.
    sigma : ndarray, optional
        Values of the extra coordinate (default: symmetric with the
        position spacing of axis 0, 9 values).

    Returns
    -------
    F : ndarray, shape (n0, n1, len(sigma))
    report : JldReport
        ``wave_residual``: ``|box F| / |F|`` with centred second differences
        on the interior (requires equal spacing in ``x0``, ``x1`` and
        ``sigma``); ``symmetry_defect``: ``max |F(sigma) - F(-sigma)| /
        max|F|``; ``restriction_defect``: ``|F(., 0) - f| / |f|`` with ``f``
        from :func:`direct_inverse_transform`.

    Raises
    ------
    SupportError
        If ``f_check`` has support outside the closed double cone.
    """
    f_check = np.asarray(f_check, complex)
    n0, n1 = f_check.shape
    p0 = _momentum_axes(n0, dp)[:, None]
    p1 = _momentum_axes(n1, dp)[None, :]
    p2 = p0 ** 2 - p1 ** 2
    if check_support and np.any((f_check != 0) & (p2 < -1e-12 * dp * dp)):
        raise SupportError("f_check has support outside the closed light cone")
    m = np.sqrt(np.maximum(p2, 0.0))
    x0, dx0 = _x_axes(n0, dp)
    x1, dx1 = _x_axes(n1, dp)
    if sigma is None:
        sigma = dx0 * np.arange(-4, 5)
    sigma = np.asarray(sigma, float)
    F = np.stack([_ft(f_check * np.cos(sg * m), dp) for sg in sigma], axis=-1)
    scale = max(float(np.max(np.abs(F))), 1e-300)
    # wave equation residual (interior, centred differences)
    wave = float("nan")
    if sigma.size >= 3 and abs(dx0 - dx1) < 1e-12 * dx0:
        ds = np.diff(sigma)
        if np.allclose(ds, dx0, rtol=1e-10, atol=0):
            c = F[1:-1, 1:-1, 1:-1]
            d00 = (F[2:, 1:-1, 1:-1] - 2 * c + F[:-2, 1:-1, 1:-1]) / dx0 ** 2
            d11 = (F[1:-1, 2:, 1:-1] - 2 * c + F[1:-1, :-2, 1:-1]) / dx1 ** 2
            dss = (F[1:-1, 1:-1, 2:] - 2 * c + F[1:-1, 1:-1, :-2]) / dx0 ** 2
            box = d00 - d11 - dss
            wave = float(np.linalg.norm(box) / max(np.linalg.norm(c), 1e-300))
    # symmetry in sigma
    rev = F[..., ::-1]
    if np.allclose(sigma, -sigma[::-1], rtol=0, atol=1e-14 * max(1.0, np.max(np.abs(sigma)))):
        sym = float(np.max(np.abs(F - rev)) / scale)
    else:
        sym = float("nan")
    # restriction identity against an independent evaluation
    X0, X1 = np.meshgrid(x0, x1, indexing="ij")
    f_direct = direct_inverse_transform(f_check, dp, np.stack([X0.ravel(), X1.ravel()], 1))
    f_direct = f_direct.reshape(n0, n1)
    F0 = np.stack([_ft(f_check, dp)], axis=-1)[..., 0] if not np.any(sigma == 0) else \
        F[..., int(np.flatnonzero(sigma == 0)[0])]
    nf = max(np.linalg.norm(f_direct), 1e-300)
    restr = float(np.linalg.norm(F0 - f_direct) / nf) if np.any(f_direct) else \
        float(np.linalg.norm(F0))
    return F, JldReport(wave, sym, restr, x0, x1, sigma)


def hyperboloid_bump(n: int, dp: float, mass: float = 2.0, width: float = 0.6,
                     p1_width: float = 2.0, sheet: int = 1) -> np.ndarray:
    """Smooth bump around the chord of the mass hyperboloid ``p^2 = mass^2``."""
    p0 = _momentum_axes(n, dp)[:, None]
    p1 = _momentum_axes(n, dp)[None, :]
    p2 = p0 ** 2 - p1 ** 2
    m = np.sqrt(np.maximum(p2, 0.0))
    t = (m - mass) / width
    r = p1 / p1_width
    inside = (np.abs(t) < 1) & (np.abs(r) < 1) & (sheet * p0 > 0) & (p2 > 0)
    tt = np.where(inside, t, 0.0)
    rr = np.where(inside, r, 0.0)
    return np.where(inside, np.exp(-1 / (1 - tt ** 2) - 1 / (1 - rr ** 2)), 0.0)


def jld_convergence_study(n_list=(32, 64, 128), extent_p: float = 8.0, **bump):
    """Wave-equation residual under grid halving (fixed momentum box, finer position grid).

    The momentum box ``[-extent_p, extent_p)^2`` is sampled with
    ``n`` points, so doubling ``n`` halves ``dp``... and halves nothing in
    position space; instead the study keeps ``dp`` fixed and doubles ``n``
    (wider momentum box, same bump), which halves the position spacing.

    Returns
    -------
    dict
        ``h`` (position spacings), ``residual`` and the observed ``orders``.
    """
    dp = 2 * extent_p / n_list[0]
    hs, res = [], []
    for n in n_list:
        fc = hyperboloid_bump(n, dp, **bump)
        _, dx = _x_axes(n, dp)
        _, rep = jld_transform_1p1(fc, dp, sigma=dx * np.arange(-3, 4))
        hs.append(dx)
        res.append(rep.wave_residual)
    orders = [math.log(res[i] / res[i + 1]) / math.log(hs[i] / hs[i + 1])
              for i in range(len(res) - 1)]
    return {"h": hs, "residual": res, "orders": orders}


def vanishing_on_double_cone(n: int, dp: float, a, b, mass_range=(1.0, 6.0), seed: int = 0,
                             oversample: int = 3, k_keep: int = 1):
    """Momentum samples with spectrum in the closed cone whose transform is tiny on ``O_{a,b}``.

    Takes the candidate support (lattice momenta in the two mass bands),
    samples the map ``f_check -> f|_O`` on an oversampled set of points of
    the double cone and keeps the right-singular vectors with the smallest
    singular values (projection onto the near-null space), then mixes them
    with random weights.

    Returns
    -------
    (f_check, info)
        ``info`` has the singular value used (relative) and the support size.
    """
    rng = np.random.default_rng(seed)
    p0 = _momentum_axes(n, dp)[:, None]
    p1 = _momentum_axes(n, dp)[None, :]
    p2 = p0 ** 2 - p1 ** 2
    m = np.sqrt(np.maximum(p2, 0.0))
    supp = (p2 > 0) & (m > mass_range[0]) & (m < mass_range[1])
    i, j = np.nonzero(supp)
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    # oversampled points in O (light-cone coordinates)
    ua, va = a[0] + a[1], a[0] - a[1]
    ub, vb = b[0] + b[1], b[0] - b[1]
    _, dx = _x_axes(n, dp)
    k = max(8, int(oversample * max(ua - ub, va - vb) / dx))
    us = ub + (ua - ub) * (np.arange(k) + 0.5) / k
    vs = vb + (va - vb) * (np.arange(k) + 0.5) / k
    Uu, Vv = np.meshgrid(us, vs, indexing="ij")
    X = np.stack([(Uu + Vv).ravel() / 2, (Uu - Vv).ravel() / 2], axis=1)
    pp0 = p0[i, 0]
    pp1 = p1[0, j]
    A = np.exp(-1j * (np.outer(X[:, 0], pp0) - np.outer(X[:, 1], pp1))) * dp * dp
    _, sv, vh = np.linalg.svd(A, full_matrices=True)
    null = vh[-k_keep:].conj().T if vh.shape[0] > A.shape[0] else vh[-k_keep:].conj().T
    w = rng.normal(size=null.shape[1]) + 1j * rng.normal(size=null.shape[1])
    coef = null @ w
    # make f real: symmetrize p -> -p with conjugation (keeps the double-cone support)
    fc = np.zeros((n, n), complex)
    fc[i, j] = coef
    info = {"support": int(i.size), "samples": int(A.shape[0]),
            "smallest_singular": float(sv[-1] / sv[0]) if sv.size else 0.0,
            "residual_on_O": float(np.linalg.norm(A @ coef) / max(np.linalg.norm(coef), 1e-300))}
    return fc, info
