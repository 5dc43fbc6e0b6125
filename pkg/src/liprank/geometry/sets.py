"""Compact-set models: membership oracles, clearance, sample clouds, erosion.

A set is represented by a vectorized membership predicate plus a bounding
box, a distinguished interior point ``x0`` and two finite sample clouds
(interior and near-boundary) at a declared spacing ``h_geo``.  No boundary
parametrization is ever required: every downstream construction works
against the oracle at a recorded resolution.

``clearance(x)`` is the Euclidean distance from x to the complement of the
set (0 outside).  Built-in shapes carry exact closed forms; the generic
fallback probes rays against the oracle and refines by bisection, which
overestimates by at most a few percent at the declared direction count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np

from .norms import Norm

__all__ = [
    "CompactSet",
    "ErodedSet",
    "erode",
    "connected_components",
    "box",
    "interval",
    "ball",
    "lshape",
    "two_squares",
    "annulus",
    "halfspace_intersection",
    "polytope",
    "implicit_grid",
    "union",
    "scale_about",
    "load_set",
    "set_to_dict",
]

_BISECT_TOL = 1e-6
_RAY_DIRECTIONS = {1: 2, 2: 16, 3: 26, 4: 40}


def _ray_directions(dim: int) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        ang = np.linspace(0.0, 2 * np.pi, _RAY_DIRECTIONS[2], endpoint=False)
        return np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    rng = np.random.default_rng(7)
    d = rng.normal(size=(_RAY_DIRECTIONS[dim], dim))
    d = np.concatenate([np.eye(dim), -np.eye(dim), d])
    return d / np.sqrt((d * d).sum(-1, keepdims=True))


class CompactSet:
    """Oracle model of a compact M in R^N.

    Parameters
    ----------
    dim : ambient dimension
    contains : vectorized predicate, (..., dim) -> bool array
    bbox : (lo, hi) arrays bounding the set
    x0 : distinguished point, must lie in M
    h_geo : spacing of the generated sample clouds
    clearance : optional exact d2(x, complement); probe fallback otherwise
    """

    def __init__(self, dim: int, contains: Callable[[np.ndarray], np.ndarray],
                 bbox: tuple, x0: Sequence[float], h_geo: float = 0.05,
                 clearance: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 name: str = "set", spec: Optional[dict] = None,
                 clouds: Optional[tuple] = None):
        self.dim = int(dim)
        self._contains = contains
        lo, hi = bbox
        self.bbox = (np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
        self.x0 = np.asarray(x0, dtype=float)
        self.h_geo = float(h_geo)
        self._clearance = clearance
        self.name = name
        self.spec = spec  # JSON-serializable definition when available
        if clouds is not None:
            # pushforward sets carry their clouds; lazy grid generation skipped
            interior, boundary = clouds
            self.__dict__["interior_samples"] = np.asarray(interior, dtype=float)
            self.__dict__["boundary_samples"] = np.asarray(boundary, dtype=float)
        if not bool(np.all(self.contains(self.x0[None, :]))):
            raise ValueError(f"x0={self.x0} is not a member of {name}")

    # -- oracle ------------------------------------------------------------

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return np.asarray(self._contains(pts), dtype=bool)

    def clearance(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        if self._clearance is not None:
            c = np.asarray(self._clearance(pts), dtype=float)
            return np.maximum(c, 0.0)
        return self._probe_clearance(pts)

    def _probe_clearance(self, pts: np.ndarray) -> np.ndarray:
        """d2 to the complement via ray marching + bisection (tol 1e-6)."""
        pts = np.atleast_2d(pts)
        lo, hi = self.bbox
        t_max = float(np.sqrt(((hi - lo) ** 2).sum())) + 1.0
        dirs = _ray_directions(self.dim)
        inside = self.contains(pts)
        out = np.zeros(len(pts))
        if not inside.any():
            return out if pts.ndim == 2 else out[0]
        p = pts[inside]
        best = np.full(len(p), t_max)
        step = max(self.h_geo, 1e-3)
        for d in dirs:
            t_lo = np.zeros(len(p))
            t_hi = np.full(len(p), np.nan)
            t = np.full(len(p), step)
            active = np.ones(len(p), dtype=bool)
            while active.any() and t[active].min() <= t_max:
                probe = p[active] + t[active, None] * d
                hit = ~self.contains(probe)
                idx = np.flatnonzero(active)
                t_hi[idx[hit]] = t[idx[hit]]
                t_lo[idx[~hit]] = t[idx[~hit]]
                active[idx[hit]] = False
                t[idx[~hit]] *= 1.6
                t = np.minimum(t, t_max + step)
                active &= t <= t_max
            exited = np.isfinite(t_hi)
            for _ in range(int(np.ceil(np.log2(t_max / _BISECT_TOL)))):
                mid = 0.5 * (t_lo[exited] + t_hi[exited])
                hit = ~self.contains(p[exited] + mid[:, None] * d)
                th = t_hi[exited]
                tl = t_lo[exited]
                th[hit] = mid[hit]
                tl[~hit] = mid[~hit]
                t_hi[exited] = th
                t_lo[exited] = tl
            cand = np.where(exited, 0.5 * (t_lo + np.where(exited, t_hi, t_max)), t_max)
            best = np.minimum(best, cand)
        out[inside] = best
        return out

    # -- sample clouds -----------------------------------------------------

    @cached_property
    def _grid(self) -> tuple:
        lo, hi = self.bbox
        axes = [np.arange(lo[i] - 0.5 * self.h_geo, hi[i] + self.h_geo, self.h_geo)
                for i in range(self.dim)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        mask = self.contains(mesh)
        return mesh, mask

    @cached_property
    def interior_samples(self) -> np.ndarray:
        mesh, mask = self._grid
        inner = mask.copy()
        for ax in range(self.dim):
            m = mask
            shifted_f = np.zeros_like(m)
            shifted_b = np.zeros_like(m)
            sl_f = [slice(None)] * self.dim
            sl_b = [slice(None)] * self.dim
            sl_f[ax] = slice(1, None)
            sl_b[ax] = slice(None, -1)
            shifted_f[tuple(sl_b)] = m[tuple(sl_f)]
            shifted_b[tuple(sl_f)] = m[tuple(sl_b)]
            inner &= shifted_f & shifted_b
        pts = mesh[inner]
        if len(pts) == 0:
            pts = self.x0[None, :]
        return pts

    @cached_property
    def boundary_samples(self) -> np.ndarray:
        """In-set points within bisection tolerance of the boundary.

        Grid cells with an in/out edge are refined by bisecting that edge;
        each returned point is a member of M with complement points within
        1e-9, hence well within h_geo.
        """
        mesh, mask = self._grid
        pts_in = []
        pts_out = []
        for ax in range(self.dim):
            sl_a = [slice(None)] * self.dim
            sl_b = [slice(None)] * self.dim
            sl_a[ax] = slice(None, -1)
            sl_b[ax] = slice(1, None)
            a_in = mask[tuple(sl_a)] & ~mask[tuple(sl_b)]
            b_in = ~mask[tuple(sl_a)] & mask[tuple(sl_b)]
            pts_in.append(mesh[tuple(sl_a)][a_in])
            pts_out.append(mesh[tuple(sl_b)][a_in])
            pts_in.append(mesh[tuple(sl_b)][b_in])
            pts_out.append(mesh[tuple(sl_a)][b_in])
        if not any(len(p) for p in pts_in):
            raise ValueError(f"{self.name}: no boundary cells found at h_geo={self.h_geo}")
        a = np.concatenate(pts_in)
        b = np.concatenate(pts_out)
        for _ in range(40):  # bisect in/out edges down to ~1e-13 of h_geo
            mid = 0.5 * (a + b)
            inside = self.contains(mid)
            a = np.where(inside[:, None], mid, a)
            b = np.where(inside[:, None], b, mid)
        return a

    def sample_interior(self, m: int, rng: np.random.Generator) -> np.ndarray:
        """Rejection-sample m points of M from the bounding box."""
        lo, hi = self.bbox
        out = []
        got = 0
        for _ in range(200):
            cand = rng.uniform(lo, hi, size=(max(4 * m, 256), self.dim))
            cand = cand[self.contains(cand)]
            out.append(cand)
            got += len(cand)
            if got >= m:
                break
        if got == 0:
            raise ValueError(f"{self.name}: rejection sampling found no interior points")
        return np.concatenate(out)[:m]

    def diameter(self, norm: Norm) -> float:
        pts = np.concatenate([self.boundary_samples, self.interior_samples])
        if len(pts) > 1500:
            idx = np.linspace(0, len(pts) - 1, 1500).astype(int)
            pts = pts[idx]
        d = norm(pts[:, None, :] - pts[None, :, :])
        return float(d.max())


@dataclass
class ErodedSet:
    """Points of the parent set at Euclidean depth more than r (strict)."""

    parent: CompactSet
    r: float

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("erosion radius must be positive")

    def contains(self, pts: np.ndarray) -> np.ndarray:
        return self.parent.clearance(pts) > self.r


def erode(s: CompactSet, r: float) -> ErodedSet:
    return ErodedSet(parent=s, r=float(r))


# -- constructors ----------------------------------------------------------

def box(lo, hi, x0=None, h_geo: float = 0.05, name: str = "box") -> CompactSet:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    dim = len(lo)

    def contains(p):
        return np.all((p >= lo) & (p <= hi), axis=-1)

    def clearance(p):
        return np.minimum((p - lo).min(axis=-1), (hi - p).min(axis=-1))

    x0 = 0.5 * (lo + hi) if x0 is None else np.asarray(x0, dtype=float)
    spec = {"kind": "box", "params": {"lo": lo.tolist(), "hi": hi.tolist()}}
    return CompactSet(dim, contains, (lo, hi), x0, h_geo, clearance, name, spec)


def interval(a: float, b: float, x0=None, h_geo: float = 0.02) -> CompactSet:
    return box([a], [b], x0=None if x0 is None else [x0], h_geo=h_geo, name="interval")


def ball(center, radius: float, x0=None, h_geo: float = 0.05, name: str = "ball") -> CompactSet:
    c = np.asarray(center, dtype=float)
    dim = len(c)

    def contains(p):
        return ((p - c) ** 2).sum(axis=-1) <= radius * radius

    def clearance(p):
        return radius - np.sqrt(((p - c) ** 2).sum(axis=-1))

    x0 = c if x0 is None else np.asarray(x0, dtype=float)
    bbox = (c - radius, c + radius)
    spec = {"kind": "ball", "params": {"center": c.tolist(), "radius": float(radius)}}
    return CompactSet(dim, contains, bbox, x0, h_geo, clearance, name, spec)


def _box_distance(p: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    d = np.maximum(np.maximum(lo - p, p - hi), 0.0)
    return np.sqrt((d * d).sum(axis=-1))


def lshape(h_geo: float = 0.05) -> CompactSet:
    """[0,1]^2 with the open upper-right quadrant (0.5,1]^2 removed."""
    lo = np.zeros(2)
    hi = np.ones(2)
    cut_lo = np.array([0.5, 0.5])

    def contains(p):
        in_outer = np.all((p >= lo) & (p <= hi), axis=-1)
        in_cut = np.all(p > cut_lo, axis=-1)
        return in_outer & ~in_cut

    def clearance(p):
        outer = np.minimum((p - lo).min(axis=-1), (hi - p).min(axis=-1))
        return np.minimum(outer, _box_distance(p, cut_lo, hi))

    spec = {"kind": "union", "params": {"parts": [
        {"kind": "box", "params": {"lo": [0.0, 0.0], "hi": [1.0, 0.5]}},
        {"kind": "box", "params": {"lo": [0.0, 0.0], "hi": [0.5, 1.0]}},
    ]}}
    return CompactSet(2, contains, (lo, hi), [0.25, 0.25], h_geo, clearance, "lshape", spec)


def two_squares(h_geo: float = 0.05) -> CompactSet:
    """[0,1]^2 together with [3,4]^2 (two well-separated components)."""
    b1 = (np.zeros(2), np.ones(2))
    b2 = (np.full(2, 3.0), np.full(2, 4.0))

    def contains(p):
        in1 = np.all((p >= b1[0]) & (p <= b1[1]), axis=-1)
        in2 = np.all((p >= b2[0]) & (p <= b2[1]), axis=-1)
        return in1 | in2

    def clearance(p):
        c1 = np.minimum((p - b1[0]).min(axis=-1), (b1[1] - p).min(axis=-1))
        c2 = np.minimum((p - b2[0]).min(axis=-1), (b2[1] - p).min(axis=-1))
        return np.maximum(c1, c2)

    spec = {"kind": "union", "params": {"parts": [
        {"kind": "box", "params": {"lo": [0.0, 0.0], "hi": [1.0, 1.0]}},
        {"kind": "box", "params": {"lo": [3.0, 3.0], "hi": [4.0, 4.0]}},
    ]}}
    return CompactSet(2, contains, (b1[0], b2[1]), [0.5, 0.5], h_geo, clearance,
                      "two_squares", spec)


def annulus(r_in: float = 0.5, r_out: float = 1.0, h_geo: float = 0.05) -> CompactSet:
    def contains(p):
        n2 = (p * p).sum(axis=-1)
        return (n2 >= r_in * r_in) & (n2 <= r_out * r_out)

    def clearance(p):
        rho = np.sqrt((p * p).sum(axis=-1))
        return np.minimum(r_out - rho, rho - r_in)

    lo = np.full(2, -r_out)
    hi = np.full(2, r_out)
    return CompactSet(2, contains, (lo, hi), [0.5 * (r_in + r_out), 0.0], h_geo,
                      clearance, "annulus")


def halfspace_intersection(normals, offsets, bbox, x0, h_geo: float = 0.05,
                           name: str = "halfspaces") -> CompactSet:
    """Intersection of {a_i . x <= b_i} with a bounding box (exact clearance)."""
    A = np.asarray(normals, dtype=float)
    b = np.asarray(offsets, dtype=float)
    lo = np.asarray(bbox[0], dtype=float)
    hi = np.asarray(bbox[1], dtype=float)
    nrm = np.sqrt((A * A).sum(axis=-1))

    def contains(p):
        slack = b - p @ A.T
        in_box = np.all((p >= lo) & (p <= hi), axis=-1)
        return in_box & np.all(slack >= 0.0, axis=-1)

    def clearance(p):
        slack = (b - p @ A.T) / nrm
        cbox = np.minimum((p - lo).min(axis=-1), (hi - p).min(axis=-1))
        return np.minimum(slack.min(axis=-1), cbox)

    spec = {"kind": "halfspace-intersection",
            "params": {"normals": A.tolist(), "offsets": b.tolist(),
                       "bbox": {"lo": lo.tolist(), "hi": hi.tolist()}}}
    return CompactSet(len(lo), contains, (lo, hi), x0, h_geo, clearance, name, spec)


def polytope(vertices, x0=None, h_geo: float = 0.05) -> CompactSet:
    from scipy.spatial import ConvexHull

    V = np.asarray(vertices, dtype=float)
    hull = ConvexHull(V)
    A = hull.equations[:, :-1]
    b = -hull.equations[:, -1]
    lo = V.min(axis=0)
    hi = V.max(axis=0)
    x0 = V.mean(axis=0) if x0 is None else np.asarray(x0, dtype=float)
    s = halfspace_intersection(A, b, (lo, hi), x0, h_geo, name="polytope")
    s.spec = {"kind": "polytope", "params": {"vertices": V.tolist()}}
    return s


def implicit_grid(lo, hi, values, level: float = 0.0, x0=None,
                  h_geo: float = 0.05) -> CompactSet:
    """Sub-level set {F <= level} of a function sampled on a regular grid."""
    from scipy.interpolate import RegularGridInterpolator

    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    vals = np.asarray(values, dtype=float)
    axes = [np.linspace(lo[i], hi[i], vals.shape[i]) for i in range(len(lo))]
    interp = RegularGridInterpolator(axes, vals, bounds_error=False, fill_value=np.inf)

    def contains(p):
        return interp(p) <= level

    if x0 is None:
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        x0 = mesh.reshape(-1, len(lo))[int(np.argmin(vals))]
    spec = {"kind": "implicit-grid", "params": {"lo": lo.tolist(), "hi": hi.tolist(),
            "shape": list(vals.shape), "values": vals.ravel().tolist(),
            "level": float(level)}}
    return CompactSet(len(lo), contains, (lo, hi), x0, h_geo, None, "implicit-grid", spec)


def union(parts: Sequence[CompactSet], x0=None, h_geo: Optional[float] = None,
          name: str = "union") -> CompactSet:
    """Union of oracle sets.

    Clearance is the max of part clearances: exact when the parts are
    separated, a safe underestimate when they overlap.
    """
    dim = parts[0].dim

    def contains(p):
        m = parts[0].contains(p)
        for s in parts[1:]:
            m = m | s.contains(p)
        return m

    def clearance(p):
        c = parts[0].clearance(p)
        for s in parts[1:]:
            c = np.maximum(c, s.clearance(p))
        return c

    lo = np.min([s.bbox[0] for s in parts], axis=0)
    hi = np.max([s.bbox[1] for s in parts], axis=0)
    x0 = parts[0].x0 if x0 is None else np.asarray(x0, dtype=float)
    h = min(s.h_geo for s in parts) if h_geo is None else h_geo
    spec = None
    if all(s.spec is not None for s in parts):
        spec = {"kind": "union", "params": {"parts": [s.spec for s in parts]}}
    return CompactSet(dim, contains, (lo, hi), x0, h, clearance, name, spec)


def scale_about(parent: CompactSet, w, factor: float, name: Optional[str] = None) -> CompactSet:
    """The dilated set w + factor*(parent - w); clearance scales exactly."""
    w = np.asarray(w, dtype=float)
    lam = float(factor)
    if lam <= 0:
        raise ValueError("scale factor must be positive")

    def pullback(p):
        return w + (p - w) / lam

    def contains(p):
        return parent.contains(pullback(p))

    def clearance(p):
        if parent._clearance is None:
            return None  # signal: no exact form
        return lam * parent.clearance(pullback(p))

    lo, hi = parent.bbox
    bbox = (w + lam * (lo - w), w + lam * (hi - w))
    cl = None if parent._clearance is None else clearance
    s = CompactSet(parent.dim, contains, bbox, parent.x0, parent.h_geo, cl,
                   name or f"{parent.name}*{lam:.4g}")
    return s


# -- JSON set-definition files ----------------------------------------------

_KINDS = {"ball", "box", "polytope", "halfspace-intersection", "union", "implicit-grid"}


def _from_dict(d: dict, x0=None, h_geo: Optional[float] = None) -> CompactSet:
    kind = d["kind"]
    if kind not in _KINDS:
        raise ValueError(f"unknown set kind {kind!r}; expected one of {sorted(_KINDS)}")
    p = d.get("params", {})
    x0 = d.get("x0", x0)
    h_geo = d.get("h_geo", h_geo) or 0.05
    if kind == "ball":
        return ball(p["center"], p["radius"], x0=x0, h_geo=h_geo)
    if kind == "box":
        return box(p["lo"], p["hi"], x0=x0, h_geo=h_geo)
    if kind == "polytope":
        return polytope(p["vertices"], x0=x0, h_geo=h_geo)
    if kind == "halfspace-intersection":
        bb = p["bbox"]
        if x0 is None:
            raise ValueError("halfspace-intersection set files must carry x0")
        return halfspace_intersection(p["normals"], p["offsets"], (bb["lo"], bb["hi"]),
                                      x0, h_geo=h_geo)
    if kind == "implicit-grid":
        vals = np.asarray(p["values"], dtype=float).reshape(p["shape"])
        return implicit_grid(p["lo"], p["hi"], vals, p.get("level", 0.0),
                             x0=x0, h_geo=h_geo)
    parts = [_from_dict(q) for q in p["parts"]]
    return union(parts, x0=x0, h_geo=h_geo)


def load_set(source) -> CompactSet:
    """Build a CompactSet from a JSON file path, JSON string, or dict."""
    if isinstance(source, dict):
        return _from_dict(source)
    text = str(source)
    if text.lstrip().startswith("{"):
        return _from_dict(json.loads(text))
    with open(text) as fh:
        return _from_dict(json.load(fh))


def set_to_dict(s: CompactSet) -> dict:
    if s.spec is None:
        raise ValueError(f"{s.name} has no JSON-serializable definition")
    d = dict(s.spec)
    d["x0"] = s.x0.tolist()
    d["h_geo"] = s.h_geo
    return d


# -- connected components ----------------------------------------------------

def connected_components(s: CompactSet, norm: Norm, resolution: Optional[float] = None,
                         cap: int = 64) -> tuple:
    """Flood-fill components on a membership grid.

    Returns ``(components, alpha, alpha_eff)`` where alpha is the minimal
    cross-component distance in the working norm and alpha_eff = min(alpha,
    0.99) is the value usable as the separation lower bound in (0,1).
    With a single component alpha is +inf.
    """
    from scipy import ndimage

    res = resolution if resolution is not None else s.h_geo
    if res > s.h_geo + 1e-15:
        raise ValueError("component resolution must not be coarser than h_geo")
    lo, hi = s.bbox
    axes = [np.arange(lo[i] - 0.5 * res, hi[i] + res, res) for i in range(s.dim)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    mask = s.contains(mesh)
    if not mask.any():
        raise ValueError(f"{s.name}: no members found on the probe grid")
    labels, ncomp = ndimage.label(mask)
    if ncomp > cap:
        raise ValueError(f"{s.name}: {ncomp} components exceeds cap {cap}; "
                         "resolution too coarse or set pathological")
    comps = []
    clouds = []
    margin = res * (s.dim ** 0.5 + 1.0)
    for i in range(1, ncomp + 1):
        sel = labels == i
        pts = mesh[sel]
        clo = pts.min(axis=0) - margin
        chi = pts.max(axis=0) + margin

        def contains(p, clo=clo, chi=chi):
            return s.contains(p) & np.all((p >= clo) & (p <= chi), axis=-1)

        inside_x0 = bool(np.all((s.x0 >= clo) & (s.x0 <= chi))) and bool(s.contains(s.x0[None])[0])
        if inside_x0:
            cx0 = s.x0
        else:
            depth = s.clearance(pts)
            cx0 = pts[int(np.argmax(depth))]
        cl = None if s._clearance is None else (
            lambda p, clo=clo, chi=chi: np.where(
                np.all((p >= clo) & (p <= chi), axis=-1), s.clearance(p), 0.0))
        comp = CompactSet(s.dim, contains, (clo, chi), cx0, s.h_geo, cl,
                          f"{s.name}[{i}]")
        comps.append(comp)
        clouds.append(comp.boundary_samples)
    if ncomp == 1:
        return comps, np.inf, 0.99
    alpha = np.inf
    for i in range(ncomp):
        for j in range(i + 1, ncomp):
            a, b = clouds[i], clouds[j]
            d = norm(a[:, None, :] - b[None, :, :])
            alpha = min(alpha, float(d.min()))
    # the sampled minimum overestimates the true separation by at most the
    # cloud covering radius on each side; alpha_eff must be a lower bound
    slack = 2.0 * norm.K * s.h_geo * np.sqrt(s.dim)
    alpha_eff = min(max(alpha - slack, 0.5 * alpha), 0.99)
    return comps, alpha, alpha_eff
