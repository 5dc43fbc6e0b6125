"""Coordinatewise-affine interpolation on hypercube lattice meshes.

A mesh is the set of closed axis-aligned cubes of edge delta from the
lattice anchored at x0 that meet a target region (an erosion of the
enlarged set).  On each cube the interpolant is the unique multilinear
function matching the vertex values; adjacent cubes agree on shared faces,
so the glued function is well defined.  Vertex values are stored once per
lattice vertex (dense per-tile arrays; disconnected regions get one tile
per component so the storage never spans empty space between them).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .geometry.norms import Norm
from .geometry.sets import ErodedSet

__all__ = [
    "Hypercube",
    "cube_weights",
    "cube_interpolate",
    "cube_gradient",
    "Tile",
    "Mesh",
    "MeshError",
    "build_mesh",
    "VertexTable",
    "MeshFunction",
    "face_consistency_check",
    "hat_value",
    "interp_bounds_check",
]

_GAMMA_CACHE: dict = {}
_FACE_TOL = 1e-9   # lattice-unit tolerance for "x lies on a face"


def _gammas(dim: int) -> np.ndarray:
    if dim not in _GAMMA_CACHE:
        _GAMMA_CACHE[dim] = np.stack(
            np.meshgrid(*([[0, 1]] * dim), indexing="ij"), -1).reshape(-1, dim)
    return _GAMMA_CACHE[dim]


@dataclass(frozen=True)
class Hypercube:
    """Closed cube with anchor vertex w and edge delta; vertices w + delta*gamma."""

    anchor: np.ndarray
    edge: float

    @property
    def dim(self) -> int:
        return len(self.anchor)

    def vertices(self) -> np.ndarray:
        return self.anchor + self.edge * _gammas(self.dim)

    def local(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.anchor) / self.edge


def cube_weights(local: np.ndarray) -> np.ndarray:
    """Multilinear vertex weights at local coordinates in [0,1]^N.

    Weight of vertex gamma is prod_i (gamma_i ? s_i : 1 - s_i); the weights
    are nonnegative inside the cube and always sum to 1.
    """
    local = np.asarray(local, dtype=float)
    dim = local.shape[-1]
    g = _gammas(dim)
    s = local[..., None, :]
    w = np.where(g.astype(bool), s, 1.0 - s)
    return w.prod(axis=-1)


def cube_interpolate(values: np.ndarray, cube: Hypercube, X: np.ndarray,
                     tol: float = 1e-12) -> np.ndarray:
    """Evaluate the multilinear interpolant of 2^N vertex values at X in C.

    Points outside the cube beyond `tol` (relative to the edge) are rejected.
    """
    values = np.asarray(values, dtype=float)
    loc = cube.local(X)
    if np.any(loc < -tol) or np.any(loc > 1.0 + tol):
        raise ValueError("evaluation point lies outside the cube")
    return cube_weights(loc) @ values


def cube_gradient(values: np.ndarray, cube: Hypercube, Z: np.ndarray) -> np.ndarray:
    """Gradient of the multilinear interpolant at interior points Z.

    Each partial derivative is the weighted combination of the edge divided
    differences along that axis, weights being the multilinear factors of the
    remaining axes.
    """
    values = np.asarray(values, dtype=float)
    loc = cube.local(Z)
    dim = cube.dim
    g = _gammas(dim)
    s = loc[..., None, :]
    fac = np.where(g.astype(bool), s, 1.0 - s)          # (..., 2^N, N)
    sign = np.where(g.astype(bool), 1.0, -1.0) / cube.edge
    out = np.empty(loc.shape[:-1] + (dim,))
    for j in range(dim):
        others = [i for i in range(dim) if i != j]
        w = fac[..., others].prod(axis=-1) if others else np.ones(fac.shape[:-1])
        out[..., j] = (w * sign[:, j] * values).sum(axis=-1)
    return out


class MeshError(ValueError):
    pass


@dataclass
class Tile:
    """Dense storage window: cubes with integer anchors in [imin, imin+shape)."""

    imin: np.ndarray                 # (N,) int lattice coords of lowest anchor
    cube_mask: np.ndarray            # bool, shape = cells per axis

    @property
    def vertex_shape(self) -> tuple:
        return tuple(s + 1 for s in self.cube_mask.shape)

    def vertex_mask(self) -> np.ndarray:
        vm = np.zeros(self.vertex_shape, dtype=bool)
        dim = len(self.imin)
        for g in _gammas(dim):
            sl = tuple(slice(gi, gi + s) for gi, s in zip(g, self.cube_mask.shape))
            vm[sl] |= self.cube_mask
        return vm


class Mesh:
    """Hypercube cover of the target region on the lattice x0 + delta*Z^N."""

    def __init__(self, x0: np.ndarray, delta: float, tiles: List[Tile]):
        self.x0 = np.asarray(x0, dtype=float)
        self.delta = float(delta)
        self.dim = len(self.x0)
        self.tiles = tiles
        self._vertex_masks = [t.vertex_mask() for t in tiles]
        self.n_cubes = int(sum(t.cube_mask.sum() for t in tiles))
        self.n_vertices = int(sum(vm.sum() for vm in self._vertex_masks))
        if self.n_cubes == 0:
            raise MeshError("mesh is empty: the target region met no lattice cube")

    # -- enumeration --------------------------------------------------------

    def cube_anchors(self) -> np.ndarray:
        """Integer lattice coordinates of every cube anchor."""
        out = []
        for t in self.tiles:
            idx = np.argwhere(t.cube_mask)
            out.append(idx + t.imin)
        return np.concatenate(out) if out else np.empty((0, self.dim), dtype=int)

    def vertex_coords(self) -> np.ndarray:
        out = []
        for t, vm in zip(self.tiles, self._vertex_masks):
            idx = np.argwhere(vm)
            out.append(idx + t.imin)
        return np.concatenate(out)

    def vertex_points(self) -> np.ndarray:
        return self.x0 + self.delta * self.vertex_coords()

    def cube(self, anchor: Sequence[int]) -> Hypercube:
        a = np.asarray(anchor, dtype=int)
        return Hypercube(self.x0 + self.delta * a, self.delta)

    def has_cube(self, anchor: Sequence[int]) -> bool:
        a = np.asarray(anchor, dtype=int)
        for t in self.tiles:
            rel = a - t.imin
            if np.all(rel >= 0) and np.all(rel < t.cube_mask.shape):
                return bool(t.cube_mask[tuple(rel)])
        return False

    # -- point location ------------------------------------------------------

    def locate(self, X: np.ndarray):
        """Containing-cube anchors for each point, with the deterministic
        face rule: points on a lattice face take the lexicographically
        smallest containing cube present in the mesh (values agree either
        way by face consistency).

        Returns (tile_index, anchors) arrays; raises MeshError for points
        in no mesh cube.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        t = (X - self.x0) / self.delta
        c = np.floor(t).astype(int)
        frac = t - c
        hi = frac > 1.0 - _FACE_TOL
        c[hi] += 1
        frac[hi] = 0.0
        tie = frac < _FACE_TOL
        tile_idx = np.full(len(X), -1, dtype=int)
        anchors = c.copy()
        # prefer the lower cube on tied axes, falling back lexicographically
        for i in range(len(X)):
            found = False
            ties = np.flatnonzero(tie[i])
            combos = [np.zeros(0, dtype=int)]
            if len(ties):
                order = sorted(range(2 ** len(ties)),
                               key=lambda b: tuple(-((b >> k) & 1) for k in range(len(ties))))
                combos = [np.array([(b >> k) & 1 for k in range(len(ties))]) for b in order]
            for combo in combos:
                a = c[i].copy()
                if len(ties):
                    a[ties] -= combo
                for ti, tl in enumerate(self.tiles):
                    rel = a - tl.imin
                    if np.all(rel >= 0) and np.all(rel < tl.cube_mask.shape) \
                            and tl.cube_mask[tuple(rel)]:
                        tile_idx[i] = ti
                        anchors[i] = a
                        found = True
                        break
                if found:
                    break
            if not found:
                raise MeshError(f"point {X[i]} lies in no mesh cube")
        return tile_idx, anchors

    # -- serialization --------------------------------------------------------

    def to_json(self, path: Optional[str] = None) -> dict:
        d = {
            "x0": self.x0.tolist(),
            "delta": self.delta,
            "cubes": self.cube_anchors().tolist(),
            "vertices": self.vertex_points().tolist(),
        }
        if path is not None:
            with open(path, "w") as fh:
                json.dump(d, fh)
        return d


def build_mesh(region: ErodedSet, delta: float, x0: np.ndarray,
               tile_bboxes: Optional[List[tuple]] = None,
               check_containment: bool = True) -> Mesh:
    """Cubes of the x0-anchored lattice meeting the region M(2r).

    ``region`` must be the 2r-erosion of the enlarged set; the mesh is then
    contained in the r-erosion, which is verified at cube vertices and face
    midpoints (clearance > r) unless disabled.  A cube is included when a
    corner has clearance above 2r - sqrt(N)*delta, which both covers every
    cube meeting M(2r) and keeps all included cubes inside M(r) as long as
    delta is well below r (the schedule guarantees a factor >= 8).
    """
    parent = region.parent
    two_r = region.r
    r_half = 0.5 * two_r
    x0 = np.asarray(x0, dtype=float)
    dim = parent.dim
    delta = float(delta)
    if tile_bboxes is None:
        tile_bboxes = [parent.bbox]
    thresh = two_r - np.sqrt(dim) * delta
    # a passing corner certifies cube points only down to thresh - sqrt(N)*delta,
    # which must still clear the containment depth
    if thresh - np.sqrt(dim) * delta <= r_half:
        raise MeshError(f"delta={delta} too large relative to erosion depth {two_r}")
    tiles = []
    for lo, hi in tile_bboxes:
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        imin = np.floor((lo - x0) / delta).astype(int) - 1
        imax = np.ceil((hi - x0) / delta).astype(int) + 1
        axes = [np.arange(imin[k], imax[k] + 1) for k in range(dim)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1)
        clr = parent.clearance(x0 + delta * grid)
        vmask = clr > thresh
        cmask = np.zeros(tuple(s - 1 for s in vmask.shape), dtype=bool)
        for g in _gammas(dim):
            sl = tuple(slice(gi, gi + s) for gi, s in zip(g, cmask.shape))
            cmask |= vmask[sl]
        if cmask.any():
            tiles.append(Tile(imin=imin, cube_mask=cmask))
    mesh = Mesh(x0, delta, tiles)
    if check_containment:
        bad = _containment_violation(mesh, parent, r_half)
        if bad is not None:
            raise MeshError(f"mesh containment failed at {bad}: delta too large for "
                            f"erosion depth {r_half}")
    return mesh


def _containment_violation(mesh: Mesh, parent, r: float, audit_cap: int = 2_000_000):
    """Probe cube centers and face midpoints for clearance > r.

    Vertices were already certified during the build at the stronger
    threshold 2r - sqrt(N) delta.  When the parent carries an exact
    (1-Lipschitz) clearance form, that threshold analytically covers every
    cube point, so the probe runs on a capped random subsample as an audit;
    oracle-probed clearances get the full scan.
    """
    anchors = mesh.cube_anchors()
    exact = getattr(parent, "_clearance", None) is not None
    if exact and len(anchors) * (2 * mesh.dim + 1) > audit_cap:
        rng = np.random.default_rng(0)
        take = max(1, audit_cap // (2 * mesh.dim + 1))
        anchors = anchors[rng.choice(len(anchors), take, replace=False)]
    centers = mesh.x0 + mesh.delta * (anchors + 0.5)
    pts = [centers]
    if mesh.dim > 1:
        for j in range(mesh.dim):
            off = np.full(mesh.dim, 0.5)
            off[j] = 0.0
            pts.append(mesh.x0 + mesh.delta * (anchors + off))
            off[j] = 1.0
            pts.append(mesh.x0 + mesh.delta * (anchors + off))
    for block in pts:
        clr = parent.clearance(block)
        if np.any(clr <= r):
            return block[int(np.argmax(clr <= r))]
    return None


class VertexTable:
    """One scalar per mesh vertex, stored densely per tile (NaN off-mesh)."""

    def __init__(self, mesh: Mesh, arrays: Optional[List[np.ndarray]] = None):
        self.mesh = mesh
        if arrays is None:
            arrays = [np.full(t.vertex_shape, np.nan) for t in mesh.tiles]
        self.arrays = arrays

    def set_from_fields(self, fields: List[np.ndarray]):
        for arr, f in zip(self.arrays, fields):
            arr[...] = f

    def set_values(self, coords: np.ndarray, vals: np.ndarray):
        coords = np.atleast_2d(np.asarray(coords, dtype=int))
        vals = np.asarray(vals, dtype=float)
        for t, arr in zip(self.mesh.tiles, self.arrays):
            rel = coords - t.imin
            ok = np.all(rel >= 0, axis=1) & np.all(rel < np.array(arr.shape), axis=1)
            if ok.any():
                arr[tuple(rel[ok].T)] = vals[ok]

    def value(self, coords: np.ndarray) -> np.ndarray:
        coords = np.atleast_2d(np.asarray(coords, dtype=int))
        out = np.full(len(coords), np.nan)
        for t, arr in zip(self.mesh.tiles, self.arrays):
            rel = coords - t.imin
            ok = np.all(rel >= 0, axis=1) & np.all(rel < np.array(arr.shape), axis=1)
            if ok.any():
                out[ok] = arr[tuple(rel[ok].T)]
        return out

    def shift(self, offset: float):
        for arr in self.arrays:
            arr -= offset

    def to_csv(self, path: str):
        coords = self.mesh.vertex_coords()
        vals = self.value(coords)
        with open(path, "w") as fh:
            fh.write(",".join(f"i{k}" for k in range(self.mesh.dim)) + ",value\n")
            for c, v in zip(coords, vals):
                fh.write(",".join(str(int(ci)) for ci in c) + f",{v!r}\n")


class MeshFunction:
    """Piecewise-multilinear function defined by a mesh and a vertex table."""

    def __init__(self, mesh: Mesh, table: VertexTable):
        self.mesh = mesh
        self.table = table

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        Xb = np.atleast_2d(X)
        tile_idx, anchors = self.mesh.locate(Xb)
        loc = (Xb - self.mesh.x0) / self.mesh.delta - anchors
        loc = np.clip(loc, 0.0, 1.0)
        w = cube_weights(loc)
        g = _gammas(self.mesh.dim)
        corner_vals = np.empty(w.shape)
        coords = anchors[:, None, :] + g[None, :, :]
        flat = coords.reshape(-1, self.mesh.dim)
        corner_vals = self.table.value(flat).reshape(w.shape)
        if np.any(~np.isfinite(corner_vals)):
            raise MeshError("vertex table missing a value inside the mesh")
        out = (w * corner_vals).sum(axis=1)
        return out if X.ndim > 1 else out[0]

    def gradient(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        tile_idx, anchors = self.mesh.locate(X)
        out = np.empty_like(X)
        g = _gammas(self.mesh.dim)
        for i in range(len(X)):
            cube = self.mesh.cube(anchors[i])
            vals = self.table.value(anchors[i] + g)
            out[i] = cube_gradient(vals, cube, X[i])
        return out


def face_consistency_check(table: VertexTable, mesh: Mesh, anchor_a, anchor_b,
                           n_samples: int = 10, seed: int = 0,
                           tol: float = 1e-12) -> bool:
    """Interpolants of two adjacent cubes agree on their shared face."""
    a = np.asarray(anchor_a, dtype=int)
    b = np.asarray(anchor_b, dtype=int)
    diff = b - a
    if np.abs(diff).sum() != 1:
        raise ValueError("cubes are not face-adjacent")
    axis = int(np.argmax(np.abs(diff)))
    rng = np.random.default_rng(seed)
    g = _gammas(mesh.dim)
    loc = rng.uniform(0.0, 1.0, size=(n_samples, mesh.dim))
    loc[:, axis] = 1.0 if diff[axis] > 0 else 0.0
    pts = mesh.x0 + mesh.delta * (a + loc)
    cube_a = mesh.cube(a)
    cube_b = mesh.cube(b)
    va = cube_interpolate(table.value(a + g), cube_a, pts)
    vb = cube_interpolate(table.value(b + g), cube_b, pts)
    return bool(np.max(np.abs(va - vb)) <= tol * max(1.0, np.max(np.abs(va))))


def hat_value(mesh: Mesh, vertex_coord, X: np.ndarray) -> np.ndarray:
    """The piecewise-multilinear basis function of one vertex, evaluated at X.

    Equals 1 at the vertex, 0 at every other mesh vertex, and the multilinear
    weight of that corner inside each containing cube.
    """
    v = np.asarray(vertex_coord, dtype=int)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    tile_idx, anchors = mesh.locate(X)
    loc = (X - mesh.x0) / mesh.delta - anchors
    gamma = v - anchors
    out = np.zeros(len(X))
    corner = np.all((gamma == 0) | (gamma == 1), axis=1)
    if corner.any():
        s = loc[corner]
        gm = gamma[corner]
        w = np.where(gm.astype(bool), s, 1.0 - s)
        out[corner] = w.prod(axis=1)
    return out


def interp_bounds_check(g: Callable, lip_g: float, eps: float, mesh: Mesh,
                        table: VertexTable, K: float, norm: Norm,
                        n_cubes: int = 50, samples_per_cube: int = 40,
                        seed: int = 0, tol: float = 1e-9) -> dict:
    """Per-cube Lipschitz and uniform-gap checks of the interpolant against g.

    Requires g uniformly differentiable at scale K*delta with constant eps:
    per-cube sampled Lip <= K^2 eps + Lip(g) + tol and |interp - g| <=
    sqrt(N) K Lip(g) delta + tol on sampled cubes.
    """
    rng = np.random.default_rng(seed)
    anchors = mesh.cube_anchors()
    pick = rng.choice(len(anchors), size=min(n_cubes, len(anchors)), replace=False)
    gam = _gammas(mesh.dim)
    lip_bound = K * K * eps + lip_g
    gap_bound = np.sqrt(mesh.dim) * K * lip_g * mesh.delta
    worst_lip = 0.0
    worst_gap = 0.0
    for idx in pick:
        a = anchors[idx]
        cube = mesh.cube(a)
        vals = table.value(a + gam)
        loc = rng.uniform(0.0, 1.0, size=(samples_per_cube, mesh.dim))
        pts = cube.anchor + cube.edge * loc
        iv = cube_interpolate(vals, cube, pts)
        gv = np.asarray(g(pts), dtype=float)
        worst_gap = max(worst_gap, float(np.abs(iv - gv).max()))
        d = norm(pts[:, None, :] - pts[None, :, :])
        dv = np.abs(iv[:, None] - iv[None, :])
        keep = d > 1e-12
        if keep.any():
            worst_lip = max(worst_lip, float((dv[keep] / d[keep]).max()))
    return {
        "lip_measured": worst_lip,
        "lip_bound": lip_bound,
        "gap_measured": worst_gap,
        "gap_bound": gap_bound,
        "ok": bool(worst_lip <= lip_bound + tol and worst_gap <= gap_bound + tol),
    }
