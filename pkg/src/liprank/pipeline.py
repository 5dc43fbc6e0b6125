"""Assembly and verification of the finite-rank operators.

For each n the pipeline composes three stages on Lipschitz functions over a
compact set M with distinguished point x0:

1. pull back along the retraction of an enlargement built at tolerance
   xi_n = 1/(2n), so |f - pullback(f)| <= Lip(f)/n on M;
2. smooth by mollifier convolution at radius r_n < 1/(n+1), bounded by the
   enlargement margin so M sits deep inside the smoothing domain;
3. interpolate on the hypercube mesh of edge delta_n < r_n/(2 sqrt(N) K (3n+1))
   anchored at x0.

The result is a finite-rank operator: its value on f is determined by the
coefficient table {smoothed(pullback(f))(v)} over mesh vertices, and the
operator acts as the hat-basis expansion of that table.  The verification
harness measures the operator norm (bound 1 + 1/n) and the uniform error
(bound 1/(6n(n+1)) + (2K+1)/n) over a suite of unit-ball Lipschitz
functions, reporting every tolerance explicitly.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy import fft as sfft

from .enlargement import Enlargement, enlarge
from .geometry.norms import Norm, estimate_lipschitz
from .geometry.sets import CompactSet, erode, load_set
from .interpolation import Mesh, MeshError, MeshFunction, VertexTable, build_mesh, cube_weights, _gammas
from .smoothing import (
    DEFAULT_QUAD_SLACK,
    BallLatticeRule,
    SmoothedFunction,
    default_nodes_per_axis,
    differentiability_modulus,
    residual_check,
)

__all__ = [
    "ScheduleError",
    "Schedule",
    "make_schedule",
    "PullbackOperator",
    "apply_pullback",
    "FiniteRankOperator",
    "assemble_operator",
    "SuiteFunction",
    "build_test_suite",
    "NormReport",
    "evaluate_suite",
    "verify_norm",
    "UniformReport",
    "verify_uniform",
    "PredualAction",
    "predual_action",
    "run_experiment",
    "ExperimentReport",
    "uniform_error_bound",
]

_SAMPLING_SLACK = 1e-3


class ScheduleError(ValueError):
    pass


def uniform_error_bound(n: int, K: float) -> float:
    return 1.0 / (6.0 * n * (n + 1)) + (2.0 * K + 1.0) / n


@dataclass
class Schedule:
    """Stage sizes for one n: smoothing radius, mesh edge, and tolerances.

    The quadrature lattice spacing is delta_n * stride / refine (only one of
    the two integers exceeds 1), chosen to put about the default node count
    per axis across the kernel ball while keeping every mesh vertex either on
    the lattice or at a rational phase the assembly can batch over.
    """

    n: int
    r_n: float
    delta_n: float
    xi_n: float
    eps_unif: float            # uniform-differentiability budget 1/(3 n K^2)
    lattice_stride: int
    lattice_refine: int
    r_binding: str             # 'margin' or 'index'
    delta_source: str          # 'modulus' when the measured table allowed it,
                               # 'empirical' when the residual check must carry it

    @property
    def lattice_spacing(self) -> float:
        return self.delta_n * self.lattice_stride / self.lattice_refine

    def validate(self, K: float, dim: int):
        if not (0.0 < self.r_n < 1.0 / (self.n + 1)):
            raise ScheduleError(f"r_n={self.r_n} outside (0, 1/(n+1))")
        cap = self.r_n / (2.0 * math.sqrt(dim) * K * (3 * self.n + 1))
        if not (0.0 < self.delta_n < cap):
            raise ScheduleError(f"delta_n={self.delta_n} outside (0, {cap})")
        if min(self.lattice_stride, self.lattice_refine) != 1:
            raise ScheduleError("one of stride/refine must be 1")


def make_schedule(n: int, s: CompactSet, norm: Norm, K: float, margin: float,
                  mhat_bbox: tuple, nodes_target: Optional[int] = None,
                  vertex_cap: float = 8e7,
                  tile_bboxes: Optional[List[tuple]] = None) -> Schedule:
    """Pick r_n and delta_n from the enlargement margin and the index n.

    r_n = min(0.9/(n+1), margin/(K/2 + 2)) keeps M at depth (K/2+2) r_n in
    the enlarged set; delta_n takes the mesh-edge cap with a 0.9 safety,
    tightened further when the measured kernel-gradient modulus already
    certifies the differentiability budget at a smaller step (it rarely
    does at desk scale; the empirical residual check then carries the bound
    and the report marks the row).
    """
    if margin <= 0:
        raise ScheduleError("enlargement margin must be positive")
    dim = s.dim
    xi_n = 0.5 / n
    r_margin = margin / (0.5 * K + 2.0)
    r_index = 0.9 / (n + 1)
    r_n = min(r_index, r_margin)
    binding = "margin" if r_margin < r_index else "index"
    delta_cap = 0.9 * r_n / (2.0 * math.sqrt(dim) * K * (3 * n + 1))
    eps_unif = 1.0 / (3.0 * n * K * K)
    import warnings as _warnings
    with _warnings.catch_warnings():
        # an unsatisfied table is the normal desk-scale outcome; the
        # empirical residual check then carries the budget
        _warnings.simplefilter("ignore")
        mod = differentiability_modulus(r_n, eps_unif, mhat_bbox, norm)
    if mod.satisfied and mod.delta >= delta_cap:
        delta_n, source = delta_cap, "modulus"
    else:
        delta_n, source = delta_cap, "empirical"
    q = nodes_target or default_nodes_per_axis(dim)
    ratio = 2.0 * r_n / (q * delta_n)   # target spacing in units of delta
    if ratio >= 1.0:
        stride, refine = max(1, int(math.floor(ratio))), 1
    else:
        stride, refine = 1, int(math.ceil(1.0 / ratio))
    boxes = tile_bboxes if tile_bboxes is not None else [mhat_bbox]
    est_vertices = float(sum(
        np.prod((np.asarray(hi) - np.asarray(lo)) / delta_n + 2.0)
        for lo, hi in boxes))
    if est_vertices > vertex_cap:
        raise ScheduleError(f"n={n} infeasible: ~{est_vertices:.2e} mesh vertices "
                            f"exceeds cap {vertex_cap:.0e}")
    sched = Schedule(n=n, r_n=r_n, delta_n=delta_n, xi_n=xi_n, eps_unif=eps_unif,
                     lattice_stride=stride, lattice_refine=refine,
                     r_binding=binding, delta_source=source)
    sched.validate(K, dim)
    return sched


class PullbackOperator:
    """f on M  ->  f(Psi(.)) - f(Psi(x0)) on the enlarged set."""

    def __init__(self, enl: Enlargement):
        self.enlargement = enl
        self.x0 = enl.parent.x0
        self._psi_x0 = np.atleast_2d(enl.retraction(self.x0[None, :]))[0]

    def apply(self, f: Callable) -> Callable:
        base = float(np.asarray(f(self._psi_x0[None, :]))[0])
        retraction = self.enlargement.retraction

        def g(X, _f=f, _base=base):
            X = np.atleast_2d(np.asarray(X, dtype=float))
            return np.asarray(_f(retraction(X)), dtype=float) - _base
        return g

    def apply_masked(self, f: Callable) -> Callable:
        """Variant returning NaN outside the enlarged set (for probing)."""
        inner = self.apply(f)
        mhat = self.enlargement.mhat

        def g(X):
            X = np.atleast_2d(np.asarray(X, dtype=float))
            out = np.full(len(X), np.nan)
            m = mhat.contains(X)
            if m.any():
                out[m] = inner(X[m])
            return out
        return g


def apply_pullback(enl: Enlargement, f: Callable, X: np.ndarray) -> np.ndarray:
    return PullbackOperator(enl).apply(f)(X)


class _CachedConv:
    """Full-mode FFT convolution with the kernel transform precomputed.

    ``__call__`` returns the full linear convolution; index i of the output
    corresponds to input index i - (kernel length - 1) offset per axis, which
    callers account for explicitly.
    """

    def __init__(self, kernel: np.ndarray, shape: tuple):
        self.kshape = kernel.shape
        self.shape = shape
        self.full = tuple(s + k - 1 for s, k in zip(shape, self.kshape))
        self.fast = tuple(sfft.next_fast_len(n, real=True) for n in self.full)
        self.kf = sfft.rfftn(kernel, self.fast, workers=-1)

    def __call__(self, a: np.ndarray) -> np.ndarray:
        af = sfft.rfftn(a, self.fast, workers=-1)
        out = sfft.irfftn(af * self.kf, self.fast, workers=-1)
        return out[tuple(slice(0, n) for n in self.full)]


class FiniteRankOperator:
    """Mesh interpolation of the smoothed pullback; rank = number of vertices.

    The quadrature lattice is x0 + H*Z^N with H = stride * delta chosen so
    the kernel ball spans about the default node count per axis.  Vertex
    coefficients then split by vertex phase modulo the stride: each phase is
    one small convolution of the source field with the kernel sampled at
    that phase offset.
    """

    def __init__(self, s: CompactSet, norm: Norm, n: int, enl: Enlargement,
                 schedule: Schedule, mesh: Mesh):
        self.set = s
        self.norm = norm
        self.n = n
        self.enlargement = enl
        self.schedule = schedule
        self.mesh = mesh
        self.pullback = PullbackOperator(enl)
        self.stride = schedule.lattice_stride
        self.refine = schedule.lattice_refine
        self.h = schedule.lattice_spacing
        self.rule = BallLatticeRule(s.dim, schedule.r_n, s.x0, spacing=self.h)
        dim = s.dim
        self._mr = int(np.ceil(schedule.r_n / self.h)) + 1
        ax = np.arange(-self._mr, self._mr + 1)
        self._moffsets = np.stack(np.meshgrid(*([ax] * dim), indexing="ij"), -1)
        phase_ax = np.arange(self.stride)
        self._phases = np.stack(np.meshgrid(*([phase_ax] * dim), indexing="ij"),
                                -1).reshape(-1, dim)
        kernel = self.rule.kernel
        self._stencils = [kernel(self._moffsets * self.h + p * schedule.delta_n)
                          for p in self._phases]
        self._tiles_state: List[Optional[dict]] = [None] * len(mesh.tiles)

    @property
    def rank(self) -> int:
        return self.mesh.n_vertices

    def _tile_state(self, ti: int) -> dict:
        """Per-tile caches: source lattice nodes inside the enlarged set, their
        retraction images (function independent), and per-phase kernel FFTs."""
        if self._tiles_state[ti] is None:
            dim = self.set.dim
            tile = self.mesh.tiles[ti]
            kmin = tile.imin
            kmax = tile.imin + np.array(tile.cube_mask.shape)
            scale = self.refine / self.stride   # source indices per vertex step
            lmin = np.floor(kmin * scale).astype(int) - self._mr - 1
            lmax = np.ceil(kmax * scale).astype(int) + self._mr + 1
            lshapes = tuple(int(b - a + 1) for a, b in zip(lmin, lmax))
            axes = [lmin[d] + np.arange(lshapes[d]) for d in range(dim)]
            grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1)
            pts = (self.set.x0 + self.h * grid).reshape(-1, dim)
            del grid
            mask = self.enlargement.mhat.contains(pts)
            mask_f = mask.reshape(lshapes).astype(float)
            convs = [_CachedConv(st, lshapes) for st in self._stencils]
            dens = [c(mask_f) for c in convs]
            in_idx = np.flatnonzero(mask)
            self._tiles_state[ti] = {
                "lmin": lmin,
                "lshapes": lshapes,
                "convs": convs,
                "dens": dens,
                "in_idx": in_idx,
                "psi_pts": self.enlargement.retraction(pts[in_idx]),
                "buffer": np.zeros(int(np.prod(lshapes))),
            }
        return self._tiles_state[ti]

    def _phase_vertex_slices(self, ti: int, phase: np.ndarray):
        """Index map from full-convolution output to the tile's vertex grid.

        A vertex k with k = stride*q' + phase sits at source index
        q = q'*refine fractionally; its numerator is the convolution output
        at q, which lives at array index q - lmin + mr.  Consecutive phase
        vertices are `stride` apart in k and `refine` apart in q.
        """
        st = self._tiles_state[ti]
        tile = self.mesh.tiles[ti]
        a, b = self.stride, self.refine
        kmin = tile.imin
        nvert = np.array(tile.cube_mask.shape) + 1
        out_sl = []
        vert_sl = []
        for d in range(self.set.dim):
            k0 = kmin[d] + int((phase[d] - kmin[d]) % a)
            k_last = kmin[d] + nvert[d] - 1
            count = (k_last - k0) // a + 1 if k0 <= k_last else 0
            q0 = (k0 - phase[d]) // a * b
            j0 = int(q0 - st["lmin"][d] + self._mr)
            out_sl.append(slice(j0, j0 + count * b, b))
            vert_sl.append(slice(k0 - kmin[d], k0 - kmin[d] + count * a, a))
        return tuple(out_sl), tuple(vert_sl)

    def coefficient_table(self, f: Callable) -> VertexTable:
        """The finite-rank representation: smoothed pullback values at vertices."""
        base_f = float(np.asarray(f(self.pullback._psi_x0[None, :]))[0])
        table = VertexTable(self.mesh)
        for ti in range(len(self.mesh.tiles)):
            st = self._tile_state(ti)
            buf = st["buffer"]
            buf[st["in_idx"]] = np.asarray(f(st["psi_pts"]), dtype=float) - base_f
            field = buf.reshape(st["lshapes"])
            vm = self.mesh._vertex_masks[ti]
            arr = table.arrays[ti]
            for stencil, conv, den, phase in zip(self._stencils, st["convs"],
                                                 st["dens"], self._phases):
                num = conv(field)
                out_sl, vert_sl = self._phase_vertex_slices(ti, phase)
                den_v = den[out_sl]
                mass = float(stencil.sum())
                vm_p = vm[vert_sl]
                if np.any(den_v[vm_p] < mass * (1.0 - 1e-9)):
                    raise MeshError("a mesh vertex sees quadrature nodes outside "
                                    "the enlarged set: containment bug")
                with np.errstate(invalid="ignore", divide="ignore"):
                    coeff = num[out_sl] / den_v
                coeff[~vm_p] = np.nan
                arr[vert_sl] = coeff
        base = table.value(np.zeros((1, self.set.dim), dtype=int))[0]
        if not np.isfinite(base):
            raise MeshError("x0 is not a mesh vertex; lattice anchoring broken")
        table.shift(base)
        return table

    def apply(self, f: Callable) -> MeshFunction:
        return MeshFunction(self.mesh, self.coefficient_table(f))

    def coefficient(self, f: Callable, vertex_coord) -> float:
        """Single vertex functional f -> smoothed(pullback f)(v), recentered."""
        v = self.set.x0 + self.schedule.delta_n * np.asarray(vertex_coord, dtype=float)
        return float(self.smoothed_pullback(f)(v[None, :])[0])

    def smoothed_pullback(self, f: Callable) -> SmoothedFunction:
        g = self.pullback.apply(f)
        return SmoothedFunction(g, self.schedule.r_n, self.set.x0, self.set.dim,
                                spacing=self.h)


def assemble_operator(n: int, s: CompactSet, norm: Norm,
                      enlargement: Optional[Enlargement] = None,
                      strategy: str = "auto", seed: int = 0,
                      nodes_target: Optional[int] = None,
                      residual_probes: int = 120) -> FiniteRankOperator:
    """Build the n-th operator: enlarge, schedule, mesh, verify the residual.

    When the schedule's delta comes from the empirical route, the
    differentiability residual of an actual smoothed pullback is measured at
    step K*delta on probe points and delta is halved (at most three times)
    until the budget eps = 1/(3 n K^2) holds.
    """
    K = norm.K
    xi_n = 0.5 / n
    enl = enlargement if enlargement is not None else enlarge(s, xi_n, norm, strategy, seed=seed)
    sched = make_schedule(n, s, norm, K, enl.margin, enl.mhat.bbox, nodes_target,
                          tile_bboxes=enl.tile_bboxes())
    rng = np.random.default_rng(seed)
    for attempt in range(4):
        mesh = build_mesh(erode(enl.mhat, 2.0 * sched.r_n), sched.delta_n, s.x0,
                          tile_bboxes=enl.tile_bboxes())
        op = FiniteRankOperator(s, norm, n, enl, sched, mesh)
        if sched.delta_source != "empirical":
            return op
        ratio = _measure_residual(op, rng, residual_probes)
        if ratio <= sched.eps_unif * (1.0 + _SAMPLING_SLACK):
            op.schedule.delta_source = "empirical"
            op.residual_ratio = ratio
            return op
        sched.delta_n *= 0.5
        q = nodes_target or default_nodes_per_axis(s.dim)
        ratio_h = 2.0 * sched.r_n / (q * sched.delta_n)
        if ratio_h >= 1.0:
            sched.lattice_stride, sched.lattice_refine = int(math.floor(ratio_h)), 1
        else:
            sched.lattice_stride, sched.lattice_refine = 1, int(math.ceil(1.0 / ratio_h))
    raise ScheduleError(f"n={n}: differentiability residual fails at every tried delta")


def _measure_residual(op: FiniteRankOperator, rng: np.random.Generator,
                      n_probes: int) -> float:
    """Residual of the smoothed pullback at step K*delta, per unit Lipschitz."""
    s, norm = op.set, op.norm
    K = norm.K
    suite = build_test_suite(s, norm, size=3, seed=int(rng.integers(1 << 30)))
    pts = s.sample_interior(n_probes, rng)
    pts = pts[erode(op.enlargement.mhat, 1.5 * op.schedule.r_n).contains(pts)]
    if len(pts) < 8:
        pts = np.repeat(s.x0[None, :], 8, axis=0)
    dirs = rng.normal(size=pts.shape) if s.dim > 1 else rng.choice([-1.0, 1.0], (len(pts), 1))
    dirs /= norm(dirs)[:, None]
    H = dirs * (K * op.schedule.delta_n)
    worst = 0.0
    for sf_spec in suite:
        sf = op.smoothed_pullback(sf_spec.fn)
        lip = max(sf_spec.lip, 1e-9)
        worst = max(worst, residual_check(sf, pts, H, norm) / lip)
    return worst


# -- test suite ----------------------------------------------------------------


@dataclass
class SuiteFunction:
    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    lip: float


def build_test_suite(s: CompactSet, norm: Norm, size: int = 20, seed: int = 0) -> List[SuiteFunction]:
    """Unit-ball Lipschitz functions vanishing at x0.

    Shifted distance functions of the working norm, max/min combinations of
    up to five affine functions normalized by the dual norm of their slopes,
    and coordinate functionals normalized by the dual norm of the axis.
    """
    rng = np.random.default_rng(seed)
    lo, hi = s.bbox
    span = hi - lo
    x0 = s.x0
    out: List[SuiteFunction] = []

    def add_dist(i):
        p = rng.uniform(lo - 0.25 * span, hi + 0.25 * span)
        base = float(norm((x0 - p)[None, :])[0])
        out.append(SuiteFunction(
            f"dist{i}", lambda X, p=p, b=base: norm(np.atleast_2d(X) - p) - b, 1.0))

    def add_affine_lattice(i, use_max: bool):
        m = int(rng.integers(2, 6))
        A = rng.normal(size=(m, s.dim))
        A /= max(float(norm.dual(A).max()), 1e-12)
        b = rng.uniform(-1.0, 1.0, size=m) * float(span.max())
        red = np.max if use_max else np.min
        base = float(red(A @ x0 + b))
        tag = "max" if use_max else "min"
        out.append(SuiteFunction(
            f"{tag}aff{i}",
            lambda X, A=A, b=b, base=base, red=red:
                red(np.atleast_2d(X) @ A.T + b, axis=1) - base,
            float(norm.dual(A).max())))

    n_coord = s.dim
    n_max = max(4, (size - n_coord) // 3)
    n_min = max(3, (size - n_coord) // 4)
    n_dist = size - n_coord - n_max - n_min
    for i in range(n_dist):
        add_dist(i)
    for i in range(n_max):
        add_affine_lattice(i, True)
    for i in range(n_min):
        add_affine_lattice(i, False)
    for j in range(n_coord):
        e = np.zeros(s.dim)
        e[j] = 1.0
        scale = float(norm.dual(e[None, :])[0])
        out.append(SuiteFunction(
            f"coord{j}",
            lambda X, j=j, c=x0[j], sc=scale: (np.atleast_2d(X)[:, j] - c) / sc,
            1.0))
    return out[:size]


# -- verification ---------------------------------------------------------------


def _sample_points(s: CompactSet, n_points: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    pts = [s.boundary_samples, s.interior_samples, s.x0[None, :]]
    have = sum(len(p) for p in pts)
    if have < n_points:
        pts.append(s.sample_interior(n_points - have, rng))
    X = np.concatenate(pts)
    if len(X) > n_points:
        X = X[rng.choice(len(X), n_points, replace=False)]
    return X


def evaluate_suite(op: FiniteRankOperator, suite: Sequence[SuiteFunction],
                   X: np.ndarray) -> dict:
    """Operator images of every suite function at the sample points.

    One coefficient assembly per function; the tables are discarded after
    evaluation so memory stays at one table regardless of suite size.
    """
    return {sf.name: op.apply(sf.fn)(X) for sf in suite}


@dataclass
class NormReport:
    n: int
    measured: float
    bound: float
    slack: float
    quad_slack: float
    passed: bool
    worst: tuple                  # (function name, x, y)
    far_measured: float           # pairs with |x-y| >= r_n
    near_measured: float          # pairs with |x-y| < r_n

    def to_dict(self):
        return {"n": self.n, "measured": self.measured, "bound": self.bound,
                "slack": self.slack, "quad_slack": self.quad_slack,
                "passed": self.passed,
                "worst": {"f": self.worst[0], "x": list(self.worst[1]),
                          "y": list(self.worst[2])},
                "far_regime": self.far_measured, "near_regime": self.near_measured}


def verify_norm(op: FiniteRankOperator, suite: Sequence[SuiteFunction],
                n_points: int = 2500, n_pairs: int = 12_000, min_sep: float = 1e-4,
                seed: int = 0, slack: float = _SAMPLING_SLACK,
                quad_slack: float = DEFAULT_QUAD_SLACK,
                X: Optional[np.ndarray] = None,
                values: Optional[dict] = None) -> NormReport:
    """Sampled operator norm: max over suite and point pairs of the ratio
    |Tf(x) - Tf(y)| / |x - y|, split into the regimes |x-y| >= r_n and < r_n.

    ``X``/``values`` allow reusing evaluations shared with verify_uniform.
    """
    s, norm = op.set, op.norm
    if X is None:
        X = _sample_points(s, n_points, seed)
    if values is None:
        values = evaluate_suite(op, suite, X)
    rng = np.random.default_rng(seed + 1)
    i = rng.integers(0, len(X), int(n_pairs * 1.5))
    j = rng.integers(0, len(X), int(n_pairs * 1.5))
    d = norm(X[i] - X[j])
    keep = d >= min_sep
    i, j, d = i[keep][:n_pairs], j[keep][:n_pairs], d[keep][:n_pairs]
    far = d >= op.schedule.r_n
    bound = 1.0 + 1.0 / op.n
    measured, far_m, near_m = 0.0, 0.0, 0.0
    worst = (suite[0].name, X[0], X[0])
    for sf in suite:
        vals = values[sf.name]
        ratio = np.abs(vals[i] - vals[j]) / d
        m = float(ratio.max())
        if m > measured:
            k = int(np.argmax(ratio))
            worst = (sf.name, X[i[k]], X[j[k]])
            measured = m
        if far.any():
            far_m = max(far_m, float(ratio[far].max()))
        if (~far).any():
            near_m = max(near_m, float(ratio[~far].max()))
    passed = measured <= bound * (1.0 + slack) + quad_slack
    return NormReport(op.n, measured, bound, slack, quad_slack, passed, worst,
                      far_m, near_m)


@dataclass
class UniformReport:
    n: int
    measured: float
    bound: float
    quad_slack: float
    passed: bool
    terms: dict                   # measured/bound for the three-stage split

    def to_dict(self):
        return {"n": self.n, "measured": self.measured, "bound": self.bound,
                "quad_slack": self.quad_slack, "passed": self.passed,
                "terms": self.terms}


def verify_uniform(op: FiniteRankOperator, suite: Sequence[SuiteFunction],
                   n_points: int = 2500, n_decomp: int = 200, seed: int = 0,
                   quad_slack: float = DEFAULT_QUAD_SLACK,
                   X: Optional[np.ndarray] = None,
                   values: Optional[dict] = None) -> UniformReport:
    """Worst |Tf(x) - f(x)| over the suite, against the convergence bound,
    plus per-stage measurements (interpolation gap, smoothing gap, pullback
    gap) each against its own analytic bound."""
    s, norm = op.set, op.norm
    K = norm.K
    n = op.n
    if X is None:
        X = _sample_points(s, n_points, seed)
    if values is None:
        values = evaluate_suite(op, suite, X)
    bound = uniform_error_bound(n, K)
    xi = op.schedule.xi_n
    measured = 0.0
    for sf in suite:
        fv = np.asarray(sf.fn(X), dtype=float)
        measured = max(measured, float(np.abs(values[sf.name] - fv).max()))
    rng = np.random.default_rng(seed + 2)
    sub_idx = rng.choice(len(X), min(n_decomp, len(X)), replace=False)
    sub = X[sub_idx]
    t_interp = t_smooth = t_pull = 0.0
    for sf in suite[:6]:
        g = op.pullback.apply(sf.fn)
        smoothed = op.smoothed_pullback(sf.fn)
        tf = values[sf.name][sub_idx]
        sg = smoothed(sub)
        gv = g(sub)
        fv = np.asarray(sf.fn(sub), dtype=float)
        t_interp = max(t_interp, float(np.abs(tf - sg).max()))
        t_smooth = max(t_smooth, float(np.abs(sg - gv).max()))
        t_pull = max(t_pull, float(np.abs(gv - fv).max()))
    terms = {
        "interp_measured": t_interp,
        "interp_bound": math.sqrt(s.dim) * K * (1.0 + xi) * op.schedule.delta_n,
        "smooth_measured": t_smooth,
        "smooth_bound": 2.0 * K * (1.0 + xi) * op.schedule.r_n,
        "pullback_measured": t_pull,
        "pullback_bound": 2.0 * xi,
    }
    passed = measured <= bound * (1.0 + _SAMPLING_SLACK) + quad_slack
    for key in ("interp", "smooth", "pullback"):
        passed = passed and terms[f"{key}_measured"] <= \
            terms[f"{key}_bound"] * (1.0 + _SAMPLING_SLACK) + quad_slack
    return UniformReport(n, measured, bound, quad_slack, passed, terms)


@dataclass
class PredualAction:
    """Point evaluation at x as a finite combination of vertex functionals."""

    x: np.ndarray
    weights: List[tuple]          # (vertex lattice coords, hat weight)
    gap: Optional[float] = None   # sup_f |Tf(x) - f(x)|: lower bound on the
                                  # predual distance to the point evaluation

    def to_dict(self):
        return {"x": self.x.tolist(),
                "weights": [{"vertex": list(map(int, c)), "weight": float(w)}
                            for c, w in self.weights],
                "gap": self.gap}


def predual_action(op: FiniteRankOperator, x, suite: Optional[Sequence[SuiteFunction]] = None) -> PredualAction:
    x = np.asarray(x, dtype=float)
    _, anchors = op.mesh.locate(x[None, :])
    a = anchors[0]
    loc = (x - op.mesh.x0) / op.mesh.delta - a
    w = cube_weights(np.clip(loc, 0.0, 1.0))
    gam = _gammas(op.set.dim)
    weights = [(tuple(a + g), float(wt)) for g, wt in zip(gam, w) if wt > 1e-15]
    gap = None
    if suite is not None:
        gap = 0.0
        for sf in suite:
            tf = float(op.apply(sf.fn)(x[None, :])[0])
            gap = max(gap, abs(tf - float(np.asarray(sf.fn(x[None, :]))[0])))
    return PredualAction(x, weights, gap)


# -- experiment driver -----------------------------------------------------------


_BUILTIN_SETS = {}


def _builtin_sets():
    if not _BUILTIN_SETS:
        from .geometry import sets as gs
        _BUILTIN_SETS.update({
            "interval": lambda: gs.interval(0.0, 1.0),
            "square": lambda: gs.box([0.0, 0.0], [1.0, 1.0]),
            "disk": lambda: gs.ball([0.0, 0.0], 1.0),
            "lshape": gs.lshape,
            "two_squares": gs.two_squares,
            "annulus": gs.annulus,
        })
    return _BUILTIN_SETS


_CUSTOM_NORMS = {
    "linf": lambda dim: Norm.p_norm(np.inf, dim),
}


def _norm_from_config(cfg: dict, dim: int) -> Norm:
    if "p" in cfg:
        return Norm.p_norm(float(cfg["p"]), dim)
    cid = cfg.get("custom-id") or cfg.get("custom")
    if cid in _CUSTOM_NORMS:
        return _CUSTOM_NORMS[cid](dim)
    raise ValueError(f"unknown norm config {cfg}")


@dataclass
class ExperimentReport:
    rows: List[dict]
    ok: bool
    paths: dict = field(default_factory=dict)


_CSV_COLUMNS = ["n", "r_n", "delta_n", "rank", "norm_measured", "norm_bound",
                "err_measured", "err_bound", "pass"]


def run_experiment(config) -> ExperimentReport:
    """Run enlarge -> smooth -> mesh -> operator -> verify over a range of n.

    ``config`` is a dict or a path to a JSON file with fields: set_file or
    set_name or set (inline definition), norm ({"p": p} or {"custom-id": id}),
    n_min, n_max, suite_seed, resolutions (optional overrides), slack,
    out_dir, samples (bool).  Writes report.csv and report.json (and
    samples.csv when requested); ``ok`` is False iff any row fails.
    """
    if not isinstance(config, dict):
        with open(config) as fh:
            config = json.load(fh)
    res = config.get("resolutions", {})
    if "set_file" in config:
        s = load_set(config["set_file"])
    elif "set" in config:
        s = load_set(config["set"])
    elif "set_name" in config:
        s = _builtin_sets()[config["set_name"]]()
    else:
        raise ValueError("config needs set_file, set, or set_name")
    if "h_geo" in res:
        s.h_geo = float(res["h_geo"])
    norm = _norm_from_config(config.get("norm", {"p": 2}), s.dim)
    K = norm.K
    seed = int(config.get("suite_seed", 0))
    slack = float(config.get("slack", _SAMPLING_SLACK))
    quad_slack = float(config.get("quad_slack", DEFAULT_QUAD_SLACK))
    suite = build_test_suite(s, norm, size=int(config.get("suite_size", 20)), seed=seed)
    n_min = int(config.get("n_min", 1))
    n_max = int(config.get("n_max", 0))
    out_dir = config.get("out_dir", ".")
    os.makedirs(out_dir, exist_ok=True)
    rows: List[dict] = []
    full: List[dict] = []
    samples_rows: List[list] = []
    strategy = config.get("strategy", "auto")
    for n in range(n_min, n_max + 1):
        op = assemble_operator(n, s, norm, strategy=strategy, seed=seed,
                               nodes_target=res.get("quad_nodes"))
        X = _sample_points(s, int(config.get("n_points", 2500)), seed)
        values = evaluate_suite(op, suite, X)
        nr = verify_norm(op, suite, seed=seed, slack=slack, quad_slack=quad_slack,
                         n_pairs=int(config.get("n_pairs", 12_000)), X=X, values=values)
        ur = verify_uniform(op, suite, seed=seed, quad_slack=quad_slack, X=X,
                            values=values)
        row = {
            "n": n, "r_n": op.schedule.r_n, "delta_n": op.schedule.delta_n,
            "rank": op.rank, "norm_measured": nr.measured, "norm_bound": nr.bound,
            "err_measured": ur.measured, "err_bound": ur.bound,
            "pass": bool(nr.passed and ur.passed and op.enlargement.certificates_ok()),
        }
        rows.append(row)
        full.append({
            "row": row,
            "schedule": {"xi_n": op.schedule.xi_n, "eps_unif": op.schedule.eps_unif,
                         "r_binding": op.schedule.r_binding,
                         "delta_source": op.schedule.delta_source,
                         "lattice_spacing": op.schedule.lattice_spacing},
            "enlargement": op.enlargement.to_dict(),
            "norm_report": nr.to_dict(),
            "uniform_report": ur.to_dict(),
        })
        if config.get("samples"):
            rng = np.random.default_rng(seed + 9)
            pts = _sample_points(s, 200, seed + 9)
            for sf in suite[:3]:
                tf = op.apply(sf.fn)(pts)
                fv = np.asarray(sf.fn(pts), dtype=float)
                for p, a, b in zip(pts, tf, fv):
                    samples_rows.append([n, *p.tolist(), sf.name, float(b),
                                         float(a), float(abs(a - b))])
    ok = all(r["pass"] for r in rows)
    paths = {"csv": os.path.join(out_dir, "report.csv"),
             "json": os.path.join(out_dir, "report.json")}
    with open(paths["csv"], "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=_CSV_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in _CSV_COLUMNS})
    with open(paths["json"], "w") as fh:
        json.dump({"config": {k: v for k, v in config.items() if k != "set"},
                   "K": K, "rows": full, "ok": ok}, fh, indent=1)
    if samples_rows:
        paths["samples"] = os.path.join(out_dir, "samples.csv")
        with open(paths["samples"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n"] + [f"x{k}" for k in range(s.dim)] + ["f", "f_value",
                                                                  "Tf_value", "abs_err"])
            w.writerows(samples_rows)
    return ExperimentReport(rows=rows, ok=ok, paths=paths)
