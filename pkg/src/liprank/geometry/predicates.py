"""Boundary-regularity predicates verified on grids at declared resolution.

Two finite checks drive the enlargement machinery:

* downwards closure of M relative to an open Euclidean ball U(x, 2r) and a
  unit direction u -- every tested member y of U with y - t*u still in U must
  land strictly inside M (positive clearance at the test resolution);

* a star-kernel test -- segments from a candidate kernel point (and a ball of
  perturbations around it) to every boundary sample must stay inside M.

Certificates record the resolution they were checked at and a witness on
failure, and serialize to plain JSON records.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .sets import CompactSet

__all__ = [
    "DownwardsCertificate",
    "check_downwards_closed",
    "StarKernelReport",
    "star_kernel_contains",
]


@dataclass
class DownwardsCertificate:
    center: np.ndarray
    radius: float              # ball radius is 2*`radius` per the cover convention
    direction: np.ndarray      # unit l2 vector u; the set is pushed along +u
    resolution: float
    passed: bool
    witness: Optional[tuple] = None   # (y, t) with y - t*u escaping the interior
    n_tested: int = 0
    source: str = "supplied"

    def to_dict(self) -> dict:
        return {
            "center": self.center.tolist(),
            "radius": self.radius,
            "direction": self.direction.tolist(),
            "resolution": self.resolution,
            "verdict": "pass" if self.passed else "fail",
            "witness": None if self.witness is None else
                       {"y": self.witness[0].tolist(), "t": float(self.witness[1])},
            "n_tested": self.n_tested,
            "source": self.source,
        }


def _ball_grid(center: np.ndarray, radius: float, resolution: float) -> np.ndarray:
    dim = len(center)
    ax = np.arange(-radius, radius + 0.5 * resolution, resolution)
    mesh = np.stack(np.meshgrid(*([ax] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    mesh = mesh[(mesh * mesh).sum(-1) < radius * radius]
    return center + mesh


def check_downwards_closed(s: CompactSet, x, r: float, u, resolution: float,
                           source: str = "supplied") -> DownwardsCertificate:
    """Grid-test downwards closure of M relative to U(x, 2r) and u.

    For every grid point y in U(x,2r) that belongs to M and every step t > 0
    on the grid with y - t*u still in U(x,2r), the point y - t*u must have
    positive clearance.  Fails fast with the first witness found.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    nu = float(np.sqrt((u * u).sum()))
    if abs(nu - 1.0) > 1e-12:
        raise ValueError("direction u must be an l2 unit vector (within 1e-12)")
    if resolution > s.h_geo + 1e-15:
        raise ValueError(f"certificate resolution {resolution} coarser than "
                         f"h_geo={s.h_geo}; the check would be meaningless")
    R = 2.0 * r
    ys = _ball_grid(x, R, resolution)
    ys = ys[s.contains(ys)]
    ts = np.arange(resolution, 2.0 * R + resolution, resolution)
    n_tested = 0
    for t in ts:
        pts = ys - t * u
        in_ball = ((pts - x) ** 2).sum(-1) < R * R
        if not in_ball.any():
            continue
        probe = pts[in_ball]
        n_tested += len(probe)
        clr = s.clearance(probe)
        bad = clr <= 0.0
        if bad.any():
            i = int(np.argmax(bad))
            return DownwardsCertificate(x, r, u, resolution, False,
                                        witness=(ys[in_ball][i], float(t)),
                                        n_tested=n_tested, source=source)
    return DownwardsCertificate(x, r, u, resolution, True, n_tested=n_tested,
                                source=source)


@dataclass
class StarKernelReport:
    center: np.ndarray
    passed: bool
    margin: float               # largest verified ball radius inside the kernel
    resolution: float
    witness: Optional[tuple] = None   # (w_perturbed, y) with a segment escaping M
    radii_tested: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "center": self.center.tolist(),
            "verdict": "pass" if self.passed else "fail",
            "margin": self.margin,
            "resolution": self.resolution,
            "witness": None if self.witness is None else
                       {"w": self.witness[0].tolist(), "y": self.witness[1].tolist()},
        }


def _segment_hits(s: CompactSet, a: np.ndarray, b: np.ndarray, resolution: float):
    """First (i, j) with a sampled point of segment [a_i, b_i] outside M, else None."""
    seg_len = np.sqrt(((b - a) ** 2).sum(-1)).max()
    m = max(2, int(np.ceil(seg_len / resolution)) + 1)
    lam = np.linspace(0.0, 1.0, m)
    pts = a[:, None, :] + lam[None, :, None] * (b - a)[:, None, :]
    ok = s.contains(pts)
    bad = ~ok
    if bad.any():
        i, j = np.unravel_index(int(np.argmax(bad)), bad.shape)
        return int(i), int(j)
    return None


def star_kernel_contains(s: CompactSet, w, resolution: Optional[float] = None) -> StarKernelReport:
    """Test whether segments [w', y] stay in M for all boundary samples y.

    Perturbations w' sweep balls of growing radius around w; the report's
    margin is the largest tested radius for which every segment to every
    boundary sample is inside M at the given resolution.
    """
    w = np.asarray(w, dtype=float)
    res = resolution if resolution is not None else 0.5 * s.h_geo
    if not bool(s.contains(w[None])[0]):
        raise ValueError("kernel candidate w must belong to M")
    bnd = s.boundary_samples
    depth = float(s.clearance(w[None])[0])
    radii = [f * depth for f in (0.9, 0.75, 0.5, 0.25, 0.1, 0.0)]
    dim = s.dim
    if dim == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        ang = np.linspace(0, 2 * np.pi, 12, endpoint=False)
        dirs = np.stack([np.cos(ang), np.sin(ang)], -1)
        if dim > 2:
            rng = np.random.default_rng(3)
            dirs = rng.normal(size=(24, dim))
            dirs /= np.sqrt((dirs * dirs).sum(-1, keepdims=True))
    witness = None
    tested = []
    for rad in radii:
        centers = w[None, :] if rad == 0.0 else np.concatenate([w[None, :], w + rad * dirs])
        a = np.repeat(centers, len(bnd), axis=0)
        b = np.tile(bnd, (len(centers), 1))
        hit = _segment_hits(s, a, b, res)
        tested.append(rad)
        if hit is None:
            return StarKernelReport(w, True, rad, res, None, tested)
        if witness is None:
            witness = (a[hit[0]], b[hit[0]])
    return StarKernelReport(w, False, 0.0, res, witness, tested)
