"""Enlarging a compact set by a (1+xi)-Lipschitz retraction.

Given a compact M and xi > 0, produce a superset Mhat containing M in its
interior together with a retraction Psi: Mhat -> M with Lip(Psi) <= 1 + xi
and displacement |x - Psi(x)| <= xi.  Two strategies are implemented:

* convex fast path -- when a star-kernel test passes with margin, dilate
  about the kernel point w: Mhat = w + (1+t)(M - w) with t = xi / sup|x - w|,
  and Psi the exact affine contraction (Lip = 1/(1+t) <= 1);

* general path -- cover the boundary with balls carrying downwards-closure
  certificates, push the set outward by shear maps glued with a Lipschitz
  partition of unity, and retract by inverting the glued near-identity map
  via fixed-point iteration.

Disconnected sets are enlarged per component at the reduced tolerance
xi' = min(xi*alpha/2, alpha/4) where alpha < 1 lower-bounds the separation,
which keeps the enlarged components disjoint and the piecewise retraction
(1+xi)-Lipschitz across components.

Every enlargement carries three sampled certificates (Lipschitz bound,
displacement bound, interior margin) that are measured, not inherited.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .geometry.norms import Norm, estimate_lipschitz
from .geometry.predicates import DownwardsCertificate, check_downwards_closed, star_kernel_contains
from .geometry.sets import CompactSet, connected_components, scale_about, union

__all__ = [
    "EnlargementError",
    "ShearMap",
    "shear_estimates",
    "choose_theta",
    "BallPiece",
    "BallCover",
    "build_ball_cover",
    "radial_candidates",
    "PartitionOfUnity",
    "build_partition_of_unity",
    "GluedMap",
    "glue",
    "invert_glued",
    "Enlargement",
    "enlarge",
]

_SWEEP_PAIRS = 10_000
_REL_TOL = 1e-3


class EnlargementError(RuntimeError):
    """Raised when a strategy's hypotheses fail at the working resolution."""

    def __init__(self, message: str, stage: str = "", witness=None):
        super().__init__(message)
        self.stage = stage
        self.witness = witness


@dataclass(frozen=True)
class ShearMap:
    """Near-identity push y -> y + (theta-1)*((y-x).u + r)*u along u."""

    theta: float
    x: np.ndarray
    r: float
    u: np.ndarray

    def __call__(self, Y: np.ndarray) -> np.ndarray:
        Y = np.asarray(Y, dtype=float)
        s = (self.theta - 1.0) * ((Y - self.x) @ self.u + self.r)
        return Y + s[..., None] * self.u

    def displacement(self, Y: np.ndarray) -> np.ndarray:
        Y = np.asarray(Y, dtype=float)
        s = (self.theta - 1.0) * ((Y - self.x) @ self.u + self.r)
        return s[..., None] * self.u


def shear_estimates(shear: ShearMap, E: np.ndarray, norm: Norm,
                    pair_count: int = _SWEEP_PAIRS, seed: int = 0) -> tuple:
    """Sampled Lip(T - I) and sup |T - I| on E, checked against the analytic
    bounds K^2 (theta-1) and K (K P + r)(theta-1) with P = sup |y - x| on E.

    A violation beyond sampling tolerance indicates a broken norm model and
    raises rather than returning.
    """
    E = np.atleast_2d(np.asarray(E, dtype=float))
    K = norm.K
    disp = shear.displacement(E)
    sup_mi = float(norm(disp).max())
    P = float(norm(E - shear.x).max())
    rng = np.random.default_rng(seed)
    i = rng.integers(0, len(E), pair_count)
    j = rng.integers(0, len(E), pair_count)
    keep = i != j
    i, j = i[keep], j[keep]
    d = norm(E[i] - E[j])
    keep = d > 1e-12
    i, j, d = i[keep], j[keep], d[keep]
    lip_mi = float((norm(disp[i] - disp[j]) / d).max()) if len(d) else 0.0
    lip_bound = K * K * (shear.theta - 1.0)
    sup_bound = K * (K * P + shear.r) * (shear.theta - 1.0)
    if lip_mi > lip_bound * (1.0 + _REL_TOL) + 1e-12:
        raise EnlargementError(
            f"sampled Lip(T-I)={lip_mi} exceeds analytic bound {lip_bound}; "
            "norm model or K is inconsistent", stage="shear")
    if sup_mi > sup_bound * (1.0 + _REL_TOL) + 1e-12:
        raise EnlargementError(
            f"sampled sup|T-I|={sup_mi} exceeds analytic bound {sup_bound}",
            stage="shear")
    return lip_mi, sup_mi


def choose_theta(K: float, k: int, H: float, eps: float, diam_u: float, s: float) -> float:
    """Shear strength: the smallest of the three admissible caps, always > 1."""
    if min(K, H, eps, diam_u, s) <= 0 or k < 1:
        raise ValueError("all inputs must be positive (k >= 1)")
    t1 = 1.0 + 0.5 * eps / (K * K * (1.0 + (k + 1) * H))
    t2 = 1.0 + eps / (K * (K * diam_u + 1.0))
    t3 = 1.0 + s
    return min(t1, t2, t3)


@dataclass
class BallPiece:
    center: np.ndarray
    radius: float
    direction: np.ndarray
    certificate: DownwardsCertificate

    def to_dict(self) -> dict:
        return self.certificate.to_dict()


@dataclass
class BallCover:
    """Boundary cover by certified balls plus the implicit interior piece."""

    pieces: List[BallPiece]
    resolution: float

    @property
    def k(self) -> int:
        return len(self.pieces)

    def covers(self, boundary_samples: np.ndarray) -> bool:
        pts = np.atleast_2d(boundary_samples)
        ok = np.zeros(len(pts), dtype=bool)
        for p in self.pieces:
            ok |= ((pts - p.center) ** 2).sum(-1) < p.radius ** 2
        return bool(ok.all())

    def min_radius(self) -> float:
        return min(p.radius for p in self.pieces)

    def shrink_ratio(self) -> float:
        """s = min over pairs of r_j / (2 r_i)."""
        radii = np.array([p.radius for p in self.pieces])
        return float(radii.min() / (2.0 * radii.max()))


def radial_candidates(s: CompactSet, ladder: Sequence[float] = (0.3, 0.2, 0.12, 0.08, 0.05)):
    """Default candidate family: push directions radially outward from x0.

    This is the canonical family for star-like boundaries; sets whose
    boundary is not downwards closed along outward rays (an annulus at its
    inner circle) are rejected with a witness rather than silently covered.
    Candidates are always user-replaceable per set family.
    """
    def gen(p: np.ndarray):
        v = p - s.x0
        nv = float(np.sqrt((v * v).sum()))
        if nv < 1e-12:
            return
        u = v / nv
        for r in ladder:
            if 0.0 < r < 1.0:
                yield float(r), u
    return gen


def build_ball_cover(s: CompactSet, candidates: Optional[Callable] = None,
                     resolution: Optional[float] = None, cover_shrink: float = 0.95,
                     cap: int = 10_000) -> BallCover:
    """Greedy certified cover of the boundary cloud.

    Each selected ball (x_i, r_i, u_i) carries a passing downwards-closure
    certificate at radius 2 r_i; a boundary sample with no passing candidate
    aborts with the failing point and the last witness.
    """
    res = resolution if resolution is not None else 0.9 * s.h_geo
    gen = candidates if candidates is not None else radial_candidates(s)
    bnd = s.boundary_samples
    if s.dim == 2:
        # walk the boundary in angular order so consecutive balls overlap less
        rel = bnd - bnd.mean(axis=0)
        bnd = bnd[np.argsort(np.arctan2(rel[:, 1], rel[:, 0]))]
    uncovered = np.ones(len(bnd), dtype=bool)
    pieces: List[BallPiece] = []
    while uncovered.any():
        idx = int(np.argmax(uncovered))
        p = bnd[idx]
        r_top = next(iter(gen(p)), (0.0, None))[0]
        # center the ball ahead of p (p near its trailing edge) so each step
        # advances by nearly a full radius instead of half of one
        d2p = np.sqrt(((bnd - p) ** 2).sum(-1))
        ahead = np.flatnonzero(uncovered & (d2p <= 0.85 * r_top))
        centers = list(ahead[np.argsort(-d2p[ahead])][:3]) + [idx]
        chosen = None
        last_witness = None
        for ci in centers:
            q = bnd[ci]
            for r, u in gen(q):
                if d2p[ci] > 0.9 * r:
                    continue   # ball at q would not cover p
                cert = check_downwards_closed(s, q, r, u, res, source="searched")
                if cert.passed:
                    chosen = BallPiece(q, float(r), np.asarray(u, dtype=float), cert)
                    break
                last_witness = cert.witness
            if chosen is not None:
                break
        if chosen is None:
            raise EnlargementError(
                f"{s.name}: not locally downwards closed at {p} for any candidate "
                f"direction at resolution {res}", stage="cover",
                witness=(p, last_witness))
        pieces.append(chosen)
        uncovered &= ((bnd - chosen.center) ** 2).sum(-1) >= (cover_shrink * chosen.radius) ** 2
        if len(pieces) > cap:
            raise EnlargementError(f"cover size exceeded cap {cap}", stage="cover")
    cover = BallCover(pieces, res)
    if not cover.covers(bnd):
        raise EnlargementError("greedy cover failed to cover the boundary cloud",
                               stage="cover")
    return cover


class PartitionOfUnity:
    """Normalized complement distances for the cover balls and the interior.

    g_i(x) = dist to the complement of U(x_i, r_i) (closed form) for the k
    cover balls and g_{k+1}(x) = clearance of the set; f_i = g_i / sum g_j.
    The common Lipschitz bound H is measured on samples, never assumed.
    """

    def __init__(self, cover: BallCover, s: CompactSet):
        self.cover = cover
        self.set = s
        self.H: Optional[float] = None

    @property
    def n_pieces(self) -> int:
        return self.cover.k + 1

    def raw_weights(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        cols = [np.maximum(0.0, p.radius - np.sqrt(((X - p.center) ** 2).sum(-1)))
                for p in self.cover.pieces]
        cols.append(self.set.clearance(X))
        return np.stack(cols, axis=-1)

    def weights(self, X: np.ndarray) -> np.ndarray:
        g = self.raw_weights(X)
        total = g.sum(axis=-1)
        if np.any(total <= 0.0):
            bad = np.atleast_2d(X)[int(np.argmax(total <= 0.0))]
            raise EnlargementError(f"partition undefined at {bad}: point not covered",
                                   stage="partition", witness=bad)
        return g / total[..., None]

    def in_domain(self, X: np.ndarray) -> np.ndarray:
        return self.raw_weights(X).sum(axis=-1) > 0.0

    def measure_h(self, samples: np.ndarray, norm: Norm, pair_count: int = _SWEEP_PAIRS,
                  seed: int = 0) -> float:
        X = np.atleast_2d(samples)
        W = self.weights(X)
        rng = np.random.default_rng(seed)
        i = rng.integers(0, len(X), pair_count)
        j = rng.integers(0, len(X), pair_count)
        keep = i != j
        i, j = i[keep], j[keep]
        d = norm(X[i] - X[j])
        keep = d > 1e-9
        i, j, d = i[keep], j[keep], d[keep]
        h = float((np.abs(W[i] - W[j]) / d[:, None]).max()) if len(d) else 0.0
        self.H = h
        return h


def build_partition_of_unity(cover: BallCover, s: CompactSet, norm: Norm,
                             samples: Optional[np.ndarray] = None,
                             seed: int = 0) -> PartitionOfUnity:
    pou = PartitionOfUnity(cover, s)
    if samples is None:
        samples = _domain_samples(s, cover)
    W = pou.weights(samples)          # raises if the cover misses a sample
    defect = np.abs(W.sum(axis=-1) - 1.0).max()
    if defect > 1e-10:
        raise EnlargementError(f"partition normalization defect {defect}",
                               stage="partition")
    pou.measure_h(samples, norm, seed=seed)
    return pou


def _domain_samples(s: CompactSet, cover: BallCover, per_ball: int = 40,
                    seed: int = 1) -> np.ndarray:
    """Points of U = cover balls plus the interior, concentrated near M."""
    rng = np.random.default_rng(seed)
    blocks = [s.interior_samples, s.boundary_samples]
    for p in cover.pieces:
        d = rng.normal(size=(per_ball, s.dim)) if s.dim > 1 else \
            rng.choice([-1.0, 1.0], size=(per_ball, 1))
        d /= np.sqrt((d * d).sum(-1, keepdims=True))
        rho = p.radius * rng.uniform(0.05, 0.9, size=per_ball) ** (1.0 / s.dim)
        blocks.append(p.center + rho[:, None] * d)
    return np.concatenate(blocks)


class GluedMap:
    """Partition-weighted combination of shear pieces and the identity."""

    def __init__(self, shears: List[ShearMap], pou: PartitionOfUnity,
                 xi_lip: float, xi_unif: float, analytic_lip: float):
        self.shears = shears
        self.pou = pou
        self.xi_lip = xi_lip            # certified bound on Lip(psi - I)
        self.xi_unif = xi_unif          # certified bound on sup |psi - I|
        self.analytic_lip = analytic_lip

    def displacement(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        W = self.pou.weights(X)
        out = np.zeros_like(X)
        for idx, shear in enumerate(self.shears):
            out += W[:, idx:idx + 1] * shear.displacement(X)
        return out   # identity piece contributes zero displacement

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return X + self.displacement(np.atleast_2d(X)).reshape(X.shape)

    def in_domain(self, X: np.ndarray) -> np.ndarray:
        return self.pou.in_domain(X)


def glue(shears: List[ShearMap], pou: PartitionOfUnity, norm: Norm,
         samples: np.ndarray, xi_in: float, pair_count: int = _SWEEP_PAIRS,
         seed: int = 0) -> GluedMap:
    """Glue the pieces and re-verify the perturbation bounds by sampling.

    The analytic bound Lip(psi - I) <= (1 + H * n_pieces) * xi_in must hold
    on sampled pairs; measured values are stored as the certified xi.  A
    certified xi_lip >= 1 means the caller must shrink theta.
    """
    if pou.H is None:
        raise ValueError("partition H must be measured before gluing")
    gm = GluedMap(shears, pou, xi_lip=0.0, xi_unif=0.0,
                  analytic_lip=(1.0 + pou.H * pou.n_pieces) * xi_in)
    X = np.atleast_2d(samples)
    disp = gm.displacement(X)
    xi_unif = float(norm(disp).max())
    rng = np.random.default_rng(seed)
    i = rng.integers(0, len(X), pair_count)
    j = rng.integers(0, len(X), pair_count)
    keep = i != j
    i, j = i[keep], j[keep]
    d = norm(X[i] - X[j])
    keep = d > 1e-9
    i, j, d = i[keep], j[keep], d[keep]
    xi_lip = float((norm(disp[i] - disp[j]) / d).max()) if len(d) else 0.0
    if xi_lip > gm.analytic_lip * (1.0 + _REL_TOL) + 1e-12:
        raise EnlargementError(
            f"sampled Lip(psi-I)={xi_lip} exceeds the partition bound "
            f"{gm.analytic_lip}", stage="glue")
    if xi_unif > xi_in * (1.0 + _REL_TOL) + 1e-12:
        raise EnlargementError(
            f"sampled sup|psi-I|={xi_unif} exceeds xi_in={xi_in}", stage="glue")
    if xi_lip >= 1.0:
        raise EnlargementError("gluing failed: Lip(psi-I) >= 1; shrink theta",
                               stage="glue")
    gm.xi_lip = xi_lip
    gm.xi_unif = xi_unif
    return gm


def invert_glued(gm: GluedMap, Y: np.ndarray, tol: float = 1e-10,
                 max_iter: int = 200, norm: Optional[Norm] = None,
                 strict: bool = True):
    """Solve psi(x) = y by the contraction iteration x <- y - (psi - I)(x).

    Stops when the step is below tol*(1 - xi_lip), which guarantees
    |psi(x) - y| <= tol.  Iterates leaving the partition domain mark the
    query as outside psi(U); with ``strict`` that raises, otherwise the
    returned mask flags failures.
    """
    Y = np.asarray(Y, dtype=float)
    target = np.atleast_2d(Y)
    X = target.copy()
    ok = gm.in_domain(X)
    active = ok.copy()
    stop = tol * max(1.0 - gm.xi_lip, 1e-3)
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        cur = X[idx]
        nxt = target[idx] - gm.displacement(cur)
        step = np.sqrt(((nxt - cur) ** 2).sum(-1)) if norm is None else norm(nxt - cur)
        X[idx] = nxt
        dom = gm.in_domain(nxt)
        ok[idx[~dom]] = False
        active[idx[~dom]] = False
        active[idx[dom & (step <= stop)]] = False
    ok &= ~active   # non-converged queries are failures too
    if strict and not ok.all():
        bad = target[int(np.argmax(~ok))]
        raise EnlargementError(f"inversion failed at y={bad}: point outside the "
                               "image of the glued map", stage="invert", witness=bad)
    X = X.reshape(np.shape(Y))
    return (X, ok) if not strict else X


@dataclass
class Enlargement:
    """The pair (Mhat, Psi) with measured certificates."""

    parent: CompactSet
    mhat: CompactSet
    retraction: Callable[[np.ndarray], np.ndarray]
    xi: float
    lip_measured: float
    disp_measured: float
    margin: float
    strategy: str
    details: dict = field(default_factory=dict)
    components: Optional[List["Enlargement"]] = None

    def certificates_ok(self) -> bool:
        return (self.lip_measured <= (1.0 + self.xi) * (1.0 + _REL_TOL)
                and self.disp_measured <= self.xi * (1.0 + _REL_TOL) + 1e-12
                and self.margin > 0.0)

    def tile_bboxes(self) -> List[tuple]:
        if self.components is None:
            return [self.mhat.bbox]
        return [c.mhat.bbox for c in self.components]

    def to_dict(self) -> dict:
        d = {
            "strategy": self.strategy,
            "xi": self.xi,
            "certificates": {
                "lip_measured": self.lip_measured,
                "lip_bound": 1.0 + self.xi,
                "disp_measured": self.disp_measured,
                "disp_bound": self.xi,
                "margin": self.margin,
            },
            "details": {k: v for k, v in self.details.items()
                        if isinstance(v, (int, float, str, list))},
        }
        if "cover" in self.details:
            d["cover"] = [p.to_dict() for p in self.details["cover"].pieces]
        if self.components is not None:
            d["components"] = [c.to_dict() for c in self.components]
        return d


# -- certificate measurement --------------------------------------------------


def _measure_certificates(s: CompactSet, mhat: CompactSet, retraction, xi: float,
                          norm: Norm, seed: int = 0, pair_count: int = _SWEEP_PAIRS):
    rng = np.random.default_rng(seed)
    X = np.concatenate([mhat.boundary_samples, mhat.interior_samples])
    if len(X) > 4000:
        X = X[rng.choice(len(X), 4000, replace=False)]
    PX = retraction(X)
    inside = s.contains(PX)
    if not inside.all():
        # boundary points can drift by float fuzz; nudge toward x0 before failing
        bad = ~inside
        nudged = PX[bad] + 1e-9 * (s.x0 - PX[bad])
        inside2 = s.contains(nudged)
        if not inside2.all():
            w = PX[bad][int(np.argmax(~inside2))]
            raise EnlargementError(f"retraction image {w} escapes the set",
                                   stage="certificates", witness=w)
    disp = float(norm(X - PX).max())
    i = rng.integers(0, len(X), pair_count)
    j = rng.integers(0, len(X), pair_count)
    keep = i != j
    i, j = i[keep], j[keep]
    d = norm(X[i] - X[j])
    keep = d > 1e-9
    i, j, d = i[keep], j[keep], d[keep]
    lip = float((norm(PX[i] - PX[j]) / d).max()) if len(d) else 0.0
    msam = np.concatenate([s.boundary_samples, s.interior_samples])
    margin = float(mhat.clearance(msam).min())
    return lip, disp, margin


# -- strategies ----------------------------------------------------------------


def _fastpath_candidates(s: CompactSet, norm: Norm, xi: float):
    """Kernel-point candidates ordered by the margin their dilation achieves.

    For each deep interior candidate w the dilation factor is fixed by the
    displacement budget, so the resulting interior margin can be measured
    directly (one clearance sweep of the boundary cloud per candidate).
    """
    depth = s.clearance(s.interior_samples)
    order = np.argsort(-depth)
    cands = [s.x0] + [s.interior_samples[i] for i in order[:10]]
    bnd = np.concatenate([s.boundary_samples, s.interior_samples])
    scored = []
    for w in cands:
        sup_w = float(norm(bnd - w).max()) + 0.5 * norm.K * s.h_geo * np.sqrt(s.dim)
        t = xi / sup_w
        trial = scale_about(s, w, 1.0 + t)
        margin = float(trial.clearance(s.boundary_samples).min())
        scored.append((margin, w))
    scored.sort(key=lambda entry: -entry[0])
    seen = []
    for _, w in scored[:4]:
        if not any(np.allclose(w, v) for v in seen):
            seen.append(w)
    return seen


def _enlarge_fastpath(s: CompactSet, xi: float, norm: Norm, seed: int = 0) -> Enlargement:
    report = None
    for w_cand in _fastpath_candidates(s, norm, xi):
        rep = star_kernel_contains(s, w_cand)
        if rep.passed and rep.margin > 0.0:
            report = rep
            break
        if report is None:
            report = rep
    if report is None or not report.passed or report.margin <= 0.0:
        raise EnlargementError(f"{s.name}: star-kernel test failed (witness "
                               f"{report.witness if report else None})",
                               stage="star-kernel",
                               witness=report.witness if report else None)
    w = report.center
    pts = np.concatenate([s.boundary_samples, s.interior_samples])
    # boundary samples sit on the boundary after bisection refinement, so the
    # sampled sup undershoots by at most the cloud covering radius ~ h*sqrt(N)/2
    sup_w = float(norm(pts - w).max()) + 0.5 * norm.K * s.h_geo * np.sqrt(s.dim)
    t = xi / sup_w
    mhat = scale_about(s, w, 1.0 + t, name=f"{s.name}^")

    def retraction(X):
        X = np.asarray(X, dtype=float)
        return w + (X - w) / (1.0 + t)

    lip, disp, margin = _measure_certificates(s, mhat, retraction, xi, norm, seed)
    enl = Enlargement(s, mhat, retraction, xi, lip, disp, margin, "fastpath",
                      details={"w": w.tolist(), "t": t, "scale": 1.0 + t,
                               "kernel_margin": report.margin})
    if not enl.certificates_ok():
        raise EnlargementError("fast-path certificates failed", stage="certificates")
    return enl


def _enlarge_general(s: CompactSet, xi: float, norm: Norm,
                     candidates: Optional[Callable] = None,
                     resolution: Optional[float] = None, seed: int = 0) -> Enlargement:
    K = norm.K
    cover = build_ball_cover(s, candidates, resolution)
    dom_samples = _domain_samples(s, cover)
    pou = build_partition_of_unity(cover, s, norm, dom_samples, seed=seed)
    H = pou.H
    k = cover.k
    depth = s.clearance(s.interior_samples)
    w = s.interior_samples[int(np.argmax(depth))]
    w_depth = float(depth.max())
    # eps is capped by the smallest cover radius so the inversion iterates,
    # which wander up to eps from M, stay inside the covered domain U
    eps = 0.9 * min(1.0, xi, w_depth, 0.45 * cover.min_radius())
    if eps <= 0:
        raise EnlargementError("no interior depth available for eps", stage="theta")
    diam_u = float(norm(dom_samples[:, None, :] - dom_samples[None, ::7, :]).max()) \
        + 2.0 * K * cover.min_radius()
    theta = choose_theta(K, k, H, eps, diam_u, cover.shrink_ratio())
    shears = [ShearMap(theta, p.center, p.radius, p.direction) for p in cover.pieces]
    xi_in = max(K * K * (theta - 1.0),
                K * (K * diam_u + 1.0) * (theta - 1.0))
    gm = glue(shears, pou, norm, dom_samples, xi_in, seed=seed)
    if gm.xi_lip >= 0.5 * eps * (1.0 + _REL_TOL) + 1e-12:
        raise EnlargementError(f"glued Lipschitz defect {gm.xi_lip} exceeds eps/2",
                               stage="glue")
    psi_w = gm(w[None, :])[0]
    if not bool(s.contains(psi_w[None])[0]):
        raise EnlargementError("glued map displaces the deep interior point out of "
                               "the set; eps too large", stage="glue", witness=w)

    fwd_boundary = gm(s.boundary_samples)
    fwd_interior = gm(s.interior_samples)

    def mhat_contains(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        Xb, ok = invert_glued(gm, pts, strict=False, norm=norm)
        out = np.zeros(len(pts), dtype=bool)
        if ok.any():
            out[ok] = s.contains(np.atleast_2d(Xb)[ok])
        return out

    # boundary displacement never exceeds 2 r_i (theta - 1) per piece
    pad = 2.0 * max(p.radius for p in cover.pieces) * (theta - 1.0) + 1e-9
    lo, hi = s.bbox
    mhat = CompactSet(s.dim, mhat_contains, (lo - pad, hi + pad), s.x0,
                      h_geo=s.h_geo, clearance=None, name=f"{s.name}^",
                      clouds=(fwd_interior, fwd_boundary))

    def retraction(X):
        return invert_glued(gm, X, strict=True, norm=norm)

    lip, disp, margin = _measure_certificates(s, mhat, retraction, xi, norm, seed)
    enl = Enlargement(s, mhat, retraction, xi, lip, disp, margin, "general",
                      details={"theta": theta, "H": H, "k": k, "eps": eps,
                               "diam_u": diam_u, "s": cover.shrink_ratio(),
                               "xi_lip": gm.xi_lip, "xi_unif": gm.xi_unif,
                               "cover": cover})
    enl.details["glued_map"] = gm
    if not enl.certificates_ok():
        raise EnlargementError("general-path certificates failed",
                               stage="certificates")
    return enl


def _enlarge_connected(s: CompactSet, xi: float, norm: Norm, strategy: str,
                       candidates, resolution, seed) -> Enlargement:
    if strategy == "fastpath":
        return _enlarge_fastpath(s, xi, norm, seed)
    if strategy == "general":
        return _enlarge_general(s, xi, norm, candidates, resolution, seed)
    try:
        return _enlarge_fastpath(s, xi, norm, seed)
    except EnlargementError:
        return _enlarge_general(s, xi, norm, candidates, resolution, seed)


def enlarge(s: CompactSet, xi: float, norm: Norm, strategy: str = "auto",
            candidates: Optional[Callable] = None, resolution: Optional[float] = None,
            seed: int = 0) -> Enlargement:
    """Build (Mhat, Psi) with certified Lip <= 1+xi and displacement <= xi.

    ``strategy`` is one of auto / fastpath / general; auto prefers the fast
    path (exact constants) and falls back to the general construction.
    Disconnected sets are handled per component at the reduced tolerance
    xi' = min(xi*alpha/2, alpha/4) and glued; the enlarged components must
    come out disjoint.
    """
    if xi <= 0:
        raise ValueError("xi must be positive")
    comps, alpha, alpha_eff = connected_components(s, norm)
    if len(comps) == 1:
        return _enlarge_connected(s, xi, norm, strategy, candidates, resolution, seed)

    xi_comp = min(0.5 * xi * alpha_eff, 0.25 * alpha_eff)
    parts = [_enlarge_connected(c, xi_comp, norm, strategy, candidates, resolution, seed)
             for c in comps]
    # enlarged components must stay pairwise disjoint
    for i in range(len(parts)):
        for j in range(i + 1, len(parts)):
            a = np.concatenate([parts[i].mhat.boundary_samples,
                                parts[i].mhat.interior_samples])
            b = parts[j].mhat.boundary_samples
            dmin = float(norm(a[:, None, :] - b[None, :, :]).min())
            if dmin <= 0.0 or parts[j].mhat.contains(a).any():
                raise EnlargementError("enlarged components are not disjoint",
                                       stage="components")
    mhat = union([p.mhat for p in parts], x0=s.x0, name=f"{s.name}^")

    def retraction(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full_like(X, np.nan)
        claimed = np.zeros(len(X), dtype=bool)
        for p in parts:
            m = ~claimed & p.mhat.contains(X)
            if m.any():
                out[m] = p.retraction(X[m])
                claimed |= m
        if not claimed.all():
            bad = X[int(np.argmax(~claimed))]
            raise EnlargementError(f"{bad} lies in no enlarged component",
                                   stage="retraction", witness=bad)
        return out

    rng = np.random.default_rng(seed)
    lip, disp, margin = _measure_certificates(s, mhat, retraction, xi, norm, seed)
    # cross-component pairs never contract worse than 1 + xi
    pts_a = np.concatenate([parts[0].mhat.boundary_samples,
                            parts[0].mhat.interior_samples])
    cross_lip = lip
    for p in parts[1:]:
        pts_b = np.concatenate([p.mhat.boundary_samples, p.mhat.interior_samples])
        ia = rng.integers(0, len(pts_a), 2000)
        ib = rng.integers(0, len(pts_b), 2000)
        d = norm(pts_a[ia] - pts_b[ib])
        ra = retraction(pts_a[ia])
        rb = retraction(pts_b[ib])
        cross_lip = max(cross_lip, float((norm(ra - rb) / d).max()))
    enl = Enlargement(s, mhat, retraction, xi, max(lip, cross_lip), disp, margin,
                      "components", details={"alpha": alpha, "alpha_eff": alpha_eff,
                                             "xi_component": xi_comp},
                      components=parts)
    if not enl.certificates_ok():
        raise EnlargementError("component gluing certificates failed",
                               stage="certificates")
    return enl
