"""Mollifier smoothing of Lipschitz functions by lattice quadrature.

The smoother convolves f with the standard bump kernel supported in the
Euclidean ball B(0, r) and recenters so the result vanishes at the
distinguished point x0:

    smoothed(x) = (kernel_r * f)(x) - (kernel_r * f)(x0).

Quadrature design: the nodes are the points of one global lattice
x0 + h*Z^N that fall inside B(x, r), with weights kernel_r(x - node)
normalized to total mass one.  Anchoring the lattice globally (rather than
centering a midpoint grid at each x) makes the discrete smoother a finite
combination of smooth kernel translates, so it is exactly linear, preserves
constants exactly, has an exactly computable gradient, and keeps the
convex-combination structure that forces operator norm <= 1 up to a small
measured slack.  The slack budget below was sized from worst-case kink
functions at the default grid and is propagated to every bound check.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry.norms import Norm
from .geometry.sets import CompactSet

__all__ = [
    "DEFAULT_QUAD_SLACK",
    "default_nodes_per_axis",
    "mollifier_normalize",
    "Mollifier",
    "BallLatticeRule",
    "convolve",
    "SmoothedFunction",
    "smoothing_bounds_check",
    "DiffModulus",
    "differentiability_modulus",
    "residual_check",
]

# Additive slack for empirical verification of the analytic smoothing bounds.
# Worst-case dense sweeps of kink functions at the default grid measure a
# Lipschitz inflation of ~2.4e-3 (1D) / ~1.3e-3 (2D); 5e-3 covers both with
# headroom and is quoted in every report that uses it.
DEFAULT_QUAD_SLACK = 5e-3

_SURFACE = {1: 2.0, 2: 2 * np.pi, 3: 4 * np.pi, 4: 2 * np.pi ** 2}
_NORMALIZATION: dict = {}


def default_nodes_per_axis(dim: int) -> int:
    return 25 if dim <= 2 else 15


def _profile(t2: np.ndarray) -> np.ndarray:
    """exp(1/(t2-1)) for t2 < 1, else 0 (t2 = squared radius)."""
    out = np.zeros_like(t2)
    m = t2 < 1.0
    out[m] = np.exp(1.0 / (t2[m] - 1.0))
    return out


def mollifier_normalize(dim: int, base_resolution: int = 64, tol: float = 1e-8,
                        max_refine: int = 16) -> float:
    """Normalization constant A with integral of A*exp(1/(|x|^2-1)) over B(0,1) = 1.

    The ball integral is reduced to the radial profile and evaluated by a
    midpoint rule, refined (doubling the node count) until two successive
    refinements agree to 1e-8 relative.  The result is cached per dimension.
    """
    if dim not in _SURFACE:
        raise ValueError("mollifier normalization supports dimensions 1..4")
    if dim in _NORMALIZATION:
        return _NORMALIZATION[dim]
    m = int(base_resolution)
    prev = None
    for _ in range(max_refine):
        rho = (np.arange(m) + 0.5) / m
        val = float((rho ** (dim - 1) * _profile(rho ** 2)).sum() / m) * _SURFACE[dim]
        if prev is not None and abs(val - prev) <= tol * abs(val):
            _NORMALIZATION[dim] = 1.0 / val
            return _NORMALIZATION[dim]
        prev = val
        m *= 2
    raise ValueError(f"mollifier normalization did not converge to {tol} "
                     f"within {max_refine} refinements")


@dataclass(frozen=True)
class Mollifier:
    """The smooth bump A*exp(1/((|x|/s)^2 - 1))/s^N supported in B(0, s)."""

    dim: int
    scale: float
    amplitude: float = field(init=False)

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("mollifier scale must be positive")
        object.__setattr__(self, "amplitude", mollifier_normalize(self.dim))

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        p = np.asarray(pts, dtype=float) / self.scale
        t2 = (p * p).sum(axis=-1)
        return self.amplitude * _profile(t2) / self.scale ** self.dim

    def gradient(self, pts: np.ndarray) -> np.ndarray:
        p = np.asarray(pts, dtype=float) / self.scale
        t2 = (p * p).sum(axis=-1)
        fac = np.zeros_like(t2)
        m = t2 < 1.0
        fac[m] = self.amplitude * np.exp(1.0 / (t2[m] - 1.0)) * (-2.0 / (t2[m] - 1.0) ** 2)
        return fac[..., None] * p / self.scale ** (self.dim + 1)


class BallLatticeRule:
    """Quadrature nodes of the global lattice x0 + h*Z^N inside B(x, r).

    The spacing either derives from a nodes-per-axis count (h = 2r/q) or is
    given exactly via ``spacing`` so callers can share one lattice with a
    mesh whose vertices must be quadrature lattice points.
    """

    def __init__(self, dim: int, r: float, x0: np.ndarray,
                 nodes_per_axis: Optional[int] = None,
                 spacing: Optional[float] = None):
        self.dim = dim
        self.r = float(r)
        self.x0 = np.asarray(x0, dtype=float)
        if spacing is not None:
            self.h = float(spacing)
            self.nodes_per_axis = max(1, int(round(2.0 * self.r / self.h)))
        else:
            q = nodes_per_axis or default_nodes_per_axis(dim)
            self.nodes_per_axis = int(q)
            self.h = 2.0 * self.r / self.nodes_per_axis
        self.kernel = Mollifier(dim, self.r)
        k = int(np.ceil(self.r / self.h)) + 1
        ax = np.arange(-k, k + 1)
        offs = np.stack(np.meshgrid(*([ax] * dim), indexing="ij"), -1).reshape(-1, dim)
        keep = (offs * offs).sum(-1) <= (k + 1) ** 2  # superset; zero weights drop out
        self.offsets = offs[keep]

    def nodes_and_weights(self, X: np.ndarray):
        """Nodes Z (m, S, N), raw kernel weights W (m, S), and mass Z_sum (m,)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        base = np.round((X - self.x0) / self.h)
        Z = self.x0 + (base[:, None, :] + self.offsets[None, :, :]) * self.h
        W = self.kernel(X[:, None, :] - Z)
        return Z, W, W.sum(axis=1)

    def stencil(self) -> np.ndarray:
        """Kernel sampled on lattice offsets around a lattice point (phase 0)."""
        shape = tuple([len(np.unique(self.offsets[:, i])) for i in range(self.dim)])
        k = self.offsets.max()
        ax = np.arange(-k, k + 1)
        grid = np.stack(np.meshgrid(*([ax] * self.dim), indexing="ij"), -1)
        return self.kernel(grid * self.h)


def convolve(f: Callable[[np.ndarray], np.ndarray], r: float, X: np.ndarray,
             x0: np.ndarray, nodes_per_axis: Optional[int] = None) -> np.ndarray:
    """Kernel average of f over B(x, r) (no recentering), vectorized in x.

    Requires f to be finite at every lattice node carrying positive weight;
    a non-finite node value means x was closer than r to the domain boundary.
    """
    dim = np.atleast_2d(np.asarray(X, dtype=float)).shape[-1]
    rule = BallLatticeRule(dim, r, np.asarray(x0, dtype=float), nodes_per_axis)
    Z, W, mass = rule.nodes_and_weights(X)
    vals = np.asarray(f(Z.reshape(-1, dim)), dtype=float).reshape(W.shape)
    bad = ~np.isfinite(vals) & (W > 0)
    if bad.any():
        i = int(np.argmax(bad.any(axis=1)))
        raise ValueError(f"function undefined at a quadrature node of x={np.atleast_2d(X)[i]}; "
                         "point is too close to the domain boundary for this r")
    out = (W * np.where(W > 0, vals, 0.0)).sum(axis=1) / mass
    return out if np.asarray(X).ndim > 1 else out[0]


class SmoothedFunction:
    """Recentered kernel average: evaluates to 0 at x0, defined on M(r).

    ``gradient`` is the exact derivative of the discrete evaluation (quotient
    rule over the normalized lattice weights), which discretizes the integral
    of the kernel gradient against f.
    """

    def __init__(self, f: Callable[[np.ndarray], np.ndarray], r: float,
                 x0: np.ndarray, dim: int, nodes_per_axis: Optional[int] = None,
                 domain: Optional[CompactSet] = None, spacing: Optional[float] = None):
        self.f = f
        self.r = float(r)
        self.x0 = np.asarray(x0, dtype=float)
        self.dim = dim
        self.domain = domain
        self.rule = BallLatticeRule(dim, self.r, self.x0, nodes_per_axis, spacing)
        self.base_value = self._raw(self.x0[None, :])[0]

    def _gather(self, X: np.ndarray):
        Z, W, mass = self.rule.nodes_and_weights(X)
        vals = np.asarray(self.f(Z.reshape(-1, self.dim)), dtype=float).reshape(W.shape)
        bad = ~np.isfinite(vals) & (W > 0)
        if bad.any():
            i = int(np.argmax(bad.any(axis=1)))
            raise ValueError(f"source function undefined at a node near x={np.atleast_2d(X)[i]}")
        return Z, W, mass, np.where(W > 0, vals, 0.0)

    def _raw(self, X: np.ndarray) -> np.ndarray:
        _, W, mass, vals = self._gather(X)
        return (W * vals).sum(axis=1) / mass

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = self._raw(np.atleast_2d(X)) - self.base_value
        return out if X.ndim > 1 else out[0]

    def gradient(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        Xb = np.atleast_2d(X)
        Z, W, mass, vals = self._gather(Xb)
        G = self.rule.kernel.gradient(Xb[:, None, :] - Z)
        num = (G * vals[..., None]).sum(axis=1)
        den = G.sum(axis=1)
        val = (W * vals).sum(axis=1) / mass
        grad = (num - val[:, None] * den) / mass[:, None]
        return grad if X.ndim > 1 else grad[0]


def smoothing_bounds_check(f: Callable, lip: float, r: float, samples: np.ndarray,
                           norm: Norm, K: float, x0: np.ndarray,
                           nodes_per_axis: Optional[int] = None,
                           pair_count: int = 10_000, seed: int = 0,
                           slack: float = DEFAULT_QUAD_SLACK) -> dict:
    """Verify Lip(smoothed) <= Lip(f)(1+slack) and |smoothed - f| <= 2 Lip K r.

    Samples must lie at depth > r in the domain of f.  Returns the worst
    observed ratios; ``ok`` is False if either bound is violated beyond the
    declared quadrature slack.
    """
    rng = np.random.default_rng(seed)
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    dim = samples.shape[-1]
    sf = SmoothedFunction(f, r, x0, dim, nodes_per_axis)
    sv = sf(samples)
    fv = np.asarray(f(samples), dtype=float) - float(np.asarray(f(np.atleast_2d(x0)))[0])
    gap = np.abs(sv - fv)
    gap_bound = 2.0 * lip * K * r
    i = rng.integers(0, len(samples), size=pair_count)
    j = rng.integers(0, len(samples), size=pair_count)
    keep = i != j
    i, j = i[keep], j[keep]
    d = norm(samples[i] - samples[j])
    keep = d > 1e-12
    i, j, d = i[keep], j[keep], d[keep]
    lip_meas = float((np.abs(sv[i] - sv[j]) / d).max()) if len(d) else 0.0
    ok = (lip_meas <= lip * (1.0 + 1e-3) + slack) and \
         (float(gap.max()) <= gap_bound * (1.0 + 1e-3) + slack)
    return {
        "lip_input": lip,
        "lip_smoothed": lip_meas,
        "gap_max": float(gap.max()),
        "gap_bound": gap_bound,
        "slack": slack,
        "ok": bool(ok),
    }


@dataclass
class DiffModulus:
    """Measured modulus-of-continuity table for the scaled kernel gradient.

    ``delta`` is the largest tabulated step with safety * omega(delta) * A_M
    <= eps, where A_M is the bounding-box volume standing in for the domain
    constant of the smoothing residual estimate.
    """

    r: float
    eps: float
    delta: float
    table: np.ndarray          # rows (delta_i, omega_i) after the safety factor
    a_m: float
    satisfied: bool
    safety: float = 1.2

    def omega(self, step: float) -> float:
        idx = np.searchsorted(self.table[:, 0], step)
        idx = min(idx, len(self.table) - 1)
        return float(self.table[idx, 1])


def differentiability_modulus(r: float, eps: float, bbox: tuple, norm: Norm,
                              entries: int = 32, samples: int = 2000,
                              safety: float = 1.2, seed: int = 0) -> DiffModulus:
    """Measure omega(step) = sup ||grad_kernel(a) - grad_kernel(b)||_dual.

    Pairs are sampled with |a - b| = step in the working norm; the table is
    log-spaced over [1e-4 r, r] and made nondecreasing by a running max.  The
    returned delta is the largest entry satisfying the eps budget; when none
    does, the smallest entry is returned with ``satisfied=False``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    dim = norm.dim
    kernel = Mollifier(dim, r)
    lo = np.asarray(bbox[0], dtype=float)
    hi = np.asarray(bbox[1], dtype=float)
    a_m = float(np.prod(hi - lo))
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1.05 * r, 1.05 * r, size=(samples, dim))
    dirs = rng.normal(size=(samples, dim)) if dim > 1 else rng.choice([-1.0, 1.0], size=(samples, 1))
    dirs = dirs / norm(dirs)[:, None]
    steps = r * np.logspace(-4, 0, entries)
    ga = kernel.gradient(a)
    om = np.empty(entries)
    for k, s in enumerate(steps):
        gb = kernel.gradient(a + s * dirs)
        om[k] = norm.dual(ga - gb).max()
    om = np.maximum.accumulate(om) * safety
    table = np.column_stack([steps, om])
    feasible = om * a_m <= eps
    if feasible.any():
        delta = float(steps[np.flatnonzero(feasible)[-1]])
        satisfied = True
    else:
        delta = float(steps[0])
        satisfied = False
        warnings.warn("no tabulated step satisfies the modulus budget; "
                      "returning the smallest entry", stacklevel=2)
    return DiffModulus(r=r, eps=eps, delta=delta, table=table, a_m=a_m,
                       satisfied=satisfied, safety=safety)


def residual_check(sf: SmoothedFunction, X: np.ndarray, H: np.ndarray,
                   norm: Norm) -> float:
    """Max of |sf(x+h) - sf(x) - grad sf(x).h| / |h| over probe pairs."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    v0 = sf(X)
    v1 = sf(X + H)
    g = sf.gradient(X)
    lin = (g * H).sum(axis=1)
    hn = norm(H)
    return float((np.abs(v1 - v0 - lin) / hn).max())
