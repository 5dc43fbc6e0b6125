"""Norms on R^N, equivalence constants, and sampled Lipschitz estimation.

All constructions downstream work with an arbitrary norm on R^N.  What they
actually need from it is (a) fast vectorized evaluation and (b) a two-sided
comparison constant K against the l1 and l2 norms,

    (1/K)*|x| <= ||x||_1, ||x||_2 <= K*|x|,

where |.| is the working norm.  For p-norms K is known in closed form up to
sampling; for user-supplied norms it is measured on an l2-sphere sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "Norm",
    "equivalence_constant",
    "estimate_lipschitz",
    "sphere_sample",
    "validate_norm",
]

_EXACT_TOL = 1e-12
_SAFETY = 1.01


def _as_points(x: np.ndarray, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != dim:
        raise ValueError(f"expected points with last axis {dim}, got shape {x.shape}")
    return x


@dataclass
class Norm:
    """A norm on R^N with lazily measured equivalence constant.

    ``kind`` is either ``("p", p)`` for an l_p norm or ``("custom", name)``
    for a user-supplied positively homogeneous convex evaluator.
    """

    dim: int
    kind: tuple
    _eval: Callable[[np.ndarray], np.ndarray]
    _dual: Optional[Callable[[np.ndarray], np.ndarray]] = None
    _K: Optional[float] = field(default=None, repr=False)

    @staticmethod
    def p_norm(p: float, dim: int) -> "Norm":
        if p < 1:
            raise ValueError("p-norms require p >= 1")
        if np.isinf(p):
            ev = lambda v: np.abs(v).max(axis=-1)
            du = lambda v: np.abs(v).sum(axis=-1)
        elif p == 1:
            ev = lambda v: np.abs(v).sum(axis=-1)
            du = lambda v: np.abs(v).max(axis=-1)
        elif p == 2:
            ev = lambda v: np.sqrt((v * v).sum(axis=-1))
            du = ev
        else:
            q = p / (p - 1.0)
            ev = lambda v: (np.abs(v) ** p).sum(axis=-1) ** (1.0 / p)
            du = lambda v: (np.abs(v) ** q).sum(axis=-1) ** (1.0 / q)
        return Norm(dim=dim, kind=("p", float(p)), _eval=ev, _dual=du)

    @staticmethod
    def custom(fn: Callable[[np.ndarray], np.ndarray], dim: int, name: str = "custom") -> "Norm":
        return Norm(dim=dim, kind=("custom", name), _eval=fn)

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return self._eval(_as_points(v, self.dim))

    def dual(self, v: np.ndarray) -> np.ndarray:
        """Dual norm; for custom norms falls back to the bound K*||.||_2."""
        v = _as_points(v, self.dim)
        if self._dual is not None:
            return self._dual(v)
        return self.K * np.sqrt((v * v).sum(axis=-1))

    @property
    def K(self) -> float:
        if self._K is None:
            self._K = equivalence_constant(self)
        return self._K

    def __repr__(self) -> str:  # keep reports short
        tag = f"l{self.kind[1]:g}" if self.kind[0] == "p" else self.kind[1]
        return f"Norm({tag}, dim={self.dim})"


def sphere_sample(dim: int, resolution: float, seed: int = 0) -> np.ndarray:
    """Points on the l2 unit sphere, spaced about `resolution` apart.

    In dimension 1 and 2 the sample is a deterministic grid; in higher
    dimension a seeded uniform sample of matching size is used, always
    together with the axis and diagonal directions.
    """
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    axes = np.concatenate([np.eye(dim), -np.eye(dim)])
    diags = np.stack([d for d in np.stack(np.meshgrid(*([[-1.0, 1.0]] * dim)), -1).reshape(-1, dim)])
    diags = diags / np.sqrt((diags * diags).sum(-1, keepdims=True))
    if dim == 2:
        m = max(16, int(np.ceil(2 * np.pi / resolution)))
        ang = np.linspace(0.0, 2 * np.pi, m, endpoint=False)
        grid = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    else:
        m = min(200_000, max(1000, int((4.0 / resolution) ** (dim - 1))))
        rng = np.random.default_rng(seed)
        grid = rng.normal(size=(m, dim))
        grid /= np.sqrt((grid * grid).sum(-1, keepdims=True))
    return np.concatenate([axes, diags, grid])


def equivalence_constant(norm: Norm, resolution: float = 1e-3) -> float:
    """Smallest sampled K with (1/K)|x| <= ||x||_1,||x||_2 <= K|x|, times 1.01.

    The sampled supremum of the four ratio families is taken over an l2-sphere
    sample at the given resolution.  If every ratio is 1 to machine precision
    (all three norms coincide, as for |.| in R^1) the exact value 1 is
    returned without the safety factor.  A norm evaluating to ~0 on a sphere
    sample is rejected as degenerate.
    """
    pts = sphere_sample(norm.dim, resolution)
    v = norm(pts)
    if np.any(v <= 1e-15) or not np.all(np.isfinite(v)):
        raise ValueError("degenerate norm: vanishing or non-finite on unit sphere sample")
    n1 = np.abs(pts).sum(-1)
    n2 = np.sqrt((pts * pts).sum(-1))
    ratios = np.array([
        (n1 / v).max(),   # ||x||_1 <= K |x|
        (n2 / v).max(),   # ||x||_2 <= K |x|
        (v / n1).max(),   # (1/K)|x| <= ||x||_1
        (v / n2).max(),   # (1/K)|x| <= ||x||_2
    ])
    k = max(1.0, float(ratios.max()))
    if k <= 1.0 + _EXACT_TOL:
        return 1.0
    return k * _SAFETY


def estimate_lipschitz(
    f: Callable[[np.ndarray], np.ndarray],
    points: np.ndarray,
    norm: Norm,
    values: Optional[np.ndarray] = None,
    chunk: int = 2048,
) -> float:
    """Max of |f(x)-f(y)| / |x-y| over all pairs of the given points.

    Deterministic given the point order.  Raises on coincident points that
    carry different values (a contradiction: no Lipschitz constant exists).
    """
    pts = _as_points(points, norm.dim)
    if pts.ndim != 2 or len(pts) < 2:
        raise ValueError("need at least two points")
    vals = np.asarray(f(pts), dtype=float) if values is None else np.asarray(values, dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("function not finite on all points")
    best = 0.0
    n = len(pts)
    for i0 in range(0, n, chunk):
        p = pts[i0:i0 + chunk]
        v = vals[i0:i0 + chunk]
        d = norm(p[:, None, :] - pts[None, i0:, :])
        dv = np.abs(v[:, None] - vals[None, i0:])
        zero = d <= 0.0
        if np.any(zero & (dv > 0.0)):
            raise ValueError("coincident points with differing values")
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(zero, 0.0, dv / np.where(zero, 1.0, d))
        best = max(best, float(ratio.max()))
    return best


def validate_norm(norm: Norm, n_samples: int = 10_000, seed: int = 0, tol: float = 1e-12) -> dict:
    """Check homogeneity and the triangle inequality on random samples.

    Returns the worst observed defects; raises nothing so callers can assert
    with their own tolerances.
    """
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n_samples, norm.dim))
    y = rng.normal(size=(n_samples, norm.dim))
    lam = rng.uniform(-3.0, 3.0, size=n_samples)
    scale_defect = np.abs(norm(lam[:, None] * x) - np.abs(lam) * norm(x))
    tri_defect = norm(x + y) - (norm(x) + norm(y))
    zero_defect = float(np.abs(norm(np.zeros((1, norm.dim))))[0])
    return {
        "homogeneity": float(scale_defect.max()),
        "triangle": float(np.maximum(tri_defect, 0.0).max()),
        "zero": zero_defect,
        "tol": tol,
    }
