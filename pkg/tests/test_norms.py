import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from liprank.geometry import Norm, equivalence_constant, estimate_lipschitz, validate_norm

SQRT2 = np.sqrt(2.0)


def test_equivalence_constant_1d_abs_is_exactly_one():
    assert equivalence_constant(Norm.p_norm(2, 1)) == 1.0
    assert equivalence_constant(Norm.p_norm(1, 1)) == 1.0


def test_equivalence_constant_l2_2d():
    k = equivalence_constant(Norm.p_norm(2, 2), resolution=1e-3)
    # the l1-vs-l2 ratio is tight at (1,1)/sqrt(2); safety factor 1.01 on top
    assert k == pytest.approx(SQRT2 * 1.01, rel=2e-4)


def test_equivalence_constant_l1_2d_brute_sweep():
    # independent sweep: max of the four ratio families on a fine circle
    ang = np.linspace(0, 2 * np.pi, 20_000, endpoint=False)
    pts = np.stack([np.cos(ang), np.sin(ang)], -1)
    n1 = np.abs(pts).sum(-1)
    n2 = np.ones(len(pts))
    expected = max(n1.max(), (1 / n1).max(), (n1 / n2).max(), (n2 / n1).max())
    k = equivalence_constant(Norm.p_norm(1, 2), resolution=1e-3)
    assert k == pytest.approx(expected * 1.01, rel=2e-4)
    assert k == pytest.approx(SQRT2 * 1.01, rel=2e-4)


def test_degenerate_norm_rejected():
    bad = Norm.custom(lambda v: np.abs(v[..., 0]), dim=2, name="seminorm")
    with pytest.raises(ValueError, match="degenerate"):
        equivalence_constant(bad)


def test_two_sided_comparison_holds_on_samples(l1_2d, l2_2d):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(5000, 2))
    for norm in (l1_2d, l2_2d):
        k = norm.K
        v = norm(x)
        n1 = np.abs(x).sum(-1)
        n2 = np.sqrt((x * x).sum(-1))
        assert np.all(v / k <= n1 + 1e-12)
        assert np.all(v / k <= n2 + 1e-12)
        assert np.all(n1 <= k * v + 1e-12)
        assert np.all(n2 <= k * v + 1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3), st.integers(0, 10_000))
def test_norm_axioms_sampled(dim, seed):
    norm = Norm.p_norm(np.random.default_rng(seed).choice([1.0, 2.0, np.inf]), dim)
    rep = validate_norm(norm, n_samples=400, seed=seed)
    assert rep["homogeneity"] <= 1e-12 * 10  # scaled points reach ~1e1
    assert rep["triangle"] <= 1e-12
    assert rep["zero"] == 0.0


def test_dual_norm_pairs():
    n1 = Norm.p_norm(1, 2)
    v = np.array([[3.0, -4.0]])
    assert n1.dual(v)[0] == pytest.approx(4.0)          # dual of l1 is max
    n2 = Norm.p_norm(2, 2)
    assert n2.dual(v)[0] == pytest.approx(5.0)          # l2 self-dual
    custom = Norm.custom(lambda p: np.sqrt((p * p).sum(-1)), 2)
    assert custom.dual(v)[0] >= 5.0                     # K * l2 upper bound


def test_estimate_lipschitz_affine():
    pts = np.linspace(0, 1, 11)[:, None]
    norm = Norm.p_norm(2, 1)
    assert estimate_lipschitz(lambda X: 2.0 * X[:, 0], pts, norm) == pytest.approx(2.0)


def test_estimate_lipschitz_norm_function(unit_disk, l2_2d):
    pts = unit_disk.interior_samples
    f = lambda X: np.sqrt((X * X).sum(-1)) - 0.25
    val = estimate_lipschitz(f, pts, l2_2d)
    assert val <= 1.0 + 1e-9
    assert val >= 0.9


def test_estimate_lipschitz_monotone_in_points(l2_2d):
    rng = np.random.default_rng(3)
    pts = rng.uniform(-1, 1, (40, 2))
    f = lambda X: np.abs(X).sum(-1)
    small = estimate_lipschitz(f, pts[:20], l2_2d)
    big = estimate_lipschitz(f, pts, l2_2d)
    assert big >= small


def test_estimate_lipschitz_coincident_contradiction(l2_2d):
    pts = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
    vals = np.array([0.0, 1.0, 2.0])
    with pytest.raises(ValueError, match="coincident"):
        estimate_lipschitz(lambda X: vals, pts, l2_2d, values=vals)


def test_bilinear_interpolant_lipschitz_under_l1(l1_2d):
    # interpolant of vertex values on the unit square: Lipschitz constant
    # under l1 never exceeds the worst vertex divided difference
    rng = np.random.default_rng(5)
    vals = rng.normal(size=4)  # corners (0,0),(0,1),(1,0),(1,1)
    v00, v01, v10, v11 = vals

    def f(X):
        x, y = X[:, 0], X[:, 1]
        return (v00 * (1 - x) * (1 - y) + v01 * (1 - x) * y
                + v10 * x * (1 - y) + v11 * x * y)

    ax = np.linspace(0, 1, 26)
    grid = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1).reshape(-1, 2)
    est = estimate_lipschitz(f, grid, l1_2d)
    edge_dd = max(abs(v10 - v00), abs(v11 - v01), abs(v01 - v00), abs(v11 - v10))
    assert est <= edge_dd + 1e-9
