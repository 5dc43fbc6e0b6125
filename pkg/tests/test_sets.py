import json

import numpy as np
import pytest

from liprank.geometry import (
    CompactSet,
    annulus,
    ball,
    box,
    connected_components,
    erode,
    halfspace_intersection,
    implicit_grid,
    load_set,
    lshape,
    polytope,
    scale_about,
    set_to_dict,
    two_squares,
    union,
)


def test_erode_ball_is_smaller_ball(unit_disk):
    er = erode(unit_disk, 0.25)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, (1000, 2))
    inside = np.sqrt((pts * pts).sum(-1)) < 0.75
    assert np.array_equal(er.contains(pts), inside)


def test_erode_square_half_is_empty(unit_square):
    er = erode(unit_square, 0.5)
    pts = np.random.default_rng(1).uniform(0, 1, (1000, 2))
    pts = np.concatenate([pts, [[0.5, 0.5]]])
    assert not er.contains(pts).any()   # max clearance is exactly 0.5, strict


def test_erode_square_quarter(unit_square):
    er = erode(unit_square, 0.25)
    pts = np.random.default_rng(2).uniform(0, 1, (2000, 2))
    expected = np.all((pts > 0.25) & (pts < 0.75), axis=-1)
    assert np.array_equal(er.contains(pts), expected)


def test_erode_monotone(unit_disk):
    pts = np.random.default_rng(3).uniform(-1, 1, (1500, 2))
    prev = None
    for r in (0.05, 0.15, 0.3, 0.6):
        cur = erode(unit_disk, r).contains(pts)
        if prev is not None:
            assert not np.any(cur & ~prev)   # decreasing under inclusion
        prev = cur


def test_erode_requires_positive_radius(unit_square):
    with pytest.raises(ValueError):
        erode(unit_square, 0.0)


def test_probe_clearance_matches_exact_forms(unit_disk):
    oracle_only = CompactSet(2, lambda p: (p * p).sum(-1) <= 1.0,
                             (np.array([-1.0, -1.0]), np.array([1.0, 1.0])),
                             [0.0, 0.0], 0.05)
    pts = np.array([[0.0, 0.0], [0.5, 0.0], [-0.2, 0.6], [0.9, 0.1]])
    got = oracle_only.clearance(pts)
    want = unit_disk.clearance(pts)
    assert np.abs(got - want).max() < 2e-2   # 16 ray directions, small bias


def test_boundary_samples_straddle_the_boundary(unit_disk):
    b = unit_disk.boundary_samples
    assert len(b) > 50
    rho = np.sqrt((b * b).sum(-1))
    assert np.all(rho <= 1.0)
    assert np.all(rho >= 1.0 - 1e-6)


def test_interior_samples_inside(l_shape):
    assert l_shape.contains(l_shape.interior_samples).all()
    assert l_shape.contains(l_shape.boundary_samples).all()


def test_lshape_clearance_formula(l_shape):
    pts = np.array([[0.25, 0.25], [0.45, 0.45], [0.75, 0.25], [0.9, 0.9]])
    got = l_shape.clearance(pts)
    assert got[0] == pytest.approx(0.25)
    assert got[1] == pytest.approx(np.sqrt(2) * 0.05)   # nearest: cut corner
    assert got[2] == pytest.approx(0.25)
    assert got[3] == 0.0                                # inside the cut


def test_union_and_scale_clearance():
    ts = two_squares()
    assert ts.clearance(np.array([[0.5, 0.5], [3.5, 3.5]])) == pytest.approx([0.5, 0.5])
    big = scale_about(ts, [0.5, 0.5], 1.2)
    assert bool(big.contains(np.array([[-0.05, -0.05]]))[0])
    assert big.clearance(np.array([[0.5, 0.5]]))[0] == pytest.approx(0.6)


def test_polytope_membership_and_clearance():
    tri = polytope([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]])
    assert bool(tri.contains(np.array([[0.5, 0.5]]))[0])
    assert not bool(tri.contains(np.array([[1.5, 1.5]]))[0])
    # clearance at the incenter of this right triangle is 2 - sqrt(2)
    c = tri.clearance(np.array([[2 - np.sqrt(2), 2 - np.sqrt(2)]]))[0]
    assert c == pytest.approx(2 - np.sqrt(2), abs=1e-9)


def test_halfspace_intersection_halfplane():
    hp = halfspace_intersection([[0.0, 1.0]], [0.0],
                                ([-1.0, -1.0], [1.0, 1.0]), [0.0, -0.5])
    pts = np.array([[0.0, -0.2], [0.0, 0.2], [0.9, -0.9]])
    assert list(hp.contains(pts)) == [True, False, True]
    assert hp.clearance(pts[:1])[0] == pytest.approx(0.2)


def test_implicit_grid_round_disk():
    ax = np.linspace(-1.2, 1.2, 61)
    g = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1)
    vals = np.sqrt((g * g).sum(-1)) - 1.0
    s = implicit_grid([-1.2, -1.2], [1.2, 1.2], vals, level=0.0, x0=[0.0, 0.0])
    pts = np.array([[0.0, 0.0], [0.97, 0.0], [1.05, 0.0]])
    assert list(s.contains(pts)) == [True, True, False]


def test_set_json_round_trip(tmp_path):
    s = ball([0.25, -0.5], 0.75, h_geo=0.04)
    d = set_to_dict(s)
    path = tmp_path / "set.json"
    path.write_text(json.dumps(d))
    s2 = load_set(str(path))
    pts = np.random.default_rng(4).uniform(-1.5, 1.5, (500, 2))
    assert np.array_equal(s.contains(pts), s2.contains(pts))
    assert s2.h_geo == 0.04
    assert np.allclose(s2.x0, s.x0)


def test_load_set_union_kind():
    d = {"kind": "union", "params": {"parts": [
        {"kind": "box", "params": {"lo": [0, 0], "hi": [1, 1]}},
        {"kind": "box", "params": {"lo": [3, 3], "hi": [4, 4]}},
    ]}, "x0": [0.5, 0.5]}
    s = load_set(d)
    assert bool(s.contains(np.array([[3.5, 3.2]]))[0])
    assert not bool(s.contains(np.array([[2.0, 2.0]]))[0])


def test_unknown_kind_rejected():
    with pytest.raises(ValueError, match="unknown set kind"):
        load_set({"kind": "torus", "params": {}})


def test_connected_components_single(unit_square, l2_2d):
    comps, alpha, aeff = connected_components(unit_square, l2_2d)
    assert len(comps) == 1
    assert alpha == np.inf and aeff == 0.99


def test_connected_components_two_squares(squares_pair, l2_2d):
    comps, alpha, aeff = connected_components(squares_pair, l2_2d)
    assert len(comps) == 2
    # closest points are the corners (1,1) and (3,3): separation 2*sqrt(2)
    assert alpha == pytest.approx(2 * np.sqrt(2), abs=0.12)
    assert aeff == 0.99
    for c in comps:
        assert bool(c.contains(c.x0[None, :])[0])


def test_connected_components_empty_region(l2_2d):
    # a set the probe grid misses entirely counts as degenerate input
    tiny = ball([0.5, 0.5], 1e-9, h_geo=0.3)
    with pytest.raises(ValueError, match="no members"):
        connected_components(tiny, l2_2d, resolution=0.3)


def test_annulus_membership():
    an = annulus()
    pts = np.array([[0.75, 0.0], [0.25, 0.0], [1.2, 0.0], [0.0, -0.6]])
    assert list(an.contains(pts)) == [True, False, False, True]
