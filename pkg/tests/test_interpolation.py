import numpy as np
import pytest

from liprank.geometry import Norm, ball, box, erode
from liprank.interpolation import (
    Hypercube,
    Mesh,
    MeshError,
    MeshFunction,
    VertexTable,
    build_mesh,
    cube_gradient,
    cube_interpolate,
    cube_weights,
    face_consistency_check,
    hat_value,
    interp_bounds_check,
    _gammas,
)
from liprank.smoothing import SmoothedFunction


def recursive_axis_interp(values, loc):
    """Independent oracle: interpolate axis by axis, one dimension at a time.

    ``values`` follows the lexicographic vertex order of _gammas (last axis
    fastest); ``loc`` is the local coordinate in [0,1]^N.
    """
    vals = np.asarray(values, dtype=float)
    for s in reversed(loc):
        pairs = vals.reshape(-1, 2)
        vals = pairs[:, 0] * (1 - s) + pairs[:, 1] * s
    return float(vals[0])


def test_weights_sum_to_one_and_nonnegative():
    rng = np.random.default_rng(0)
    loc = rng.uniform(0, 1, (500, 3))
    w = cube_weights(loc)
    assert np.abs(w.sum(-1) - 1.0).max() < 1e-12
    assert w.min() >= 0.0


def test_vertex_reproduction():
    cube = Hypercube(np.array([0.2, -0.3]), 0.5)
    vals = np.array([1.0, 2.0, -3.0, 0.5])
    for g, v in zip(_gammas(2), vals):
        pt = cube.anchor + cube.edge * g
        assert cube_interpolate(vals, cube, pt) == pytest.approx(v, abs=1e-14)


def test_1d_midpoint():
    cube = Hypercube(np.array([0.0]), 1.0)
    assert cube_interpolate(np.array([0.0, 2.0]), cube, np.array([0.5])) == 1.0


def test_2d_center_average():
    cube = Hypercube(np.zeros(2), 1.0)
    vals = np.array([0.0, 1.0, 1.0, 2.0])
    assert cube_interpolate(vals, cube, np.array([0.5, 0.5])) == pytest.approx(1.0)


def test_outside_cube_rejected():
    cube = Hypercube(np.zeros(2), 1.0)
    with pytest.raises(ValueError, match="outside"):
        cube_interpolate(np.zeros(4), cube, np.array([1.5, 0.5]))


def test_multilinear_reproduction_random_cubes():
    rng = np.random.default_rng(1)
    for _ in range(100):
        dim = int(rng.integers(1, 4))
        cube = Hypercube(rng.normal(size=dim), float(rng.uniform(0.2, 2.0)))
        coeff = rng.normal(size=2 ** dim)

        def g(X):
            X = np.atleast_2d(X)
            out = np.zeros(len(X))
            for c, gam in zip(coeff, _gammas(dim)):
                term = np.ones(len(X)) * c
                for j, gj in enumerate(gam):
                    if gj:
                        term = term * X[:, j]
                out += term
            return out

        vals = g(cube.vertices())
        pts = cube.anchor + cube.edge * rng.uniform(0, 1, (20, dim))
        assert np.abs(cube_interpolate(vals, cube, pts) - g(pts)).max() < 1e-12


def test_agrees_with_recursive_axis_oracle():
    rng = np.random.default_rng(2)
    for _ in range(50):
        dim = int(rng.integers(1, 4))
        cube = Hypercube(rng.normal(size=dim), float(rng.uniform(0.3, 1.5)))
        vals = rng.normal(size=2 ** dim)
        for _ in range(20):
            loc = rng.uniform(0, 1, dim)
            pt = cube.anchor + cube.edge * loc
            ours = cube_interpolate(vals, cube, pt)
            oracle = recursive_axis_interp(vals, loc)
            assert ours == pytest.approx(oracle, abs=1e-12)


def test_gradient_affine_exact():
    cube = Hypercube(np.array([0.1, 0.4]), 0.7)
    a = np.array([2.0, -1.5])
    vals = cube.vertices() @ a + 3.0
    z = cube.anchor + cube.edge * np.array([0.3, 0.6])
    assert np.allclose(cube_gradient(vals, cube, z), a, atol=1e-12)


def test_gradient_center_divided_differences():
    cube = Hypercube(np.zeros(2), 1.0)
    vals = np.array([0.0, 1.0, 1.0, 2.0])
    g = cube_gradient(vals, cube, np.array([0.5, 0.5]))
    assert np.allclose(g, [1.0, 1.0])
    assert np.allclose(cube_gradient(np.full(4, 3.3), cube, np.array([0.5, 0.5])), 0.0)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    cube = Hypercube(np.array([-0.2, 0.5, 1.0]), 0.4)
    vals = rng.normal(size=8)
    z = cube.anchor + cube.edge * rng.uniform(0.2, 0.8, 3)
    g = cube_gradient(vals, cube, z)
    h = 1e-7
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd = (cube_interpolate(vals, cube, z + e) - cube_interpolate(vals, cube, z - e)) / (2 * h)
        assert abs(fd - g[j]) < 1e-7 * max(1, abs(g[j])) * 10


# -- meshes -------------------------------------------------------------------


def test_build_mesh_1d_interval():
    mhat = box([-0.1], [1.1], h_geo=0.01)
    mesh = build_mesh(erode(mhat, 0.1), 0.01, np.array([0.5]))
    pts = mesh.vertex_points()
    assert pts.min() >= -0.05 - 1e-12
    assert pts.max() <= 1.05 + 1e-12
    # covers the 2r-erosion [0, 1]
    assert pts.min() <= 0.0 and pts.max() >= 1.0
    assert erode(mhat, 0.05).contains(pts).all()


def test_build_mesh_empty_region():
    mhat = box([0.0], [0.2], h_geo=0.01)
    with pytest.raises(MeshError):
        build_mesh(erode(mhat, 0.2), 0.002, np.array([0.1]))


def test_build_mesh_disk_vertex_count():
    mhat = ball([0.0, 0.0], 1.0, h_geo=0.02)
    delta = 0.02
    mesh = build_mesh(erode(mhat, 0.2), delta, np.zeros(2))
    # region is the 0.8-disk; vertex count tracks area / delta^2
    expect = np.pi * 0.8 ** 2 / delta ** 2
    assert abs(mesh.n_vertices - expect) / expect < 0.2


def test_mesh_rejects_oversized_delta():
    mhat = box([-0.1], [1.1], h_geo=0.01)
    with pytest.raises(MeshError, match="too large"):
        build_mesh(erode(mhat, 0.04), 0.05, np.array([0.5]))


def test_locate_face_rule_prefers_smaller_anchor():
    mhat = box([-0.8, -0.8], [1.8, 1.8], h_geo=0.02)
    mesh = build_mesh(erode(mhat, 0.6), 0.1, np.array([0.5, 0.5]))
    _, anchors = mesh.locate(np.array([[0.6, 0.55]]))   # x on a lattice plane
    assert anchors[0][0] == 0   # lower cube along axis 0 preferred
    vals = VertexTable(mesh)
    for arr in vals.arrays:
        arr[...] = 1.0
    mf = MeshFunction(mesh, vals)
    assert mf(np.array([[0.6, 0.55]]))[0] == pytest.approx(1.0)


def test_face_consistency_adjacent_cubes():
    mhat = box([-0.8, -0.8], [1.8, 1.8], h_geo=0.02)
    mesh = build_mesh(erode(mhat, 0.6), 0.1, np.array([0.5, 0.5]))
    table = VertexTable(mesh)
    rng = np.random.default_rng(4)
    for arr in table.arrays:
        arr[...] = rng.normal(size=arr.shape)
    a = np.array([0, 0])
    for b in ([1, 0], [0, 1]):
        assert face_consistency_check(table, mesh, a, np.array(b))
    with pytest.raises(ValueError, match="adjacent"):
        face_consistency_check(table, mesh, a, np.array([1, 1]))


def test_mesh_function_well_defined_across_cubes():
    mhat = box([-0.8, -0.8], [1.8, 1.8], h_geo=0.02)
    mesh = build_mesh(erode(mhat, 0.6), 0.1, np.array([0.5, 0.5]))
    table = VertexTable(mesh)
    rng = np.random.default_rng(5)
    for arr in table.arrays:
        arr[...] = rng.normal(size=arr.shape)
    mf = MeshFunction(mesh, table)
    # points on shared edges: nudging across the face changes nothing
    pts = np.array([[0.5, 0.33], [0.21, 0.4], [0.3, 0.3]])
    v0 = mf(pts)
    v_eps = mf(pts + 1e-13)
    assert np.abs(v0 - v_eps).max() < 1e-9


def test_hat_functions_partition_of_unity():
    mhat = box([-0.8, -0.8], [1.8, 1.8], h_geo=0.02)
    mesh = build_mesh(erode(mhat, 0.6), 0.1, np.array([0.5, 0.5]))
    rng = np.random.default_rng(6)
    pts = rng.uniform(0.05, 0.95, (1000, 2))
    _, anchors = mesh.locate(pts)
    total = np.zeros(len(pts))
    for g in _gammas(2):
        for i in range(len(pts)):
            total[i] += hat_value(mesh, anchors[i] + g, pts[i][None, :])[0]
    assert np.abs(total - 1.0).max() < 1e-12


def test_hat_values_at_vertices():
    mhat = box([-0.8, -0.8], [1.8, 1.8], h_geo=0.02)
    mesh = build_mesh(erode(mhat, 0.6), 0.1, np.array([0.5, 0.5]))
    v = np.array([1, 1])
    vp = mesh.x0 + mesh.delta * v
    assert hat_value(mesh, v, vp[None, :])[0] == pytest.approx(1.0)
    other = mesh.x0 + mesh.delta * np.array([2, 1])
    assert hat_value(mesh, v, other[None, :])[0] == pytest.approx(0.0)
    center = mesh.x0 + mesh.delta * (v + 0.5)
    assert hat_value(mesh, v, center[None, :])[0] == pytest.approx(0.25)


def test_mesh_json_dump(tmp_path):
    mhat = box([-0.3], [1.3], h_geo=0.01)
    mesh = build_mesh(erode(mhat, 0.12), 0.02, np.array([0.5]))
    d = mesh.to_json(str(tmp_path / "mesh.json"))
    assert set(d) == {"x0", "delta", "cubes", "vertices"}
    assert len(d["vertices"]) == mesh.n_vertices
    table = VertexTable(mesh)
    for arr in table.arrays:
        arr[...] = 0.0
    table.to_csv(str(tmp_path / "coeff.csv"))
    lines = (tmp_path / "coeff.csv").read_text().splitlines()
    assert lines[0] == "i0,value"
    assert len(lines) == mesh.n_vertices + 1


def test_interp_bounds_check_affine_and_smoothed(l1_2d):
    mhat = box([-0.4, -0.4], [1.4, 1.4], h_geo=0.02)
    mesh = build_mesh(erode(mhat, 0.2), 0.03, np.array([0.5, 0.5]))
    a = np.array([0.6, -0.8])
    g_affine = lambda X: np.atleast_2d(X) @ a
    table = VertexTable(mesh)
    coords = mesh.vertex_coords()
    table.set_values(coords, g_affine(mesh.vertex_points()))
    lip_a = float(l1_2d.dual(a[None, :])[0])
    rep = interp_bounds_check(g_affine, lip_a, 0.0, mesh, table, l1_2d.K, l1_2d,
                              n_cubes=20, seed=0)
    assert rep["ok"], rep
    assert rep["lip_measured"] <= lip_a + 1e-9
