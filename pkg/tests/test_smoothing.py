import numpy as np
import pytest
from scipy.integrate import quad

from liprank.geometry import Norm, box, estimate_lipschitz
from liprank.smoothing import (
    DEFAULT_QUAD_SLACK,
    BallLatticeRule,
    Mollifier,
    SmoothedFunction,
    convolve,
    differentiability_modulus,
    mollifier_normalize,
    residual_check,
    smoothing_bounds_check,
)

# frozen oracle values (adaptive quadrature of the bump profile, run ahead
# of the implementation): integral over the unit ball per dimension
ORACLE_A = {1: 2.2522836210435817, 2: 2.143565775792237,
            3: 2.2671167396083267, 4: 2.611132508627123}
# integral of kernel_0.1 * |y| over the 1d ball of radius 0.1
ORACLE_CONV_ABS = 0.03344539977099754


@pytest.mark.parametrize("dim", [1, 2, 3, 4])
def test_normalization_matches_adaptive_oracle(dim):
    assert mollifier_normalize(dim) == pytest.approx(ORACLE_A[dim], rel=2e-8)


def test_normalization_against_live_quadrature_oracle():
    val, _ = quad(lambda t: np.exp(1.0 / (t * t - 1.0)), -1, 1, epsabs=1e-14)
    assert mollifier_normalize(1) == pytest.approx(1.0 / val, rel=1e-9)


def test_normalization_radial_vs_tensor_grid_2d():
    # independent tensor-grid quadrature over the bounding square
    m = 2001
    ax = (np.arange(m) + 0.5) / m * 2.0 - 1.0
    g = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1)
    t2 = (g * g).sum(-1)
    prof = np.zeros_like(t2)
    prof[t2 < 1] = np.exp(1.0 / (t2[t2 < 1] - 1.0))
    integral = prof.sum() * (2.0 / m) ** 2
    assert 1.0 / integral == pytest.approx(mollifier_normalize(2), rel=1e-6)


def test_kernel_normalized_and_supported(unit_disk):
    mol = Mollifier(2, 0.3)
    rng = np.random.default_rng(0)
    outside = rng.normal(size=(100, 2))
    outside = 0.3 * outside / np.sqrt((outside ** 2).sum(-1, keepdims=True))
    assert np.all(mol(outside) == 0.0)          # exact zero outside B(0, s)
    assert np.all(mol(outside * 0.5) > 0.0)
    # lattice mass close to one
    rule = BallLatticeRule(2, 0.3, np.zeros(2), nodes_per_axis=25)
    _, _, mass = rule.nodes_and_weights(rng.uniform(-0.1, 0.1, (50, 2)))
    assert np.abs(mass * rule.h ** 2 - 1.0).max() < 1e-4


def test_kernel_gradient_matches_finite_differences():
    mol = Mollifier(2, 0.25)
    rng = np.random.default_rng(1)
    pts = rng.uniform(-0.2, 0.2, (200, 2))
    g = mol.gradient(pts)
    h = 1e-7
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (mol(pts + e) - mol(pts - e)) / (2 * h)
        assert np.abs(fd - g[:, j]).max() < 1e-6


def test_convolve_constant_exact():
    out = convolve(lambda z: np.full(len(z), 7.0), 0.1, np.array([[0.3]]), np.zeros(1))
    assert out[0] == pytest.approx(7.0, abs=1e-12)


def test_convolve_affine_within_lattice_tolerance():
    out = convolve(lambda z: 3.0 * z[:, 0] + 1.0, 0.1,
                   np.array([[0.3], [0.111]]), np.zeros(1))
    assert np.abs(out - (3.0 * np.array([0.3, 0.111]) + 1.0)).max() < 1e-4


def test_convolve_abs_matches_dense_oracle():
    out = convolve(lambda z: np.abs(z[:, 0]), 0.1, np.array([[0.0]]),
                   np.zeros(1), nodes_per_axis=8001)
    assert out[0] > 0.0
    assert out[0] <= 0.1
    assert out[0] == pytest.approx(ORACLE_CONV_ABS, abs=1e-8)


def test_convolve_rejects_undefined_nodes():
    def partial(z):
        out = np.abs(z[:, 0])
        out[z[:, 0] > 0.35] = np.nan
        return out
    with pytest.raises(ValueError, match="undefined"):
        convolve(partial, 0.1, np.array([[0.34]]), np.zeros(1))


def test_smoothed_vanishes_at_x0_and_is_linear():
    x0 = np.array([0.2, -0.1])
    f = lambda X: np.abs(X - np.array([0.3, 0.1])).sum(-1)
    g = lambda X: np.maximum(X[:, 0], 0.4 * X[:, 1])
    sf = SmoothedFunction(f, 0.1, x0, 2)
    sg = SmoothedFunction(g, 0.1, x0, 2)
    assert sf(x0[None, :])[0] == 0.0
    a, b = 1.7, -0.4
    s_comb = SmoothedFunction(lambda X: a * f(X) + b * g(X), 0.1, x0, 2)
    pts = np.random.default_rng(2).uniform(-0.3, 0.3, (100, 2))
    lhs = s_comb(pts)
    rhs = a * sf(pts) + b * sg(pts)
    assert np.abs(lhs - rhs).max() < 1e-10


def test_smoothed_affine_gradient():
    a = np.array([1.5, -2.0])
    f = lambda X: X @ a + 0.3
    pts = np.random.default_rng(3).uniform(-0.5, 0.5, (50, 2))
    sf = SmoothedFunction(f, 0.2, np.zeros(2), 2)
    assert np.abs(sf.gradient(pts) - a).max() < 5e-3   # lattice moment error
    fine = SmoothedFunction(f, 0.2, np.zeros(2), 2, nodes_per_axis=41)
    assert np.abs(fine.gradient(pts) - a).max() < 2e-4  # decays fast in nodes


def test_smoothed_gradient_on_crease_between_slopes():
    # max of two affine pieces meeting along a line: the smoothed gradient on
    # the crease lies strictly between the slopes and matches central
    # differences of the same discrete evaluation
    a1 = np.array([1.0, 0.0])
    a2 = np.array([-1.0, 0.0])
    f = lambda X: np.maximum(X @ a1, X @ a2)   # = |x_1|
    sf = SmoothedFunction(f, 0.1, np.zeros(2), 2)
    crease = np.stack([np.zeros(9), np.linspace(-0.02, 0.02, 9)], -1)
    g = sf.gradient(crease)
    assert np.all(g[:, 0] > -1.0) and np.all(g[:, 0] < 1.0)
    h = 1e-5
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (sf(crease + e) - sf(crease - e)) / (2 * h)
        assert np.abs(fd - g[:, j]).max() < 1e-5


def test_gradient_fd_consistency_random_probes():
    f = lambda X: np.abs(X - 0.03).sum(-1)
    sf = SmoothedFunction(f, 0.15, np.zeros(2), 2)
    rng = np.random.default_rng(4)
    pts = rng.uniform(-0.4, 0.4, (1000, 2))
    g = sf.gradient(pts)
    h = 1e-6
    worst = 0.0
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (sf(pts + e) - sf(pts - e)) / (2 * h)
        scale = np.maximum(np.abs(g[:, j]), 1e-3)
        worst = max(worst, float((np.abs(fd - g[:, j]) / scale).max()))
    assert worst < 1e-4


def test_pointwise_gap_and_norm_bounds(l2_2d):
    big = box([-1.5, -1.5], [1.5, 1.5])
    rng = np.random.default_rng(5)
    samples = big.sample_interior(600, rng)
    samples = samples[big.clearance(samples) > 0.22]
    K = l2_2d.K
    x0 = np.zeros(2)
    for seed in range(3):
        r2 = np.random.default_rng(seed)
        A = r2.normal(size=(3, 2))
        A /= l2_2d.dual(A).max()
        b = r2.uniform(-1, 1, 3)
        f = lambda X, A=A, b=b: np.max(np.atleast_2d(X) @ A.T + b, axis=1)
        for r in (0.2, 0.1):
            rep = smoothing_bounds_check(f, 1.0, r, samples, l2_2d, K, x0)
            assert rep["ok"], rep
            assert rep["gap_max"] <= 2 * K * r * (1 + 1e-3) + DEFAULT_QUAD_SLACK
            assert rep["lip_smoothed"] <= 1.0 + 1e-3 + DEFAULT_QUAD_SLACK


def test_operator_norm_at_most_one_plus_slack(l2_2d):
    # random-pair sweep of smoothed kink functions measures at most 1 + 1e-3
    big = box([-1.0, -1.0], [1.0, 1.0])
    rng = np.random.default_rng(6)
    samples = big.sample_interior(900, rng)
    samples = samples[big.clearance(samples) > 0.12]
    worst = 0.0
    for seed in range(20):
        r2 = np.random.default_rng(100 + seed)
        A = r2.normal(size=(4, 2))
        A /= l2_2d.dual(A).max()
        b = r2.uniform(-0.5, 0.5, 4)
        f = lambda X, A=A, b=b: np.max(np.atleast_2d(X) @ A.T + b, axis=1)
        sf = SmoothedFunction(f, 0.1, np.zeros(2), 2)
        vals = sf(samples)
        worst = max(worst, estimate_lipschitz(None, samples, l2_2d, values=vals))
    assert worst <= 1.0 + 1e-3


def test_worst_case_kink_inflation_within_declared_slack(abs_1d):
    # dense directional sweep across the kink: the slack constant must cover it
    worst = 0.0
    for a in np.linspace(-0.004, 0.004, 9):
        f = lambda X, a=a: np.abs(X[:, 0] - a)
        sf = SmoothedFunction(f, 0.1, np.zeros(1), 1)
        xs = np.linspace(a - 0.15, a + 0.15, 1501)[:, None]
        vals = sf(xs)
        worst = max(worst, float(np.abs(np.diff(vals)).max() / (0.3 / 1500)))
    assert worst <= 1.0 + DEFAULT_QUAD_SLACK


def test_modulus_table_monotone_and_budget(l2_2d):
    bbox = (np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    dm = differentiability_modulus(0.1, 1e9, bbox, l2_2d)
    assert dm.delta == pytest.approx(0.1)      # vacuous budget: table cap r
    assert np.all(np.diff(dm.table[:, 1]) >= 0)
    tight = differentiability_modulus(0.1, 1e-3, bbox, l2_2d)
    assert tight.delta < dm.delta
    assert tight.delta > 0


def test_modulus_budget_unsatisfiable_warns(l2_2d):
    bbox = (np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    with pytest.warns(UserWarning, match="smallest"):
        dm = differentiability_modulus(0.1, 1e-30, bbox, l2_2d)
    assert not dm.satisfied
    assert dm.delta == pytest.approx(0.1 * 1e-4)


def test_modulus_scaling_between_radii(l2_2d):
    # gradient modulus scales as omega_r(d) = omega_1(d / r) / r^(dim+1)
    bbox = (np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    m1 = differentiability_modulus(1.0, 1e9, bbox, l2_2d, seed=11)
    mr = differentiability_modulus(0.5, 1e9, bbox, l2_2d, seed=11)
    for i in (8, 16, 24, 31):
        predicted = m1.table[i, 1] / 0.5 ** 3
        assert mr.table[i, 1] == pytest.approx(predicted, rel=0.02)


def test_residual_small_at_fine_steps(l2_2d):
    f = lambda X: np.abs(X).sum(-1)
    sf = SmoothedFunction(f, 0.15, np.zeros(2), 2)
    rng = np.random.default_rng(7)
    X = rng.uniform(-0.2, 0.2, (300, 2))
    H = rng.normal(size=(300, 2))
    H = 1e-3 * H / l2_2d(H)[:, None]
    res = residual_check(sf, X, H, l2_2d)
    assert res < 1e-2   # second-order in the step for the smooth evaluation
