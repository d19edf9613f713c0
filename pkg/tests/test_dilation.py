import numpy as np
import pytest

from anivex.dilation import new_dilation, unit_ball_volume
from anivex.errors import NotExpansive, ScaleOverflow


@pytest.fixture(scope="module")
def d1():
    return new_dilation([[2.0]])


@pytest.fixture(scope="module")
def d2():
    return new_dilation([[2.0, 0.0], [0.0, 3.0]])


class TestConstruction:
    def test_scalar_doubling(self, d1):
        # Closed form: P = sum 2^k 4^-k = 2, Delta = (-1/2, 1/2), r = sqrt(2).
        assert d1.b == 2.0
        assert d1.shape[0, 0] == pytest.approx(2.0, rel=1e-12)
        assert d1.r == pytest.approx(np.sqrt(2.0), rel=1e-12)
        assert d1.omega == 2
        # Delta = {x: 2x^2 < c} has length sqrt(2c) = 1.
        assert d1.level_c == pytest.approx(0.5, rel=1e-12)
        half = d1.ball_bounding_halfwidths(0)
        assert half[0] == pytest.approx(0.5, rel=1e-12)

    def test_diagonal_area_one(self, d2):
        assert d2.b == pytest.approx(6.0, rel=1e-14)
        # |Delta| = c * pi / sqrt(det P) must equal 1.
        area = d2.level_c * unit_ball_volume(2) / np.sqrt(np.linalg.det(d2.shape))
        assert area == pytest.approx(1.0, abs=1e-12)

    def test_not_expansive(self):
        with pytest.raises(NotExpansive):
            new_dilation([[1.0]])
        with pytest.raises(NotExpansive):
            new_dilation([[0.5, 0.0], [0.0, 3.0]])

    def test_dilation_inequality_matrix(self, d2):
        gram = d2.matrix.T @ d2.shape @ d2.matrix - d2.r**2 * d2.shape
        assert np.linalg.eigvalsh(gram).min() >= -1e-12

    def test_omega_bracketing(self, d1, d2):
        for d in (d1, d2):
            assert d.r**d.omega >= 2.0
            assert d.r ** (d.omega - 1) < 2.0

    def test_shear_non_diagonalizable(self):
        d = new_dilation([[2.0, 1.0], [0.0, 2.0]])
        assert 1.0 < d.lambda_minus <= 2.0
        assert d.lambda_plus >= 2.0
        gram = d.matrix.T @ d.shape @ d.matrix - d.r**2 * d.shape
        assert np.linalg.eigvalsh(gram).min() >= -1e-9


class TestBalls:
    def test_contains_interval(self, d1):
        b0 = d1.ball([0.0], 0)
        assert d1.ball_contains(b0, [0.0])
        assert d1.ball_contains(b0, [0.49])
        assert not d1.ball_contains(b0, [0.51])
        b1 = d1.ball([0.0], 1)
        assert d1.ball_contains(b1, [0.75])

    def test_volume_powers(self, d1, d2):
        assert d1.ball_volume(d1.ball([0.0], 0)) == 1.0
        assert d1.ball_volume(d1.ball([0.0], 3)) == 8.0
        assert d2.ball_volume(d2.ball([0.0, 0.0], -1)) == pytest.approx(1.0 / 6.0, rel=1e-14)

    def test_monotone_nesting(self, d2):
        rng = np.random.default_rng(7)
        pts = rng.normal(size=(200, 2)) * 2.0
        for k in (-2, 0, 1):
            inner = d2.ball([0.3, -0.1], k)
            outer = d2.ball([0.3, -0.1], k + 1)
            in_small = d2.ball_contains_many(inner, pts)
            in_big = d2.ball_contains_many(outer, pts)
            assert np.all(in_big[in_small])

    def test_monte_carlo_volume(self, d2):
        rng = np.random.default_rng(11)
        for k in (-1, 0, 2):
            ball = d2.ball([0.0, 0.0], k)
            half = d2.ball_bounding_halfwidths(k)
            pts = rng.uniform(-1.0, 1.0, size=(1_000_000, 2)) * half
            frac = d2.ball_contains_many(ball, pts).mean()
            est = frac * np.prod(2.0 * half)
            assert est == pytest.approx(d2.b ** float(k), rel=0.01)


class TestStepQuasiNorm:
    def test_origin(self, d1):
        assert d1.step_quasi_norm([0.0]) == 0.0

    def test_interval_levels(self, d1):
        # 0.75 sits in B_1 \ B_0 = (-1,1) \ (-1/2,1/2).
        assert d1.step_quasi_norm([0.75]) == 1.0
        assert d1.step_quasi_norm([1.5]) == 2.0
        assert d1.step_quasi_norm([2 * 0.75]) == 2 * d1.step_quasi_norm([0.75])

    @pytest.mark.parametrize("mat", [[[2.0]], [[2.0, 0.0], [0.0, 3.0]]])
    def test_exact_homogeneity(self, mat):
        d = new_dilation(mat)
        rng = np.random.default_rng(123)
        pts = rng.uniform(-8.0, 8.0, size=(10_000, d.n))
        r_x = d.step_quasi_norm_many(pts)
        r_ax = d.step_quasi_norm_many(pts @ d.matrix.T)
        assert np.array_equal(r_ax, d.b * r_x)

    def test_symmetry(self, d2):
        rng = np.random.default_rng(5)
        pts = rng.normal(size=(500, 2)) * 3.0
        assert np.array_equal(d2.step_quasi_norm_many(pts), d2.step_quasi_norm_many(-pts))

    def test_scale_overflow(self, d1):
        tiny = np.array([[2.0 ** (-d1.level_cap - 6)]])
        with pytest.raises(ScaleOverflow):
            d1.step_levels(tiny)

    def test_quasi_triangle_stable(self, d2):
        h1 = d2.estimate_quasi_triangle(pairs=4000, seed=99)
        h2 = d2.estimate_quasi_triangle(pairs=8000, seed=99)
        assert np.isfinite(h1) and np.isfinite(h2)
        assert h2 <= 2.0 * h1 + 1.0


class TestContainment:
    def test_identity(self, d1, d2):
        for d in (d1, d2):
            ball = d.ball(np.zeros(d.n), 1)
            assert d.ball_containment(ball, ball)

    def test_nested_scales(self, d1):
        b0 = d1.ball([0.0], 0)
        b1 = d1.ball([0.0], 1)
        assert d1.ball_containment(b0, b1)
        assert not d1.ball_containment(b1, b0)

    def test_shifted_interval(self, d1):
        inner = d1.ball([0.9], 0)  # (0.4, 1.4)
        outer = d1.ball([0.0], 1)  # (-1, 1)
        assert not d1.ball_containment(inner, outer)
        assert d1.ball_containment(d1.ball([0.4], 0), outer)

    def test_interval_oracle(self, d1):
        # 1D oracle: centers/half-lengths reduce containment to arithmetic.
        rng = np.random.default_rng(17)
        for _ in range(300):
            ki, ko = rng.integers(-3, 4, size=2)
            ci, co = rng.uniform(-2, 2, size=2)
            ri, ro = 0.5 * 2.0 ** float(ki), 0.5 * 2.0 ** float(ko)
            expected = abs(ci - co) + ri <= ro * (1 + 1e-12)
            got = d1.ball_containment(d1.ball([ci], int(ki)), d1.ball([co], int(ko)))
            assert got == expected, (ci, ki, co, ko)

    def test_ellipse_oracle_by_sampling(self, d2):
        # Boundary sampling of the inner ellipse bounds the exact maximizer.
        rng = np.random.default_rng(23)
        theta = np.linspace(0, 2 * np.pi, 4001)
        circle = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        chol = np.linalg.cholesky(d2.shape)
        sphere_to_delta = np.linalg.inv(chol.T) * np.sqrt(d2.level_c)
        for _ in range(60):
            ki, ko = rng.integers(-2, 3, size=2)
            ci = rng.uniform(-1, 1, size=2)
            co = rng.uniform(-1, 1, size=2)
            inner = d2.ball(ci, int(ki))
            outer = d2.ball(co, int(ko))
            boundary = ci + circle @ (d2.power(int(ki)) @ sphere_to_delta).T
            vals = d2.form_values(boundary - co, int(ko))
            sampled_max = vals.max()
            exact = d2.containment_max_values(int(ki), int(ko), (ci - co)[None, :])[0]
            assert exact >= sampled_max * (1 - 1e-9)
            assert exact <= sampled_max * (1 + 1e-3) + 1e-12


class TestBpowChain:
    def test_links_exact(self, d2):
        cap = d2.level_cap
        for k in range(-cap, cap - 1):
            assert d2.b * d2.bpow(k) == d2.bpow(k + 1)

    def test_close_to_true_powers(self, d2):
        for k in range(-30, 30):
            assert d2.bpow(k) == pytest.approx(d2.b ** float(k), rel=1e-13)
