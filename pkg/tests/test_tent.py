import numpy as np
import pytest

from anivex.campanato import aggregate_norm
from anivex.dilation import new_dilation
from anivex.errors import CoverFailure
from anivex.exponents import constant_exponent, luxemburg_norm
from anivex.grid import GridFunction, uniform_grid
from anivex.search import BallConfiguration
from anivex.tent import (
    ScaleFunction,
    ball_footprint,
    hl_maximal,
    lusin_area,
    maximal_dilate,
    tent_atom_validate,
    tent_atomic_decomposition,
    tent_contains,
    whitney_cover,
    zero_scale_function,
)


@pytest.fixture(scope="module")
def d1():
    return new_dilation([[2.0]])


@pytest.fixture(scope="module")
def g1():
    return uniform_grid([-8.0], [8.0], 2048)


@pytest.fixture(scope="module")
def p1(g1):
    return constant_exponent(g1, 1.0)


def blob_scale_function(grid, window, centers, widths, scale_weights, amp=1.0):
    xs = grid.meshes()
    layers = []
    for ell in range(window[0], window[1] + 1):
        w = scale_weights.get(ell, 0.0)
        layer = np.zeros(grid.resolution)
        if w != 0.0:
            for c, sd in zip(centers, widths):
                r2 = sum((m - ci) ** 2 for m, ci in zip(xs, np.atleast_1d(c)))
                layer += amp * w * np.exp(-r2 / (2 * sd**2)) * (np.sqrt(r2) < 3 * sd)
        layers.append(layer)
    return ScaleFunction(grid, window[0], window[1], np.stack(layers))


class TestLusinArea:
    def test_zero(self, d1, g1):
        G = zero_scale_function(g1, (-3, 2))
        assert np.all(lusin_area(G, d1).values == 0.0)

    def test_indicator_overlap_formula(self, d1, g1):
        # G = 1_{B_0}(y) at scale 0: A(G)(x)^2 = max(0, 1 - |x|).
        G = zero_scale_function(g1, (0, 0))
        x = g1.axes()[0]
        G.values[0] = (np.abs(x) < 0.5).astype(float)
        area = lusin_area(G, d1)
        expect = np.sqrt(np.maximum(0.0, 1.0 - np.abs(x)))
        h = g1.spacing[0]
        assert np.max(np.abs(area.values - expect) * (expect > 0.1)) < np.sqrt(2 * h)
        total = np.sum(area.values**2) * g1.cell_volume
        assert total == pytest.approx(1.0, rel=0.02)

    def test_brute_force_oracle(self, d1):
        g = uniform_grid([-2.0], [2.0], 64)
        rng = np.random.default_rng(2)
        G = ScaleFunction(g, -2, 1, rng.normal(size=(4, 64)))
        area = lusin_area(G, d1)
        pts = g.points()
        brute = np.zeros(64)
        for i, x in enumerate(pts):
            total = 0.0
            for ell in range(-2, 2):
                ball = d1.ball(x, ell)
                inside = d1.ball_contains_many(ball, pts)
                total += (
                    np.sum(np.abs(G.layer(ell)).ravel()[inside] ** 2)
                    * g.cell_volume
                    / d1.bpow(ell)
                )
            brute[i] = np.sqrt(total)
        assert np.allclose(area.values, brute, atol=1e-10)

    def test_fubini_identity(self, d1):
        residuals = []
        for res, tol in ((2048, 0.02), (4096, 0.01)):
            g = uniform_grid([-8.0], [8.0], res)
            G = blob_scale_function(
                g, (-3, 1), [0.5, -1.0], [0.6, 0.9], {-2: 0.6, -1: 0.8, 0: 1.0, 1: 0.5}
            )
            lhs = np.sum(lusin_area(G, d1).values ** 2) * g.cell_volume
            rhs = np.sum(np.abs(G.values) ** 2) * g.cell_volume
            residuals.append(abs(lhs - rhs) / rhs)
            assert lhs == pytest.approx(rhs, rel=tol)
        # First-order convergence: doubling the resolution halves the residual.
        assert residuals[1] <= 0.65 * residuals[0]


class TestTentContains:
    def test_tiny_ball_deep_inside(self, d1):
        ball = d1.ball([0.3], 1)
        assert tent_contains(d1, ball, [0.3], -8)

    def test_interval_cases(self, d1):
        b1 = d1.ball([0.0], 1)
        assert tent_contains(d1, b1, [0.0], 1)
        assert not tent_contains(d1, b1, [0.9], 0)

    def test_scale_exceeds_ball(self, d1):
        b1 = d1.ball([0.0], 1)
        assert not tent_contains(d1, b1, [0.0], 2)


class TestHLMaximal:
    def test_zero(self, d1, g1):
        f = GridFunction(g1, np.zeros(g1.resolution))
        assert np.all(hl_maximal(f, d1, (-3, 2)).values == 0.0)

    def test_indicator_center_and_satellite(self, d1, g1):
        x = g1.axes()[0]
        f = GridFunction(g1, (np.abs(x) < 0.5).astype(float))
        out = hl_maximal(f, d1, (-3, 2))
        center = np.argmin(np.abs(x))
        at_one = np.argmin(np.abs(x - 1.0))
        assert out.values[center] == pytest.approx(1.0, rel=1e-12)
        assert out.values[at_one] == pytest.approx(0.5, abs=0.02)

    def test_equals_one_on_level_set(self, d1, g1):
        x = g1.axes()[0]
        mask = (np.abs(x - 0.5) < 1.2).astype(float)
        out = hl_maximal(GridFunction(g1, mask), d1, (-3, 2))
        assert np.all(out.values[mask > 0] == 1.0)


class TestMaximalDilate:
    def test_contains_original(self, d1, g1):
        x = g1.axes()[0]
        mask = np.abs(x - 1.0) < 0.7
        out = maximal_dilate(mask, d1, g1, (-3, 2), 0.5)
        assert np.all(out[mask])

    def test_interval_doubling(self, d1, g1):
        x = g1.axes()[0]
        mask = np.abs(x) < 0.5
        out = maximal_dilate(mask, d1, g1, (-6, 3), 0.5)
        # With gamma = 1/2 the dilation reaches about twice the interval.
        assert np.all(out[np.abs(x) < 0.95])
        assert not np.any(out[np.abs(x) > 2.5])


class TestWhitneyCover:
    def test_cover_is_complete_and_guarded(self, d1, g1):
        x = g1.axes()[0]
        mask = (np.abs(x - 0.3) < 1.1) | (np.abs(x + 3.0) < 0.4)
        balls = whitney_cover(mask, d1, g1, (-8, 3))
        covered = np.zeros(g1.resolution, dtype=bool)
        for cb in balls:
            fp = ball_footprint(d1, g1, cb.scale)
            from anivex.tent import _paste_centered

            covered |= _paste_centered(g1.resolution, fp, cb.center_index)
        assert np.all(covered[mask])
        for cb in balls:
            if cb.guarded:
                guard = ball_footprint(d1, g1, cb.scale + d1.omega)
                stamp = _paste_centered(g1.resolution, guard, cb.center_index)
                assert np.all(mask[stamp])

    def test_bounded_overlap(self, d1, g1):
        x = g1.axes()[0]
        mask = np.abs(x) < 2.0
        balls = whitney_cover(mask, d1, g1, (-8, 3))
        from anivex.tent import _paste_centered

        counts = np.zeros(g1.resolution)
        for cb in balls:
            fp = ball_footprint(d1, g1, cb.scale)
            counts += _paste_centered(g1.resolution, fp, cb.center_index)
        assert counts.max() <= 8


class TestDecomposition:
    def test_zero_input(self, d1, g1, p1):
        G = zero_scale_function(g1, (-3, 1))
        atoms = tent_atomic_decomposition(G, p1, d1)
        assert atoms.entries == []
        assert atoms.leakage_ratio == 0.0

    def test_single_node(self, d1, g1, p1):
        G = zero_scale_function(g1, (-4, 1))
        idx = 1024
        G.values[2, idx] = 3.0  # scale -2 node
        atoms = tent_atomic_decomposition(G, p1, d1, leakage_bound=0.02)
        recon = atoms.reconstruction()
        assert recon.values[2, idx] == pytest.approx(3.0, rel=1e-12)
        assert atoms.leakage_ratio <= 0.02
        total_weight = sum(e.weight for e in atoms.entries)
        peak = lusin_area(G, d1).values.max()
        assert total_weight > 0
        assert np.log2(total_weight) == pytest.approx(np.log2(peak), abs=4.0)

    @pytest.mark.parametrize("case", range(4))
    def test_random_blobs_reconstruct(self, d1, g1, p1, case):
        rng = np.random.default_rng(200 + case)
        centers = rng.uniform(-3, 3, size=2)
        G = blob_scale_function(
            g1,
            (-5, 1),
            centers,
            rng.uniform(0.3, 0.8, size=2),
            {-4: 1.0, -2: rng.uniform(0.3, 1.0), 0: rng.uniform(0.2, 0.6)},
        )
        atoms = tent_atomic_decomposition(G, p1, d1)
        covered = atoms.covered_mask()
        recon = atoms.reconstruction()
        # Exact reconstruction on covered nodes, in value and in modulus.
        assert np.array_equal(recon.values[covered], G.values[covered])
        acc_abs = atoms.absolute_reconstruction()
        node_count = np.zeros(G.values.size)
        for e in atoms.entries:
            node_count[e.node_indices] += 1
        assert np.array_equal(acc_abs.values[covered], np.abs(G.values)[covered])
        assert node_count.max() <= 1  # disjoint supports
        assert atoms.leakage_ratio <= 0.01
        # Pointwise bound with equality on the support.
        for e in atoms.entries[:10]:
            expect = (2.0 ** float(-e.level)) / luxemburg_norm(
                _indicator_of(e.ball, d1, g1), p1
            )
            got = np.abs(e.node_values) / np.maximum(
                np.abs(G.values.ravel()[e.node_indices]), 1e-300
            )
            assert np.allclose(got, expect, rtol=1e-9)

    def test_support_validates_exactly(self, d1, g1, p1):
        G = blob_scale_function(g1, (-4, 0), [0.0], [0.5], {-3: 1.0, -1: 0.5})
        atoms = tent_atomic_decomposition(G, p1, d1)
        for e in atoms.entries[:12]:
            report = tent_atom_validate(e.atom, e.ball, p1, d1)
            assert report.support_exact

    def test_scaling_family_stability(self, d1, g1, p1):
        G = blob_scale_function(g1, (-4, 0), [0.5], [0.6], {-3: 1.0, -1: 0.4})
        ratios = []
        for c in (1.0, 2.0, 4.0):
            scaled = G.with_values(c * G.values)
            atoms = tent_atomic_decomposition(scaled, p1, d1)
            cfg = BallConfiguration([(e.ball, e.weight) for e in atoms.entries])
            agg = aggregate_norm(cfg, p1, p1.underline_p, d1)
            tnorm = luxemburg_norm(lusin_area(scaled, d1), p1)
            ratios.append(agg / tnorm)
        mid = np.median(ratios)
        assert np.all(np.abs(np.array(ratios) / mid - 1.0) <= 0.3)

    def test_cover_failure_raised(self, d1, g1, p1):
        # A node at the box edge whose ball sticks outside can never be
        # tented, so its mass must leak.
        G = zero_scale_function(g1, (0, 1))
        G.values[1, 2] = 1.0
        with pytest.raises(CoverFailure):
            tent_atomic_decomposition(G, p1, d1, leakage_bound=0.01)


def _indicator_of(ball, d, grid):
    from anivex.grid import indicator

    return indicator(grid, d, ball)


class TestAtomValidate:
    def test_zero_atom_passes(self, d1, g1, p1):
        a = zero_scale_function(g1, (-3, 0))
        report = tent_atom_validate(a, d1.ball([0.0], 1), p1, d1)
        assert report.support_exact
        assert report.infinity_atom

    def test_oversized_atom_fails(self, d1, g1, p1):
        G = blob_scale_function(g1, (-4, 0), [0.0], [0.4], {-3: 1.0})
        atoms = tent_atomic_decomposition(G, p1, d1)
        entry = max(atoms.entries, key=lambda e: np.abs(e.node_values).max())
        big = entry.atom.with_values(entry.atom.values * 1e4)
        report = tent_atom_validate(big, entry.ball, p1, d1)
        assert not report.infinity_atom
        assert any(r > 1.0 for r in report.size_ratios.values())


class Test2DSmoke:
    def test_decomposition_diag_matrix(self):
        d2 = new_dilation([[2.0, 0.0], [0.0, 3.0]])
        g2 = uniform_grid([-4.0, -4.0], [4.0, 4.0], (64, 64))
        p2 = constant_exponent(g2, 1.0)
        xs, ys = g2.meshes()
        G = zero_scale_function(g2, (-3, 0))
        r2 = xs**2 + ys**2
        G.values[1] = np.exp(-r2) * (r2 < 4.0)
        G.values[3] = 0.5 * np.exp(-2 * r2) * (r2 < 2.0)
        atoms = tent_atomic_decomposition(G, p2, d2, leakage_bound=0.05)
        covered = atoms.covered_mask()
        assert np.array_equal(atoms.reconstruction().values[covered], G.values[covered])
        assert atoms.leakage_ratio <= 0.05
        for e in atoms.entries[:4]:
            assert tent_atom_validate(e.atom, e.ball, p2, d2).support_exact

    def test_lusin_area_fubini_2d(self):
        d2 = new_dilation([[2.0, 0.0], [0.0, 3.0]])
        g2 = uniform_grid([-4.0, -4.0], [4.0, 4.0], (128, 128))
        xs, ys = g2.meshes()
        G = zero_scale_function(g2, (0, 1))
        G.values[0] = np.exp(-(xs**2 + ys**2))
        G.values[1] = 0.5 * np.exp(-2 * (xs**2 + ys**2))
        lhs = np.sum(lusin_area(G, d2).values ** 2) * g2.cell_volume
        rhs = np.sum(np.abs(G.values) ** 2) * g2.cell_volume
        assert lhs == pytest.approx(rhs, rel=0.05)
