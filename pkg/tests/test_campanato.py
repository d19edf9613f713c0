import numpy as np
import pytest

from anivex.campanato import (
    BallConfiguration,
    CampanatoParams,
    aggregate_norm,
    aggregation_vs_total_weight,
    campanato_type_functional,
    campanato_type_norm,
    classic_functional,
    countable_limit_check,
    eps_kernel_summand,
    minimal_admissible_degree,
    plain_summand,
    variant_eps_functional,
    variant_inf_functional,
)
from anivex.dilation import new_dilation
from anivex.exponents import constant_exponent
from anivex.grid import sample, uniform_grid


@pytest.fixture(scope="module")
def d1():
    return new_dilation([[2.0]])


@pytest.fixture(scope="module")
def g1():
    return uniform_grid([-8.0], [8.0], 4096)


@pytest.fixture(scope="module")
def p1(g1):
    return constant_exponent(g1, 1.0)


def single(d, center, scale, weight=1.0):
    return BallConfiguration([(d.ball(center, scale), weight)])


class TestAggregateNorm:
    @pytest.mark.parametrize("eta", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("lam", [0.3, 1.0, 4.0])
    def test_single_ball_reduces_to_weight(self, d1, g1, p1, eta, lam):
        cfg = single(d1, [0.0], 0, lam)
        assert aggregate_norm(cfg, p1, eta, d1) == pytest.approx(lam, rel=1e-9)

    def test_two_disjoint_balls(self, d1, g1, p1):
        lam = 0.7
        cfg = BallConfiguration(
            [(d1.ball([-3.0], 0), lam), (d1.ball([3.0], 0), lam)]
        )
        assert aggregate_norm(cfg, p1, 1.0, d1) == pytest.approx(2 * lam, rel=1e-8)

    def test_zero_weights_ignored(self, d1, g1, p1):
        cfg = BallConfiguration(
            [(d1.ball([0.0], 0), 2.5), (d1.ball([1.0], 1), 0.0)]
        )
        assert aggregate_norm(cfg, p1, 1.0, d1) == pytest.approx(2.5, rel=1e-9)


class TestClassicFunctional:
    def test_linear_oscillation(self, d1, g1, p1):
        f = sample(g1, lambda x: x)
        res = classic_functional(f, d1, d1.ball([0.0], 0), p1, 1.0, 0)
        assert res.projection_value == pytest.approx(0.25, abs=1e-4)

    def test_polynomials_annihilated(self, d1, g1, p1):
        f = sample(g1, lambda x: 2.0 - 0.3 * x)
        res = classic_functional(f, d1, d1.ball([0.5], 1), p1, 2.0, 1)
        assert res.projection_value <= 1e-10
        assert res.refined_value <= 1e-10

    def test_quadratic_q2_closed_form(self, d1, g1, p1):
        f = sample(g1, lambda x: x**2)
        res = classic_functional(f, d1, d1.ball([0.0], 1), p1, 2.0, 1)
        assert res.projection_value == pytest.approx(np.sqrt(4.0 / 45.0), abs=1e-4)
        # For q = 2 the projection is the exact infimum.
        assert res.refined_value == pytest.approx(res.projection_value, rel=1e-10)


class TestConfigurationFunctional:
    def test_single_ball_reduction_identity(self, d1, g1, p1):
        f = sample(g1, lambda x: np.sin(x))
        prm = CampanatoParams(p=p1, q=2.0, s=1, eta=0.8)
        for center, scale, lam in [([0.0], 0, 1.0), ([1.3], 1, 0.4), ([-2.0], 2, 5.0)]:
            cfg = single(d1, center, scale, lam)
            via_config = campanato_type_functional(f, cfg, prm, d1)
            via_classic = classic_functional(
                f, d1, d1.ball(center, scale), p1, prm.q, prm.s
            ).projection_value
            assert via_config == pytest.approx(via_classic, rel=1e-10)

    def test_polynomial_gives_zero(self, d1, g1, p1):
        f = sample(g1, lambda x: 1.0 + 0.5 * x)
        prm = CampanatoParams(p=p1, q=1.0, s=1, eta=1.0)
        cfg = BallConfiguration(
            [(d1.ball([0.0], 0), 1.0), (d1.ball([2.0], 1), 0.5)]
        )
        assert campanato_type_functional(f, cfg, prm, d1) <= 1e-10

    def test_worked_quarter(self, d1, g1, p1):
        f = sample(g1, lambda x: x)
        prm = CampanatoParams(p=p1, q=1.0, s=0, eta=1.0)
        assert campanato_type_functional(f, single(d1, [0.0], 0), prm, d1) == pytest.approx(
            0.25, abs=1e-4
        )

    def test_homogeneity(self, d1, g1, p1):
        f = sample(g1, lambda x: np.cos(2 * x) + x)
        prm = CampanatoParams(p=p1, q=2.0, s=0, eta=1.0)
        cfg = BallConfiguration(
            [(d1.ball([0.0], 1), 1.0), (d1.ball([1.0], 0), 2.0)]
        )
        base = campanato_type_functional(f, cfg, prm, d1)
        scaled = campanato_type_functional(f.with_values(7.0 * f.values), cfg, prm, d1)
        assert scaled == pytest.approx(7.0 * base, rel=1e-8)


class TestVariants:
    def test_inf_variant_q2_matches(self, d1, g1, p1):
        f = sample(g1, lambda x: np.sin(3 * x))
        prm = CampanatoParams(p=p1, q=2.0, s=0, eta=1.0)
        cfg = BallConfiguration(
            [(d1.ball([0.0], 0), 1.0), (d1.ball([0.5], 1), 0.3)]
        )
        a = campanato_type_functional(f, cfg, prm, d1)
        b = variant_inf_functional(f, cfg, prm, d1)
        assert b == pytest.approx(a, abs=1e-8 * max(a, 1.0))

    def test_inf_variant_never_larger(self, d1, g1, p1):
        f = sample(g1, lambda x: np.abs(np.sin(2 * x)) ** 1.5)
        prm = CampanatoParams(p=p1, q=4.0, s=1, eta=1.0)
        cfg = single(d1, [0.2], 1)
        a = campanato_type_functional(f, cfg, prm, d1)
        b = variant_inf_functional(f, cfg, prm, d1)
        assert b <= a + 1e-8

    def test_eps_polynomial_zero(self, d1, g1, p1):
        f = sample(g1, lambda x: 3.0 * x - 2.0)
        prm = CampanatoParams(p=p1, q=1.0, s=1, eta=1.0, epsilon=4.0)
        assert variant_eps_functional(f, single(d1, [0.0], 0), prm, d1) <= 1e-9

    def test_eps_brute_force_oracle(self, d1):
        # Independent scalar-loop evaluation of the kernel summand.
        g = uniform_grid([-8.0], [8.0], 512)
        p = constant_exponent(g, 1.0)
        f = sample(g, lambda x: x)
        eps = 4.0
        ball = d1.ball([0.0], 0)
        got = eps_kernel_summand(f, d1, ball, p, 0, eps)

        from anivex.exponents import indicator_norm
        from anivex.polyproj import minimizing_polynomial

        poly = minimizing_polynomial(f, d1, ball, 0)
        beta = np.log(d1.lambda_minus) / np.log(d1.b)
        total = 0.0
        for x, fx in zip(g.points()[:, 0], f.values):
            rho = d1.step_quasi_norm(np.array([x]))
            kern = d1.b ** (eps * 0 * beta) / (
                d1.b ** (0 * (1 + eps * beta)) + rho ** (1 + eps * beta)
            )
            total += kern * abs(fx - poly.evaluate(np.array([x]))) * g.cell_volume
        expected = 1.0 / indicator_norm(d1, ball, p) * total
        assert got == pytest.approx(expected, rel=1e-10)

    def test_eps_warns_below_threshold(self, d1, g1, p1):
        f = sample(g1, lambda x: x)
        prm = CampanatoParams(p=p1, q=1.0, s=0, eta=1.0, epsilon=1e-3, r_aux=0.5)
        with pytest.warns(UserWarning):
            variant_eps_functional(f, single(d1, [0.0], 0), prm, d1)

    @pytest.mark.parametrize("seed", range(4))
    def test_kernel_dominates_half_of_plain(self, d1, g1, p1, seed):
        rng = np.random.default_rng(seed)
        f = sample(g1, lambda x: np.sin(rng.uniform(0.5, 3.0) * x) + rng.normal() * x**2)
        eps = 4.0
        for _ in range(5):
            ball = d1.ball([rng.uniform(-3, 3)], int(rng.integers(-2, 3)))
            iv = eps_kernel_summand(f, d1, ball, p1, 0, eps)
            ii = plain_summand(f, d1, ball, p1, 0)
            assert iv >= 0.5 * ii - 1e-8 * max(ii, 1.0)


class TestNormSearch:
    def test_polynomial_norm_zero(self, d1, p1):
        g = uniform_grid([-8.0], [8.0], 1024)
        p = constant_exponent(g, 1.0)
        f = sample(g, lambda x: 2.0 * x + 1.0)
        prm = CampanatoParams(p=p, q=1.0, s=1, eta=1.0)
        res = campanato_type_norm(f, prm, d1, budget=60, seed=1)
        assert res.value <= 1e-9

    def test_dominates_single_ball(self, d1, g1, p1):
        f = sample(g1, lambda x: np.sin(x))
        prm = CampanatoParams(p=p1, q=2.0, s=0, eta=1.0)
        res = campanato_type_norm(f, prm, d1, budget=250, seed=3)
        probe = classic_functional(f, d1, d1.ball([0.0], 1), p1, 2.0, 0).projection_value
        assert res.value >= probe * (1 - 1e-9)

    def test_budget_monotone_and_deterministic(self, d1):
        g = uniform_grid([-8.0], [8.0], 512)
        p = constant_exponent(g, 1.0)
        f = sample(g, lambda x: np.sign(np.sin(2 * x)))
        prm = CampanatoParams(p=p, q=1.0, s=0, eta=1.0)
        r1 = campanato_type_norm(f, prm, d1, budget=80, seed=7)
        r1_again = campanato_type_norm(f, prm, d1, budget=80, seed=7)
        r2 = campanato_type_norm(f, prm, d1, budget=160, seed=7)
        assert r1.value == r1_again.value
        assert [b.key() for b in r1.config.balls()] == [
            b.key() for b in r1_again.config.balls()
        ]
        assert r2.value >= r1.value


class TestCountableLimit:
    def test_constant_tail_stabilizes(self, d1, g1, p1):
        f = sample(g1, lambda x: np.sin(x))
        prm = CampanatoParams(p=p1, q=1.0, s=0, eta=1.0)
        entries = [(d1.ball([0.1 * j], 0), 1.0 if j < 5 else 0.0) for j in range(40)]
        report = countable_limit_check(f, entries, prm, d1)
        assert report.stabilized_at == 4
        assert report.converged

    def test_geometric_weights_converge(self, d1, p1):
        g = uniform_grid([-8.0], [8.0], 1024)
        p = constant_exponent(g, 1.0)
        f = sample(g, lambda x: np.sin(x))
        prm = CampanatoParams(p=p, q=1.0, s=0, eta=1.0)
        entries = [
            (d1.ball([((j * 37) % 64 - 32) / 8.0], -(j % 3)), 0.8**j) for j in range(200)
        ]
        report = countable_limit_check(f, entries, prm, d1, tol=1e-6)
        assert report.converged
        assert np.all(np.isfinite(report.values))

    def test_repeated_single_ball_constant(self, d1, g1, p1):
        f = sample(g1, lambda x: np.sin(x))
        prm = CampanatoParams(p=p1, q=1.0, s=0, eta=1.0)
        entries = [(d1.ball([0.0], 0), 0.5)] * 10
        report = countable_limit_check(f, entries, prm, d1)
        assert np.allclose(report.values, report.values[0], rtol=1e-9)


class TestAggregationReport:
    def test_ratio_measured(self, d1, g1):
        p = constant_exponent(g1, 1.0)
        rng = np.random.default_rng(5)
        ratios = []
        for _ in range(10):
            m = int(rng.integers(1, 6))
            cfg = BallConfiguration(
                [
                    (d1.ball([rng.uniform(-4, 4)], int(rng.integers(-1, 2))), rng.uniform(0.2, 1))
                    for _ in range(m)
                ]
            )
            ratios.append(aggregation_vs_total_weight(cfg, p, 1.0, d1))
        assert min(ratios) > 0.1


def test_minimal_degree(d1, g1):
    p_small = constant_exponent(g1, 0.5)
    assert minimal_admissible_degree(p_small, d1) == 1  # (1/0.5 - 1) * ln2/ln2 = 1
    p_big = constant_exponent(g1, 2.0)
    assert minimal_admissible_degree(p_big, d1) == 0
