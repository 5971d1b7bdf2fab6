import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from hybridmc.targets import (
    GaussianMixtureSpec,
    MixturePosteriorSpec,
    TargetError,
    block_view,
    finite_difference_grad,
    make_gaussian_mixture,
    make_mixture_posterior,
    shifted,
    standard_normal,
)

coords = st.floats(-8, 13, allow_nan=False)


def toy_density_scipy(x):
    a = stats.multivariate_normal([0, 0], np.eye(2)).pdf(x)
    b = stats.multivariate_normal([5, 5], np.eye(2)).pdf(x)
    return 0.5 * a + 0.5 * b


def posterior_oracle(theta, y, m, v, shape=2.0, rate=2.0):
    mu1, mu2, s1, s2, lam = theta
    lik = np.log(lam * stats.norm(mu1, s1).pdf(y) + (1 - lam) * stats.norm(mu2, s2).pdf(y)).sum()
    prior = stats.norm(m, np.sqrt(v)).logpdf([mu1, mu2]).sum()
    prior += stats.gamma(shape, scale=1 / rate).logpdf([s1, s2]).sum()
    return lik + prior


@pytest.fixture(scope="module")
def posterior():
    y = np.random.default_rng(4).normal(2.0, 1.0, 40)
    return make_mixture_posterior(MixturePosteriorSpec(data=y)), y


class TestGaussianMixture:
    def test_modes_have_equal_density(self, toy):
        assert toy.log_density(np.array([0.0, 0.0])) == pytest.approx(toy.log_density(np.array([5.0, 5.0])), abs=1e-12)

    def test_gradient_vanishes_at_midpoint(self, toy):
        np.testing.assert_allclose(toy.grad_log_density(np.array([2.5, 2.5])), 0.0, atol=1e-12)

    def test_density_at_origin(self, toy):
        expected = 0.5 / (2 * np.pi) + 0.5 / (2 * np.pi) * np.exp(-25)
        assert np.exp(toy.log_density(np.array([0.0, 0.0]))) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.0795775, abs=1e-7)

    def test_normalizes_on_grid(self, toy):
        ax = np.linspace(-7, 12, 381)
        pts = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1)
        mass = np.exp(toy.log_density(pts)).sum() * (ax[1] - ax[0]) ** 2
        assert mass == pytest.approx(1.0, abs=1e-6)

    def test_mode_centers_are_means(self, toy):
        np.testing.assert_array_equal(toy.mode_centers, [[0, 0], [5, 5]])

    def test_non_pd_covariance_rejected(self):
        with pytest.raises(TargetError):
            make_gaussian_mixture(GaussianMixtureSpec([1.0], [[0, 0]], [[[1, 2], [2, 1]]]))

    def test_weights_must_sum_to_one(self):
        with pytest.raises(TargetError):
            make_gaussian_mixture(GaussianMixtureSpec([0.5, 0.6], [[0.0], [1.0]], [[[1.0]], [[1.0]]]))

    @settings(max_examples=200, deadline=None)
    @given(coords, coords)
    def test_matches_scipy(self, toy, a, b):
        x = np.array([a, b])
        assert toy.log_density(x) == pytest.approx(np.log(toy_density_scipy(x)), rel=1e-10, abs=1e-10)

    @settings(max_examples=200, deadline=None)
    @given(coords, coords)
    def test_point_symmetry_about_midpoint(self, toy, a, b):
        p = np.array([a, b])
        assert toy.log_density(p) == pytest.approx(toy.log_density(np.array([5.0, 5.0]) - p), abs=1e-12)

    def test_gradient_matches_finite_differences(self, toy, rng):
        pts = rng.uniform(-3, 8, size=(100, 2))
        for x in pts:
            g = toy.grad_log_density(x)
            fd = finite_difference_grad(toy, x)
            assert np.linalg.norm(g - fd) / (1 + np.linalg.norm(g)) <= 1e-5

    def test_full_covariance_mixture_gradient(self, rng):
        spec = GaussianMixtureSpec([0.3, 0.7], [[0, 1], [2, -1]], [[[2, 0.5], [0.5, 1]], [[1, -0.3], [-0.3, 0.5]]])
        t = make_gaussian_mixture(spec)
        for x in rng.normal(size=(20, 2)) * 2:
            g = t.grad_log_density(x)
            assert np.linalg.norm(g - finite_difference_grad(t, x)) / (1 + np.linalg.norm(g)) <= 1e-5


class TestMixturePosterior:
    def test_identical_components_reduce_to_single_normal(self):
        # with identical components the likelihood is log N(0; 0, 1) whatever lambda is
        t = make_mixture_posterior(MixturePosteriorSpec(data=[0.0]))
        base = t.log_density(np.array([0.0, 0.0, 1.0, 1.0, 0.5]))
        for lam in (0.0, 0.2, 0.9, 1.0):
            assert t.log_density(np.array([0.0, 0.0, 1.0, 1.0, lam])) == pytest.approx(base, abs=1e-12)
        offset = base - posterior_oracle([0.0, 0.0, 1.0, 1.0, 0.5], np.array([0.0]), 0.0, 1.0)
        other = np.array([0.3, -0.2, 0.7, 1.4, 0.5])
        assert t.log_density(other) - posterior_oracle(other, np.array([0.0]), 0.0, 1.0) == pytest.approx(offset, abs=1e-10)

    @pytest.mark.parametrize("lam", [-0.1, 1.2])
    def test_lambda_outside_unit_interval(self, posterior, lam):
        t, _ = posterior
        assert t.log_density(np.array([1.0, 3.0, 1.0, 1.0, lam])) == -np.inf

    @pytest.mark.parametrize("s", [0.0, -1.0])
    def test_nonpositive_sigma(self, posterior, s):
        t, _ = posterior
        assert t.log_density(np.array([1.0, 3.0, s, 1.0, 0.5])) == -np.inf

    def test_empty_data_rejected(self):
        with pytest.raises(TargetError):
            MixturePosteriorSpec(data=[])

    def test_matches_independent_evaluation(self, posterior, rng):
        # unnormalized: equal to the oracle up to one additive constant
        t, y = posterior
        offsets = []
        for _ in range(20):
            theta = np.array([*rng.normal(2, 1, 2), *rng.uniform(0.3, 2, 2), rng.uniform(0.05, 0.95)])
            offsets.append(t.log_density(theta) - posterior_oracle(theta, y, y.mean(), y.var()))
        np.testing.assert_allclose(offsets, offsets[0], atol=1e-9)

    def test_gradient_matches_finite_differences(self, posterior, rng):
        t, _ = posterior
        for _ in range(100):
            x = np.array([*rng.normal(2, 1, 2), *rng.uniform(0.3, 2, 2), rng.uniform(0.05, 0.95)])
            g = t.grad_log_density(x)[:4]
            fd = finite_difference_grad(t, x)[:4]
            assert np.linalg.norm(g - fd) / (1 + np.linalg.norm(g)) <= 1e-5


class TestBlockView:
    def test_full_block_is_identity(self, toy, rng):
        v = block_view(toy, [0, 1], np.empty(0))
        x = rng.normal(size=(5, 2))
        np.testing.assert_array_equal(v.log_density(x), toy.log_density(x))

    def test_independent_coordinate_shifts_by_constant(self, rng):
        v = block_view(standard_normal(2), [0], [0.0])
        one = standard_normal(1)
        x = rng.normal(size=(50, 1))
        diff = v.log_density(x) - one.log_density(x)
        np.testing.assert_allclose(diff, diff[0], atol=1e-12)

    def test_out_of_range(self, toy):
        with pytest.raises(IndexError):
            block_view(toy, [2], [0.0])

    @pytest.mark.parametrize("block", [(0, 1), (2, 3), (4,), (0,), (1, 3), (0, 2, 4), (0, 1, 2, 3, 4)])
    def test_ratio_equivalence_on_posterior(self, posterior, rng, block):
        t, _ = posterior
        base = np.array([1.5, 2.5, 0.8, 1.1, 0.4])
        v = block_view(t, block, base)
        a = base[list(block)] + 0.05 * rng.normal(size=len(block))
        b = base[list(block)] + 0.05 * rng.normal(size=len(block))
        fa, fb = base.copy(), base.copy()
        fa[list(block)], fb[list(block)] = a, b
        assert v.log_density(a) - v.log_density(b) == pytest.approx(t.log_density(fa) - t.log_density(fb), abs=1e-12)

    def test_block_gradient(self, posterior):
        t, _ = posterior
        base = np.array([1.5, 2.5, 0.8, 1.1, 0.4])
        v = block_view(t, (2, 3), base)
        np.testing.assert_allclose(v.grad_log_density(base[2:4]), t.grad_log_density(base)[2:4])


def test_shifted_changes_only_level(toy, rng):
    s = shifted(toy, 7.0)
    x = rng.normal(size=(4, 2))
    np.testing.assert_allclose(s.log_density(x), toy.log_density(x) - 7.0)
    np.testing.assert_allclose(s.grad_log_density(x), toy.grad_log_density(x))
