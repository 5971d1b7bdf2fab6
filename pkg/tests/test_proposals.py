import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hybridmc.diagnostics import grid_norm_const_ratio
from hybridmc.pmc import build_kernel_importance, sample_holed
from hybridmc.proposals import (
    DegenerateLineError,
    LangevinKernel,
    ProposalError,
    RandomWalkKernel,
    RepulsiveConfig,
    estimate_norm_const_ratio,
    langevin_log_transition,
    langevin_propose,
    reflect_pinball,
    repulsive_g_log_density,
    repulsive_log_density,
    rw_propose,
)
from hybridmc.targets import TargetDensity, toy_mixture

finite = st.floats(-20, 20, allow_nan=False, allow_infinity=False)
points2 = arrays(np.float64, 2, elements=finite)


def toy_kernel_g(seed=0, n=50):
    rng = np.random.default_rng(seed)
    comp = rng.random(n) < 0.5
    centers = rng.normal(size=(n, 2)) + np.where(comp[:, None], 0.0, 5.0)
    return build_kernel_importance(centers, 2.5), rng


def line_distance(p, a, b):
    d = (b - a) / np.linalg.norm(b - a)
    v = p - a
    return np.linalg.norm(v - (v @ d) * d)


class TestRandomWalk:
    def test_mean(self, rng):
        x = rw_propose(np.broadcast_to([1.0, 1.0], (100_000, 2)), RandomWalkKernel(4.0), rng)
        se = 2.0 / np.sqrt(len(x))
        assert np.all(np.abs(x.mean(0) - 1.0) < 3 * se)

    def test_covariance(self, rng):
        x = rw_propose(np.zeros((100_000, 2)), RandomWalkKernel(4.0), rng)
        np.testing.assert_allclose(np.cov(x.T), 4 * np.eye(2), atol=0.2)

    @settings(max_examples=100, deadline=None)
    @given(points2, points2)
    def test_symmetric_transition(self, a, b):
        k = RandomWalkKernel(4.0)
        assert k.log_transition(None, a, b) - k.log_transition(None, b, a) == 0.0

    def test_invalid_scale(self):
        with pytest.raises(ProposalError):
            RandomWalkKernel(-1.0)
        with pytest.raises(ProposalError):
            RandomWalkKernel([[1.0, 2.0], [2.0, 1.0]])


class TestLangevin:
    def test_drift_on_standard_normal(self, normal1d, rng):
        x = langevin_propose(normal1d, np.full((100_000, 1), 2.0), LangevinKernel(1.0), rng)
        assert abs(x.mean() - 1.0) < 3 / np.sqrt(len(x))

    def test_zero_drift_at_symmetry_point(self, toy, rng):
        x = langevin_propose(toy, np.full((100_000, 2), 2.5), LangevinKernel(1.0), rng)
        assert np.all(np.abs(x.mean(0) - 2.5) < 3 / np.sqrt(len(x)))

    def test_drift_formula_on_toy(self, toy, rng):
        start = np.array([1.0, 0.5])
        h = 0.7
        x = langevin_propose(toy, np.broadcast_to(start, (100_000, 2)), LangevinKernel(h), rng)
        mean = start + 0.5 * h * toy.grad_log_density(start)
        assert np.all(np.abs(x.mean(0) - mean) < 3 * np.sqrt(h / len(x)))

    def test_log_transition_at_drift_point(self, toy):
        start = np.array([1.0, 0.5])
        h = 0.7
        end = start + 0.5 * h * toy.grad_log_density(start)
        assert langevin_log_transition(toy, start, end, LangevinKernel(h)) == pytest.approx(-np.log(2 * np.pi * h))

    def test_log_transition_closed_form(self, normal1d):
        val = langevin_log_transition(normal1d, np.array([0.0]), np.array([0.0]), LangevinKernel(2.0))
        assert val == pytest.approx(-0.5 * np.log(4 * np.pi))

    def test_log_transition_integrates_to_one(self, toy):
        start = np.array([0.8, -0.3])
        k = LangevinKernel(1.5)
        ax = np.linspace(-9, 9, 721)
        grid = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1)
        mass = np.exp(langevin_log_transition(toy, start, grid, k)).sum() * (ax[1] - ax[0]) ** 2
        assert mass == pytest.approx(1.0, abs=1e-3)

    def test_histogram_matches_transition(self, normal1d, rng):
        k = LangevinKernel(0.8)
        start = np.array([1.3])
        x = langevin_propose(normal1d, np.broadcast_to(start, (200_000, 1)), k, rng)[:, 0]
        edges = np.linspace(-2.5, 3.5, 31)
        counts, _ = np.histogram(x, edges)
        mids = 0.5 * (edges[1:] + edges[:-1])
        dens = np.exp(langevin_log_transition(normal1d, start, mids[:, None], k))
        expected = dens * (edges[1] - edges[0]) * len(x)
        assert np.all(np.abs(counts - expected) < 5 * np.sqrt(expected) + 5)

    def test_gradient_required(self, rng):
        t = TargetDensity(dim=1, log_density=lambda x: -0.5 * (x**2).sum(-1))
        with pytest.raises(ProposalError):
            langevin_propose(t, np.zeros(1), LangevinKernel(1.0), rng)

    def test_nonfinite_gradient_named(self, rng):
        t = TargetDensity(dim=1, log_density=lambda x: -0.5 * (x**2).sum(-1), grad_log_density=lambda x: np.full_like(x, np.nan))
        with pytest.raises(ProposalError, match="0.5"):
            langevin_propose(t, np.array([0.5]), LangevinKernel(1.0), rng)


class TestPinballReflection:
    def test_reflection_across_x_axis(self):
        np.testing.assert_allclose(reflect_pinball([0.0, 1.0], [1.0, 0.0], [[0.0, 0.0]]), [0.0, -1.0], atol=1e-15)

    def test_point_on_line_is_fixed(self):
        np.testing.assert_allclose(reflect_pinball([3.0, 0.0], [1.0, 0.0], [[0.0, 0.0]]), [3.0, 0.0], atol=1e-15)

    def test_nearest_other_chosen_with_lowest_index_on_ties(self):
        # both others are at distance 1 from phi; index 0 defines the line (the y axis)
        out = reflect_pinball([1.0, 1.0], [0.0, 1.0], [[0.0, 0.0], [0.0, 2.0]])
        np.testing.assert_allclose(out, [-1.0, 1.0], atol=1e-15)

    def test_degenerate_line(self):
        with pytest.raises(DegenerateLineError):
            reflect_pinball([1.0, 1.0], [0.0, 0.0], [[0.0, 0.0]])

    def test_requires_plane(self):
        with pytest.raises(ProposalError):
            reflect_pinball([1.0, 1.0, 1.0], [0.0, 0.0, 1.0], [[0.0, 0.0, 0.0]])

    @settings(max_examples=300, deadline=None)
    @given(points2, points2, arrays(np.float64, (3, 2), elements=finite))
    def test_geometry(self, theta, phi, others):
        star = others[np.argmin(((others - phi) ** 2).sum(-1))]
        if np.linalg.norm(star - phi) < 1e-3:
            return
        out = reflect_pinball(theta, phi, others)
        twice = reflect_pinball(out, phi, others)
        scale = 1 + np.abs(theta).max() + np.abs(phi).max() + np.abs(others).max()
        np.testing.assert_allclose(twice, theta, atol=1e-12 * scale * 100)
        assert line_distance(out, star, phi) == pytest.approx(line_distance(theta, star, phi), abs=1e-10 * scale)
        assert line_distance(0.5 * (out + theta), star, phi) < 1e-10 * scale


class TestRepulsiveDensity:
    def setup_method(self):
        self.toy = toy_mixture()
        r = np.random.default_rng(7)
        self.others = r.normal(size=(10, 2)) + np.where(r.random(10) < 0.5, 0.0, 5.0)[:, None]

    def test_zero_xi_is_target(self):
        p = np.array([1.2, 0.7])
        assert repulsive_log_density(self.toy, p, self.others, RepulsiveConfig(0.0)) == self.toy.log_density(p)

    def test_blows_up_at_particle(self):
        cfg = RepulsiveConfig(1e-5)
        assert repulsive_log_density(self.toy, self.others[2], self.others, cfg) == -np.inf
        near = self.others[2] + 1e-6
        assert repulsive_log_density(self.toy, near, self.others, cfg) < -1e3

    def test_matches_formula(self):
        p = np.array([1.2, 0.7])
        xi = 1e-3
        pi_j = np.exp(self.toy.log_density(self.others))
        d2 = ((self.others - p) ** 2).sum(-1)
        expected = self.toy.log_density(p) - (xi / (pi_j * d2)).sum()
        assert repulsive_log_density(self.toy, p, self.others, RepulsiveConfig(xi)) == pytest.approx(expected, rel=1e-12)

    def test_far_point_barely_changed(self):
        r = np.random.default_rng(1)
        cfg = RepulsiveConfig(1e-5)
        n = 0
        while n < 50:
            p = r.uniform(-2, 7, 2)
            if np.sqrt(((self.others - p) ** 2).sum(-1)).min() < 1:
                continue
            ratio = np.exp(repulsive_log_density(self.toy, p, self.others, cfg) - self.toy.log_density(p))
            assert 0.9 < ratio <= 1
            n += 1

    @settings(max_examples=100, deadline=None)
    @given(points2, st.floats(0, 1, allow_nan=False), st.floats(0, 1, allow_nan=False))
    def test_monotone_in_xi(self, p, a, b):
        lo, hi = sorted((a, b))
        v_lo = repulsive_log_density(self.toy, p, self.others, RepulsiveConfig(lo))
        v_hi = repulsive_log_density(self.toy, p, self.others, RepulsiveConfig(hi))
        assert v_hi <= v_lo

    def test_zero_density_particle_gives_minus_inf(self):
        t = TargetDensity(dim=1, log_density=lambda x: np.where(x[..., 0] > 0, -0.5 * x[..., 0] ** 2, -np.inf))
        val = repulsive_log_density(t, np.array([1.0]), np.array([[2.0], [-1.0]]), RepulsiveConfig(1e-3))
        assert val == -np.inf


class TestHoledImportance:
    def test_nu_zero_is_g(self):
        g, _ = toy_kernel_g()
        p = np.array([0.3, 4.0])
        assert repulsive_g_log_density(g, p, g.centers[:5], RepulsiveConfig(1e-2, 0.0)) == g.log_density(p)

    def test_floor_at_hole_center(self):
        g, _ = toy_kernel_g()
        holes = g.centers[:5]
        val = repulsive_g_log_density(g, holes[1], holes, RepulsiveConfig(1e-5, 0.3))
        assert val == pytest.approx(np.log(0.7) + g.log_density(holes[1]), rel=1e-12)

    def test_full_depth_hole(self):
        g, _ = toy_kernel_g()
        holes = g.centers[:5]
        assert repulsive_g_log_density(g, holes[1], holes, RepulsiveConfig(1e-5, 1.0)) == -np.inf

    def test_wide_holes_limit(self, rng):
        g, _ = toy_kernel_g()
        holes = g.centers[:5]
        pts = rng.uniform(-3, 8, size=(200, 2))
        val = repulsive_g_log_density(g, pts, holes, RepulsiveConfig(1e3, 0.3))
        np.testing.assert_allclose(val, np.log(0.7) + g.log_density(pts), rtol=1e-9)

    def test_bounds(self, rng):
        g, _ = toy_kernel_g()
        holes = g.centers
        pts = rng.uniform(-5, 10, size=(10_000, 2))
        lg = g.log_density(pts)
        lh = repulsive_g_log_density(g, pts, holes, RepulsiveConfig(1e-3, 0.3))
        assert np.all(lh <= lg + 1e-12)
        assert np.all(lh >= np.log(0.7) + lg - 1e-12)


class TestNormConstRatio:
    GRID = ([-5.0, -5.0], [10.0, 10.0], 400)

    def test_no_depth_is_one(self, rng):
        g, _ = toy_kernel_g()
        res = estimate_norm_const_ratio(g, RepulsiveConfig(1e-5, 0.0), g.centers, 50, rng)
        assert res.value == 1.0

    def test_negligible_holes_flagged(self, rng):
        g, _ = toy_kernel_g()
        res = estimate_norm_const_ratio(g, RepulsiveConfig(1e-300, 0.3), g.centers, 50, rng)
        assert res.value == 1.0 and res.no_hole

    def test_wide_holes_limit(self, rng):
        g, _ = toy_kernel_g()
        res = estimate_norm_const_ratio(g, RepulsiveConfig(1e3, 0.3), g.centers, 50, rng)
        assert 0.69 <= res.value <= 0.71

    def test_agrees_with_grid_quadrature(self):
        g, r = toy_kernel_g(3)
        cfg = RepulsiveConfig(1e-5, 0.3)
        holes = g.sample(50, r)
        grid = grid_norm_const_ratio(g, cfg, holes, self.GRID)
        vals = [estimate_norm_const_ratio(g, cfg, holes, 50, np.random.default_rng(s)).value for s in range(10)]
        assert all(0 < v <= 1 for v in vals)
        assert max(abs(v - grid) / grid for v in vals) <= 0.05

    def test_grid_monotone_in_nu(self):
        g, r = toy_kernel_g(3)
        holes = g.sample(50, r)
        ratios = [grid_norm_const_ratio(g, RepulsiveConfig(1e-2, nu), holes, self.GRID) for nu in (0.0, 0.2, 0.4, 0.6, 0.8)]
        assert ratios[0] == 1.0
        assert all(a >= b for a, b in zip(ratios, ratios[1:]))


def test_holed_draws_match_density():
    from scipy.stats import chisquare

    g, r = toy_kernel_g(5)
    cfg = RepulsiveConfig(1e-2, 0.6)
    holes = g.sample(50, r)
    x = sample_holed(g, holes, cfg, 100_000, np.random.default_rng(9), max_attempts=10**7)
    lo, hi = np.array([-4.0, -4.0]), np.array([9.0, 9.0])
    inside = np.all((x >= lo) & (x < hi), axis=1)
    counts, ex, ey = np.histogram2d(x[inside, 0], x[inside, 1], bins=20, range=[[-4, 9], [-4, 9]])
    # expected cell masses by a fine midpoint rule inside each cell
    fine = 10
    ax = np.linspace(-4, 9, 20 * fine + 1)
    mid = 0.5 * (ax[1:] + ax[:-1])
    pts = np.stack(np.meshgrid(mid, mid, indexing="ij"), -1).reshape(-1, 2)
    dens = np.exp(repulsive_g_log_density(g, pts, holes, cfg)).reshape(20 * fine, 20 * fine)
    cell = dens.reshape(20, fine, 20, fine).sum(axis=(1, 3))
    expected = cell / cell.sum() * inside.sum()
    keep = expected > 5
    obs, exp = counts[keep], expected[keep]
    exp = exp * obs.sum() / exp.sum()
    assert chisquare(obs, exp).pvalue > 0.01
