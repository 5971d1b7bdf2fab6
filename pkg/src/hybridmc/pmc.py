"""Population Monte Carlo with a Gaussian kernel importance function and
an optional repulsive (holed) variant.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .proposals import (
    NormConstRatio,
    RepulsiveConfig,
    _hole_log_factor,
    estimate_norm_const_ratio,
    repulsion_exponent,
)
from .samplers import Budget
from .targets import LOG_2PI, TargetDensity

VARIANTS = ("plain", "repulsive")


class PMCError(RuntimeError):
    pass


class DegeneratePopulationError(PMCError):
    pass


class DegenerateWeightsError(PMCError):
    def __init__(self, max_log_weight: float):
        super().__init__(f"every importance weight underflowed (max log-weight {max_log_weight})")
        self.max_log_weight = max_log_weight


class HoleConfigurationError(PMCError):
    pass


def _logsumexp(a, axis=-1):
    top = np.max(a, axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.exp(a - top).sum(axis=axis)) + np.squeeze(top, axis=axis)


def scott_bandwidth(particles, k: float) -> float:
    """``k * sqrt(mean per-coordinate variance) * N ** (-1 / (D + 4))``."""
    p = np.asarray(particles, dtype=float)
    n, d = p.shape
    if n < 2:
        raise DegeneratePopulationError("bandwidth needs at least two particles")
    var = p.var(axis=0, ddof=1).mean()
    if not var > 0:
        raise DegeneratePopulationError("particles have zero spread")
    return float(k * math.sqrt(var) * n ** (-1.0 / (d + 4)))


@dataclass(frozen=True)
class ImportanceFunction:
    """Equal-weight mixture of ``N(c, x^2 I)`` over the rows ``c`` of ``centers``."""

    centers: np.ndarray
    bandwidth: float
    k: float = float("nan")

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def log_density(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        n, d = self.centers.shape
        diff = pts[..., None, :] - self.centers
        q = np.einsum("...jd,...jd->...j", diff, diff) / self.bandwidth**2
        norm = -0.5 * d * (LOG_2PI + 2.0 * math.log(self.bandwidth)) - math.log(n)
        return _logsumexp(-0.5 * q) + norm

    def sample(self, n: int, rng) -> np.ndarray:
        idx = rng.integers(0, len(self.centers), size=n)
        return self.centers[idx] + self.bandwidth * rng.standard_normal((n, self.dim))


def build_kernel_importance(particles, k: float) -> ImportanceFunction:
    if not k > 1:
        raise PMCError(f"bandwidth multiplier k must exceed 1, got {k}")
    p = np.array(particles, dtype=float)
    return ImportanceFunction(p, scott_bandwidth(p, k), float(k))


@dataclass
class WeightedSample:
    particles: np.ndarray
    log_weights_raw: np.ndarray
    weights: np.ndarray
    c_prime: float = 1.0

    @property
    def ess(self) -> float:
        return float(1.0 / np.sum(self.weights**2))

    def estimate(self) -> np.ndarray:
        return self.weights @ self.particles


def normalize_log_weights(log_w) -> np.ndarray:
    log_w = np.asarray(log_w, dtype=float)
    top = np.max(log_w)
    if not np.isfinite(top):
        raise DegenerateWeightsError(float(top))
    w = np.exp(log_w - top)
    return w / w.sum()


def resample_multinomial(particles, weights, rng) -> np.ndarray:
    """``N`` independent categorical draws of rows of ``particles``."""
    p = np.asarray(particles)
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(p),) or np.any(w < 0) or not np.isfinite(w).all() or abs(w.sum() - 1) > 1e-9:
        raise PMCError("resampling weights must form a probability vector over the particles")
    idx = rng.choice(len(p), size=len(p), p=w / w.sum())
    return p[idx].copy()


def _weigh(target, phi, log_proposal, c_prime=1.0) -> WeightedSample:
    lw = target.log_density(phi) - log_proposal + math.log(c_prime)
    lw = np.where(np.isnan(lw), -np.inf, lw)
    return WeightedSample(phi, lw, normalize_log_weights(lw), c_prime)


def pmc_iteration(target: TargetDensity, particles, k: float, rng, g: Optional[ImportanceFunction] = None):
    """Propose from the kernel mixture, weight against ``target`` and resample.

    Returns ``(weighted_sample, resampled_particles, estimate)``.
    """
    g = build_kernel_importance(particles, k) if g is None else g
    phi = g.sample(len(g.centers), rng)
    ws = _weigh(target, phi, g.log_density(phi))
    return ws, resample_multinomial(phi, ws.weights, rng), ws.estimate()


def sample_holed(g: ImportanceFunction, holes, cfg: RepulsiveConfig, n: int, rng, max_attempts: int, hole_log_density=None):
    """``n`` draws from ``g_hat`` by rejection from ``g`` with acceptance ``g_hat / g``."""
    if hole_log_density is None:
        hole_log_density = g.log_density(holes)
    out = []
    kept = attempts = 0
    while kept < n:
        if attempts >= max_attempts:
            raise HoleConfigurationError(
                f"only {kept} of {n} draws accepted in {attempts} attempts; holes (xi={cfg.xi}, nu={cfg.nu}) are too aggressive"
            )
        m = min(max(2 * (n - kept), 16), max_attempts - attempts)
        x = g.sample(m, rng)
        s = repulsion_exponent(x, holes, hole_log_density, cfg.xi)
        keep = np.log(rng.random(m)) < _hole_log_factor(s, cfg.nu)
        x = x[keep][: n - kept]
        out.append(x)
        kept += len(x)
        attempts += m
    return np.concatenate(out)


def pmc_repulsive_iteration(
    target: TargetDensity,
    particles,
    k: float,
    cfg: RepulsiveConfig,
    M: int,
    rng,
    g: Optional[ImportanceFunction] = None,
):
    """One PMC step with holes carved into the importance function.

    Hole centres are a fresh draw of ``N`` points from the kernel mixture.
    Proposals come from the holed mixture and carry weights
    ``C' * pi / g_hat``; ``C'`` is the Monte Carlo ratio of normalizing
    constants. Returns ``(weighted_sample, resampled_particles, estimate)``.
    """
    g = build_kernel_importance(particles, k) if g is None else g
    n = len(g.centers)
    if M < n:
        raise PMCError(f"M={M} must be at least the population size {n}")
    if cfg.xi == 0 or cfg.nu == 0:
        # holes carry no mass; same draws as the plain step
        return pmc_iteration(target, particles, k, rng, g=g)
    holes = g.sample(n, rng)
    hole_logs = g.log_density(holes)
    ratio: NormConstRatio = estimate_norm_const_ratio(g, cfg, holes, M, rng, hole_log_density=hole_logs)
    phi = sample_holed(g, holes, cfg, n, rng, 10_000 * n, hole_logs)
    lq = g.log_density(phi) + _hole_log_factor(repulsion_exponent(phi, holes, hole_logs, cfg.xi), cfg.nu)
    ws = _weigh(target, phi, lq, ratio.value)
    return ws, resample_multinomial(phi, ws.weights, rng), ws.estimate()


@dataclass
class EstimateSeries:
    """Per-iteration output of a PMC run.

    ``estimates`` holds the weighted means, ``populations`` the resampled
    particles with the initial population first.
    """

    estimates: np.ndarray
    ess: np.ndarray
    max_weight: np.ndarray
    c_prime: np.ndarray
    populations: np.ndarray
    burn_in: int = 100
    wall_clock: float = 0.0
    variant: str = "plain"
    extras: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.estimates)

    @property
    def iterations(self) -> int:
        return len(self.estimates)


def run_pmc(
    variant: str,
    target: TargetDensity,
    init,
    k: float,
    cfg: Optional[RepulsiveConfig] = None,
    M: Optional[int] = None,
    budget: Union[Budget, int] = 200,
    rng=None,
    burn_in: int = 100,
) -> EstimateSeries:
    """Iterate PMC from ``init`` until the budget runs out."""
    if variant not in VARIANTS:
        raise PMCError(f"unknown PMC variant {variant!r}; choose from {VARIANTS}")
    if not isinstance(budget, Budget):
        budget = Budget(iterations=int(budget))
    rng = np.random.default_rng() if rng is None else rng
    cfg = cfg or RepulsiveConfig()
    x = np.array(init, dtype=float)
    n, d = x.shape
    M = n if M is None else M
    est, ess, wmax, cp, pops = [], [], [], [], [x.copy()]
    start = time.perf_counter()
    while True:
        t = len(est)
        if budget.iterations is not None and t >= budget.iterations:
            break
        if budget.seconds is not None and time.perf_counter() - start >= budget.seconds:
            break
        if variant == "plain":
            ws, x, e = pmc_iteration(target, x, k, rng)
        else:
            ws, x, e = pmc_repulsive_iteration(target, x, k, cfg, M, rng)
        est.append(e)
        ess.append(ws.ess)
        wmax.append(ws.weights.max())
        cp.append(ws.c_prime)
        pops.append(x)
    return EstimateSeries(
        estimates=np.array(est).reshape(-1, d),
        ess=np.array(ess),
        max_weight=np.array(wmax),
        c_prime=np.array(cp),
        populations=np.array(pops),
        burn_in=burn_in,
        wall_clock=time.perf_counter() - start,
        variant=variant,
    )
