"""Proposal kernels and repulsive pseudo-densities.

All functions accept leading batch axes on their point arguments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np

from .targets import LOG_2PI, TargetDensity

Scale = Union[float, np.ndarray]


class ProposalError(ValueError):
    pass


class DegenerateLineError(ProposalError):
    """The rejected candidate coincides with its nearest neighbour."""


def _as_cov(scale: Scale, name: str) -> tuple[Optional[float], Optional[np.ndarray]]:
    arr = np.asarray(scale, dtype=float)
    if arr.ndim == 0:
        if not arr > 0:
            raise ProposalError(f"{name} must be positive, got {float(arr)}")
        return float(arr), None
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ProposalError(f"{name} must be a scalar or a square matrix")
    try:
        np.linalg.cholesky(arr)
    except np.linalg.LinAlgError:
        raise ProposalError(f"{name} matrix is not positive definite") from None
    return None, arr


class _Gaussian:
    """Isotropic or full-covariance Gaussian increments."""

    def __init__(self, scale: Scale, name: str):
        self.var, self.cov = _as_cov(scale, name)
        if self.cov is not None:
            self.chol = np.linalg.cholesky(self.cov)
            self.prec = np.linalg.inv(self.cov)
            self.logdet = float(np.linalg.slogdet(self.cov)[1])
        else:
            self.sd = float(np.sqrt(self.var))

    def noise(self, shape, rng) -> np.ndarray:
        z = rng.standard_normal(shape)
        if self.cov is None:
            return self.sd * z
        return z @ self.chol.T

    def apply(self, v):
        """Covariance times ``v`` along the last axis."""
        return self.var * v if self.cov is None else v @ self.cov.T

    def logpdf(self, diff) -> np.ndarray:
        d = diff.shape[-1]
        if self.cov is None:
            return -0.5 * (np.einsum("...d,...d->...", diff, diff) / self.var + d * (LOG_2PI + np.log(self.var)))
        quad = np.einsum("...i,ij,...j->...", diff, self.prec, diff)
        return -0.5 * (quad + d * LOG_2PI + self.logdet)


@dataclass(frozen=True)
class RandomWalkKernel:
    """Symmetric Gaussian random walk ``N(state, s I)`` or ``N(state, S)``."""

    scale: Scale = 1.0

    def __post_init__(self):
        object.__setattr__(self, "_g", _Gaussian(self.scale, "random-walk scale"))

    symmetric = True

    def propose(self, target, state, rng, grad=None):
        state = np.asarray(state, dtype=float)
        return state + self._g.noise(state.shape, rng)

    def log_transition(self, target, start, end, grad_start=None):
        return self._g.logpdf(np.asarray(end, dtype=float) - np.asarray(start, dtype=float))


@dataclass(frozen=True)
class LangevinKernel:
    """Langevin proposal ``N(state + h/2 grad log pi(state), h)``.

    ``step`` is a positive scalar or a covariance-like matrix (per-block steps).
    """

    step: Scale = 1.0

    def __post_init__(self):
        object.__setattr__(self, "_g", _Gaussian(self.step, "Langevin step"))

    symmetric = False

    def drift(self, target: TargetDensity, state, grad=None, check: bool = True):
        if target.grad_log_density is None:
            raise ProposalError(f"target {target.name!r} has no gradient; Langevin moves need one")
        state = np.asarray(state, dtype=float)
        if grad is None:
            grad = target.grad_log_density(state)
        if check and not np.all(np.isfinite(grad)):
            raise ProposalError(f"non-finite gradient at state {state.tolist()}")
        return state + 0.5 * self._g.apply(grad)

    def propose(self, target, state, rng, grad=None):
        mean = self.drift(target, state, grad)
        return mean + self._g.noise(mean.shape, rng)

    def log_transition(self, target, start, end, grad_start=None):
        mean = self.drift(target, start, grad_start, check=False)
        return self._g.logpdf(np.asarray(end, dtype=float) - mean)


def rw_propose(state, kernel: RandomWalkKernel, rng) -> np.ndarray:
    return kernel.propose(None, state, rng)


def langevin_propose(target: TargetDensity, state, kernel: LangevinKernel, rng) -> np.ndarray:
    return kernel.propose(target, state, rng)


def langevin_log_transition(target: TargetDensity, start, end, kernel: LangevinKernel) -> np.ndarray:
    """``log N(end; start + h/2 grad log pi(start), h)``."""
    start = np.asarray(start, dtype=float)
    kernel.drift(target, start)  # raises on missing or non-finite gradients
    return kernel.log_transition(target, start, end)


# --------------------------------------------------------------------------
# Pinball reflection
# --------------------------------------------------------------------------


def nearest_index(point, others) -> np.ndarray:
    """Index of the member of ``others`` closest to ``point``; ties go to the lowest index."""
    d2 = ((np.asarray(others)[..., :, :] - np.asarray(point)[..., None, :]) ** 2).sum(-1)
    return np.argmin(d2, axis=-1)


def reflect_across_line(point, anchor, through):
    """Mirror ``point`` across the line through ``anchor`` and ``through``.

    Returns ``(reflected, ok)``; ``ok`` is False where the two line points
    coincide, and ``reflected`` then equals ``point``.
    """
    point, anchor, through = (np.asarray(a, dtype=float) for a in (point, anchor, through))
    u = through - anchor
    norm2 = (u * u).sum(-1)
    ok = norm2 > 0
    safe = np.where(ok, norm2, 1.0)
    v = point - anchor
    proj = ((v * u).sum(-1) / safe)[..., None] * u
    out = anchor + 2.0 * proj - v
    return np.where(ok[..., None], out, point), ok


def reflect_pinball(theta_i, phi_i, others) -> np.ndarray:
    """Reflect ``theta_i`` across the line joining ``phi_i`` and its nearest other particle."""
    theta_i = np.asarray(theta_i, dtype=float)
    others = np.asarray(others, dtype=float)
    if theta_i.shape[-1] != 2:
        raise ProposalError(f"pinball reflection is planar; got dimension {theta_i.shape[-1]}")
    if others.shape[-2] == 0:
        raise ProposalError("pinball reflection needs at least one other particle")
    j = nearest_index(phi_i, others)
    anchor = np.take_along_axis(others, j[..., None, None], axis=-2)[..., 0, :]
    out, ok = reflect_across_line(theta_i, anchor, phi_i)
    if not np.all(ok):
        raise DegenerateLineError("rejected candidate coincides with its nearest particle")
    return out


# --------------------------------------------------------------------------
# Repulsion
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RepulsiveConfig:
    """Hole width ``xi`` and (importance-function variant only) depth ``nu``."""

    xi: float = 0.0
    nu: float = 0.0

    def __post_init__(self):
        if not self.xi >= 0:
            raise ProposalError(f"xi must be nonnegative, got {self.xi}")
        if not 0 <= self.nu <= 1:
            raise ProposalError(f"nu must lie in [0, 1], got {self.nu}")


def repulsion_exponent(point, centers, center_log_density, xi: float) -> np.ndarray:
    """``-sum_j xi / (f(c_j) |point - c_j|^2)``; ``-inf`` at a center or where ``f(c_j) = 0``."""
    point = np.asarray(point, dtype=float)
    if xi == 0:
        return np.zeros(point.shape[:-1])
    centers = np.asarray(centers, dtype=float)
    diff = point[..., None, :] - centers
    d2 = np.einsum("...jd,...jd->...j", diff, diff)
    with np.errstate(divide="ignore", over="ignore"):
        terms = np.exp(np.log(xi) - np.asarray(center_log_density) - np.log(d2))
    return -terms.sum(-1)


def repulsive_log_density(
    target: TargetDensity,
    point,
    others,
    cfg: RepulsiveConfig,
    others_log_density=None,
    point_log_density=None,
) -> np.ndarray:
    """Unnormalized log of the repulsive pseudo-target around ``others``.

    The cached ``others_log_density`` / ``point_log_density`` arguments skip
    re-evaluating the target.
    """
    lp = target.log_density(point) if point_log_density is None else point_log_density
    if cfg.xi == 0:
        return np.asarray(lp, dtype=float)
    if others_log_density is None:
        others_log_density = target.log_density(others)
    return lp + repulsion_exponent(point, others, others_log_density, cfg.xi)


def _hole_log_factor(exponent, nu: float) -> np.ndarray:
    # log((1 - nu) + nu * exp(S)) == log1p(nu * expm1(S))
    with np.errstate(divide="ignore"):
        return np.log1p(nu * np.expm1(exponent))


def repulsive_g_log_density(g, point, holes, cfg: RepulsiveConfig, hole_log_density=None, point_log_density=None):
    """Unnormalized log of ``g * ((1 - nu) + nu * prod_j exp(-xi / (g(h_j) |x - h_j|^2)))``.

    ``g`` is anything with a ``log_density`` method (an importance function or
    a target); with a target this is the two-parameter holed target.
    """
    lg = g.log_density(point) if point_log_density is None else point_log_density
    if cfg.nu == 0 or cfg.xi == 0:
        return np.asarray(lg, dtype=float)
    if hole_log_density is None:
        hole_log_density = g.log_density(holes)
    s = repulsion_exponent(point, holes, hole_log_density, cfg.xi)
    return lg + _hole_log_factor(s, cfg.nu)


class NormConstRatio(NamedTuple):
    value: float
    draws: int
    attempts: int
    no_hole: bool

    def __float__(self):
        return self.value


def estimate_norm_const_ratio(
    g,
    cfg: RepulsiveConfig,
    holes,
    M: int,
    rng,
    max_attempts: Optional[int] = None,
    hole_log_density=None,
) -> NormConstRatio:
    """Monte Carlo estimate of ``int g_hat / int g`` from draws of ``p ~ g - g_hat``.

    Draws come from ``g`` and are kept with probability ``1 - g_hat/g``. With
    ``w = 1/(1 - g_hat/g)`` the estimate ``sum(w g_hat/g) / sum(w)`` reduces to
    ``1 - n / sum(w)``. At most ``max_attempts`` (default ``100 * M``) draws
    from ``g`` are made; if none survive, the holes carry no measurable mass
    and the ratio is reported as 1 with ``no_hole`` set.
    """
    holes = np.asarray(holes, dtype=float)
    if M < len(holes):
        raise ProposalError(f"M={M} must be at least the number of holes {len(holes)}")
    if cfg.nu == 0 or cfg.xi == 0:
        return NormConstRatio(1.0, 0, 0, True)
    if max_attempts is None:
        max_attempts = 100 * M
    if hole_log_density is None:
        hole_log_density = g.log_density(holes)

    inv_gap = []
    kept = attempts = 0
    batch = max(4 * M, 256)
    while kept < M and attempts < max_attempts:
        n = min(batch, max_attempts - attempts)
        x = g.sample(n, rng)
        s = repulsion_exponent(x, holes, hole_log_density, cfg.xi)
        gap = -cfg.nu * np.expm1(s)  # 1 - g_hat/g, computed without cancellation
        u = rng.random(n)
        keep = np.flatnonzero(u < gap)[: M - kept]
        inv_gap.append(1.0 / gap[keep])
        kept += keep.size
        attempts += n
        batch *= 2
    if kept == 0:
        return NormConstRatio(1.0, 0, attempts, True)
    w = np.concatenate(inv_gap)
    return NormConstRatio(float(1.0 - kept / w.sum()), kept, attempts, False)
