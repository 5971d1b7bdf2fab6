"""Target densities.

Every target works on arrays with arbitrary leading batch axes: a point has
shape ``(..., dim)`` and ``log_density`` returns shape ``(...)``. Densities are
always returned on the log scale; zero density is ``-inf``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


class TargetError(ValueError):
    """Raised when a target cannot be constructed from its specification."""


@dataclass(frozen=True)
class TargetDensity:
    """An unnormalized log-density with an optional score function.

    Attributes:
        dim: Dimension of the state space.
        log_density: Maps ``(..., dim)`` points to ``(...)`` log-densities.
        grad_log_density: Maps ``(..., dim)`` points to ``(..., dim)`` scores.
        mode_centers: Optional ``(K, dim)`` array used by mode diagnostics.
        name: Free-form label.
    """

    dim: int
    log_density: Callable[[np.ndarray], np.ndarray]
    grad_log_density: Optional[Callable[[np.ndarray], np.ndarray]] = None
    mode_centers: Optional[np.ndarray] = None
    name: str = "target"

    @property
    def has_gradient(self) -> bool:
        return self.grad_log_density is not None

    def __call__(self, x):
        return self.log_density(np.asarray(x, dtype=float))


# --------------------------------------------------------------------------
# Gaussian mixtures
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianMixtureSpec:
    weights: Sequence[float]
    means: Sequence[Sequence[float]]
    covariances: Sequence[Sequence[Sequence[float]]]

    def validate(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        w = np.asarray(self.weights, dtype=float)
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        cov = np.asarray(self.covariances, dtype=float)
        if cov.ndim == 2 and mu.shape[1] == 1 and cov.shape == (len(w), 1):
            cov = cov[:, :, None]
        if w.ndim != 1 or len(w) == 0:
            raise TargetError("weights must be a nonempty vector")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise TargetError(f"weights must lie on the simplex, got sum {w.sum()!r}")
        k, d = mu.shape
        if len(w) != k or cov.shape != (k, d, d):
            raise TargetError(
                f"shape mismatch: {len(w)} weights, means {mu.shape}, covariances {cov.shape}"
            )
        for i, c in enumerate(cov):
            if not np.allclose(c, c.T, rtol=0, atol=1e-12):
                raise TargetError(f"covariance {i} is not symmetric")
            try:
                np.linalg.cholesky(c)
            except np.linalg.LinAlgError:
                raise TargetError(f"covariance {i} is not positive definite") from None
        return w, mu, cov


def toy_mixture_spec(separation: float = 5.0) -> GaussianMixtureSpec:
    """Equal-weight pair of unit-covariance 2D normals at the origin and (sep, sep)."""
    return GaussianMixtureSpec(
        weights=[0.5, 0.5],
        means=[[0.0, 0.0], [separation, separation]],
        covariances=[np.eye(2).tolist(), np.eye(2).tolist()],
    )


def make_gaussian_mixture(spec: GaussianMixtureSpec, name: str = "gaussian-mixture") -> TargetDensity:
    """Normalized log-density of ``sum_k w_k N(x; m_k, S_k)`` with its closed-form score."""
    w, mu, cov = spec.validate()
    k, d = mu.shape
    prec = np.linalg.inv(cov)
    prec = 0.5 * (prec + np.transpose(prec, (0, 2, 1)))
    _, logdet = np.linalg.slogdet(cov)
    with np.errstate(divide="ignore"):
        log_const = np.log(w) - 0.5 * (d * LOG_2PI + logdet)
    isotropic = all(np.allclose(c, c[0, 0] * np.eye(d)) for c in cov)
    inv_var = np.array([1.0 / c[0, 0] for c in cov])

    def component_logs(x):
        diff = x[..., None, :] - mu
        if isotropic:
            quad = np.einsum("...kd,...kd->...k", diff, diff) * inv_var
            pdiff = diff * inv_var[:, None]
        else:
            pdiff = np.einsum("kij,...kj->...ki", prec, diff)
            quad = np.einsum("...kd,...kd->...k", diff, pdiff)
        return log_const - 0.5 * quad, pdiff

    def log_density(x):
        x = np.asarray(x, dtype=float)
        logs, _ = component_logs(x)
        top = logs.max(axis=-1)
        return top + np.log(np.exp(logs - top[..., None]).sum(axis=-1))

    def grad_log_density(x):
        x = np.asarray(x, dtype=float)
        logs, pdiff = component_logs(x)
        top = logs.max(axis=-1, keepdims=True)
        resp = np.exp(logs - top)
        resp /= resp.sum(axis=-1, keepdims=True)
        return -np.einsum("...k,...kd->...d", resp, pdiff)

    return TargetDensity(
        dim=d,
        log_density=log_density,
        grad_log_density=grad_log_density,
        mode_centers=mu.copy(),
        name=name,
    )


def toy_mixture() -> TargetDensity:
    """The bimodal benchmark target used throughout the test-suite (E[x1] = 2.5)."""
    return make_gaussian_mixture(toy_mixture_spec(), name="toy-mixture")


def standard_normal(dim: int = 1) -> TargetDensity:
    spec = GaussianMixtureSpec([1.0], [[0.0] * dim], [np.eye(dim).tolist()])
    return make_gaussian_mixture(spec, name=f"std-normal-{dim}d")


# --------------------------------------------------------------------------
# Two-component normal mixture posterior
# --------------------------------------------------------------------------

POSTERIOR_PARAMS = ("mu1", "mu2", "sigma1", "sigma2", "lambda")


@dataclass(frozen=True)
class MixturePosteriorSpec:
    """Data and priors for the posterior of ``lam N(mu1, s1^2) + (1-lam) N(mu2, s2^2)``.

    ``prior_mu_mean``/``prior_mu_var`` default to the sample mean and variance of
    the data. The gamma prior (shape, rate) is placed on the standard deviations.
    """

    data: Sequence[float]
    prior_mu_mean: Optional[float] = None
    prior_mu_var: Optional[float] = None
    prior_sigma_shape: float = 2.0
    prior_sigma_rate: float = 2.0
    y: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        y = np.asarray(self.data, dtype=float).ravel()
        if y.size == 0:
            raise TargetError("mixture posterior needs at least one observation")
        object.__setattr__(self, "y", y)
        if self.prior_mu_mean is None:
            object.__setattr__(self, "prior_mu_mean", float(y.mean()))
        if self.prior_mu_var is None:
            object.__setattr__(self, "prior_mu_var", float(y.var()) if y.size > 1 else 1.0)
        if not self.prior_mu_var > 0:
            raise TargetError("prior_mu_var must be positive")
        if not (self.prior_sigma_shape > 0 and self.prior_sigma_rate > 0):
            raise TargetError("gamma prior shape and rate must be positive")


def make_mixture_posterior(spec: MixturePosteriorSpec) -> TargetDensity:
    """Observed-data posterior over ``(mu1, mu2, sigma1, sigma2, lambda)``.

    Returns ``-inf`` outside ``sigma > 0, 0 <= lambda <= 1``. The score is
    closed form in all five coordinates.
    """
    y = spec.y
    m0, v0 = spec.prior_mu_mean, spec.prior_mu_var
    a, b = spec.prior_sigma_shape, spec.prior_sigma_rate

    def _parts(theta):
        theta = np.asarray(theta, dtype=float)
        mu1, mu2, s1, s2, lam = (theta[..., i] for i in range(5))
        ok = (s1 > 0) & (s2 > 0) & (lam >= 0) & (lam <= 1)
        s1 = np.where(ok, s1, 1.0)
        s2 = np.where(ok, s2, 1.0)
        lam = np.where(ok, lam, 0.5)
        z1 = (y - mu1[..., None]) / s1[..., None]
        z2 = (y - mu2[..., None]) / s2[..., None]
        with np.errstate(divide="ignore"):
            l1 = np.log(lam)[..., None] - np.log(s1)[..., None] - 0.5 * z1**2 - 0.5 * LOG_2PI
            l2 = np.log1p(-lam)[..., None] - np.log(s2)[..., None] - 0.5 * z2**2 - 0.5 * LOG_2PI
        top = np.maximum(l1, l2)
        mix = top + np.log(np.exp(l1 - top) + np.exp(l2 - top))
        return ok, (mu1, mu2, s1, s2, lam), (z1, z2, l1, l2, mix)

    def log_density(theta):
        ok, (mu1, mu2, s1, s2, lam), (*_, mix) = _parts(theta)
        loglik = mix.sum(axis=-1)
        logprior = (
            -0.5 * ((mu1 - m0) ** 2 + (mu2 - m0) ** 2) / v0
            + (a - 1) * (np.log(s1) + np.log(s2))
            - b * (s1 + s2)
        )
        return np.where(ok, loglik + logprior, -np.inf)

    def grad_log_density(theta):
        ok, (mu1, mu2, s1, s2, lam), (z1, z2, l1, l2, mix) = _parts(theta)
        r1 = np.exp(l1 - mix)
        r2 = np.exp(l2 - mix)
        g = np.empty(np.shape(theta), dtype=float)
        g[..., 0] = (r1 * z1).sum(-1) / s1 - (mu1 - m0) / v0
        g[..., 1] = (r2 * z2).sum(-1) / s2 - (mu2 - m0) / v0
        g[..., 2] = (r1 * (z1**2 - 1)).sum(-1) / s1 + (a - 1) / s1 - b
        g[..., 3] = (r2 * (z2**2 - 1)).sum(-1) / s2 + (a - 1) / s2 - b
        # d/dlam log(lam N1 + (1-lam) N2) = r1/lam - r2/(1-lam)
        with np.errstate(divide="ignore", invalid="ignore"):
            g[..., 4] = (r1 / lam[..., None] - r2 / (1 - lam)[..., None]).sum(-1)
        g[~ok] = np.nan
        return g

    return TargetDensity(
        dim=5,
        log_density=log_density,
        grad_log_density=grad_log_density,
        name="mixture-posterior",
    )


# --------------------------------------------------------------------------
# Conditional views
# --------------------------------------------------------------------------


def block_view(target: TargetDensity, block: Sequence[int], complement_values) -> TargetDensity:
    """Target over the coordinates in ``block`` with every other coordinate frozen.

    ``complement_values`` holds either the non-block coordinates in index order
    or a full-length state whose block entries are ignored. Leading batch axes
    are allowed, so one view can serve a whole particle population.
    """
    block = [int(i) for i in block]
    if not block:
        raise IndexError("block must name at least one coordinate")
    if len(set(block)) != len(block):
        raise IndexError(f"block indices repeat: {block}")
    bad = [i for i in block if not 0 <= i < target.dim]
    if bad:
        raise IndexError(f"block indices {bad} outside 0..{target.dim - 1}")
    rest = [i for i in range(target.dim) if i not in block]
    comp = np.asarray(complement_values, dtype=float)
    if comp.shape[-1:] == (target.dim,):
        base = comp.copy()
    elif comp.shape[-1:] == (len(rest),) or (not rest and comp.size == 0):
        base = np.empty(comp.shape[:-1] + (target.dim,))
        base[..., rest] = comp
    else:
        raise IndexError(
            f"complement has trailing size {comp.shape[-1:]}, expected {len(rest)} or {target.dim}"
        )

    def embed(z):
        z = np.asarray(z, dtype=float)
        full = np.broadcast_to(base, np.broadcast_shapes(base.shape[:-1], z.shape[:-1]) + (target.dim,)).copy()
        full[..., block] = z
        return full

    def log_density(z):
        return target.log_density(embed(z))

    def block_grad(z):
        return target.grad_log_density(embed(z))[..., block]

    grad = block_grad if target.grad_log_density is not None else None

    centers = None
    if target.mode_centers is not None:
        centers = np.asarray(target.mode_centers)[:, block]
    return TargetDensity(
        dim=len(block),
        log_density=log_density,
        grad_log_density=grad,
        mode_centers=centers,
        name=f"{target.name}[{','.join(map(str, block))}]",
    )


def shifted(target: TargetDensity, log_offset: float) -> TargetDensity:
    """Same target with ``log_offset`` subtracted from the log-density.

    Ratios are untouched; only the absolute scale seen by repulsion weights
    changes.
    """
    return TargetDensity(
        dim=target.dim,
        log_density=lambda x: target.log_density(x) - log_offset,
        grad_log_density=target.grad_log_density,
        mode_centers=target.mode_centers,
        name=target.name,
    )


def finite_difference_grad(target: TargetDensity, x, eps: float = 1e-6) -> np.ndarray:
    """Central-difference score, used to check analytic gradients."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.shape[-1]):
        step = np.zeros_like(x)
        step[..., i] = eps * np.maximum(1.0, np.abs(x[..., i]))
        h = step[..., i]
        g[..., i] = (target.log_density(x + step) - target.log_density(x - step)) / (2 * h)
    return g
