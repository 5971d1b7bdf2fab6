"""Run measures: acceptance, autocorrelation time, ESS, replicate summaries,
mode detection, biased-estimate counts, correction acceptance and a grid
quadrature for holed densities.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Mapping, Optional, Sequence

import numpy as np

from .proposals import RepulsiveConfig, _hole_log_factor, repulsion_exponent

BIAS_THRESHOLD = 3.51
MODE_WINDOW = 50
REPORT_COLUMNS = ("algorithm", "seed", "T", "A", "H", "var_H", "tau", "ess", "n_b", "eta", "wall_clock")


class DiagnosticsError(ValueError):
    pass


class GridResolutionError(DiagnosticsError):
    pass


@dataclass
class RunReport:
    """Measures for one run. ``T`` counts sweeps of the particle population."""

    algorithm: str
    seed: int
    T: int
    A: float
    H: float
    var_H: float
    tau: float
    ess: float
    n_b: int = 0
    eta: Optional[float] = None
    wall_clock: float = 0.0

    def row(self) -> dict:
        return {k: getattr(self, k) for k in REPORT_COLUMNS}

    @classmethod
    def from_row(cls, row: Mapping) -> "RunReport":
        def num(v, kind):
            if v is None or v == "":
                return None
            return kind(v)

        return cls(
            algorithm=row["algorithm"],
            seed=int(row["seed"]),
            T=int(row["T"]),
            A=float(row["A"]),
            H=float(row["H"]),
            var_H=float(row["var_H"]),
            tau=float(row["tau"]),
            ess=float(row["ess"]),
            n_b=int(row["n_b"]),
            eta=num(row.get("eta"), float),
            wall_clock=float(row["wall_clock"]),
        )


@dataclass
class ReplicateSummary:
    """Per-measure replicate mean and mean square error."""

    n: int
    mean: dict
    mse: dict
    truths: dict

    def as_dict(self) -> dict:
        return asdict(self)


def acceptance_rate(trace) -> float:
    """Fraction of particle moves accepted at any stage, burn-in included."""
    stages = np.asarray(getattr(trace, "stages", trace))
    if stages.size == 0:
        raise DiagnosticsError("acceptance rate of an empty trace")
    return float(np.count_nonzero(stages) / stages.size)


def _autocorrelation(x: np.ndarray) -> np.ndarray:
    n = len(x)
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n]
    return acov / acov[0]


def iat(series) -> float:
    """Integrated autocorrelation time, ``1 + 2 sum_l rho(l)``.

    The sum is truncated by Geyer's initial positive sequence: pairs
    ``rho(2k) + rho(2k + 1)`` are added until the first nonpositive pair.
    Returns ``inf`` for a constant series; never less than 1.
    """
    x = np.asarray(series, dtype=float).ravel()
    if x.size < 2:
        raise DiagnosticsError("need at least two values to estimate autocorrelation")
    if np.ptp(x) == 0:
        return math.inf
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = _autocorrelation(x)
    if not np.all(np.isfinite(rho)):
        # spread lost to rounding once centred
        return math.inf
    m = len(rho) // 2
    pairs = rho[: 2 * m : 2] + rho[1 : 2 * m : 2]
    nonpos = np.flatnonzero(pairs <= 0)
    k = nonpos[0] if nonpos.size else m
    tau = -1.0 + 2.0 * pairs[:k].sum()
    return float(max(tau, 1.0))


def ess(T: int, T0: int, tau: float) -> float:
    if not T > T0:
        raise DiagnosticsError(f"need T > T0, got T={T}, T0={T0}")
    if not tau >= 1:
        raise DiagnosticsError(f"autocorrelation time must be at least 1, got {tau}")
    return (T - T0) / tau


def replicate_summary(reports: Sequence, truths: Optional[Mapping[str, float]] = None) -> ReplicateSummary:
    """Average every numeric measure over replicates.

    MSE is taken about ``truths[measure]`` when given and about the replicate
    mean otherwise. Measures missing from some replicates (``eta``) are
    averaged over the replicates that have them.
    """
    if len(reports) < 2:
        raise DiagnosticsError(f"need at least two replicates, got {len(reports)}")
    truths = dict(truths or {})
    names = [f.name for f in fields(RunReport) if f.name not in ("algorithm", "seed")]
    mean, mse = {}, {}
    for name in names:
        vals = np.array([getattr(r, name) for r in reports if getattr(r, name) is not None], dtype=float)
        vals = vals[np.isfinite(vals)]
        if vals.size == 0:
            mean[name] = mse[name] = None
            continue
        mean[name] = float(vals.mean())
        ref = truths.get(name, mean[name])
        mse[name] = float(np.mean((vals - ref) ** 2))
    return ReplicateSummary(n=len(reports), mean=mean, mse=mse, truths=truths)


def mode_detection_time(trace, centers, window: Optional[int] = None) -> Optional[int]:
    """First sweep at which some particle is strictly closer to ``centers[1]`` than ``centers[0]``.

    Index 0 is the initial population. Returns ``None`` if that never
    happens within the first ``window`` sweeps (the whole trace if ``window``
    is None).
    """
    states = np.asarray(getattr(trace, "states", trace), dtype=float)
    c = np.asarray(centers, dtype=float)
    if window is not None:
        states = states[: window + 1]
    d0 = ((states - c[0]) ** 2).sum(-1)
    d1 = ((states - c[1]) ** 2).sum(-1)
    hit = (d1 < d0).reshape(len(states), -1).any(axis=1)
    idx = np.flatnonzero(hit)
    return int(idx[0]) if idx.size else None


def biased_estimate_count(estimates, expectation, threshold: float = BIAS_THRESHOLD) -> int:
    """Number of estimates farther than ``threshold`` (Euclidean) from ``expectation``."""
    if not threshold > 0:
        raise DiagnosticsError("threshold must be positive")
    est = np.asarray(estimates, dtype=float)
    dist = np.sqrt(((est - np.asarray(expectation, dtype=float)) ** 2).sum(-1))
    return int(np.count_nonzero(dist > threshold))


def correction_acceptance_eta(counters) -> Optional[float]:
    """Correction-accepted over propose-accepted; ``None`` when nothing passed the Propose test."""
    propose, correction = getattr(counters, "counters", counters)
    if propose == 0:
        return None
    return correction / propose


def _grid_ratio(f, cfg: RepulsiveConfig, holes, lo, hi, n) -> float:
    axes = [np.linspace(a + (b - a) / (2 * n), b - (b - a) / (2 * n), n) for a, b in zip(lo, hi)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
    holes = np.asarray(holes, dtype=float)
    hole_logs = f.log_density(holes)
    lf = f.log_density(pts)
    top = lf.max()
    base = np.exp(lf - top)
    if cfg.xi == 0 or cfg.nu == 0:
        return 1.0
    num = 0.0
    for chunk in np.array_split(np.arange(len(pts)), max(1, len(pts) * len(holes) // 4_000_000)):
        s = repulsion_exponent(pts[chunk], holes, hole_logs, cfg.xi)
        num += (base[chunk] * np.exp(_hole_log_factor(s, cfg.nu))).sum()
    return float(num / base.sum())


def grid_norm_const_ratio(target, cfg: RepulsiveConfig, holes, grid_spec, tolerance: float = 0.01) -> float:
    """Midpoint-rule estimate of ``int f_holed / int f`` over a rectangular grid.

    ``grid_spec`` is ``(lo, hi, n)`` with per-axis bounds and cells per axis.
    The holed density is ``f * ((1 - nu) + nu * prod_j exp(-xi / (f(h_j) |x - h_j|^2)))``.
    The ratio is recomputed on a grid with half the cells per axis; if the two
    differ by more than ``tolerance`` (relative), ``GridResolutionError`` is
    raised.
    """
    lo, hi, n = grid_spec
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    fine = _grid_ratio(target, cfg, holes, lo, hi, int(n))
    coarse = _grid_ratio(target, cfg, holes, lo, hi, max(2, int(n) // 2))
    if abs(fine - coarse) > tolerance * abs(fine):
        raise GridResolutionError(f"grid ratio {fine:.6g} vs {coarse:.6g} at half resolution; refine the grid")
    return fine


# --------------------------------------------------------------------------
# Report assembly
# --------------------------------------------------------------------------


def particle_mean_series(trace, coord: int = 0) -> np.ndarray:
    states = np.asarray(getattr(trace, "states", trace))
    return states[..., coord].mean(axis=-1)


def series_report(
    estimates,
    burn_in: int,
    algorithm: str = "",
    seed: int = 0,
    expectation: Optional[Sequence[float]] = None,
    threshold: float = BIAS_THRESHOLD,
    coord: int = 0,
    A: float = math.nan,
    eta: Optional[float] = None,
    wall_clock: float = 0.0,
) -> RunReport:
    """Measures of a per-iteration estimate series of shape ``(T, D)``.

    The first ``burn_in`` entries are dropped before computing ``H``,
    ``var_H``, ``tau`` and ``n_b``.
    """
    est = np.asarray(estimates, dtype=float)
    T = len(est)
    if not T > burn_in:
        raise DiagnosticsError(f"series of {T} iterations does not outlast burn-in {burn_in}")
    kept = est[burn_in:]
    h = kept[:, coord]
    tau = iat(h) if len(h) > 1 else math.inf
    return RunReport(
        algorithm=algorithm,
        seed=seed,
        T=T,
        A=A,
        H=float(h.mean()),
        var_H=float(h.var(ddof=1)) if len(h) > 1 else math.nan,
        tau=tau,
        ess=ess(T, burn_in, tau) if math.isfinite(tau) else 0.0,
        n_b=biased_estimate_count(kept, expectation, threshold) if expectation is not None else 0,
        eta=eta,
        wall_clock=wall_clock,
    )


def chain_report(
    trace,
    algorithm: str = "",
    seed: int = 0,
    expectation: Optional[Sequence[float]] = None,
    threshold: float = BIAS_THRESHOLD,
    coord: int = 0,
) -> RunReport:
    """Measures of one particle-chain run.

    ``H`` is the grand mean of coordinate ``coord`` over particles and
    post-burn-in sweeps; ``var_H`` and ``tau`` are the variance and
    autocorrelation time of the per-sweep particle mean. ``A`` covers the
    whole run, burn-in included.
    """
    means = np.asarray(trace.states[1:]).mean(axis=-2)
    return series_report(
        means,
        trace.burn_in,
        algorithm=algorithm or trace.sampler,
        seed=seed,
        expectation=expectation,
        threshold=threshold,
        coord=coord,
        A=acceptance_rate(trace),
        eta=correction_acceptance_eta(trace.counters),
        wall_clock=trace.wall_clock,
    )


def pmc_report(series, algorithm: str = "", seed: int = 0, expectation=None, threshold: float = BIAS_THRESHOLD, coord: int = 0) -> RunReport:
    """Measures of a PMC estimate series; ``A`` does not apply and is NaN."""
    return series_report(
        series.estimates,
        series.burn_in,
        algorithm=algorithm or series.variant,
        seed=seed,
        expectation=expectation,
        threshold=threshold,
        coord=coord,
        wall_clock=series.wall_clock,
    )
