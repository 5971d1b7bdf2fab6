"""Two-component normal mixture fitted to particle-diameter data by block-updated chains."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..diagnostics import RunReport, acceptance_rate, correction_acceptance_eta, iat
from ..samplers import Block, SamplerSpec, run_block_chain
from ..targets import POSTERIOR_PARAMS, MixturePosteriorSpec, make_mixture_posterior
from .config import AEROSOL_DEFAULTS, AlgorithmConfig, ExperimentConfig
from .report import emit_report, write_table_csv
from .runner import replicate_rng

AEROSOL_SAMPLERS = ("mha", "mala", "dra-rw", "dra-lp", "ps")
BLOCKS = (("mu", (0, 1)), ("sigma", (2, 3)), ("lambda", (4,)))


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class AerosolDataset:
    diameters: np.ndarray
    subsample_size: int
    subsample_seed: Optional[int] = None

    def __post_init__(self):
        d = np.asarray(self.diameters, dtype=float)
        if d.ndim != 1 or d.size == 0:
            raise DataError("dataset must be a nonempty list of diameters")
        if np.any(~np.isfinite(d)) or np.any(d <= 0):
            raise DataError("diameters must be positive and finite")
        if self.subsample_size > d.size:
            raise DataError(f"subsample of {self.subsample_size} exceeds the {d.size} values available")
        object.__setattr__(self, "diameters", d)

    def __len__(self) -> int:
        return len(self.diameters)


def load_aerosol_data(path, subsample_size: Optional[int] = None, seed: int = 0) -> AerosolDataset:
    """Read one positive diameter per line (blank lines skipped) and subsample without replacement."""
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                v = float(text)
            except ValueError:
                raise DataError(f"{path}:{lineno}: not a number: {text!r}") from None
            if not (v > 0 and math.isfinite(v)):
                raise DataError(f"{path}:{lineno}: diameter must be positive, got {text!r}")
            values.append(v)
    if not values:
        raise DataError(f"{path}: no data")
    n = len(values) if subsample_size is None else int(subsample_size)
    if n > len(values):
        raise DataError(f"subsample of {n} exceeds the {len(values)} values in {path}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(values), size=n, replace=False)
    return AerosolDataset(np.asarray(values)[idx], n, seed)


def synth_aerosol(
    n: int = 2000,
    lam: float = 0.4,
    mu1: float = 1.0,
    mu2: float = 3.0,
    sigma1: float = 0.4,
    sigma2: float = 0.6,
    seed: int = 0,
) -> AerosolDataset:
    """Draws from ``lam N(mu1, sigma1^2) + (1 - lam) N(mu2, sigma2^2)`` kept positive by redrawing."""
    if not 0 <= lam <= 1:
        raise DataError(f"lambda must lie in [0, 1], got {lam}")
    if not (sigma1 > 0 and sigma2 > 0):
        raise DataError("component standard deviations must be positive")
    if n < 1:
        raise DataError("need at least one draw")
    if max(mu1, mu2) + 10 * max(sigma1, sigma2) <= 0:
        raise DataError("both components lie almost entirely below zero")
    rng = np.random.default_rng(seed)
    out = np.empty(n)
    todo = np.arange(n)
    while todo.size:
        first = rng.random(todo.size) < lam
        out[todo] = np.where(first, rng.normal(mu1, sigma1, todo.size), rng.normal(mu2, sigma2, todo.size))
        todo = todo[out[todo] <= 0]
    return AerosolDataset(out, n, seed)


def moment_guess(y) -> np.ndarray:
    """Rough ``(mu1, mu2, sigma1, sigma2, lambda)`` from a two-means split of the data."""
    y = np.sort(np.asarray(y, dtype=float))
    cut = np.median(y)
    for _ in range(100):
        lo, hi = y[y <= cut], y[y > cut]
        if lo.size < 2 or hi.size < 2:
            break
        new = 0.5 * (lo.mean() + hi.mean())
        if new == cut:
            break
        cut = new
    lo, hi = y[y <= cut], y[y > cut]
    if lo.size < 2 or hi.size < 2:
        half = len(y) // 2
        lo, hi = y[: max(half, 1)], y[max(half, 1) :]
        if hi.size == 0:
            hi = lo
    floor = 1e-3 * (float(np.std(y)) or 1.0)
    lam = min(max(lo.size / len(y), 0.05), 0.95)
    return np.array([lo.mean(), hi.mean(), max(lo.std(), floor), max(hi.std(), floor), lam])


def aerosol_blocks(name: str, blocks: dict) -> list:
    """Block schedule for one sampler.

    Random-walk variances ``s`` and Langevin steps ``h`` are per block. With
    ``ps`` the two-dimensional blocks use the pinball move with the block's
    ``xi`` and the mixing weight falls back to plain Metropolis.
    """
    if name not in AEROSOL_SAMPLERS:
        raise ValueError(f"aerosol runs support {AEROSOL_SAMPLERS}, not {name!r}")
    out = []
    for key, idx in BLOCKS:
        b = blocks[key]
        s, h = b.get("s"), b.get("h")

        def cov(v):
            return None if v is None else (v * np.eye(len(idx))).tolist()

        if name == "ps":
            spec = SamplerSpec("ps", s=cov(s), xi=b.get("xi", 0.0)) if len(idx) == 2 else SamplerSpec("mha", s=cov(s))
        elif name in ("mha", "dra-rw"):
            spec = SamplerSpec(name, s=cov(s))
        elif name == "mala":
            spec = SamplerSpec("mala", h=cov(h))
        else:
            spec = SamplerSpec("dra-lp", s=cov(s), h=cov(h))
        out.append(Block(idx, spec))
    return out


@dataclass
class AerosolResult:
    label: str
    means: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    taus: np.ndarray
    tau_bar: float
    ess: float
    report: RunReport
    histograms: dict = field(default_factory=dict)
    block_acceptance: tuple = ()

    def covers(self, truth) -> np.ndarray:
        truth = np.asarray(truth, dtype=float)
        return (self.lower <= truth) & (truth <= self.upper)


def _posterior_summary(label, trace, seed, bins=40) -> AerosolResult:
    T0 = trace.burn_in
    if trace.iterations <= T0:
        raise ValueError(f"run of {trace.iterations} iterations does not outlast burn-in {T0}")
    post = trace.states[T0 + 1 :]
    flat = post.reshape(-1, post.shape[-1])
    lower, upper = np.percentile(flat, [2.5, 97.5], axis=0)
    taus = np.array([iat(post[:, :, c].mean(axis=1)) for c in range(flat.shape[1])])
    tau_bar = float(taus.mean())
    T = trace.iterations
    ess_value = (T - T0) / tau_bar if math.isfinite(tau_bar) else 0.0
    series = post[:, :, 0].mean(axis=1)
    report = RunReport(
        algorithm=label,
        seed=seed,
        T=T,
        A=acceptance_rate(trace),
        H=float(flat[:, 0].mean()),
        var_H=float(series.var(ddof=1)),
        tau=tau_bar,
        ess=ess_value,
        n_b=0,
        eta=correction_acceptance_eta(trace.counters),
        wall_clock=trace.wall_clock,
    )
    hists = {}
    for c, pname in enumerate(POSTERIOR_PARAMS):
        counts, edges = np.histogram(flat[:, c], bins=bins)
        hists[pname] = (edges, counts)
    block_acc = tuple(float(np.count_nonzero(trace.stages[..., b]) / trace.stages[..., b].size) for b in range(trace.stages.shape[-1]))
    return AerosolResult(label, flat.mean(axis=0), lower, upper, taus, tau_bar, ess_value, report, hists, block_acc)


def run_aerosol_experiment(
    cfg: ExperimentConfig,
    dataset: AerosolDataset,
    algorithms: Optional[Sequence[AlgorithmConfig]] = None,
    out_dir=None,
    write: bool = True,
) -> dict:
    """Fit the mixture posterior with each configured sampler.

    Particles start within a few percent of a two-means guess; wider
    starts leave some particles so far down the posterior that their
    repulsion holes cover everything. The log-posterior is shifted
    by its largest value over the starting particles before it enters the
    repulsion weights, which otherwise underflow for thousands of
    observations. Burn-in is ``cfg.burn_in``.
    """
    acfg = cfg.aerosol or AEROSOL_DEFAULTS
    algos = [a for a in (algorithms or cfg.algorithms) if a.name in AEROSOL_SAMPLERS]
    if not algos:
        raise ValueError(f"no algorithm in the config is one of {AEROSOL_SAMPLERS}")
    target = make_mixture_posterior(MixturePosteriorSpec(data=dataset.diameters))
    guess = moment_guess(dataset.diameters)
    rng0 = replicate_rng(cfg.base_seed, 0)
    jitter = 0.02 * np.abs(guess)
    init = guess + jitter * rng0.standard_normal((cfg.particles, 5))
    init[:, 2:4] = np.abs(init[:, 2:4])
    init[:, 4] = np.clip(init[:, 4], 0.01, 0.99)
    offset = float(np.max(target.log_density(init)))

    results = {}
    for a, algo in enumerate(algos):
        blocks = aerosol_blocks(algo.name, acfg["blocks"])
        trace = run_block_chain(blocks, target, init, cfg.budget, replicate_rng(cfg.base_seed, a + 1), burn_in=cfg.burn_in, log_offset=offset)
        res = _posterior_summary(algo.label, trace, cfg.base_seed)
        if not cfg.timing:
            res.report = replace(res.report, wall_clock=0.0)
        results[algo.label] = res

    if write:
        out = Path(out_dir or cfg.out)
        hists = {f"posterior_hist_{label}_{p}": res.histograms[p] for label, res in results.items() for p in POSTERIOR_PARAMS}
        extras = {
            label: {
                "posterior_mean": dict(zip(POSTERIOR_PARAMS, res.means.tolist())),
                "ci95_lower": dict(zip(POSTERIOR_PARAMS, res.lower.tolist())),
                "ci95_upper": dict(zip(POSTERIOR_PARAMS, res.upper.tolist())),
                "tau": dict(zip(POSTERIOR_PARAMS, res.taus.tolist())),
                "tau_bar": res.tau_bar,
                "ess": res.ess,
                "block_acceptance": list(res.block_acceptance),
            }
            for label, res in results.items()
        }
        emit_report([r.report for r in results.values()], {}, out, name=cfg.name, histograms=hists, extras={"aerosol": extras})
        rows = []
        for label, res in results.items():
            for c, p in enumerate(POSTERIOR_PARAMS):
                rows.append((label, p, res.means[c], res.lower[c], res.upper[c], res.taus[c]))
        write_table_csv(out / "posterior.csv", ["algorithm", "parameter", "mean", "ci95_lower", "ci95_upper", "tau"], rows)
    return results


def dataset_from_config(cfg: ExperimentConfig, data_path=None, synth: Optional[dict] = None) -> AerosolDataset:
    acfg = cfg.aerosol or AEROSOL_DEFAULTS
    path = data_path or acfg.get("data")
    if path:
        return load_aerosol_data(path, acfg["subsample_size"], acfg["subsample_seed"])
    p = dict(acfg["synth"], **(synth or {}))
    return synth_aerosol(p["n"], p["lambda"], p["mu1"], p["mu2"], p["sigma1"], p["sigma2"], p["seed"])
