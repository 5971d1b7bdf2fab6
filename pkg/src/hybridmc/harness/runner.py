"""Replicate farms for benchmarks, mode detection and the repulsion-width scan."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..diagnostics import (
    RunReport,
    chain_report,
    correction_acceptance_eta,
    mode_detection_time,
    pmc_report,
    replicate_summary,
)
from ..pmc import run_pmc
from ..samplers import Budget, run_chain
from ..targets import (
    GaussianMixtureSpec,
    TargetDensity,
    make_gaussian_mixture,
    standard_normal,
    toy_mixture_spec,
)
from .config import AlgorithmConfig, ExperimentConfig
from .report import ReportWriter, emit_report, write_histogram_csv, write_table_csv


class HarnessError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# Targets, seeds and initial populations
# --------------------------------------------------------------------------


def _mixture_spec(tcfg: dict) -> Optional[GaussianMixtureSpec]:
    kind = tcfg["kind"]
    if kind == "toy":
        return toy_mixture_spec()
    if kind == "gaussian-mixture":
        try:
            return GaussianMixtureSpec(tcfg["weights"], tcfg["means"], tcfg["covariances"])
        except KeyError as exc:
            raise HarnessError(f"gaussian-mixture target needs {exc.args[0]!r}") from None
    return None


def build_target(tcfg: dict) -> TargetDensity:
    spec = _mixture_spec(tcfg)
    if spec is not None:
        return make_gaussian_mixture(spec, name=tcfg["kind"])
    return standard_normal(tcfg.get("dim", 1))


def target_mean(tcfg: dict) -> np.ndarray:
    spec = _mixture_spec(tcfg)
    if spec is None:
        return np.zeros(tcfg.get("dim", 1))
    w, m, _ = spec.validate()
    return w @ m


def sample_target(tcfg: dict, n: int, rng) -> np.ndarray:
    spec = _mixture_spec(tcfg)
    if spec is None:
        return rng.standard_normal((n, tcfg.get("dim", 1)))
    w, m, cov = spec.validate()
    comp = rng.choice(len(w), size=n, p=w)
    z = rng.standard_normal((n, m.shape[1]))
    chol = np.linalg.cholesky(cov)
    return m[comp] + np.einsum("nij,nj->ni", chol[comp], z)


def replicate_seed(base_seed: int, r: int) -> np.random.SeedSequence:
    """Independent stream for replicate ``r``, derived from ``(base_seed, r)`` only."""
    return np.random.SeedSequence([base_seed, r])


def replicate_rng(base_seed: int, r: int) -> np.random.Generator:
    return np.random.default_rng(replicate_seed(base_seed, r))


def initial_population(tcfg: dict, init: dict, n: int, rng, target: Optional[TargetDensity] = None) -> np.ndarray:
    """Starting particles.

    ``balanced`` puts particle ``i`` near centre ``i mod K``; ``mode`` puts all
    of them near one centre, redrawing any that land closer to another
    centre; ``target`` draws them from the target itself.
    """
    target = target or build_target(tcfg)
    kind, jitter = init.get("kind", "balanced"), init.get("jitter", 1.0)
    if kind == "target":
        return sample_target(tcfg, n, rng)
    centers = target.mode_centers
    if centers is None:
        centers = np.zeros((1, target.dim))
    centers = np.asarray(centers, dtype=float)
    if kind == "balanced":
        return centers[np.arange(n) % len(centers)] + jitter * rng.standard_normal((n, target.dim))
    m = init.get("mode", 0)
    if m >= len(centers):
        raise HarnessError(f"init mode {m} but the target has {len(centers)} centres")
    x = centers[m] + jitter * rng.standard_normal((n, target.dim))
    for _ in range(1000):
        d = ((x[:, None, :] - centers) ** 2).sum(-1)
        bad = (d < d[:, [m]]).any(axis=1)
        if not bad.any():
            return x
        x[bad] = centers[m] + jitter * rng.standard_normal((int(bad.sum()), target.dim))
    raise HarnessError("could not place the initial particles in a single mode")


# --------------------------------------------------------------------------
# Benchmarks
# --------------------------------------------------------------------------


@dataclass
class Failure:
    label: str
    replicate: int
    error: str

    def as_dict(self) -> dict:
        return {"replicate": self.replicate, "error": self.error}


@dataclass
class BenchmarkResult:
    reports: list
    summaries: dict
    failures: list = field(default_factory=list)
    paths: list = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.failures)

    def by_label(self, label: str) -> list:
        return [r for r in self.reports if r.algorithm == label]


def _truths(tcfg: dict) -> dict:
    return {"H": float(target_mean(tcfg)[0])}


def run_replicate(cfg: ExperimentConfig, algo: AlgorithmConfig, r: int) -> RunReport:
    """One seeded run of one algorithm, reduced to a report."""
    rng = replicate_rng(cfg.base_seed, r)
    target = build_target(cfg.target)
    init = initial_population(cfg.target, cfg.init, cfg.particles, rng, target)
    mean = target_mean(cfg.target)
    if algo.is_pmc:
        series = run_pmc(
            "repulsive" if algo.name == "pmc-r" else "plain",
            target,
            init,
            algo.k,
            algo.repulsion(),
            algo.M,
            cfg.budget,
            rng,
            burn_in=cfg.pmc_burn_in,
        )
        rep = pmc_report(series, algo.label, r, mean, cfg.bias_threshold)
    else:
        trace = run_chain(algo.sampler_spec(), target, init, cfg.budget, rng, burn_in=cfg.burn_in)
        rep = chain_report(trace, algo.label, r, mean, cfg.bias_threshold)
    if not cfg.timing:
        rep = replace(rep, wall_clock=0.0)
    return rep


def _task(args):
    cfg_dict, algo_index, r = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    algo = cfg.algorithms[algo_index]
    try:
        return run_replicate(cfg, algo, r)
    except Exception as exc:  # recorded, the farm carries on
        return Failure(algo.label, r, f"{type(exc).__name__}: {exc}")


def _lockstep_reports(cfg: ExperimentConfig, algo: AlgorithmConfig) -> list:
    target = build_target(cfg.target)
    inits = np.stack(
        [initial_population(cfg.target, cfg.init, cfg.particles, replicate_rng(cfg.base_seed, r), target) for r in range(cfg.replicates)]
    )
    rng = np.random.default_rng(np.random.SeedSequence([cfg.base_seed]))
    trace = run_chain(algo.sampler_spec(), target, inits, cfg.budget, rng, burn_in=cfg.burn_in)
    mean = target_mean(cfg.target)
    out = []
    for r in range(cfg.replicates):
        rep = chain_report(trace.replicate(r), algo.label, r, mean, cfg.bias_threshold)
        out.append(rep if cfg.timing else replace(rep, wall_clock=0.0))
    return out


def _workers(cfg: ExperimentConfig) -> int:
    return cfg.workers if cfg.workers is not None else (os.cpu_count() or 1)


def _farm(tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        for t in tasks:
            yield _task(t)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(_task, tasks)


def run_benchmark(cfg: ExperimentConfig, out_dir=None, write: bool = True) -> BenchmarkResult:
    """Run every algorithm ``cfg.replicates`` times and summarize.

    Rows are appended to ``reports.csv`` as replicates finish (in replicate
    order, so the file does not depend on the worker count). Failed
    replicates are recorded and left out of the summary.
    """
    out = Path(out_dir or cfg.out)
    writer = ReportWriter(out / "reports.csv") if write else None
    reports, failures = [], []
    try:
        cfg_dict = cfg.to_dict()
        for a, algo in enumerate(cfg.algorithms):
            if cfg.lockstep and not algo.is_pmc:
                try:
                    results = _lockstep_reports(cfg, algo)
                except Exception as exc:
                    results = [Failure(algo.label, r, f"{type(exc).__name__}: {exc}") for r in range(cfg.replicates)]
            else:
                tasks = [(cfg_dict, a, r) for r in range(cfg.replicates)]
                results = _farm(tasks, _workers(cfg))
            for res in results:
                if isinstance(res, Failure):
                    failures.append(res)
                    continue
                reports.append(res)
                if writer:
                    writer.write(res)
    finally:
        if writer:
            writer.close()

    summaries = {}
    truths = _truths(cfg.target)
    for algo in cfg.algorithms:
        mine = [r for r in reports if r.algorithm == algo.label]
        summaries[algo.label] = replicate_summary(mine, truths) if len(mine) >= 2 else None
    result = BenchmarkResult(reports, summaries, failures)
    if write:
        fail_map = {}
        for f in failures:
            fail_map.setdefault(f.label, []).append(f.as_dict())
        result.paths = emit_report(reports, summaries, out, formats=("json",), name=cfg.name, failures=fail_map)
        result.paths.insert(0, out / "reports.csv")
    return result


# --------------------------------------------------------------------------
# Mode detection
# --------------------------------------------------------------------------


@dataclass
class DetectionResult:
    label: str
    times: list
    window: int

    @property
    def count(self) -> int:
        return sum(t is not None and t <= self.window for t in self.times)

    def histogram(self):
        edges = np.arange(self.window + 2) - 0.5
        hits = [t for t in self.times if t is not None]
        counts, _ = np.histogram(hits, bins=edges)
        return edges, counts


def _detect_one(cfg: ExperimentConfig, algo: AlgorithmConfig, r: int, target, pair) -> Optional[int]:
    rng = replicate_rng(cfg.base_seed, r)
    init_cfg = dict(cfg.init, kind="mode")
    if algo.is_pmc:
        window = cfg.pmc_mode_window
        init = initial_population(cfg.target, init_cfg, cfg.particles, rng, target)
        series = run_pmc(
            "repulsive" if algo.name == "pmc-r" else "plain", target, init, algo.k, algo.repulsion(), algo.M, window, rng, burn_in=0
        )
        return mode_detection_time(series.populations, pair, window)
    window = cfg.mode_window
    init = initial_population(cfg.target, init_cfg, cfg.particles, rng, target)
    trace = run_chain(algo.sampler_spec(), target, init, window, rng, burn_in=0)
    return mode_detection_time(trace, pair, window)


def mode_detection_campaign(cfg: ExperimentConfig, out_dir=None, write: bool = True) -> dict:
    """Per-replicate first-detection times of the second mode, for every algorithm.

    All particles start in mode ``cfg.init['mode']``; a detection is the
    first population with a particle strictly closer to centre
    ``cfg.init['detect']`` (default: the next one) than to the start.
    Chains run for the mode window, PMC for the PMC mode window.
    """
    target = build_target(cfg.target)
    centers = target.mode_centers
    if centers is None or len(centers) < 2:
        raise HarnessError("mode detection needs a target with at least two mode centres")
    m = cfg.init.get("mode", 0)
    other = cfg.init.get("detect", (m + 1) % len(centers))
    if m >= len(centers) or other >= len(centers):
        raise HarnessError(f"target has {len(centers)} centres; init names mode {m} and detect {other}")
    # a start already in the searched mode counts as detected at once
    pair = np.asarray([centers[m] if other != m else centers[(m + 1) % len(centers)], centers[other]])
    results = {}
    for algo in cfg.algorithms:
        times = [_detect_one(cfg, algo, r, target, pair) for r in range(cfg.replicates)]
        window = cfg.pmc_mode_window if algo.is_pmc else cfg.mode_window
        results[algo.label] = DetectionResult(algo.label, times, window)
    if write:
        out = Path(out_dir or cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        rows = []
        for label, res in results.items():
            rows.extend((label, r, "" if t is None else t) for r, t in enumerate(res.times))
            write_histogram_csv(out / f"detection_hist_{label}.csv", *res.histogram())
        write_table_csv(out / "detection_times.csv", ["algorithm", "replicate", "detected_at"], rows)
        write_table_csv(
            out / "detection_counts.csv",
            ["algorithm", "window", "detected", "replicates"],
            [(label, res.window, res.count, len(res.times)) for label, res in results.items()],
        )
    return results


# --------------------------------------------------------------------------
# Repulsion width scan
# --------------------------------------------------------------------------


@dataclass
class XiScanRow:
    label: str
    xi: float
    eta: Optional[float]
    propose_accepted: int
    correction_accepted: int


def tune_xi_scan(cfg: ExperimentConfig, xi_grid: Optional[Sequence[float]] = None, out_dir=None, write: bool = True) -> list:
    """Correction-step acceptance ``eta`` for each width in ``xi_grid``.

    Every grid point reuses the same seeded starting configuration and
    random stream, so differences come from ``xi`` alone. Runs last
    ``cfg.budget.iterations`` sweeps (500 if the budget is in seconds).
    """
    grid = list(cfg.xi_grid if xi_grid is None else xi_grid)
    if not grid:
        raise HarnessError("empty xi grid")
    algos = [a for a in cfg.algorithms if a.name in ("mh-rp", "ps")]
    if not algos:
        raise HarnessError("the xi scan needs an mh-rp or ps algorithm")
    iters = cfg.budget.iterations if cfg.budget.iterations is not None else 500
    target = build_target(cfg.target)
    rows = []
    for algo in algos:
        init = initial_population(cfg.target, cfg.init, cfg.particles, replicate_rng(cfg.base_seed, 0), target)
        for xi in grid:
            spec = replace(algo.sampler_spec(), xi=float(xi))
            trace = run_chain(spec, target, init, Budget(iterations=iters), replicate_rng(cfg.base_seed, 1), burn_in=0)
            rows.append(XiScanRow(algo.label, float(xi), correction_acceptance_eta(trace.counters), *trace.counters))
    if write:
        out = Path(out_dir or cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        write_table_csv(
            out / "xi_scan.csv",
            ["algorithm", "xi", "eta", "propose_accepted", "correction_accepted"],
            [(r.label, r.xi, r.eta, r.propose_accepted, r.correction_accepted) for r in rows],
        )
    return rows
