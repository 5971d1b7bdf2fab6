"""Hybrid Markov chain and population Monte Carlo samplers with a benchmark harness."""

from .diagnostics import (
    BIAS_THRESHOLD,
    ReplicateSummary,
    RunReport,
    acceptance_rate,
    biased_estimate_count,
    chain_report,
    correction_acceptance_eta,
    ess,
    grid_norm_const_ratio,
    iat,
    mode_detection_time,
    pmc_report,
    replicate_summary,
)
from .pmc import (
    EstimateSeries,
    ImportanceFunction,
    WeightedSample,
    build_kernel_importance,
    pmc_iteration,
    pmc_repulsive_iteration,
    resample_multinomial,
    run_pmc,
)
from .proposals import (
    LangevinKernel,
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
from .samplers import (
    Block,
    Budget,
    ChainTrace,
    SamplerSpec,
    Stage,
    StepOutcome,
    dra_step,
    mala_step,
    mh_rp_step,
    mh_step,
    pinball_step,
    run_block_chain,
    run_chain,
)
from .targets import (
    GaussianMixtureSpec,
    MixturePosteriorSpec,
    TargetDensity,
    block_view,
    make_gaussian_mixture,
    make_mixture_posterior,
    standard_normal,
    toy_mixture,
)

__version__ = "0.1.0"
