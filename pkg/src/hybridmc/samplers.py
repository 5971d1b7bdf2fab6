"""Markov chain samplers for particle populations.

Single-particle kernels (``mh_step``, ``mala_step``, ``dra_step``) broadcast
over leading axes, so a whole population of non-interacting particles moves
in one call. Interacting kernels (``mh_rp_step``, ``pinball_step``) update one
particle against the current positions of the others.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .proposals import (
    LangevinKernel,
    RandomWalkKernel,
    RepulsiveConfig,
    nearest_index,
    reflect_across_line,
    repulsion_exponent,
)
from .targets import TargetDensity, block_view, shifted

SAMPLERS = ("mha", "mala", "dra-rw", "dra-lp", "dra-pinball", "mh-rp", "ps")
INTERACTING = ("dra-pinball", "mh-rp", "ps")


class SamplerError(RuntimeError):
    pass


class InvalidStateError(SamplerError):
    """The chain was asked to move from a point of zero target density."""


class Stage(enum.IntEnum):
    REJECTED = 0
    STAGE1 = 1
    STAGE2 = 2


@dataclass
class StepOutcome:
    """Result of one transition.

    ``stage`` and ``log_density`` have the batch shape of ``new_point``.
    ``counters`` holds the (propose-accepted, correction-accepted) counts
    contributed by this step, per batch entry; both are zero for kernels
    without a correction test.
    """

    new_point: np.ndarray
    stage: np.ndarray
    log_density: np.ndarray
    counters: tuple = (0, 0)

    @property
    def accepted(self) -> np.ndarray:
        return self.stage != Stage.REJECTED


def _log_uniform(rng, shape) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(rng.random(shape))


def _log1m_exp(x) -> np.ndarray:
    """``log(1 - exp(x))`` for ``x <= 0``; ``-inf`` at ``x >= 0``."""
    with np.errstate(divide="ignore"):
        return np.log(-np.expm1(np.minimum(x, 0.0)))


def _clean(x) -> np.ndarray:
    # nan arises only from (-inf) - (-inf): a ratio involving two zero densities
    return np.where(np.isnan(x), -np.inf, x)


def _check_support(lp, state) -> None:
    if np.any(~np.isfinite(lp) & (np.asarray(lp) < 0)):
        raise InvalidStateError(f"current state has zero target density: {np.asarray(state).tolist()}")


def _q_log_ratio(q1, target, start, end):
    """``log q(end -> start) - log q(start -> end)``; zero for symmetric kernels."""
    if getattr(q1, "symmetric", False):
        return 0.0
    return q1.log_transition(target, end, start) - q1.log_transition(target, start, end)


def _select(mask, a, b):
    mask = np.asarray(mask)
    if np.ndim(a) > mask.ndim:
        return np.where(mask[..., None], a, b)
    return np.where(mask, a, b)


def mh_step(target: TargetDensity, q1, state, rng, log_density=None) -> StepOutcome:
    """One Metropolis-Hastings transition with proposal kernel ``q1``."""
    state = np.asarray(state, dtype=float)
    lp = target.log_density(state) if log_density is None else np.asarray(log_density)
    _check_support(lp, state)
    if isinstance(q1, LangevinKernel):
        # the gradient at the current state serves both the proposal and the forward density
        grad = target.grad_log_density(state)
        phi = q1.propose(target, state, rng, grad=grad)
        q_ratio = q1.log_transition(target, phi, state) - q1.log_transition(target, state, phi, grad_start=grad)
    else:
        phi = q1.propose(target, state, rng)
        q_ratio = _q_log_ratio(q1, target, state, phi)
    lp_phi = target.log_density(phi)
    with np.errstate(invalid="ignore"):
        log_alpha = _clean(lp_phi - lp + q_ratio)
    acc = _log_uniform(rng, lp.shape) < log_alpha
    return StepOutcome(
        new_point=_select(acc, phi, state),
        stage=np.where(acc, Stage.STAGE1, Stage.REJECTED).astype(np.int8),
        log_density=np.where(acc, lp_phi, lp),
    )


def mala_step(target: TargetDensity, kernel: LangevinKernel, state, rng, log_density=None) -> StepOutcome:
    """One Metropolis-adjusted Langevin transition."""
    if not isinstance(kernel, LangevinKernel):
        kernel = LangevinKernel(kernel)
    return mh_step(target, kernel, state, rng, log_density)


# --------------------------------------------------------------------------
# Delayed rejection
# --------------------------------------------------------------------------


def _second_stage(kind, target, state, phi, others, q2, rng):
    """Second-stage candidate and ``log q2(cand, phi, state) - log q2(state, phi, cand)``.

    Also returns a mask of entries where a candidate exists.
    """
    if kind == "random_walk":
        cand = q2.propose(target, state, rng)
        return cand, 0.0, np.ones(state.shape[:-1], dtype=bool)
    if kind == "langevin":
        grad = target.grad_log_density(phi)
        ok = np.all(np.isfinite(grad), axis=-1)
        grad = np.where(ok[..., None], grad, 0.0)
        center = q2.drift(target, phi, grad, check=False)
        cand = center + q2._g.noise(center.shape, rng)
        # q2 depends on phi only, through the drift centre
        ratio = q2._g.logpdf(state - center) - q2._g.logpdf(cand - center)
        return cand, ratio, ok
    if kind == "pinball":
        others = np.asarray(others, dtype=float)
        if state.shape[-1] != 2 or others.shape[-2] == 0:
            raise SamplerError("pinball second stage needs D = 2 and at least one other particle")
        j = nearest_index(phi, others)
        anchor = np.take_along_axis(others, j[..., None, None], axis=-2)[..., 0, :]
        cand, ok = reflect_across_line(state, anchor, phi)
        # involutive deterministic map: unit density ratio
        return cand, 0.0, ok
    raise SamplerError(f"unknown second-stage move {kind!r}")


def dra_step(
    target: TargetDensity,
    q1,
    q2_kind: str,
    state,
    others,
    rng,
    q2=None,
    log_density=None,
) -> StepOutcome:
    """Two-stage delayed-rejection transition.

    ``q2_kind`` is ``"random_walk"`` (``q2`` defaults to ``q1``), ``"langevin"``
    (``q2`` is a ``LangevinKernel`` centred on the rejected candidate) or
    ``"pinball"`` (reflection using ``others``).
    """
    state = np.asarray(state, dtype=float)
    lp = target.log_density(state) if log_density is None else np.asarray(log_density)
    _check_support(lp, state)
    if q2 is None:
        if q2_kind == "langevin":
            raise SamplerError("langevin second stage needs a LangevinKernel q2")
        q2 = q1

    phi = q1.propose(target, state, rng)
    lp_phi = target.log_density(phi)
    with np.errstate(invalid="ignore"):
        lq_fwd = _q_log_ratio(q1, target, state, phi)
        log_a1 = _clean(lp_phi - lp + lq_fwd)
    u1 = _log_uniform(rng, lp.shape)
    acc1 = u1 < log_a1

    cand, lq2_ratio, ok = _second_stage(q2_kind, target, state, phi, others, q2, rng)
    lp_cand = target.log_density(cand)
    with np.errstate(invalid="ignore"):
        lq1_cand_phi = q1.log_transition(target, cand, phi)
        lq1_state_phi = q1.log_transition(target, state, phi)
        if getattr(q1, "symmetric", False):
            log_a1_cand = _clean(lp_phi - lp_cand)
        else:
            log_a1_cand = _clean(lp_phi + q1.log_transition(target, phi, cand) - lp_cand - lq1_cand_phi)
        log_num = lp_cand + lq1_cand_phi + lq2_ratio + _log1m_exp(log_a1_cand)
        log_den = lp + lq1_state_phi + _log1m_exp(log_a1)
        log_a2 = _clean(log_num - log_den)
    u2 = _log_uniform(rng, lp.shape)
    acc2 = ~acc1 & ok & (u2 < log_a2)

    new = _select(acc1, phi, _select(acc2, cand, state))
    stage = np.where(acc1, Stage.STAGE1, np.where(acc2, Stage.STAGE2, Stage.REJECTED)).astype(np.int8)
    return StepOutcome(new, stage, np.where(acc1, lp_phi, np.where(acc2, lp_cand, lp)))


# --------------------------------------------------------------------------
# Repulsive proposals
# --------------------------------------------------------------------------


def _split(particles, i, log_density):
    particles = np.asarray(particles, dtype=float)
    n = particles.shape[-2]
    if n < 2:
        raise SamplerError("repulsive moves need at least two particles")
    idx = [j for j in range(n) if j != i]
    return particles[..., i, :], particles[..., idx, :], log_density[..., i], log_density[..., idx]


def _rp_first_stage(target, q1, theta, others, lp, lp_others, cfg, rng):
    phi = q1.propose(target, theta, rng)
    lp_phi = target.log_density(phi)
    s = repulsion_exponent(np.stack([phi, theta], axis=-2), others[..., None, :, :], lp_others[..., None, :], cfg.xi)
    with np.errstate(invalid="ignore"):
        lr_phi = lp_phi + s[..., 0]
        lr = lp + s[..., 1]
        log_rho_star = _clean(lr_phi - lr + _q_log_ratio(q1, target, theta, phi))
        log_corr = _clean((lp_phi - lp) - (lr_phi - lr))
    prop = _log_uniform(rng, lp.shape) < log_rho_star
    corr = prop & (_log_uniform(rng, lp.shape) < log_corr)
    return phi, lp_phi, lr_phi, lr, log_rho_star, log_corr, prop, corr


def _particle_logs(target, particles, log_density):
    if log_density is None:
        log_density = target.log_density(np.asarray(particles, dtype=float))
    return np.asarray(log_density, dtype=float)


def mh_rp_step(
    target: TargetDensity,
    q1,
    i: int,
    particles,
    cfg: RepulsiveConfig,
    rng,
    log_density=None,
) -> StepOutcome:
    """Metropolis move of particle ``i`` with a repulsive Propose test and a Correction test.

    ``log_density`` caches the target log-density of every particle; the
    repulsion weights of the other particles are read from it.
    """
    logs = _particle_logs(target, particles, log_density)
    theta, others, lp, lp_others = _split(particles, i, logs)
    _check_support(lp, theta)
    phi, lp_phi, _, _, _, _, prop, corr = _rp_first_stage(target, q1, theta, others, lp, lp_others, cfg, rng)
    return StepOutcome(
        new_point=_select(corr, phi, theta),
        stage=np.where(corr, Stage.STAGE1, Stage.REJECTED).astype(np.int8),
        log_density=np.where(corr, lp_phi, lp),
        counters=(prop.astype(np.int64), corr.astype(np.int64)),
    )


def pinball_step(
    target: TargetDensity,
    q1,
    particles,
    i: int,
    cfg: RepulsiveConfig,
    rng,
    log_density=None,
    second_stage: bool = True,
) -> StepOutcome:
    """Two-stage pinball move of particle ``i``.

    Stage one is the repulsive Propose/Correction move. If it fails, the
    particle is reflected across the line joining the rejected candidate and
    its nearest other particle; the reflection passes a delayed-rejection test
    on the repulsive pseudo-target and then a Correction test against the
    target. The delayed-rejection factors use the full first-stage acceptance
    (both tests), which keeps the move reversible for the target.
    """
    logs = _particle_logs(target, particles, log_density)
    theta, others, lp, lp_others = _split(particles, i, logs)
    _check_support(lp, theta)
    if theta.shape[-1] != 2:
        raise SamplerError(f"pinball sampler is planar; got dimension {theta.shape[-1]}")
    phi, lp_phi, lr_phi, lr, log_rho_star, log_corr, prop, corr = _rp_first_stage(
        target, q1, theta, others, lp, lp_others, cfg, rng
    )
    n_prop, n_corr = prop.astype(np.int64), corr.astype(np.int64)
    if not second_stage or np.all(corr):
        return StepOutcome(
            _select(corr, phi, theta),
            np.where(corr, Stage.STAGE1, Stage.REJECTED).astype(np.int8),
            np.where(corr, lp_phi, lp),
            (n_prop, n_corr),
        )

    j = nearest_index(phi, others)
    anchor = np.take_along_axis(others, j[..., None, None], axis=-2)[..., 0, :]
    cand, ok = reflect_across_line(theta, anchor, phi)
    lp_cand = target.log_density(cand)
    lr_cand = lp_cand + repulsion_exponent(cand, others, lp_others, cfg.xi)
    with np.errstate(invalid="ignore"):
        # overall first-stage acceptance from each end: min(1, rho*) * min(1, rho / rho*)
        log_a_state = np.minimum(log_rho_star, 0.0) + np.minimum(log_corr, 0.0)
        rho_star_c = _clean(lr_phi - lr_cand + _q_log_ratio(q1, target, cand, phi))
        corr_c = _clean((lp_phi - lp_cand) - (lr_phi - lr_cand))
        log_a_cand = np.minimum(rho_star_c, 0.0) + np.minimum(corr_c, 0.0)
        if getattr(q1, "symmetric", False):
            lq = 0.0
        else:
            lq = q1.log_transition(target, cand, phi) - q1.log_transition(target, theta, phi)
        log_a2 = _clean(lr_cand - lr + lq + _log1m_exp(log_a_cand) - _log1m_exp(log_a_state))
        log_corr2 = _clean((lp_cand - lp) - (lr_cand - lr))
    todo = ~corr & ok
    prop2 = todo & (_log_uniform(rng, lp.shape) < log_a2)
    corr2 = prop2 & (_log_uniform(rng, lp.shape) < log_corr2)

    new = _select(corr, phi, _select(corr2, cand, theta))
    stage = np.where(corr, Stage.STAGE1, np.where(corr2, Stage.STAGE2, Stage.REJECTED)).astype(np.int8)
    return StepOutcome(
        new,
        stage,
        np.where(corr, lp_phi, np.where(corr2, lp_cand, lp)),
        (n_prop + prop2, n_corr + corr2),
    )


# --------------------------------------------------------------------------
# Chain driver
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SamplerSpec:
    """Named sampler with its tuning constants.

    ``s`` is the random-walk variance (scalar or matrix), ``h`` the Langevin
    step, ``xi`` the repulsion width; ``s2`` overrides the second-stage
    random-walk variance of ``dra-rw``.
    """

    name: str
    s: Union[float, Sequence, None] = None
    h: Union[float, Sequence, None] = None
    xi: float = 0.0
    s2: Union[float, Sequence, None] = None

    def __post_init__(self):
        if self.name not in SAMPLERS:
            raise SamplerError(f"unknown sampler {self.name!r}; choose from {', '.join(SAMPLERS)}")
        need = {
            "mha": ("s",),
            "mala": ("h",),
            "dra-rw": ("s",),
            "dra-lp": ("s", "h"),
            "dra-pinball": ("s",),
            "mh-rp": ("s",),
            "ps": ("s",),
        }[self.name]
        missing = [k for k in need if getattr(self, k) is None]
        if missing:
            raise SamplerError(f"sampler {self.name!r} needs parameter(s) {missing}")

    @property
    def interacting(self) -> bool:
        return self.name in INTERACTING

    def kernels(self):
        rw = RandomWalkKernel(np.asarray(self.s, dtype=float)) if self.s is not None else None
        lv = LangevinKernel(np.asarray(self.h, dtype=float)) if self.h is not None else None
        rw2 = RandomWalkKernel(np.asarray(self.s2, dtype=float)) if self.s2 is not None else rw
        return rw, lv, rw2


@dataclass(frozen=True)
class Budget:
    """Stop after ``iterations`` sweeps or ``seconds`` of wall time, whichever comes first."""

    iterations: Optional[int] = None
    seconds: Optional[float] = None

    def __post_init__(self):
        if self.iterations is None and self.seconds is None:
            raise SamplerError("budget needs iterations or seconds")
        if self.iterations is not None and self.iterations < 0:
            raise SamplerError("iteration budget must be nonnegative")
        if self.seconds is not None and self.seconds <= 0:
            raise SamplerError("time budget must be positive")


@dataclass
class ChainTrace:
    """Everything recorded by ``run_chain``.

    ``states`` has shape ``(T + 1, N, D)`` with the initial population first;
    ``stages`` has shape ``(T, N)`` (``(T, N, B)`` for block updating).
    Lockstep replicate runs carry an extra replicate axis after time; use
    ``replicate(r)`` to pull one out.
    """

    states: np.ndarray
    stages: np.ndarray
    counters: tuple[int, int] = (0, 0)
    burn_in: int = 500
    wall_clock: float = 0.0
    sampler: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return self.stages.shape[0]

    T = iterations

    @property
    def n_particles(self) -> int:
        return self.states.shape[-2]

    @property
    def n_replicates(self) -> Optional[int]:
        return self.states.shape[1] if self.states.ndim == 4 else None

    def replicate(self, r: int) -> "ChainTrace":
        if self.n_replicates is None:
            raise IndexError("trace has no replicate axis")
        per = self.extras.get("replicate_counters")
        return ChainTrace(
            states=self.states[:, r],
            stages=self.stages[:, r],
            counters=tuple(per[r]) if per is not None else self.counters,
            burn_in=self.burn_in,
            wall_clock=self.wall_clock,
            sampler=self.sampler,
        )


class _Recorder:
    def __init__(self, init, budget: Budget, stage_shape):
        self.budget = budget
        cap = budget.iterations if budget.iterations is not None else 1024
        if budget.seconds is not None:
            cap = min(cap, 1024)
        self.states = np.empty((cap + 1,) + init.shape)
        self.stages = np.empty((cap,) + stage_shape, dtype=np.int8)
        self.states[0] = init
        self.t = 0
        self.start = time.perf_counter()

    def more(self) -> bool:
        b = self.budget
        if b.iterations is not None and self.t >= b.iterations:
            return False
        if b.seconds is not None and time.perf_counter() - self.start >= b.seconds:
            return False
        return True

    def push(self, state, stage):
        if self.t == self.stages.shape[0]:
            grow = max(self.t, 16)
            self.states = np.concatenate([self.states, np.empty((grow,) + self.states.shape[1:])])
            self.stages = np.concatenate([self.stages, np.empty((grow,) + self.stages.shape[1:], dtype=np.int8)])
        self.t += 1
        self.states[self.t] = state
        self.stages[self.t - 1] = stage

    def trace(self, **kw) -> ChainTrace:
        return ChainTrace(
            states=self.states[: self.t + 1].copy(),
            stages=self.stages[: self.t].copy(),
            wall_clock=time.perf_counter() - self.start,
            **kw,
        )


def _sweep_independent(spec, rw, lv, rw2, target, x, logs, rng):
    if spec.name == "mha":
        return mh_step(target, rw, x, rng, logs)
    if spec.name == "mala":
        return mh_step(target, lv, x, rng, logs)
    if spec.name == "dra-rw":
        return dra_step(target, rw, "random_walk", x, None, rng, q2=rw2, log_density=logs)
    if spec.name == "dra-lp":
        return dra_step(target, rw, "langevin", x, None, rng, q2=lv, log_density=logs)
    raise SamplerError(spec.name)


def _sweep_interacting(spec, rw, cfg, target, x, logs, rng, i):
    if spec.name == "mh-rp":
        return mh_rp_step(target, rw, i, x, cfg, rng, logs)
    if spec.name == "ps":
        return pinball_step(target, rw, x, i, cfg, rng, logs)
    others = np.delete(x, i, axis=-2)
    return dra_step(target, rw, "pinball", x[..., i, :], others, rng, log_density=logs[..., i])


def run_chain(
    spec: SamplerSpec,
    target: TargetDensity,
    init,
    budget: Union[Budget, int],
    rng,
    burn_in: int = 500,
) -> ChainTrace:
    """Run a particle population for a fixed number of sweeps or seconds.

    ``init`` has shape ``(N, D)``, or ``(R, N, D)`` to advance ``R``
    independent populations in lockstep (they share ``rng`` but never
    interact). Each sweep updates every particle once, in index order for
    interacting samplers, so later particles see the moved positions of
    earlier ones. Iteration budgets are bit-reproducible for a given
    generator state.
    """
    if not isinstance(budget, Budget):
        budget = Budget(iterations=int(budget))
    x = np.array(init, dtype=float, ndmin=2)
    if x.shape[-1] != target.dim:
        raise SamplerError(f"initial particles have dimension {x.shape[-1]}, target has {target.dim}")
    logs = target.log_density(x)
    if not np.all(np.isfinite(logs)):
        bad = np.flatnonzero(~np.isfinite(logs)).tolist()
        raise InvalidStateError(f"initial particles {bad} lie outside the target support")
    n = x.shape[-2]
    rw, lv, rw2 = spec.kernels()
    cfg = RepulsiveConfig(xi=spec.xi)
    counters = np.zeros(x.shape[:-2] + (2,), dtype=np.int64)
    rec = _Recorder(x, budget, x.shape[:-1])
    stage = np.empty(x.shape[:-1], dtype=np.int8)

    while rec.more():
        if spec.interacting:
            for i in range(n):
                out = _sweep_interacting(spec, rw, cfg, target, x, logs, rng, i)
                x[..., i, :] = out.new_point
                logs[..., i] = out.log_density
                stage[..., i] = out.stage
                counters[..., 0] += out.counters[0]
                counters[..., 1] += out.counters[1]
        else:
            out = _sweep_independent(spec, rw, lv, rw2, target, x, logs, rng)
            x, logs, stage = out.new_point, out.log_density, out.stage
        rec.push(x, stage)

    return _finish(rec, counters, burn_in, spec.name)


def _finish(rec, counters, burn_in, name) -> ChainTrace:
    total = counters.reshape(-1, 2).sum(axis=0)
    trace = rec.trace(counters=(int(total[0]), int(total[1])), burn_in=burn_in, sampler=name)
    if counters.ndim > 1:
        trace.extras["replicate_counters"] = [tuple(int(c) for c in row) for row in counters]
    return trace


# --------------------------------------------------------------------------
# Block updating
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Block:
    """Coordinates updated together and the sampler that moves them."""

    indices: tuple
    sampler: SamplerSpec


def run_block_chain(
    blocks: Sequence[Block],
    target: TargetDensity,
    init,
    budget: Union[Budget, int],
    rng,
    burn_in: int = 1000,
    log_offset: float = 0.0,
) -> ChainTrace:
    """Metropolis-within-Gibbs sweeps: each block is moved in turn through a conditional view.

    ``log_offset`` is subtracted from the target before it enters repulsion
    weights, which depend on the absolute density scale.
    """
    if not isinstance(budget, Budget):
        budget = Budget(iterations=int(budget))
    x = np.array(init, dtype=float, ndmin=2)
    logs = target.log_density(x) - log_offset
    if not np.all(np.isfinite(logs)):
        raise InvalidStateError("initial particles lie outside the target support")
    n = x.shape[0]
    counters = np.zeros(2, dtype=np.int64)
    rec = _Recorder(x, budget, (n, len(blocks)))
    stage = np.empty((n, len(blocks)), dtype=np.int8)
    prepared = [(list(b.indices), b.sampler, *b.sampler.kernels(), RepulsiveConfig(xi=b.sampler.xi)) for b in blocks]

    def view(comp):
        v = block_view(target, idx, comp)
        return v if log_offset == 0.0 else shifted(v, log_offset)

    while rec.more():
        for b, (idx, spec, rw, lv, rw2, cfg) in enumerate(prepared):
            if spec.interacting:
                sub = x[:, idx]
                for i in range(n):
                    v = view(x[i])
                    out = _sweep_interacting(spec, rw, cfg, v, sub, logs, rng, i)
                    sub[i] = out.new_point
                    logs[i] = out.log_density
                    stage[i, b] = out.stage
                    counters[0] += out.counters[0]
                    counters[1] += out.counters[1]
                x[:, idx] = sub
            else:
                v = view(x)
                out = _sweep_independent(spec, rw, lv, rw2, v, x[:, idx], logs, rng)
                x[:, idx] = out.new_point
                logs = out.log_density
                stage[:, b] = out.stage
        rec.push(x, stage)

    return _finish(rec, counters, burn_in, "blocks")
