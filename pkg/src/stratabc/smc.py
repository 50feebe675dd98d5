"""Sampling engines: rejection ABC and the sequential sampler that carries a
weighted particle population through the threshold schedule under one of the
four kernel policies, with predictive-frequency bookkeeping and the KL-based
early-stopping rule."""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import (
    Population,
    RngStream,
    landing_stratum,
    stratum_of,
    validate_schedule,
)
from .kernels import KernelPlan, KernelPolicy, build_kernel_plan
from .models import SimulatorModel, get_model, make_observed
from .stratify import (
    FrequencyTensor,
    floored_kl,
    kl_target_vs_current,
    predictive_matrix,
    reweight,
    strata_weights,
)

__all__ = [
    "StoppingRule",
    "SmcConfig",
    "IterationRecord",
    "RunRecord",
    "RunResult",
    "ProposalBudgetError",
    "RunAborted",
    "rejection_abc",
    "smc_iteration",
    "importance_weight",
    "should_stop",
    "run",
    "run_model",
]

#: Stream id reserved for drawing the synthetic observation; iteration t's
#: proposals use stream ids (t, counter).
OBSERVATION_STREAM = 0

DEFAULT_MAX_PROPOSALS = 10_000_000


@dataclass(frozen=True)
class StoppingRule:
    """Early-termination policy: stop once the final band's predictive column
    has at least ``min_target_count`` samples and its divergence from the
    current column drops below ``kl_threshold``.  Disabled by default so
    benchmark runs record the full schedule."""

    enabled: bool = False
    kl_threshold: float = 0.05
    min_target_count: int = 100

    def __post_init__(self):
        if not self.kl_threshold > 0:
            raise ValueError("kl_threshold must be positive")
        if self.min_target_count < 1:
            raise ValueError("min_target_count must be at least 1")


@dataclass
class SmcConfig:
    """Everything one sampler run needs, in serializable form."""

    model: str = "gaussian_toy"
    thresholds: tuple = (math.inf, 4.0, 3.0, 2.0, 1.0)
    n_particles: int = 1000
    policy: str = KernelPolicy.STRATIFIED.value
    seed: int = 0
    stopping: StoppingRule = field(default_factory=StoppingRule)
    max_proposals_per_iteration: int = DEFAULT_MAX_PROPOSALS
    model_options: dict = field(default_factory=dict)

    def __post_init__(self):
        self.thresholds = tuple(float(e) for e in self.thresholds)
        self.policy = KernelPolicy(self.policy).value
        if self.n_particles < 2:
            raise ValueError("n_particles must be at least 2")
        if self.max_proposals_per_iteration < 1:
            raise ValueError("max_proposals_per_iteration must be positive")
        validate_schedule(self.thresholds)

    @property
    def schedule(self):
        return validate_schedule(self.thresholds)


@dataclass
class IterationRecord:
    """Per-iteration diagnostics.

    ``stop_fired`` reports whether the stopping rule would have terminated
    here, whether or not stopping was enabled.  ``elapsed_seconds`` stays out
    of the serialized form: emitted artifacts must be byte-identical across
    reruns with the same seed.
    """

    iteration: int
    n_accepted: int
    n_generated: int
    acceptance_rate: float
    posterior_mean: list
    posterior_sd: list
    kl_target: float | None
    kl_consecutive: float | None
    target_column_count: int
    stop_fired: bool
    elapsed_seconds: float
    predictive: dict | None

    def to_dict(self):
        return {
            "iteration": self.iteration,
            "n_accepted": self.n_accepted,
            "n_generated": self.n_generated,
            "acceptance_rate": self.acceptance_rate,
            "posterior_mean": self.posterior_mean,
            "posterior_sd": self.posterior_sd,
            "kl_target": self.kl_target,
            "kl_consecutive": self.kl_consecutive,
            "target_column_count": self.target_column_count,
            "stop_fired": self.stop_fired,
            "predictive": self.predictive,
        }


@dataclass
class RunRecord:
    """Full diagnostics for one sampler run: per-iteration records plus the
    recorded frequency slices and a summary of the final population."""

    model: str
    policy: str
    seed: int
    thresholds: list
    n_particles: int
    observed: list
    iterations: list
    stopped_early: bool
    frequencies: dict
    final_mean: list | None
    final_sd: list | None
    aborted: bool = False
    abort_reason: str | None = None

    def cumulative_generated(self):
        """Running total of simulator proposals after each iteration."""
        out = []
        total = 0
        for rec in self.iterations:
            total += rec.n_generated
            out.append(total)
        return out

    def to_dict(self):
        return {
            "model": self.model,
            "policy": self.policy,
            "seed": self.seed,
            "thresholds": self.thresholds,
            "n_particles": self.n_particles,
            "observed": self.observed,
            "stopped_early": self.stopped_early,
            "aborted": self.aborted,
            "abort_reason": self.abort_reason,
            "iterations": [rec.to_dict() for rec in self.iterations],
            "cumulative_generated": self.cumulative_generated(),
            "frequencies": self.frequencies,
            "final_mean": self.final_mean,
            "final_sd": self.final_sd,
        }


@dataclass
class RunResult:
    record: RunRecord
    population: Population


class ProposalBudgetError(RuntimeError):
    """The proposal cap was reached before enough particles were accepted."""

    def __init__(self, iteration, n_accepted, n_proposals):
        self.iteration = iteration
        self.n_accepted = n_accepted
        self.n_proposals = n_proposals
        super().__init__(
            f"iteration {iteration}: accepted {n_accepted} particles "
            f"in {n_proposals} proposals before hitting the cap"
        )


class RunAborted(RuntimeError):
    """A run stopped on an infeasible threshold step; carries the partial record."""

    def __init__(self, record: RunRecord):
        self.record = record
        super().__init__(record.abort_reason or "run aborted")


def _distance_or_sentinel(model, summary, observed):
    if summary is None:
        return math.inf
    d = model.distance(summary, observed)
    if not (math.isfinite(d) and d >= 0):
        return math.inf
    return d


def _predictive_snapshot(pm):
    return {
        "probs": pm.probs.tolist(),
        "visited": pm.visited.tolist(),
        "column_totals": pm.column_totals.tolist(),
    }


def rejection_abc(
    model: SimulatorModel,
    observed,
    schedule,
    n_particles,
    stream: RngStream,
    max_proposals=DEFAULT_MAX_PROPOSALS,
):
    """Plain rejection sampling at the schedule's first tolerance.

    Draws parameters from the prior and keeps those whose simulated data falls
    within distance eps_1 of the observation, until ``n_particles`` are
    accepted; weights are uniform.  With an infinite first tolerance this is
    exact prior sampling, which is also the sequential sampler's first round.
    """
    started = time.perf_counter()
    eps = schedule.eps[0]
    observed = np.asarray(observed, dtype=float)
    thetas = np.empty((n_particles, model.dim))
    distances = np.empty(n_particles)
    strata = np.empty(n_particles, dtype=np.int64)
    n_accepted = 0
    n_proposals = 0
    while n_accepted < n_particles:
        n_proposals += 1
        if n_proposals > max_proposals:
            raise ProposalBudgetError(1, n_accepted, n_proposals - 1)
        rng = stream.child_generator(1, n_proposals)
        theta = model.prior_sample(rng)
        summary = model.simulate(theta, rng)
        dist = _distance_or_sentinel(model, summary, observed)
        if dist < eps:
            thetas[n_accepted] = theta
            distances[n_accepted] = dist
            strata[n_accepted] = stratum_of(dist, schedule)
            n_accepted += 1
    population = Population(
        thetas=thetas,
        weights=np.full(n_particles, 1.0 / n_particles),
        distances=distances,
        strata=strata,
        iteration=1,
    )
    record = IterationRecord(
        iteration=1,
        n_accepted=n_particles,
        n_generated=n_proposals,
        acceptance_rate=n_particles / n_proposals,
        posterior_mean=population.weighted_mean().tolist(),
        posterior_sd=population.weighted_sd().tolist(),
        kl_target=None,
        kl_consecutive=None,
        target_column_count=0,
        stop_fired=False,
        elapsed_seconds=time.perf_counter() - started,
        predictive=None,
    )
    return population, record


def importance_weight(theta, model: SimulatorModel, plan: KernelPlan, sampling_weights):
    """Unnormalized importance weight: prior density over the exact mixture
    density of the proposal process (each particle contributes through its own
    kernel, weighted by the probability it was selected)."""
    density = model.prior_density(theta)
    if density == 0.0:
        return 0.0
    log_mix = plan.mixture_log_density(np.asarray(theta, dtype=float)[None, :], sampling_weights)
    return density / math.exp(float(log_mix[0]))


def should_stop(tensor: FrequencyTensor, t, stopping: StoppingRule):
    """Early-stopping test after iteration ``t``: (fired, KL value or None).

    Monitoring starts at the second iteration, once particles stem from the
    partitioned posterior rather than the prior, and requires the final band's
    column to hold at least the configured minimum count.
    """
    if t < 2:
        return False, None
    pm = predictive_matrix(tensor, up_to=t)
    kl = kl_target_vs_current(pm, t)
    count = int(pm.column_totals[pm.n_strata - 1])
    fired = count >= stopping.min_target_count and kl is not None and kl < stopping.kl_threshold
    return fired, kl


def smc_iteration(
    model: SimulatorModel,
    observed,
    population: Population,
    schedule,
    policy: KernelPolicy,
    tensor: FrequencyTensor,
    stream: RngStream,
    stopping: StoppingRule,
    max_proposals=DEFAULT_MAX_PROPOSALS,
    prev_current_counts=None,
):
    """One transition of the sequential sampler.

    Builds the policy's sampling weights and kernel plan, then proposes until
    ``n_particles`` acceptances: select a particle by its sampling weight,
    perturb with its kernel, reject out-of-support draws before simulating,
    record the landing band of every simulated proposal, and accept draws
    inside the next tolerance.  Returns the next population, its record, and
    the current predictive column counts (for the consecutive-KL diagnostic).
    """
    started = time.perf_counter()
    t = population.iteration
    T = schedule.n_strata
    if t >= T:
        raise ValueError(f"population at iteration {t} has no next threshold")
    eps_next = schedule.eps[t]
    n_particles = population.size
    observed = np.asarray(observed, dtype=float)

    if policy.uses_reweighting:
        pm_before = predictive_matrix(tensor, up_to=t)
        band_weights = strata_weights(pm_before, t, population.stratum_masses(T))
        sampling_weights = reweight(population, band_weights)
    else:
        sampling_weights = population.weights
    plan = build_kernel_plan(policy, population, sampling_weights, schedule)

    cdf = np.cumsum(sampling_weights)
    cdf[-1] = 1.0
    source_strata = population.strata
    delta = np.zeros((T, T), dtype=np.int64)
    acc_thetas = np.empty((n_particles, model.dim))
    acc_distances = np.empty(n_particles)
    acc_strata = np.empty(n_particles, dtype=np.int64)
    n_accepted = 0
    n_proposals = 0
    while n_accepted < n_particles:
        n_proposals += 1
        if n_proposals > max_proposals:
            raise ProposalBudgetError(t + 1, n_accepted, n_proposals - 1)
        rng = stream.child_generator(t + 1, n_proposals)
        j = int(np.searchsorted(cdf, rng.random(), side="right"))
        theta = plan.sample(j, rng)
        if not model.in_support(theta):
            continue  # zero prior weight; counted in the proposal total, never simulated
        summary = model.simulate(theta, rng)
        dist = _distance_or_sentinel(model, summary, observed)
        landed = landing_stratum(dist, schedule)
        delta[landed - 1, source_strata[j] - 1] += 1
        if dist < eps_next:
            acc_thetas[n_accepted] = theta
            acc_distances[n_accepted] = dist
            acc_strata[n_accepted] = landed
            n_accepted += 1
    tensor.merge(delta, iteration=t + 1)

    log_mix = plan.mixture_log_density(acc_thetas, sampling_weights)
    log_prior = np.array([model.log_prior_density(th) for th in acc_thetas])
    log_w = log_prior - log_mix
    log_w -= log_w.max()
    weights = np.exp(log_w)
    weights /= weights.sum()
    next_population = Population(
        thetas=acc_thetas,
        weights=weights,
        distances=acc_distances,
        strata=acc_strata,
        iteration=t + 1,
    )

    pm = predictive_matrix(tensor, up_to=t + 1)
    current_counts = pm.counts[:, t].copy()
    kl_consecutive = (
        floored_kl(current_counts, prev_current_counts)
        if prev_current_counts is not None
        else None
    )
    fired, kl_target = should_stop(tensor, t + 1, stopping)
    record = IterationRecord(
        iteration=t + 1,
        n_accepted=n_particles,
        n_generated=n_proposals,
        acceptance_rate=n_particles / n_proposals,
        posterior_mean=next_population.weighted_mean().tolist(),
        posterior_sd=next_population.weighted_sd().tolist(),
        kl_target=kl_target,
        kl_consecutive=kl_consecutive,
        target_column_count=int(pm.column_totals[T - 1]),
        stop_fired=fired,
        elapsed_seconds=time.perf_counter() - started,
        predictive=_predictive_snapshot(pm),
    )
    return next_population, record, current_counts


def run_model(model: SimulatorModel, config: SmcConfig, observed=None) -> RunResult:
    """Run the full schedule on an already-constructed model.

    Iteration 1 is rejection sampling at eps_1; every later iteration is one
    sequential transition.  Raises :class:`RunAborted` (carrying the partial
    record) when an iteration exhausts its proposal budget.
    """
    schedule = config.schedule
    policy = KernelPolicy(config.policy)
    T = schedule.n_strata
    root = RngStream(config.seed)
    if observed is None:
        observed = make_observed(model, root.child(OBSERVATION_STREAM))
    observed = np.asarray(observed, dtype=float)

    tensor = FrequencyTensor(T)
    records = []

    def abort(reason):
        return RunAborted(
            RunRecord(
                model=model.name,
                policy=policy.value,
                seed=config.seed,
                thresholds=list(config.thresholds),
                n_particles=config.n_particles,
                observed=observed.tolist(),
                iterations=records,
                stopped_early=False,
                frequencies=tensor.to_dict(),
                final_mean=None,
                final_sd=None,
                aborted=True,
                abort_reason=reason,
            )
        )

    try:
        population, record = rejection_abc(
            model,
            observed,
            schedule,
            config.n_particles,
            root,
            config.max_proposals_per_iteration,
        )
    except ProposalBudgetError as err:
        raise abort(str(err)) from err
    records.append(record)

    stopped_early = False
    prev_counts = np.zeros(T, dtype=np.int64)
    for _ in range(1, T):
        try:
            population, record, prev_counts = smc_iteration(
                model,
                observed,
                population,
                schedule,
                policy,
                tensor,
                root,
                config.stopping,
                config.max_proposals_per_iteration,
                prev_counts,
            )
        except ProposalBudgetError as err:
            raise abort(str(err)) from err
        records.append(record)
        if config.stopping.enabled and record.stop_fired and record.iteration < T:
            stopped_early = True
            break

    record = RunRecord(
        model=model.name,
        policy=policy.value,
        seed=config.seed,
        thresholds=list(config.thresholds),
        n_particles=config.n_particles,
        observed=observed.tolist(),
        iterations=records,
        stopped_early=stopped_early,
        frequencies=tensor.to_dict(),
        final_mean=population.weighted_mean().tolist(),
        final_sd=population.weighted_sd().tolist(),
    )
    return RunResult(record=record, population=population)


def run(config: SmcConfig, observed=None) -> RunResult:
    """Resolve the configured model by name and run the full schedule."""
    model = get_model(config.model, **config.model_options)
    return run_model(model, config, observed)
