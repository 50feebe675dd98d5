"""Scikit-learn style estimator interfaces.

The samplers follow the familiar conventions: constructor arguments are stored
verbatim, ``fit`` validates inputs, runs the sampler and exposes trailing-
underscore attributes, and ``get_params``/``set_params``/``clone`` work as
usual.  ``fit`` takes the observed summary vector; passing ``None`` simulates
one at the model's true parameter (the Gaussian toy always observes 0).
"""

import numpy as np
from sklearn.base import BaseEstimator

from .core import RngStream
from .models import make_observed
from .smc import (
    DEFAULT_MAX_PROPOSALS,
    OBSERVATION_STREAM,
    SmcConfig,
    StoppingRule,
    rejection_abc,
    run_model,
)
from .validation import (
    as_thresholds,
    check_method,
    check_positive_float,
    check_positive_int,
    resolve_model,
)

__all__ = ["ABCSMCSampler", "RejectionABC"]


class _PosteriorMixin:
    """Shared posterior accessors for fitted samplers."""

    def sample(self, n_samples=1, random_state=None):
        """Resample parameter vectors from the fitted weighted posterior."""
        self._check_fitted()
        rng = np.random.default_rng(random_state)
        idx = rng.choice(self.samples_.shape[0], size=n_samples, p=self.weights_)
        return self.samples_[idx]

    def _check_fitted(self):
        if not hasattr(self, "population_"):
            raise RuntimeError("this sampler has not been fitted yet; call fit first")

    def _set_population(self, population):
        self.population_ = population
        self.samples_ = population.thetas
        self.weights_ = population.weights
        self.distances_ = population.distances
        self.strata_ = population.strata
        self.posterior_mean_ = population.weighted_mean()
        self.posterior_sd_ = population.weighted_sd()


class ABCSMCSampler(_PosteriorMixin, BaseEstimator):
    """Sequential likelihood-free sampler over a decreasing tolerance schedule.

    Parameters
    ----------
    model : str or SimulatorModel
        Registered model name ("gaussian_toy", "banana", "lotka_volterra",
        "gk") or a model instance.
    thresholds : sequence of float
        Strictly decreasing tolerances; the first may be ``inf``.
    n_particles : int
        Population size kept at every iteration.
    method : str
        Kernel policy: "global", "local", "stratified-simple" or "stratified".
    seed : int
        Base seed; runs are bit-reproducible given (seed, parameters).
    stop : bool
        Enable KL-based early stopping (disabled by default so the full
        schedule is recorded).
    stop_kl, stop_min_count
        Early-stopping threshold and the minimum number of samples required
        in the final band's predictive column.
    max_proposals_per_iteration : int
        Abort guard against infeasible threshold steps.
    model_options : dict or None
        Extra constructor arguments when ``model`` is a name (the
        Lotka-Volterra horizon/grid/event-cap overrides).

    Attributes
    ----------
    population_ : Population
        Final weighted particle population.
    samples_, weights_, distances_, strata_ : ndarray
        Views of the final population.
    record_ : RunRecord
        Per-iteration diagnostics (acceptance rates, KL trace, frequencies).
    n_iterations_ : int
        Iterations actually run (fewer than the schedule length when early
        stopping fires).
    stopped_early_ : bool
    """

    def __init__(
        self,
        model="gaussian_toy",
        thresholds=(np.inf, 4.0, 3.0, 2.0, 1.0),
        n_particles=1000,
        method="stratified",
        seed=0,
        stop=False,
        stop_kl=0.05,
        stop_min_count=100,
        max_proposals_per_iteration=DEFAULT_MAX_PROPOSALS,
        model_options=None,
    ):
        self.model = model
        self.thresholds = thresholds
        self.n_particles = n_particles
        self.method = method
        self.seed = seed
        self.stop = stop
        self.stop_kl = stop_kl
        self.stop_min_count = stop_min_count
        self.max_proposals_per_iteration = max_proposals_per_iteration
        self.model_options = model_options

    def fit(self, observed=None):
        """Run the sampler against ``observed`` (or a synthetic observation)."""
        model = resolve_model(self.model, self.model_options)
        schedule = as_thresholds(self.thresholds)
        config = SmcConfig(
            model=model.name,
            thresholds=schedule.eps,
            n_particles=check_positive_int(self.n_particles, "n_particles", minimum=2),
            policy=check_method(self.method).value,
            seed=int(self.seed),
            stopping=StoppingRule(
                enabled=bool(self.stop),
                kl_threshold=check_positive_float(self.stop_kl, "stop_kl"),
                min_target_count=check_positive_int(self.stop_min_count, "stop_min_count"),
            ),
            max_proposals_per_iteration=check_positive_int(
                self.max_proposals_per_iteration, "max_proposals_per_iteration"
            ),
            model_options=dict(self.model_options or {}),
        )
        result = run_model(model, config, observed)
        self.model_ = model
        self.observed_ = np.asarray(result.record.observed, dtype=float)
        self.record_ = result.record
        self.n_iterations_ = len(result.record.iterations)
        self.stopped_early_ = result.record.stopped_early
        self._set_population(result.population)
        return self


class RejectionABC(_PosteriorMixin, BaseEstimator):
    """Plain rejection sampler: accept prior draws within ``epsilon``.

    Attributes after ``fit`` mirror :class:`ABCSMCSampler`; additionally
    ``acceptance_rate_`` and ``n_generated_`` report the sampling cost.
    """

    def __init__(
        self,
        model="gaussian_toy",
        epsilon=1.0,
        n_particles=1000,
        seed=0,
        max_proposals=DEFAULT_MAX_PROPOSALS,
        model_options=None,
    ):
        self.model = model
        self.epsilon = epsilon
        self.n_particles = n_particles
        self.seed = seed
        self.max_proposals = max_proposals
        self.model_options = model_options

    def fit(self, observed=None):
        model = resolve_model(self.model, self.model_options)
        schedule = as_thresholds([self.epsilon])
        stream = RngStream(int(self.seed))
        if observed is None:
            observed = make_observed(model, stream.child(OBSERVATION_STREAM))
        population, record = rejection_abc(
            model,
            observed,
            schedule,
            check_positive_int(self.n_particles, "n_particles"),
            stream,
            check_positive_int(self.max_proposals, "max_proposals"),
        )
        self.model_ = model
        self.observed_ = np.asarray(observed, dtype=float)
        self.record_ = record
        self.acceptance_rate_ = record.acceptance_rate
        self.n_generated_ = record.n_generated
        self._set_population(population)
        return self
