"""Built-in simulator models: Gaussian toy, banana-shaped Gaussian,
stochastic Lotka-Volterra, and the g-and-k distribution.

Every model pairs a uniform box prior with a stochastic forward simulator
producing a summary vector, and a distance between summaries.  Simulators are
stateless: all randomness comes from the generator passed to ``simulate``, so
calls are safe to run concurrently.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import RngStream

__all__ = [
    "SimulatorModel",
    "GaussianToy",
    "Banana",
    "LotkaVolterra",
    "GandK",
    "LvTrajectory",
    "MODEL_REGISTRY",
    "get_model",
    "make_observed",
    "gillespie_step",
    "gk_quantile",
    "lag_autocorrelation",
]


class SimulatorModel:
    """Base contract for simulator models with a uniform box prior.

    Subclasses set ``name``, ``lower``, ``upper``, ``parameter_names`` and
    ``true_parameter`` and implement ``simulate``.  ``simulate`` returns the
    summary vector, or ``None`` when the simulation failed and the proposal
    must be rejected outright.
    """

    name = "simulator"
    fixed_observation = None

    def __init__(self, lower, upper, true_parameter, parameter_names):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.true_parameter = np.asarray(true_parameter, dtype=float)
        self.parameter_names = tuple(parameter_names)
        if self.lower.shape != self.upper.shape or np.any(self.lower >= self.upper):
            raise ValueError("prior box must satisfy lower < upper componentwise")
        self._log_volume = float(np.sum(np.log(self.upper - self.lower)))
        self._bounds = list(zip(self.lower.tolist(), self.upper.tolist()))

    @property
    def dim(self):
        return self.lower.size

    def prior_sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lower, self.upper)

    def in_support(self, theta) -> bool:
        for x, (lo, hi) in zip(theta, self._bounds):
            if not lo <= x <= hi:  # also rejects NaN
                return False
        return True

    def prior_density(self, theta) -> float:
        return math.exp(-self._log_volume) if self.in_support(theta) else 0.0

    def log_prior_density(self, theta) -> float:
        return -self._log_volume if self.in_support(theta) else -math.inf

    def distance(self, summary, observed) -> float:
        return float(np.linalg.norm(np.asarray(summary, dtype=float) - observed))

    def simulate(self, theta, rng: np.random.Generator):
        raise NotImplementedError


class GaussianToy(SimulatorModel):
    """One observation y ~ Normal(theta, 1) with theta ~ Unif[-6, 6].

    The observation is the fixed constant 0, not regenerated per repetition,
    and the distance is the absolute difference |y - y_obs|.
    """

    name = "gaussian_toy"
    fixed_observation = np.array([0.0])

    def __init__(self):
        super().__init__([-6.0], [6.0], [0.0], ("theta",))

    def simulate(self, theta, rng):
        return np.array([theta[0] + rng.standard_normal()])


class Banana(SimulatorModel):
    """Two-parameter model with a banana-shaped posterior.

    y ~ Normal((theta1, theta1 + theta2^2), diag(1, 0.5)) under independent
    Unif[-50, 50] priors; Euclidean distance on the raw 2-vector.
    """

    name = "banana"
    _noise_sd = np.array([1.0, math.sqrt(0.5)])

    def __init__(self):
        super().__init__([-50.0, -50.0], [50.0, 50.0], [0.0, 0.0], ("theta1", "theta2"))

    def simulate(self, theta, rng):
        mean = np.array([theta[0], theta[0] + theta[1] ** 2])
        return mean + self._noise_sd * rng.standard_normal(2)


def gillespie_step(hazards, rng: np.random.Generator):
    """Draw one exact jump-process event: (dwell time, 1-based reaction index).

    With total hazard H the dwell time is Exponential(H) and the reaction is
    picked proportionally to the hazards.  H == 0 means absorption and returns
    ``(inf, None)``.
    """
    total = float(sum(hazards))
    if total <= 0.0:
        return math.inf, None
    dwell = rng.standard_exponential() / total
    u = rng.random() * total
    acc = 0.0
    for i, h in enumerate(hazards):
        acc += h
        if u < acc:
            return dwell, i + 1
    return dwell, len(hazards)  # guard against rounding at the top edge


@dataclass(frozen=True)
class LvTrajectory:
    """An exact predator-prey trajectory: event history plus grid readings.

    ``times[0] == 0`` holds the initial state; each subsequent entry is one
    reaction event.  Counts change by exactly one reaction's stoichiometry per
    event and never go negative.
    """

    times: np.ndarray
    prey: np.ndarray
    predators: np.ndarray
    grid_times: np.ndarray
    grid_prey: np.ndarray
    grid_predators: np.ndarray


def lag_autocorrelation(series, lag) -> float:
    """Sample autocorrelation at ``lag`` with the full-series mean and variance
    in the denominator; 0 by convention for zero-variance series."""
    x = np.asarray(series, dtype=float)
    centered = x - x.mean()
    denom = float(centered @ centered)
    if denom <= 0.0:
        return 0.0
    return float(centered[:-lag] @ centered[lag:]) / denom


class LotkaVolterra(SimulatorModel):
    """Stochastic kinetic predator-prey system simulated with the exact SSA.

    Parameters are the log hazard rates (log r1, log r2, log r3) with
    Unif(-6, 1) priors.  Reactions from state (X1, X2) = (prey, predators):

    * prey birth:                X1 -> 2 X1        hazard r1 * X1
    * prey death/predator birth: X1 + X2 -> 2 X2   hazard r2 * X1 * X2
    * predator death:            X2 -> 0           hazard r3 * X2

    Populations start at (100, 50), are read on a fixed time grid, and are
    summarised by an 8-vector: means, log variances, and lag-1 and lag-2
    autocorrelations of both species.  Trajectories that exceed the event cap
    or produce a degenerate (zero-variance) series fail simulation.
    """

    name = "lotka_volterra"
    initial_state = (100, 50)

    def __init__(self, horizon=30.0, grid_dt=0.2, max_events=200_000):
        if horizon <= 0 or grid_dt <= 0 or max_events <= 0:
            raise ValueError("horizon, grid_dt and max_events must be positive")
        super().__init__(
            [-6.0] * 3,
            [1.0] * 3,
            [math.log(2.0), math.log(0.01), 0.0],
            ("log_r1", "log_r2", "log_r3"),
        )
        self.horizon = float(horizon)
        self.grid_dt = float(grid_dt)
        self.max_events = int(max_events)
        n_grid = int(round(self.horizon / self.grid_dt))
        self.grid_times = np.linspace(0.0, n_grid * self.grid_dt, n_grid + 1)

    def _run_ssa(self, rates, rng, record_events):
        """One SSA pass onto the grid; returns None when the event cap trips."""
        r1, r2, r3 = (float(r) for r in rates)
        x1, x2 = self.initial_state
        grid = self.grid_times
        n_grid = grid.size
        grid_prey = np.empty(n_grid)
        grid_pred = np.empty(n_grid)
        events = ([0.0], [x1], [x2]) if record_events else None
        t = 0.0
        i_grid = 0
        n_events = 0
        while True:
            dwell, reaction = gillespie_step((r1 * x1, r2 * x1 * x2, r3 * x2), rng)
            t_next = t + dwell
            while i_grid < n_grid and grid[i_grid] < t_next:
                grid_prey[i_grid] = x1
                grid_pred[i_grid] = x2
                i_grid += 1
            if i_grid == n_grid:
                break
            if reaction == 1:
                x1 += 1
            elif reaction == 2:
                x1 -= 1
                x2 += 1
            else:
                x2 -= 1
            t = t_next
            n_events += 1
            if record_events:
                events[0].append(t)
                events[1].append(x1)
                events[2].append(x2)
            if n_events > self.max_events:
                return None
        return grid_prey, grid_pred, events

    def simulate_trajectory(self, theta, rng):
        """Full trajectory for diagnostics; ``None`` if the event cap trips."""
        out = self._run_ssa(np.exp(np.asarray(theta, dtype=float)), rng, record_events=True)
        if out is None:
            return None
        grid_prey, grid_pred, (times, prey, pred) = out
        return LvTrajectory(
            times=np.asarray(times),
            prey=np.asarray(prey, dtype=np.int64),
            predators=np.asarray(pred, dtype=np.int64),
            grid_times=self.grid_times.copy(),
            grid_prey=grid_prey,
            grid_predators=grid_pred,
        )

    def summarise(self, grid_prey, grid_pred):
        """8-vector of summaries, or ``None`` when any of them degenerates."""
        var_prey = float(np.var(grid_prey))
        var_pred = float(np.var(grid_pred))
        if var_prey <= 0.0 or var_pred <= 0.0:
            return None
        out = np.array(
            [
                float(np.mean(grid_prey)),
                float(np.mean(grid_pred)),
                math.log(var_prey),
                math.log(var_pred),
                lag_autocorrelation(grid_prey, 1),
                lag_autocorrelation(grid_pred, 1),
                lag_autocorrelation(grid_prey, 2),
                lag_autocorrelation(grid_pred, 2),
            ]
        )
        if not np.all(np.isfinite(out)):
            return None
        return out

    def simulate(self, theta, rng):
        out = self._run_ssa(np.exp(np.asarray(theta, dtype=float)), rng, record_events=False)
        if out is None:
            return None
        return self.summarise(out[0], out[1])


def gk_quantile(z, A, B, g, k):
    """g-and-k quantile transform of standard-normal draws ``z``."""
    z = np.asarray(z, dtype=float)
    skew = (1.0 - np.exp(-g * z)) / (1.0 + np.exp(-g * z))
    return A + B * (1.0 + 0.8 * skew) * (1.0 + z * z) ** k * z


class GandK(SimulatorModel):
    """Univariate g-and-k distribution observed through 50 ordered draws.

    Parameters (A, B, g, k) with A, B, g ~ Unif(0, 5) and k ~ Unif(0, 2); the
    summary is the ascending order statistics of 50 quantile-transformed
    standard normals, compared by Euclidean distance.
    """

    name = "gk"
    n_draws = 50

    def __init__(self):
        super().__init__(
            [0.0] * 4, [5.0, 5.0, 5.0, 2.0], [3.0, 1.0, 2.0, 0.5], ("A", "B", "g", "k")
        )

    def simulate(self, theta, rng):
        z = rng.standard_normal(self.n_draws)
        return np.sort(gk_quantile(z, *theta))


MODEL_REGISTRY = {
    GaussianToy.name: GaussianToy,
    Banana.name: Banana,
    LotkaVolterra.name: LotkaVolterra,
    GandK.name: GandK,
}


def get_model(name, **options) -> SimulatorModel:
    """Look a model up by name; ``options`` are forwarded to its constructor."""
    try:
        cls = MODEL_REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(MODEL_REGISTRY))
        raise ValueError(f"unknown model {name!r}; available models: {known}") from None
    try:
        return cls(**options)
    except TypeError as err:
        raise ValueError(f"invalid options for model {name!r}: {err}") from None


def make_observed(model: SimulatorModel, stream: RngStream, theta0=None, max_attempts=1000):
    """Draw one synthetic observation at the true parameter.

    Models with a fixed observation (the Gaussian toy) return it unchanged.
    Failed simulations retry on fresh substreams, so a well-behaved true
    parameter always yields an observation deterministically from ``stream``.
    """
    if model.fixed_observation is not None:
        return model.fixed_observation.copy()
    theta0 = model.true_parameter if theta0 is None else np.asarray(theta0, dtype=float)
    if not model.in_support(theta0):
        raise ValueError("true parameter lies outside the prior support")
    for attempt in itertools.count():
        if attempt >= max_attempts:
            raise RuntimeError(f"could not simulate an observation in {max_attempts} attempts")
        summary = model.simulate(theta0, stream.child(attempt).generator())
        if summary is not None and np.all(np.isfinite(summary)):
            return summary
