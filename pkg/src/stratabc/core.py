"""Domain types shared by every sampler: threshold schedules, the acceptance-band
partition, weighted particle populations, and deterministic RNG streams."""

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ThresholdSchedule",
    "Particle",
    "Population",
    "RngStream",
    "stratum_of",
    "landing_stratum",
    "active_strata",
    "validate_schedule",
]

#: Distance assigned to proposals whose simulation failed (event-cap breach,
#: degenerate summaries).  Never accepted; lands in the outermost band.
REJECTED_DISTANCE = math.inf

_WEIGHT_SUM_TOL = 1e-9


class ScheduleError(ValueError):
    """Raised for threshold sequences that do not define a valid partition."""


@dataclass(frozen=True)
class ThresholdSchedule:
    """A strictly decreasing tolerance sequence eps_1 > ... > eps_T > 0.

    The first entry may be infinite; an implicit eps_{T+1} = 0 closes the
    partition.  Band k covers distances in [eps_{k+1}, eps_k), so the T bands
    tile [0, eps_1).

    Parameters
    ----------
    eps : tuple of float
        Tolerances, outermost first.
    """

    eps: tuple

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps)
        if len(eps) == 0:
            raise ScheduleError("threshold schedule must be non-empty")
        for i, e in enumerate(eps):
            if math.isnan(e) or e <= 0:
                raise ScheduleError(f"thresholds must be positive, got {e} at position {i + 1}")
            if math.isinf(e) and i > 0:
                raise ScheduleError("only the first threshold may be infinite")
        for a, b in zip(eps, eps[1:]):
            if not a > b:
                raise ScheduleError(f"thresholds must be strictly decreasing, got {a} before {b}")
        object.__setattr__(self, "eps", eps)
        # ascending lower band edges [0 = eps_{T+1}, eps_T, ..., eps_2]
        lower = np.array((0.0,) + eps[:0:-1])
        lower.setflags(write=False)
        object.__setattr__(self, "_lower_edges", lower)

    @property
    def n_strata(self):
        return len(self.eps)

    @property
    def final(self):
        """The tightest tolerance eps_T."""
        return self.eps[-1]

    def __len__(self):
        return len(self.eps)


def validate_schedule(raw) -> ThresholdSchedule:
    """Validate a raw tolerance list and wrap it in a :class:`ThresholdSchedule`."""
    return ThresholdSchedule(tuple(raw))


def stratum_of(distance, schedule: ThresholdSchedule) -> int:
    """Band index k (1-based) with eps_{k+1} <= distance < eps_k.

    Bands are lower-inclusive and upper-exclusive; band 1 is the outermost.
    Raises for non-finite distances or distances outside [0, eps_1).
    """
    if not math.isfinite(distance) or distance < 0:
        raise ValueError(f"distance must be finite and nonnegative, got {distance}")
    if distance >= schedule.eps[0]:
        raise ValueError(f"distance {distance} lies outside the partition [0, {schedule.eps[0]})")
    edges = schedule._lower_edges
    idx = int(np.searchsorted(edges, distance, side="right")) - 1
    return schedule.n_strata - idx


def landing_stratum(distance, schedule: ThresholdSchedule) -> int:
    """Band index for frequency bookkeeping.

    Unlike :func:`stratum_of`, failed simulations (infinite distance) and
    distances beyond a finite eps_1 are attributed to the outermost band 1:
    they can never be accepted, and counting them keeps the per-column
    predictive frequencies normalized over actual simulator calls.
    """
    if not math.isfinite(distance) or distance >= schedule.eps[0]:
        return 1
    return stratum_of(distance, schedule)


def active_strata(t, schedule: ThresholdSchedule) -> range:
    """Strata a surviving particle at iteration ``t`` may occupy: {t, ..., T}."""
    T = schedule.n_strata
    if not 1 <= t <= T:
        raise ValueError(f"iteration {t} outside 1..{T}")
    return range(t, T + 1)


@dataclass(frozen=True)
class Particle:
    """One weighted parameter sample with its simulated distance and band index."""

    theta: np.ndarray
    weight: float
    distance: float
    stratum: int

    def __post_init__(self):
        if not (math.isfinite(self.weight) and self.weight >= 0):
            raise ValueError(f"weight must be finite and nonnegative, got {self.weight}")


def _frozen_array(values, dtype=float):
    arr = np.ascontiguousarray(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Population:
    """A frozen set of N weighted particles at one iteration.

    Parameters are stored column-wise as an (N, d) array; weights are
    normalized.  Only distances and band indices are kept from each simulated
    dataset, which is all the downstream machinery needs.
    """

    thetas: np.ndarray
    weights: np.ndarray
    distances: np.ndarray
    strata: np.ndarray
    iteration: int = 1

    def __post_init__(self):
        thetas = _frozen_array(np.atleast_2d(self.thetas))
        weights = _frozen_array(self.weights)
        distances = _frozen_array(self.distances)
        strata = _frozen_array(self.strata, dtype=np.int64)
        n = thetas.shape[0]
        if not (weights.shape == distances.shape == strata.shape == (n,)):
            raise ValueError("thetas, weights, distances and strata must agree in length")
        if n == 0:
            raise ValueError("population must contain at least one particle")
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
            raise ValueError("weights must be finite and positive")
        if abs(float(weights.sum()) - 1.0) > _WEIGHT_SUM_TOL:
            raise ValueError(f"weights must sum to 1, got {weights.sum()!r}")
        if self.iteration < 1:
            raise ValueError("iteration index starts at 1")
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "distances", distances)
        object.__setattr__(self, "strata", strata)

    @property
    def size(self):
        return self.thetas.shape[0]

    @property
    def dim(self):
        return self.thetas.shape[1]

    def particles(self):
        """Iterate over :class:`Particle` views (copies) of the stored arrays."""
        for i in range(self.size):
            yield Particle(
                theta=self.thetas[i].copy(),
                weight=float(self.weights[i]),
                distance=float(self.distances[i]),
                stratum=int(self.strata[i]),
            )

    def weighted_mean(self):
        return self.weights @ self.thetas

    def weighted_sd(self):
        mu = self.weighted_mean()
        var = self.weights @ (self.thetas - mu) ** 2
        return np.sqrt(var)

    def stratum_masses(self, n_strata):
        """Total weight per band, as an array indexed by stratum - 1."""
        masses = np.zeros(n_strata)
        np.add.at(masses, self.strata - 1, self.weights)
        return masses


@dataclass(frozen=True)
class RngStream:
    """A named point in a seed-derivation tree.

    Two streams with equal ``(seed, path)`` yield identical generators, so any
    unit of work keyed by its own stream draws the same numbers no matter how
    work is scheduled across threads or processes.
    """

    seed: int
    path: tuple = field(default_factory=tuple)

    def child(self, *ids) -> "RngStream":
        return RngStream(self.seed, self.path + tuple(int(i) for i in ids))

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=self.path))

    def child_generator(self, *ids) -> np.random.Generator:
        """Generator for ``self.child(*ids)`` without the intermediate object;
        the per-proposal hot path uses this."""
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=self.path + ids))
