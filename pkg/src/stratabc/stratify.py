"""Cross-iteration frequency bookkeeping for the stratified sampler.

The sampler counts, for every proposal, which acceptance band the simulated
data landed in given the band its source particle occupied.  Column-normalized
cumulative counts estimate the per-band predictive probabilities that drive
the stratified reweighting and the KL-based early-stopping diagnostic.
"""

from dataclasses import dataclass

import numpy as np

from .core import Population

__all__ = [
    "FrequencyTensor",
    "PredictiveMatrix",
    "predictive_matrix",
    "strata_weights",
    "reweight",
    "floored_kl",
    "kl_target_vs_current",
]


class FrequencyTensor:
    """Counts of (landing band, source band) events per recorded iteration.

    Counts only ever increase; a cumulative matrix is maintained alongside the
    per-iteration slices.  One owner mutates the tensor per iteration (worker
    deltas are merged in a single call), matching the sampler's single-owner
    accumulation phase.
    """

    def __init__(self, n_strata):
        if n_strata < 1:
            raise ValueError("need at least one stratum")
        self.n_strata = int(n_strata)
        self._slices = {}
        self._cumulative = np.zeros((self.n_strata, self.n_strata), dtype=np.int64)

    def _check_stratum(self, value, label):
        if not 1 <= value <= self.n_strata:
            raise IndexError(f"{label} stratum {value} outside 1..{self.n_strata}")

    def record(self, landing, source, iteration):
        """Count one simulated proposal from band ``source`` landing in band
        ``landing`` during the transition into ``iteration``."""
        self._check_stratum(landing, "landing")
        self._check_stratum(source, "source")
        if iteration < 1:
            raise IndexError("iteration index starts at 1")
        matrix = self._slices.setdefault(
            int(iteration), np.zeros((self.n_strata, self.n_strata), dtype=np.int64)
        )
        matrix[landing - 1, source - 1] += 1
        self._cumulative[landing - 1, source - 1] += 1

    def merge(self, delta, iteration):
        """Add a whole (landing, source) count matrix for one iteration."""
        delta = np.asarray(delta, dtype=np.int64)
        if delta.shape != (self.n_strata, self.n_strata):
            raise ValueError(f"delta must be {(self.n_strata, self.n_strata)}, got {delta.shape}")
        if np.any(delta < 0):
            raise ValueError("counts cannot decrease")
        if iteration < 1:
            raise IndexError("iteration index starts at 1")
        matrix = self._slices.setdefault(
            int(iteration), np.zeros((self.n_strata, self.n_strata), dtype=np.int64)
        )
        matrix += delta
        self._cumulative += delta

    @property
    def iterations(self):
        return sorted(self._slices)

    def slice(self, iteration):
        return self._slices.get(int(iteration), np.zeros_like(self._cumulative)).copy()

    def counts(self, up_to=None):
        """Cumulative counts over iterations m <= ``up_to`` (all by default)."""
        if up_to is None:
            return self._cumulative.copy()
        total = np.zeros_like(self._cumulative)
        for m, matrix in self._slices.items():
            if m <= up_to:
                total += matrix
        return total

    def to_dict(self):
        return {str(m): self._slices[m].tolist() for m in self.iterations}


@dataclass(frozen=True)
class PredictiveMatrix:
    """Column-stochastic view of the cumulative frequencies.

    Column k estimates the probability that a band-k particle's next simulated
    dataset lands in each band.  Columns with no recorded proposals are masked
    unvisited and must never be read as zeros.
    """

    counts: np.ndarray
    probs: np.ndarray
    visited: np.ndarray
    column_totals: np.ndarray

    @property
    def n_strata(self):
        return self.counts.shape[0]

    def column(self, k):
        """Probability column for band ``k``, or ``None`` when unvisited."""
        if not self.visited[k - 1]:
            return None
        return self.probs[:, k - 1].copy()


def predictive_matrix(tensor: FrequencyTensor, up_to=None) -> PredictiveMatrix:
    counts = tensor.counts(up_to)
    totals = counts.sum(axis=0)
    visited = totals > 0
    probs = np.zeros(counts.shape, dtype=float)
    np.divide(counts, totals[None, :], out=probs, where=visited[None, :])
    for arr in (counts, probs, visited, totals):
        arr.setflags(write=False)
    return PredictiveMatrix(counts=counts, probs=probs, visited=visited, column_totals=totals)


def strata_weights(pm: PredictiveMatrix, t, stratum_masses):
    """Probability that a band-k particle lands inside the next acceptance
    region, for k = t..T: the column sum of the predictive matrix over landing
    bands t+1..T.

    Columns never proposed from fall back to the band's current weight mass,
    which reproduces unstratified sampling for that band instead of starving
    it.  Entries for inactive bands k < t are zero.
    """
    T = pm.n_strata
    if not 1 <= t < T:
        raise ValueError(f"strata weights need 1 <= t < T, got t={t}, T={T}")
    stratum_masses = np.asarray(stratum_masses, dtype=float)
    if stratum_masses.shape != (T,):
        raise ValueError(f"stratum_masses must have shape ({T},)")
    out = np.zeros(T)
    for k in range(t, T + 1):
        if pm.visited[k - 1]:
            out[k - 1] = float(pm.probs[t : T, k - 1].sum())
        else:
            out[k - 1] = stratum_masses[k - 1]
    return out


def reweight(population: Population, strata_weight_values):
    """Rebalance particle weights by band: normalize within each band,
    multiply by the band's weight, renormalize globally.

    With a single occupied band the result is the input weights, bitwise.
    If every occupied band has zero weight the rebalancing is uninformative
    and the input weights are returned unchanged.
    """
    weights = population.weights
    strata = population.strata
    values = np.asarray(strata_weight_values, dtype=float)
    occupied = np.unique(strata)
    if occupied.size == 1:
        return weights.copy()
    masses = population.stratum_masses(values.shape[0])
    rebalanced = weights / masses[strata - 1] * values[strata - 1]
    total = float(rebalanced.sum())
    if total <= 0.0:
        return weights.copy()
    return rebalanced / total


def floored_kl(target_counts, current_counts):
    """KL divergence between two count-derived band distributions.

    Each column is floored at 1 / (column total + T) and renormalized before
    the divergence, so a band never observed in the current column cannot
    blow the divergence up to infinity.  Returns ``None`` when either column
    holds no counts at all.
    """
    p_counts = np.asarray(target_counts, dtype=float)
    q_counts = np.asarray(current_counts, dtype=float)
    n_p = float(p_counts.sum())
    n_q = float(q_counts.sum())
    if n_p <= 0.0 or n_q <= 0.0:
        return None
    T = p_counts.size
    p = np.maximum(p_counts / n_p, 1.0 / (n_p + T))
    q = np.maximum(q_counts / n_q, 1.0 / (n_q + T))
    p /= p.sum()
    q /= q.sum()
    return max(0.0, float(np.sum(p * np.log(p / q))))


def kl_target_vs_current(pm: PredictiveMatrix, t):
    """Divergence of the final band's predictive column from iteration ``t``'s
    column; ``None`` until both columns have been visited."""
    T = pm.n_strata
    if not 1 <= t <= T:
        raise ValueError(f"iteration {t} outside 1..{T}")
    if not (pm.visited[T - 1] and pm.visited[t - 1]):
        return None
    return floored_kl(pm.counts[:, T - 1], pm.counts[:, t - 1])
