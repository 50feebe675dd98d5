"""Gaussian perturbation-kernel machinery.

Implements the four kernel policies: one shared covariance fitted to the whole
next-threshold subset (global), one covariance per particle (local), and the
stratified variants that condition each particle's covariance on its
acceptance band.  Covariances are regularized to stay positive definite, and a
:class:`KernelPlan` caches the Cholesky factors needed for sampling and for
the mixture densities in the importance weights.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import Population, ThresholdSchedule

__all__ = [
    "KernelPolicy",
    "KernelPlan",
    "EmptySubsetError",
    "next_threshold_subset",
    "global_covariance",
    "local_covariance",
    "stratified_covariance",
    "weighted_covariance",
    "regularize",
    "sample_kernel",
    "kernel_density",
    "build_kernel_plan",
]

_LOG_2PI = math.log(2.0 * math.pi)


class KernelPolicy(str, Enum):
    """Which covariance estimator and sampling distribution an iteration uses."""

    GLOBAL = "global"
    LOCAL = "local"
    STRATIFIED_SIMPLE = "stratified-simple"
    STRATIFIED = "stratified"

    @property
    def is_stratified(self):
        return self in (KernelPolicy.STRATIFIED_SIMPLE, KernelPolicy.STRATIFIED)

    @property
    def uses_reweighting(self):
        """Only the full stratified policy samples from the reweighted particles."""
        return self is KernelPolicy.STRATIFIED


class EmptySubsetError(ValueError):
    """No particle survives the next threshold; callers fall back."""


def next_threshold_subset(population: Population, eps_next):
    """Indices and renormalized weights of particles with distance < ``eps_next``."""
    idx = np.flatnonzero(population.distances < eps_next)
    if idx.size == 0:
        raise EmptySubsetError(f"no particle has distance below {eps_next}")
    w = population.weights[idx]
    return idx, w / w.sum()


def _moments(points, weights):
    """Weighted first moment and second raw moment of normalized ``weights``."""
    mu = weights @ points
    m2 = np.einsum("j,ji,jk->ik", weights, points, points)
    return mu, m2


def _scatter(theta, mu, m2):
    """Sum_j w_j (theta - x_j)(theta - x_j)^T from precomputed moments."""
    return m2 - np.outer(theta, mu) - np.outer(mu, theta) + np.outer(theta, theta)


def _scatter_batch(thetas, mu, m2):
    """Vectorized :func:`_scatter` over the rows of ``thetas``; same arithmetic."""
    cross = thetas[:, :, None] * mu[None, None, :]
    self_outer = thetas[:, :, None] * thetas[:, None, :]
    return m2[None, :, :] - cross - np.swapaxes(cross, 1, 2) + self_outer


def weighted_covariance(points, weights):
    """Weighted population covariance Sum_j w_j (x_j - mu)(x_j - mu)^T."""
    weights = np.asarray(weights, dtype=float)
    weights = weights / weights.sum()
    centered = np.asarray(points, dtype=float) - weights @ points
    return np.einsum("j,ji,jk->ik", weights, centered, centered)


def global_covariance(thetas, weights, subset_thetas, subset_weights):
    """Shared covariance: the double weighted sum of pairwise outer products.

    The outer factor runs over the full population with its weights, the inner
    factor over the next-threshold subset with renormalized weights.
    """
    mu_outer, m2_outer = _moments(np.asarray(thetas, dtype=float), np.asarray(weights, dtype=float))
    mu_inner, m2_inner = _moments(
        np.atleast_2d(np.asarray(subset_thetas, dtype=float)),
        np.asarray(subset_weights, dtype=float),
    )
    return m2_outer - np.outer(mu_outer, mu_inner) - np.outer(mu_inner, mu_outer) + m2_inner


def local_covariance(theta, subset_thetas, subset_weights):
    """Per-particle covariance Sum_j w_j (theta - x_j)(theta - x_j)^T."""
    theta = np.asarray(theta, dtype=float)
    mu, m2 = _moments(
        np.atleast_2d(np.asarray(subset_thetas, dtype=float)),
        np.asarray(subset_weights, dtype=float),
    )
    return _scatter(theta, mu, m2)


def stratified_covariance(theta, stratum, population: Population, sampling_weights=None):
    """Band-conditioned covariance for a particle residing in ``stratum``.

    The target set holds the particles strictly inside the particle's own
    band (stratum >= k + 1), with their sampling weights renormalized.  An
    empty or zero-mass target set relaxes to stratum >= k and then to the full
    population, which always carries positive mass.
    """
    weights = population.weights if sampling_weights is None else np.asarray(sampling_weights)
    theta = np.asarray(theta, dtype=float)
    for start in (stratum + 1, stratum, 1):
        mask = population.strata >= start
        mass = float(weights[mask].sum())
        if mask.any() and mass > 0.0:
            return local_covariance(theta, population.thetas[mask], weights[mask] / mass)
    raise ValueError("population carries no sampling mass")  # unreachable for valid input


def regularize(sigma, n_support=None):
    """Jitter a covariance just enough to admit a Cholesky factorization.

    Adds lambda * I with lambda = max(1e-8, 1e-6 * trace / dim) when the
    factorization fails or when the estimate rests on fewer than dim + 1
    distinct support points; well-conditioned input passes through unchanged.
    """
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    sigma = 0.5 * (sigma + sigma.T)
    d = sigma.shape[0]
    if n_support is None or n_support >= d + 1:
        try:
            np.linalg.cholesky(sigma)
            return sigma
        except np.linalg.LinAlgError:
            pass
    lam = max(1e-8, 1e-6 * float(np.trace(sigma)) / d)
    while True:
        jittered = sigma + lam * np.eye(d)
        try:
            np.linalg.cholesky(jittered)
            return jittered
        except np.linalg.LinAlgError:
            lam *= 10.0


def sample_kernel(theta, sigma, rng):
    """One draw from Normal(theta, sigma) via the Cholesky factor."""
    chol = np.linalg.cholesky(np.atleast_2d(np.asarray(sigma, dtype=float)))
    return np.asarray(theta, dtype=float) + chol @ rng.standard_normal(chol.shape[0])


def kernel_density(theta_to, theta_from, sigma):
    """Multivariate normal density N(theta_to | theta_from, sigma)."""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    diff = np.atleast_1d(np.asarray(theta_to, dtype=float) - np.asarray(theta_from, dtype=float))
    chol = np.linalg.cholesky(sigma)
    z = np.linalg.solve(chol, diff)
    log_det = 2.0 * float(np.sum(np.log(np.diagonal(chol))))
    return math.exp(-0.5 * (diff.size * _LOG_2PI + log_det + float(z @ z)))


def _distinct_rows(points):
    if points.shape[0] == 0:
        return 0
    return int(np.unique(points, axis=0).shape[0])


def _regularize_stack(sigmas, n_supports):
    """Apply :func:`regularize` semantics across a stack of covariances."""
    sigmas = np.ascontiguousarray(sigmas)
    d = sigmas.shape[-1]
    low = np.asarray(n_supports) < d + 1
    if low.any():
        trace = np.trace(sigmas[low], axis1=-2, axis2=-1)
        lam = np.maximum(1e-8, 1e-6 * trace / d)
        sigmas[low] += lam[:, None, None] * np.eye(d)
    try:
        np.linalg.cholesky(sigmas)
        return sigmas
    except np.linalg.LinAlgError:
        out = np.empty_like(sigmas)
        for i in range(sigmas.shape[0]):
            out[i] = regularize(sigmas[i])
        return out


@dataclass(frozen=True)
class KernelPlan:
    """Per-particle Gaussian kernels for one iteration, factors cached.

    ``covariances`` holds one matrix per particle (the global policy stores
    the shared matrix broadcast across particles).  Plans are immutable and
    read-only once built.
    """

    policy: KernelPolicy
    thetas: np.ndarray
    covariances: np.ndarray
    chols: np.ndarray
    inv_covs: np.ndarray
    log_norms: np.ndarray

    @property
    def dim(self):
        return self.thetas.shape[1]

    def sample(self, index, rng):
        """Perturb particle ``index`` with its own kernel."""
        return self.thetas[index] + self.chols[index] @ rng.standard_normal(self.dim)

    def mixture_log_density(self, queries, sampling_weights):
        """log Sum_j s_j N(query | theta_j, Sigma_j) for each query row.

        This is the exact density of the proposal process (select j with
        probability s_j, perturb with j's kernel); zero-weight components are
        skipped.  Expanding the quadratic form turns each log component into a
        single inner product [q (x) q, q, 1] . [-IC/2, IC theta, base], so one
        GEMM per block yields the exponents directly; exp and the row sums run
        in place.  Regularization bounds every exponent far inside double
        range (|log component| < ~100), so the unshifted sum cannot overflow,
        and the query's own source component keeps it from vanishing; a
        log-sum-exp fallback covers the latter defensively.
        """
        queries = np.atleast_2d(np.asarray(queries, dtype=float))
        s = np.asarray(sampling_weights, dtype=float)
        active = s > 0.0
        thetas = self.thetas[active]
        inv_covs = self.inv_covs[active]
        log_base = np.log(s[active]) + self.log_norms[active]
        d = self.dim
        lin = np.einsum("jik,jk->ji", inv_covs, thetas)
        const = np.einsum("ji,ji->j", lin, thetas)
        columns = np.concatenate(
            [-0.5 * inv_covs.reshape(-1, d * d), lin, (log_base - 0.5 * const)[:, None]],
            axis=1,
        )
        n_queries = queries.shape[0]
        out = np.empty(n_queries)
        block = max(1, int(2_000_000 / max(1, thetas.shape[0])))
        for start in range(0, n_queries, block):
            q = queries[start : start + block]
            q_aug = np.concatenate(
                [(q[:, :, None] * q[:, None, :]).reshape(q.shape[0], d * d), q, np.ones((q.shape[0], 1))],
                axis=1,
            )
            comp = q_aug @ columns.T
            rows = slice(start, start + q.shape[0])
            np.exp(comp, out=comp)
            mix = comp.sum(axis=1)
            if np.any(mix == 0.0):
                comp = q_aug @ columns.T
                peak = comp.max(axis=1)
                mix = np.exp(comp - peak[:, None]).sum(axis=1)
                out[rows] = peak + np.log(mix)
            else:
                out[rows] = np.log(mix)
        return out


def _finalize_plan(policy, thetas, sigmas):
    chols = np.linalg.cholesky(sigmas)
    inv_covs = np.linalg.inv(sigmas)
    d = thetas.shape[1]
    log_dets = 2.0 * np.sum(np.log(np.diagonal(chols, axis1=-2, axis2=-1)), axis=-1)
    log_norms = -0.5 * (d * _LOG_2PI + log_dets)
    for arr in (sigmas, chols, inv_covs, log_norms):
        arr.setflags(write=False)
    return KernelPlan(
        policy=policy,
        thetas=thetas,
        covariances=sigmas,
        chols=chols,
        inv_covs=inv_covs,
        log_norms=log_norms,
    )


def _shared_fallback(population):
    """Doubled weighted empirical covariance, the classic choice when the
    next-threshold subset is empty."""
    sigma = 2.0 * weighted_covariance(population.thetas, population.weights)
    n_support = _distinct_rows(population.thetas[population.weights > 0])
    return regularize(sigma, n_support)


def build_kernel_plan(
    policy: KernelPolicy,
    population: Population,
    sampling_weights,
    schedule: ThresholdSchedule,
) -> KernelPlan:
    """Construct the per-particle kernels for the transition out of
    ``population.iteration`` under the given policy."""
    t = population.iteration
    if t >= schedule.n_strata:
        raise ValueError(f"no threshold after iteration {t}")
    eps_next = schedule.eps[t]
    thetas = population.thetas
    n, d = thetas.shape

    if policy is KernelPolicy.GLOBAL or policy is KernelPolicy.LOCAL:
        try:
            idx, sub_w = next_threshold_subset(population, eps_next)
            pts = thetas[idx]
            n_support = _distinct_rows(pts[sub_w > 0])
            if policy is KernelPolicy.GLOBAL:
                sigma = regularize(
                    global_covariance(thetas, population.weights, pts, sub_w), n_support
                )
                sigmas = np.broadcast_to(sigma, (n, d, d)).copy()
            else:
                mu, m2 = _moments(pts, sub_w)
                sigmas = _regularize_stack(_scatter_batch(thetas, mu, m2), np.full(n, n_support))
        except EmptySubsetError:
            sigma = _shared_fallback(population)
            sigmas = np.broadcast_to(sigma, (n, d, d)).copy()
    else:
        s = np.asarray(sampling_weights, dtype=float)
        T = schedule.n_strata
        suffix = {}
        for start in range(1, T + 2):
            mask = population.strata >= start
            mass = float(s[mask].sum())
            if mask.any() and mass > 0.0:
                ww = s[mask] / mass
                mu, m2 = _moments(thetas[mask], ww)
                suffix[start] = (mu, m2, _distinct_rows(thetas[mask][ww > 0]))
        sigmas = np.empty((n, d, d))
        n_supports = np.empty(n, dtype=np.int64)
        for i in range(n):
            k = int(population.strata[i])
            entry = suffix.get(k + 1) or suffix.get(k) or suffix[1]
            mu, m2, n_supports[i] = entry
            sigmas[i] = _scatter(thetas[i], mu, m2)
        sigmas = _regularize_stack(sigmas, n_supports)

    return _finalize_plan(policy, thetas, sigmas)
