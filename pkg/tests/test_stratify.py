import math

import numpy as np
import pytest

from stratabc import FrequencyTensor, Population, predictive_matrix, reweight
from stratabc.stratify import floored_kl, kl_target_vs_current, strata_weights

# Hand evaluation of sum p log(p/q) for p=(1/2,1/2), q=(1/4,3/4):
# 0.5 ln 2 + 0.5 ln(2/3) ~ 0.14384103622589042.
KL_HALF_VS_QUARTER = 0.5 * math.log(2.0) + 0.5 * math.log(2.0 / 3.0)


def test_record_event_counts():
    tensor = FrequencyTensor(3)
    tensor.record(landing=2, source=1, iteration=1)
    assert tensor.slice(1)[1, 0] == 1
    tensor.record(2, 1, 1)
    assert tensor.slice(1)[1, 0] == 2
    assert tensor.counts()[1, 0] == 2
    with pytest.raises(IndexError):
        tensor.record(4, 1, 1)
    with pytest.raises(IndexError):
        tensor.record(1, 0, 1)
    with pytest.raises(IndexError):
        tensor.record(1, 1, 0)


def test_cumulative_counts_match_recomputation():
    rng = np.random.default_rng(0)
    tensor = FrequencyTensor(4)
    for _ in range(100):
        tensor.record(
            int(rng.integers(1, 5)), int(rng.integers(1, 5)), int(rng.integers(1, 4))
        )
    total = sum(tensor.slice(m) for m in tensor.iterations)
    np.testing.assert_array_equal(tensor.counts(), total)
    upto2 = tensor.slice(1) + tensor.slice(2)
    np.testing.assert_array_equal(tensor.counts(up_to=2), upto2)
    assert tensor.counts().sum() == 100


def test_merge_matches_individual_records():
    a = FrequencyTensor(3)
    b = FrequencyTensor(3)
    delta = np.array([[2, 0, 1], [0, 3, 0], [1, 0, 0]])
    for landing in range(1, 4):
        for source in range(1, 4):
            for _ in range(delta[landing - 1, source - 1]):
                a.record(landing, source, 2)
    b.merge(delta, 2)
    np.testing.assert_array_equal(a.counts(), b.counts())
    with pytest.raises(ValueError):
        b.merge(-delta, 2)
    with pytest.raises(ValueError):
        b.merge(np.zeros((2, 2), dtype=int), 2)


def test_predictive_matrix_normalization_and_mask():
    tensor = FrequencyTensor(3)
    for landing, count in ((1, 5), (2, 3), (3, 2)):
        for _ in range(count):
            tensor.record(landing, 1, 1)
    pm = predictive_matrix(tensor)
    np.testing.assert_allclose(pm.probs[:, 0], [0.5, 0.3, 0.2], rtol=1e-12)
    assert pm.visited[0] and not pm.visited[1] and not pm.visited[2]
    assert pm.column(2) is None
    assert pm.column(1) is not None
    single = FrequencyTensor(3)
    single.record(2, 3, 1)
    pm_single = predictive_matrix(single)
    np.testing.assert_array_equal(pm_single.probs[:, 2], [0.0, 1.0, 0.0])


def test_predictive_matrix_columns_sum_to_one():
    rng = np.random.default_rng(1)
    tensor = FrequencyTensor(5)
    for _ in range(400):
        tensor.record(int(rng.integers(1, 6)), int(rng.integers(1, 6)), 2)
    pm = predictive_matrix(tensor)
    sums = pm.probs.sum(axis=0)
    for k in range(5):
        if pm.visited[k]:
            assert abs(sums[k] - 1.0) < 1e-12


def test_monotone_accumulation():
    tensor = FrequencyTensor(3)
    tensor.record(1, 1, 1)
    tensor.record(2, 1, 2)
    tensor.record(3, 1, 3)
    c1 = predictive_matrix(tensor, up_to=1).counts.sum()
    c2 = predictive_matrix(tensor, up_to=2).counts.sum()
    c3 = predictive_matrix(tensor, up_to=3).counts.sum()
    assert c1 < c2 < c3


def _pm_from_columns(columns):
    """Build a PredictiveMatrix whose column counts are given per stratum."""
    T = len(next(iter(columns.values())))
    tensor = FrequencyTensor(T)
    for source, counts in columns.items():
        for landing, count in enumerate(counts, start=1):
            for _ in range(count):
                tensor.record(landing, source, 1)
    return predictive_matrix(tensor)


def test_strata_weights_hand_examples():
    pm = _pm_from_columns({1: [5, 3, 2]})
    out = strata_weights(pm, 1, np.zeros(3))
    assert out[0] == pytest.approx(0.5, rel=1e-12)  # 0.3 + 0.2
    pm_all_outer = _pm_from_columns({2: [7, 0, 0]})
    out2 = strata_weights(pm_all_outer, 1, np.zeros(3))
    assert out2[1] == 0.0  # all predictive mass lands outside the next region
    pm_last = _pm_from_columns({2: [0, 9, 1], 3: [0, 5, 5]})
    out3 = strata_weights(pm_last, 2, np.zeros(3))
    assert out3[1] == pytest.approx(0.1, rel=1e-12)  # single-term sum at t = T-1
    assert out3[2] == pytest.approx(0.5, rel=1e-12)


def test_strata_weights_unvisited_fallback_uses_band_mass():
    pm = _pm_from_columns({3: [1, 1, 2]})  # column 2 never proposed from
    masses = np.array([0.0, 0.25, 0.75])
    out = strata_weights(pm, 2, masses)
    assert out[1] == pytest.approx(0.25)  # neutral fallback
    assert out[2] == pytest.approx(0.5, rel=1e-12)
    with pytest.raises(ValueError):
        strata_weights(pm, 3, masses)  # no next iteration at t = T


def _population(weights, strata):
    weights = np.asarray(weights, dtype=float)
    n = weights.size
    return Population(
        thetas=np.zeros((n, 1)),
        weights=weights,
        distances=np.linspace(0.1, 0.9, n),
        strata=np.asarray(strata),
    )


def test_reweight_worked_example():
    pop = _population([0.2, 0.2, 0.6], [1, 1, 2])
    out = reweight(pop, np.array([0.3, 0.7]))
    np.testing.assert_allclose(out, [0.15, 0.15, 0.70], rtol=1e-12)
    assert out.sum() == pytest.approx(1.0, abs=1e-12)


def test_reweight_single_stratum_is_bitwise_identity():
    pop = _population([0.25, 0.35, 0.4], [2, 2, 2])
    out = reweight(pop, np.array([0.0, 0.123, 0.0]))
    np.testing.assert_array_equal(out, pop.weights)


def test_reweight_zero_weights_fall_back_to_input():
    pop = _population([0.5, 0.5], [1, 2])
    out = reweight(pop, np.array([0.0, 0.0]))
    np.testing.assert_array_equal(out, pop.weights)


def test_reweight_symmetry_reduction():
    # equal band weights and equal within-band masses leave weights unchanged
    pop = _population([0.3, 0.2, 0.1, 0.4], [1, 1, 2, 2])
    out = reweight(pop, np.array([0.4, 0.4]))
    np.testing.assert_allclose(out, pop.weights, rtol=1e-12)


def test_reweight_zero_band_weight_zeroes_those_particles():
    pop = _population([0.25, 0.25, 0.5], [1, 2, 3])
    out = reweight(pop, np.array([0.0, 0.5, 0.5]))
    assert out[0] == 0.0
    assert np.all(out[1:] > 0)
    assert out.sum() == pytest.approx(1.0, abs=1e-12)


def test_floored_kl_hand_value_and_guards():
    # totals large enough that the floor does not bind
    assert floored_kl([2, 2], [1, 3]) == pytest.approx(KL_HALF_VS_QUARTER, rel=1e-12)
    assert floored_kl([3, 3], [3, 3]) == 0.0
    assert floored_kl([0, 0], [1, 2]) is None
    assert floored_kl([1, 2], [0, 0]) is None


def test_floored_kl_handles_zero_cells_finite_and_nonnegative():
    rng = np.random.default_rng(3)
    for _ in range(200):
        p = rng.integers(0, 5, size=4)
        q = rng.integers(0, 5, size=4)
        if p.sum() == 0 or q.sum() == 0:
            continue
        val = floored_kl(p, q)
        assert math.isfinite(val) and val >= 0.0


def test_kl_invariant_to_consistent_permutation():
    rng = np.random.default_rng(4)
    p = rng.integers(1, 9, size=5)
    q = rng.integers(1, 9, size=5)
    perm = rng.permutation(5)
    assert floored_kl(p, q) == pytest.approx(floored_kl(p[perm], q[perm]), rel=1e-12)


def test_kl_target_vs_current_requires_visited_columns():
    pm = _pm_from_columns({2: [1, 4, 5], 3: [0, 2, 8]})
    assert kl_target_vs_current(pm, 1) is None  # column 1 unvisited
    val = kl_target_vs_current(pm, 2)
    assert val is not None and val >= 0.0
    assert kl_target_vs_current(pm, 3) == 0.0  # a column against itself
