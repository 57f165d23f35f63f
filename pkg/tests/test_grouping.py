import warnings

import numpy as np
import pytest

from fusebound.core_types import OutcomeSample, ProblemSpec, RegressorSample
from fusebound.grouping import (build_grouping, default_k, grouping_from_labels,
                                heteroskedasticity_indices, pooled_probabilities)
from fusebound.simulate import DgpConfig, draw_dgp


@pytest.mark.parametrize("n, m, K", [(400, 400, 3), (800, 800, 3), (1200, 1200, 4),
                                     (2400, 2400, 4), (4800, 4800, 5), (32, 10 ** 6, 2),
                                     (243, 500, 3), (10, 10, 2)])
def test_default_k(n, m, K):
    assert default_k(n, m) == K


def _residuals(s1, s2):
    from fusebound.bounds import common_residuals
    cr = common_residuals(s1, s2, ProblemSpec([1.0, 0.0, 0.0], (0,)))
    return cr.nu_Y, cr.nu_d


def test_kmeans_cells_populated_and_deterministic():
    s1, s2 = draw_dgp(DgpConfig.panel(3, n=300, m=250), 4)
    rY, rd = _residuals(s1, s2)
    g = build_grouping(s1, s2, rY, rd, K=5, seed=7)
    g2 = build_grouping(s1, s2, rY, rd, K=5, seed=7)
    assert g.K == 5 and g.method == "kmeans"
    assert np.array_equal(g.assign1, g2.assign1) and np.array_equal(g.assign2, g2.assign2)
    assert set(np.unique(g.assign1)) == set(range(5)) == set(np.unique(g.assign2))
    assert g.p_hat.sum() == pytest.approx(1.0)


def test_single_cell_when_K_is_one_or_no_W(rng):
    s1 = OutcomeSample(rng.standard_normal(10), None)
    s2 = RegressorSample(rng.standard_normal(12), None)
    g = build_grouping(s1, s2, s1.y, s2.Xo[:, 0], K=4)
    assert g.K == 1 and g.notes


def test_discrete_W_uses_support_points(rng):
    W1 = rng.integers(0, 3, 40).astype(float)
    W2 = rng.integers(0, 3, 50).astype(float)
    s1 = OutcomeSample(rng.standard_normal(40), W1)
    s2 = RegressorSample(rng.standard_normal(50), W2)
    g = build_grouping(s1, s2, s1.y, s2.Xo[:, 0], K=3)
    assert g.method == "distinct" and g.K == 3
    for k in range(3):
        assert len(set(W1[g.assign1 == k]) | set(W2[g.assign2 == k])) == 1


def test_support_point_missing_from_one_sample_is_merged(rng):
    W1 = np.array([0, 0, 1, 1, 2, 2], float)
    W2 = np.array([0, 0, 1, 1, 1, 0], float)
    s1 = OutcomeSample(rng.standard_normal(6), W1)
    s2 = RegressorSample(rng.standard_normal(6), W2)
    g = build_grouping(s1, s2, s1.y, s2.Xo[:, 0], K=5)
    assert g.K == 2
    assert np.all(np.bincount(g.assign1, minlength=2) > 0)
    assert np.all(np.bincount(g.assign2, minlength=2) > 0)


def test_K_reduced_with_warning_when_too_few_points(rng):
    # 4 distinct W rows but index collapses to 2 distinct points
    W1 = np.repeat([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]], 5, axis=0)
    s1 = OutcomeSample(rng.standard_normal(20), W1)
    s2 = RegressorSample(rng.standard_normal(20), W1)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        g = build_grouping(s1, s2, np.ones(20), np.ones(20), K=3)
    assert g.K <= 3
    # 4 distinct rows > K=3, indices are constant: one point, one cell
    assert g.K == 1 and g.reduced
    assert any(issubclass(x.category, RuntimeWarning) for x in w)


def test_grouping_from_labels(rng):
    g = grouping_from_labels(["a", "b", "a"], ["b", "a"], w2=[3.0, 1.0])
    assert g.K == 2
    assert np.allclose(g.p_hat, pooled_probabilities(g.assign1, np.ones(3), g.assign2,
                                                     np.array([3.0, 1.0]), 2))
    with pytest.raises(ValueError, match="both samples"):
        grouping_from_labels(["a", "c"], ["a", "b"])


def test_indices_reflect_heteroskedasticity(rng):
    n = 4000
    W = rng.uniform(0, 1, n)
    D = np.column_stack([W, np.ones(n)])
    resid = (1 + 3 * W) * rng.standard_normal(n)
    I1, I2 = heteroskedasticity_indices(D, D, resid, resid)
    # E|resid| = sqrt(2/pi) (1 + 3W): slope about 2.39
    slope = np.polyfit(W, I1[:, 0], 1)[0]
    assert slope == pytest.approx(3 * np.sqrt(2 / np.pi), rel=0.1)
