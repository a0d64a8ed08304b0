"""Score families against loop oracles, plus the contract identities."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conformal_sets import ConfigError, ScoreConfig, probability_matrix
from conformal_sets.scores import (
    APS,
    HPS,
    RAPS,
    row_uniforms,
    score_all,
    score_pair,
    score_true_labels,
)

from conftest import oracle_aps, oracle_raps, random_matrix

# -- hand examples ----------------------------------------------------------------


def test_hps_is_one_minus_probability():
    row = [0.5, 0.3, 0.2]
    cfg = ScoreConfig(HPS)
    assert score_pair(row, 0, cfg) == 0.5
    assert score_pair(row, 2, cfg) == 0.8


def test_aps_hand_values():
    row = [0.5, 0.3, 0.2]
    cfg = ScoreConfig(APS)
    # u = 0.5: half of the candidate's own mass.
    assert score_pair(row, 0, cfg, u=0.5) == pytest.approx(0.25, abs=1e-15)
    assert score_pair(row, 1, cfg, u=0.5) == pytest.approx(0.65, abs=1e-15)
    # u = 1: plain cumulative sums.
    assert score_pair(row, 1, cfg, u=1.0) == pytest.approx(0.8, abs=1e-15)
    assert score_pair(row, 2, cfg, u=1.0) == pytest.approx(1.0, abs=1e-15)


def test_raps_hand_values():
    row = [0.5, 0.3, 0.2]
    cfg = ScoreConfig(RAPS, lam=0.1, k_reg=1)
    # rank 2 candidate: penalty 0.1 * (2 - 1).
    assert score_pair(row, 1, cfg, u=1.0) == pytest.approx(0.9, abs=1e-15)
    # rank 1 candidate: no penalty.
    assert score_pair(row, 0, cfg, u=1.0) == pytest.approx(0.5, abs=1e-15)
    # k_reg = 3 disables the penalty entirely on K = 3.
    cfg3 = ScoreConfig(RAPS, lam=0.1, k_reg=3)
    assert score_pair(row, 2, cfg3, u=1.0) == pytest.approx(1.0, abs=1e-15)


def test_tied_rows_share_rank_scores():
    row = [0.25, 0.25, 0.25, 0.25]
    cfg = ScoreConfig(APS)
    # All ranks are 4 under the tie rule, so each candidate sees full mass.
    for y in range(4):
        assert score_pair(row, y, cfg, u=1.0) == pytest.approx(1.0, abs=1e-15)


# -- oracle agreement ----------------------------------------------------------------


def test_score_all_matches_oracle(rng):
    pm = random_matrix(rng, 25, 6)
    cfg = ScoreConfig(APS, randomize=True, seed=11)
    u = row_uniforms(cfg, pm.n)
    got = score_all(pm, cfg)
    for i in range(pm.n):
        for y in range(6):
            expect = oracle_aps(pm.values[i], y, u[i])
            assert got[i, y] == pytest.approx(expect, abs=1e-12)


def test_raps_matches_oracle(rng):
    pm = random_matrix(rng, 25, 6)
    cfg = ScoreConfig(RAPS, lam=0.07, k_reg=2, randomize=True, seed=3)
    u = row_uniforms(cfg, pm.n)
    got = score_all(pm, cfg)
    for i in range(pm.n):
        for y in range(6):
            expect = oracle_raps(pm.values[i], y, u[i], 0.07, 2)
            assert got[i, y] == pytest.approx(expect, abs=1e-12)


def test_score_pair_equals_score_all_exactly(rng):
    pm = random_matrix(rng, 15, 5)
    cfg = ScoreConfig(APS, randomize=True, seed=19)
    u = row_uniforms(cfg, pm.n)
    table = score_all(pm, cfg)
    for i in range(pm.n):
        for y in range(5):
            assert score_pair(pm.values[i], y, cfg, u=float(u[i])) == table[i, y]


# -- contract identities ----------------------------------------------------------------


def test_true_label_scores_are_exact_gather(rng):
    pm = random_matrix(rng, 40, 5)
    lab = rng.integers(0, 5, size=40)
    cfg = ScoreConfig(APS, randomize=True, seed=5)
    table = score_all(pm, cfg)
    got = score_true_labels(pm, lab, cfg)
    expect = table[np.arange(40), lab]
    assert np.array_equal(got, expect)


def test_raps_zero_lambda_equals_aps_exactly(rng):
    pm = random_matrix(rng, 50, 7)
    aps = score_all(pm, ScoreConfig(APS, seed=2))
    raps = score_all(pm, ScoreConfig(RAPS, lam=0.0, k_reg=3, seed=2))
    assert np.array_equal(aps, raps)


def test_aps_within_unit_interval(rng):
    for trial in range(5):
        pm = random_matrix(rng, 60, 5, concentration=0.4)
        v = score_all(pm, ScoreConfig(APS, seed=trial))
        assert np.all(v >= 0.0)
        assert np.all(v <= 1.0)


def test_derandomized_aps_is_cumulative_mass(rng):
    pm = random_matrix(rng, 30, 6)
    v = score_all(pm, ScoreConfig(APS, randomize=False))
    from conformal_sets import label_ranks

    ranks = label_ranks(pm)
    for i in range(pm.n):
        desc = np.sort(pm.values[i])[::-1]
        for y in range(6):
            expect = np.cumsum(desc)[ranks[i, y] - 1]
            assert v[i, y] == pytest.approx(float(expect), abs=1e-15)


def test_same_seed_same_scores(rng):
    pm = random_matrix(rng, 20, 4)
    a = score_all(pm, ScoreConfig(APS, seed=77))
    b = score_all(pm, ScoreConfig(APS, seed=77))
    c = score_all(pm, ScoreConfig(APS, seed=78))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_one_uniform_per_row_shared_across_labels(rng):
    # Recover u from the rank-1 candidate and verify every other candidate
    # of the same row used the same draw.
    pm = random_matrix(rng, 10, 4)
    cfg = ScoreConfig(APS, randomize=True, seed=31)
    u = row_uniforms(cfg, pm.n)
    v = score_all(pm, cfg)
    for i in range(pm.n):
        for y in range(4):
            assert v[i, y] == pytest.approx(
                oracle_aps(pm.values[i], y, u[i]), abs=1e-12
            )


def test_hps_ignores_randomization(rng):
    pm = random_matrix(rng, 10, 3)
    a = score_all(pm, ScoreConfig(HPS, randomize=True, seed=1))
    b = score_all(pm, ScoreConfig(HPS, randomize=False, seed=2))
    assert np.array_equal(a, b)
    assert np.array_equal(a, 1.0 - pm.values)


# -- config validation ----------------------------------------------------------------


def test_bad_kind_rejected():
    with pytest.raises(ConfigError, match="unknown score kind"):
        ScoreConfig("softmax").validated()


def test_bad_raps_params_rejected():
    with pytest.raises(ConfigError, match="lam"):
        ScoreConfig(RAPS, lam=-0.5).validated()
    with pytest.raises(ConfigError, match="k_reg"):
        ScoreConfig(RAPS, k_reg=0).validated()
    with pytest.raises(ConfigError, match="exceeds"):
        ScoreConfig(RAPS, k_reg=10).validated(num_classes=5)


# -- hypothesis properties ----------------------------------------------------------------


@given(st.integers(0, 2**32 - 1), st.integers(2, 9),
       st.floats(0.0, 1.0), st.sampled_from([APS, RAPS]))
@settings(max_examples=80, deadline=None)
def test_score_monotone_in_rank_along_sorted_row(seed, k, u, kind):
    # Walking candidates from best to worst rank never decreases the score.
    rng = np.random.default_rng(seed)
    pm = random_matrix(rng, 1, k)
    cfg = ScoreConfig(kind, lam=0.05, k_reg=1)
    row = pm.values[0]
    order = np.argsort(-row, kind="stable")
    scores = [score_pair(row, int(y), cfg, u=u) for y in order]
    assert all(b >= a - 1e-12 for a, b in zip(scores, scores[1:]))


@given(st.integers(0, 2**32 - 1), st.integers(2, 8), st.integers(1, 40))
@settings(max_examples=60, deadline=None)
def test_raps_dominates_aps(seed, k, n):
    rng = np.random.default_rng(seed)
    pm = random_matrix(rng, n, k)
    aps = score_all(pm, ScoreConfig(APS, seed=seed))
    raps = score_all(pm, ScoreConfig(RAPS, lam=0.2, k_reg=1, seed=seed))
    assert np.all(raps >= aps - 1e-15)
