"""Hand-checked three-class dataset: every number verified on paper.

The calibration design lives in fixtures/generate.py.  Twenty rows per
class and alpha = 0.1 put the class-wise quantile at the 19th smallest
score for "level" 0.9 and the 20th for 0.95; the scores were chosen so all
those order statistics are short literals.  The golden files lock the byte
encoding; the assertions here restate the arithmetic independently.
"""

import math
from pathlib import Path

import numpy as np
import pytest

from conformal_sets import (
    ScoreConfig,
    calibrate_ccp,
    calibrate_marginal,
    calibrate_rc3p,
    estimate_topk_errors,
    evaluate,
    predict,
    read_labels,
    read_probability_matrix,
    sigma_condition,
    theorem2_check,
)
from conformal_sets import io as cio
from conformal_sets.cli import main

FIX = Path(__file__).parent / "fixtures"
ALPHA = 0.1
ALPHA_EFF = 1.0 - 0.9  # alpha after the level round-trip, one ulp off 0.1
CFG = ScoreConfig("aps", randomize=False, seed=0)


@pytest.fixture(scope="module")
def data():
    cal = read_probability_matrix(FIX / "cal_probs.csv")
    cal_labels = read_labels(FIX / "cal_labels.txt")
    test = read_probability_matrix(FIX / "test_probs.csv")
    test_labels = read_labels(FIX / "test_labels.txt")
    return cal, cal_labels, test, test_labels


def test_dataset_shape(data):
    cal, cal_labels, test, test_labels = data
    assert cal.n == 60 and cal.num_classes == 3
    assert np.bincount(cal_labels).tolist() == [20, 20, 20]
    assert test.n == 4
    assert test_labels.tolist() == [0, 1, 2, 0]


def test_topk_error_table(data):
    cal, cal_labels, _, _ = data
    table = estimate_topk_errors(cal, cal_labels)
    assert table.eps[0].tolist() == [0.0, 0.0, 0.0]
    assert table.eps[1].tolist() == [0.15, 0.05, 0.0]
    assert table.eps[2].tolist() == [0.5, 0.2, 0.0]


def test_ccp_hand_values(data):
    cal, cal_labels, _, _ = data
    ccp = calibrate_ccp(cal, cal_labels, CFG, ALPHA)
    # 19th smallest of 0.50, 0.52, ..., 0.88 is the bare literal
    assert ccp.classes[0].q_hat == 0.86
    # 19th smallest for class 1 is the rank-2 row 0.55 + 0.40
    assert ccp.classes[1].q_hat == 0.55 + 0.40
    assert ccp.classes[1].q_hat == pytest.approx(0.95, abs=1e-12)
    # class 2's tail is four full-mass scores, so the cut is exactly 1
    assert ccp.classes[2].q_hat == 1.0


def test_marginal_hand_value(data):
    cal, cal_labels, _, _ = data
    marginal = calibrate_marginal(cal, cal_labels, CFG, ALPHA)
    ccp = calibrate_ccp(cal, cal_labels, CFG, ALPHA)
    # ceil(0.9 * 61) = 55; counting the pooled scores lands on the same
    # 0.55 + 0.40 row that cuts class 1
    assert marginal.marginal.n == 60
    assert marginal.marginal.q_hat == ccp.classes[1].q_hat


def test_rc3p_hand_values(data):
    cal, cal_labels, _, _ = data
    rc3p = calibrate_rc3p(cal, cal_labels, CFG, ALPHA)
    by = {c.y: c for c in rc3p.classes}
    assert by[0].k_hat == 1 and by[0].eps_at_khat == 0.0
    assert by[0].alpha_hat == ALPHA_EFF
    assert by[0].q_hat == 0.86  # same 19th order statistic as the ccp cut
    assert by[1].k_hat == 2 and by[1].eps_at_khat == 0.05
    assert by[1].alpha_hat == ALPHA_EFF - 0.05
    assert by[1].q_hat == 1.0  # level 0.95 needs the 20th smallest score
    assert by[2].k_hat == 3 and by[2].eps_at_khat == 0.0
    assert by[2].alpha_hat == ALPHA_EFF
    assert by[2].q_hat == 1.0


def test_prediction_sets_by_hand(data):
    cal, cal_labels, test, _ = data
    ccp = calibrate_ccp(cal, cal_labels, CFG, ALPHA)
    rc3p = calibrate_rc3p(cal, cal_labels, CFG, ALPHA)
    # row 0 (0.90, 0.07, 0.03): scores 0.90 / 0.97 / 1.0
    # row 1 (0.20, 0.75, 0.05): scores 0.95 / 0.75 / 1.0
    # row 2 (0.30, 0.30, 0.40): tied ranks 3 / 3 / 1, scores 1 / 1 / 0.40
    # row 3 (0.86, 0.10, 0.04): 0.86 sits exactly on class 0's threshold
    assert [s.members for s in predict(ccp, test).sets] == [
        (2,), (1, 2), (2,), (0, 2)]
    # the rank filter (1, 2, 3) drops row 1's class 0, but the laxer class-1
    # threshold of 1.0 admits class 1 on rows 0 and 3
    assert [s.members for s in predict(rc3p, test).sets] == [
        (1, 2), (1, 2), (2,), (0, 1, 2)]


def test_metrics_by_hand(data):
    cal, cal_labels, test, test_labels = data
    for method, apss, sizes in [
        (calibrate_ccp, 1.5, [1.5, 2.0, 1.0]),
        (calibrate_rc3p, 5.5 / 3, [2.5, 2.0, 1.0]),
    ]:
        model = method(cal, cal_labels, CFG, ALPHA)
        report = evaluate(predict(model, test), test_labels, ALPHA)
        assert report.ucr == 1 / 3
        assert report.apss == apss
        assert report.ucg == 0.4
        assert [c.coverage for c in report.per_class] == [0.5, 1.0, 1.0]
        assert [c.mean_size for c in report.per_class] == sizes
        assert [c.under_covered for c in report.per_class] == [True, False, False]


def test_diagnostics_on_calibration_data(data):
    cal, cal_labels, _, _ = data
    rc3p = calibrate_rc3p(cal, cal_labels, CFG, ALPHA)
    ccp = calibrate_ccp(cal, cal_labels, CFG, ALPHA)

    records = {r.y: r for r in sigma_condition(rc3p, ccp, cal, cal_labels)}
    # class 0, counted over all 60 rows: rank-1 hits under the 0.86 cut are
    # the 19 low class-0 rows plus the 13 off-label rows that put class 0
    # first (three 0.60/0.55/0.50 rows of class 1, all ten rank-2 and
    # rank-3 rows of class 2); dropping the rank filter adds the 8 class-1
    # and 7 class-2 rows whose top-two mass still fits under 0.86
    assert records[0].numerator == 32
    assert records[0].denominator == 47
    assert records[0].sigma == 32 / 47
    # class 1: the rank cap of 2 admits 43 rows (all but the 0.50/0.10/0.40
    # outlier and class 2's 16 tail rows) against threshold 1.0, while the
    # unfiltered side uses the tighter 0.95 cut and admits only 41
    assert records[1].numerator == 43
    assert records[1].denominator == 41
    assert records[1].sigma == 43 / 41
    # class 2: a rank cap of 3 filters nothing at K=3 and both cuts are 1.0
    assert records[2].sigma == 1.0

    checks = {t.y: t for t in theorem2_check(rc3p, ccp, cal, cal_labels)}
    p = 20 / 60
    for y in range(3):
        assert checks[y].defined
        assert checks[y].p_y == p
        assert checks[y].b == 1.0  # every half-rank stat sits under its cut
    assert checks[0].d == 13 / 40 and checks[0].satisfied
    assert checks[1].d == 24 / 40 and checks[1].satisfied
    assert checks[2].d == 1.0 and not checks[2].satisfied
    assert checks[0].rhs == p / (1.0 - p) * ALPHA_EFF
    assert checks[1].rhs == p / (1.0 - p) * (ALPHA_EFF - 0.05)
    # the audit reads a half-rank probability as a stand-in for the score,
    # so it can come back satisfied while the count ratio still tops one;
    # class 1 pins exactly that case
    assert checks[1].satisfied and records[1].sigma == 43 / 41 > 1.0


def test_golden_models_byte_stable(data, tmp_path):
    cal, cal_labels, _, _ = data
    for name, fit in [
        ("model_marginal.json", calibrate_marginal),
        ("model_ccp.json", calibrate_ccp),
        ("model_rc3p.json", calibrate_rc3p),
    ]:
        model = fit(cal, cal_labels, CFG, ALPHA)
        out = tmp_path / name
        cio.write_model(out, model)
        assert out.read_bytes() == (FIX / name).read_bytes(), name


def test_golden_sets_and_metrics_byte_stable(data, tmp_path):
    cal, cal_labels, test, test_labels = data
    for name, fit in [("ccp", calibrate_ccp), ("rc3p", calibrate_rc3p)]:
        model = fit(cal, cal_labels, CFG, ALPHA)
        batch = predict(model, test)
        sets_out = tmp_path / f"sets_{name}.csv"
        cio.write_sets(sets_out, batch)
        assert sets_out.read_bytes() == (FIX / f"sets_{name}.csv").read_bytes()
        report = evaluate(batch, test_labels, ALPHA)
        metrics_out = tmp_path / f"metrics_{name}.json"
        cio.write_metrics_json(metrics_out, report)
        assert metrics_out.read_bytes() == (FIX / f"metrics_{name}.json").read_bytes()


def test_cli_reproduces_goldens(tmp_path):
    model = tmp_path / "model.json"
    sets = tmp_path / "sets.csv"
    metrics = tmp_path / "metrics.json"
    assert main(["calibrate", "--probs", str(FIX / "cal_probs.csv"),
                 "--labels", str(FIX / "cal_labels.txt"),
                 "--alpha", "0.1", "--method", "rc3p", "--no-randomize",
                 "--out", str(model)]) == 0
    assert main(["predict", "--model", str(model),
                 "--probs", str(FIX / "test_probs.csv"),
                 "--out", str(sets)]) == 0
    assert main(["evaluate", "--sets", str(sets),
                 "--labels", str(FIX / "test_labels.txt"),
                 "--alpha", "0.1", "--classes", "3",
                 "--out", str(metrics)]) == 0
    assert model.read_bytes() == (FIX / "model_rc3p.json").read_bytes()
    assert sets.read_bytes() == (FIX / "sets_rc3p.csv").read_bytes()
    assert metrics.read_bytes() == (FIX / "metrics_rc3p.json").read_bytes()


def test_fixture_matrix_rows_exactly_normalized(data):
    cal, _, test, _ = data
    assert np.all(cal.values.sum(axis=1) == 1.0)
    assert np.all(test.values.sum(axis=1) == 1.0)
