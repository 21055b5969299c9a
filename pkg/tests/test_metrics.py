import math
from itertools import product

import numpy as np
import pytest
from scipy.integrate import quad

from flowgauge import (
    Dataset,
    KeyVariant,
    UsageError,
    accuracy,
    cluster_duplicates,
    gap,
    max_achievable_accuracy,
    mean_std,
    minimal_fpr,
    spearman,
    weighted_f1,
)

from conftest import make_flow


def micro_dataset(key_labels):
    """Flows whose sequence key is the integer in each (key, label) pair."""
    return Dataset.from_flows(
        "micro",
        [
            make_flow(f"f{i}", label, sizes=[key + 1], dirs=[1], ipts=[0])
            for i, (key, label) in enumerate(key_labels)
        ],
    )


def test_accuracy_examples():
    assert accuracy(["a", "b"], ["a", "b"]) == 1.0
    assert accuracy(["a", "b"], ["b", "a"]) == 0.0
    assert accuracy(["a", "a", "b", "b"], ["a", "a", "b", "c"]) == 0.75
    with pytest.raises(UsageError):
        accuracy(["a"], ["a", "b"])
    with pytest.raises(UsageError):
        accuracy([], [])


def test_weighted_f1_hand_computed():
    # confusion: A -> tp 1, fn 1; B -> tp 2, fp 1
    result = weighted_f1(["A", "B", "B", "B"], ["A", "A", "B", "B"])
    assert math.isclose(result.per_class["A"].f1, 2 / 3, abs_tol=1e-15)
    assert math.isclose(result.per_class["B"].f1, 0.8, abs_tol=1e-15)
    assert math.isclose(result.weighted_f1, 0.5 * (2 / 3) + 0.5 * 0.8, abs_tol=1e-15)
    assert result.accuracy == 0.75


def test_weighted_f1_perfect_predictions():
    result = weighted_f1(["x", "y", "x"], ["x", "y", "x"])
    assert result.weighted_f1 == 1.0
    assert result.accuracy == 1.0


def test_weighted_f1_single_class():
    assert weighted_f1(["a", "a"], ["a", "a"]).weighted_f1 == 1.0


def test_weighted_f1_pred_only_class_has_zero_support():
    result = weighted_f1(["ghost", "a"], ["a", "a"])
    assert result.per_class["ghost"].support == 0
    # zero-support class contributes no weight
    assert result.weighted_f1 == result.per_class["a"].f1


def test_max_acc_spec_example():
    # 6 unique singletons plus one mixed cluster {A, A, B, C}
    ds = micro_dataset(
        [(i, "A") for i in range(1, 7)]
        + [(0, "A"), (0, "A"), (0, "B"), (0, "C")]
    )
    report = cluster_duplicates(ds, KeyVariant.SIZES_DIRS)
    assert max_achievable_accuracy(report) == 0.80


def test_max_acc_is_one_without_mixed_clusters():
    ds = micro_dataset([(0, "A"), (0, "A"), (1, "B")])
    report = cluster_duplicates(ds, KeyVariant.SIZES_DIRS)
    assert max_achievable_accuracy(report) == 1.0


def best_key_classifier_accuracy(key_labels):
    """Enumerate every deterministic key -> label assignment."""
    keys = sorted({k for k, _ in key_labels})
    labels = sorted({l for _, l in key_labels})
    best = 0
    for assignment in product(labels, repeat=len(keys)):
        rule = dict(zip(keys, assignment))
        best = max(best, sum(1 for k, l in key_labels if rule[k] == l))
    return best / len(key_labels)


def test_max_acc_equals_enumerated_best_classifier():
    rng = np.random.default_rng(17)
    for _ in range(50):
        n = int(rng.integers(1, 13))
        key_labels = [
            (int(rng.integers(0, 4)), f"L{int(rng.integers(0, 3))}") for _ in range(n)
        ]
        ds = micro_dataset(key_labels)
        report = cluster_duplicates(ds, KeyVariant.SIZES_DIRS)
        assert max_achievable_accuracy(report) == best_key_classifier_accuracy(
            key_labels
        )


def test_minimal_fpr_spec_example():
    key_labels = [(0, "benign")] * 5 + [(0, "malware")] + [
        (i, "benign") for i in range(1, 11)
    ]
    ds = micro_dataset(key_labels)
    report = cluster_duplicates(ds, KeyVariant.SIZES_DIRS)
    assert minimal_fpr(report, {"benign"}) == pytest.approx(5 / 15)


def test_minimal_fpr_zero_without_cross_contamination():
    ds = micro_dataset([(0, "benign"), (0, "benign"), (1, "malware"), (1, "malware")])
    report = cluster_duplicates(ds, KeyVariant.SIZES_DIRS)
    assert minimal_fpr(report, {"benign"}) == 0.0


def test_minimal_fpr_requires_benign_samples():
    ds = micro_dataset([(0, "malware"), (0, "malware")])
    report = cluster_duplicates(ds, KeyVariant.SIZES_DIRS)
    with pytest.raises(UsageError):
        minimal_fpr(report, {"benign"})


def test_minimal_fpr_matches_bruteforce_scan():
    rng = np.random.default_rng(18)
    for _ in range(40):
        n = int(rng.integers(2, 20))
        key_labels = [
            (int(rng.integers(0, 5)), "benign" if rng.random() < 0.6 else "malware")
            for _ in range(n)
        ]
        if not any(l == "benign" for _, l in key_labels):
            key_labels[0] = (key_labels[0][0], "benign")
        ds = micro_dataset(key_labels)
        report = cluster_duplicates(ds, KeyVariant.SIZES_DIRS)

        by_key = {}
        for k, l in key_labels:
            by_key.setdefault(k, []).append(l)
        fp = sum(
            sum(1 for l in labels if l == "benign")
            for labels in by_key.values()
            if any(l == "malware" for l in labels)
        )
        total_benign = sum(1 for _, l in key_labels if l == "benign")
        assert minimal_fpr(report, {"benign"}) == fp / total_benign


def test_spearman_monotone_extremes():
    x = [1.0, 2.0, 5.0, 9.0]
    assert spearman(x, [3.0, 8.0, 9.0, 20.0]).rho == 1.0
    assert spearman(x, [20.0, 9.0, 8.0, 3.0]).rho == -1.0
    assert spearman(x, [3.0, 8.0, 9.0, 20.0]).p_value == 0.0


def test_spearman_tied_ranks_hand_computed():
    # x ranks: [1.5, 1.5, 3, 4]; y ranks: [1, 2, 3.5, 3.5]
    x = [10.0, 10.0, 20.0, 30.0]
    y = [1.0, 2.0, 7.0, 7.0]
    result = spearman(x, y)
    rx = [1.5, 1.5, 3.0, 4.0]
    ry = [1.0, 2.0, 3.5, 3.5]
    mx, my = sum(rx) / 4, sum(ry) / 4
    num = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    den = math.sqrt(
        sum((a - mx) ** 2 for a in rx) * sum((b - my) ** 2 for b in ry)
    )
    assert result.rho == pytest.approx(num / den, abs=1e-9)
    # p-value checked against direct numerical integration of the t density
    df = 2
    t_stat = abs(result.rho) * math.sqrt(df / (1 - result.rho**2))

    def t_pdf(u):
        c = math.gamma((df + 1) / 2) / (math.sqrt(df * math.pi) * math.gamma(df / 2))
        return c * (1 + u * u / df) ** (-(df + 1) / 2)

    tail, _ = quad(t_pdf, t_stat, np.inf)
    assert result.p_value == pytest.approx(2 * tail, rel=1e-9)


def test_spearman_invariant_under_monotone_transform():
    rng = np.random.default_rng(19)
    x = list(rng.normal(size=15))
    y = list(rng.normal(size=15))
    base = spearman(x, y)
    stretched = spearman([math.exp(v) for v in x], [v**3 for v in y])
    assert stretched.rho == pytest.approx(base.rho, abs=1e-12)
    assert stretched.p_value == pytest.approx(base.p_value, rel=1e-9)


def test_spearman_input_validation():
    with pytest.raises(UsageError):
        spearman([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(UsageError):
        spearman([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


def test_gap_paper_rows():
    assert gap(92.34, 99.41) == pytest.approx(7.07)
    assert gap(98.66, 98.79) == pytest.approx(0.13)
    assert gap(55.5, 55.5) == 0.0
    with pytest.raises(UsageError):
        gap(-1.0, 50.0)
    with pytest.raises(UsageError):
        gap(50.0, 101.0)


def test_mean_std():
    mean, std = mean_std([1.0, 2.0, 3.0])
    assert mean == 2.0
    assert std == pytest.approx(1.0)
    mean, std = mean_std([5.0])
    assert mean == 5.0 and std is None
    with pytest.raises(UsageError):
        mean_std([])
