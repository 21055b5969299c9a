from collections import Counter, defaultdict

import numpy as np
import pytest

from flowgauge import (
    CAPTURE_CAP,
    Dataset,
    KeyVariant,
    UsageError,
    cluster_duplicates,
    ecdf_by_length,
    heatmap_by_length,
    redundancy_fraction,
)
from flowgauge.redundancy import ecdf_csv, heatmap_csv

from conftest import make_flow, random_dataset


def covered(flow, variant):
    if variant is KeyVariant.SIZES_DIRS:
        return (flow.sizes, flow.dirs)
    return (flow.sizes, flow.dirs, flow.ipts)


def oracle_clusters(ds, variant):
    """Quadratic all-pairs grouping, independent of canonical_key."""
    groups = []
    taken = [False] * len(ds)
    for i, f in enumerate(ds.flows):
        if taken[i]:
            continue
        members = [i]
        taken[i] = True
        for j in range(i + 1, len(ds)):
            if not taken[j] and covered(ds.flows[j], variant) == covered(f, variant):
                members.append(j)
                taken[j] = True
        groups.append(members)
    return groups


def oracle_counts(ds, variant):
    n_unique = n_same = n_mixed = 0
    for members in oracle_clusters(ds, variant):
        if len(members) == 1:
            n_unique += 1
        elif len({ds.flows[i].label for i in members}) == 1:
            n_same += len(members)
        else:
            n_mixed += len(members)
    return n_unique, n_same, n_mixed


def two_pairs_dataset():
    return Dataset.from_flows(
        "pairs",
        [
            make_flow("a1", "A", sizes=[1, 2]),
            make_flow("a2", "A", sizes=[1, 2]),
            make_flow("b1", "A", sizes=[3, 4]),
            make_flow("b2", "B", sizes=[3, 4]),
        ],
    )


def test_spec_example_two_pairs():
    report = cluster_duplicates(two_pairs_dataset(), KeyVariant.SIZES_DIRS)
    assert (report.n_unique, report.n_same_class_dup, report.n_mixed_dup) == (0, 2, 2)
    assert redundancy_fraction(report) == 0.0
    assert len(report.clusters) == 2
    mixed = [c for c in report.clusters if c.is_mixed]
    assert len(mixed) == 1
    assert mixed[0].label_counts == {"A": 1, "B": 1}


def test_all_distinct_dataset():
    ds = Dataset.from_flows(
        "distinct", [make_flow(f"f{i}", "A", sizes=[i + 1]) for i in range(8)]
    )
    report = cluster_duplicates(ds, KeyVariant.SIZES_DIRS)
    assert report.n_unique == report.n_total == 8
    assert report.clusters == ()
    assert redundancy_fraction(report) == 1.0


def test_empty_dataset_is_usage_error():
    with pytest.raises(UsageError):
        cluster_duplicates(Dataset.from_flows("e", []), KeyVariant.SIZES_DIRS)


@pytest.mark.parametrize("variant", list(KeyVariant))
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_matches_quadratic_oracle_on_planted_corpus(variant, seed):
    ds = random_dataset(np.random.default_rng(seed), 500)
    report = cluster_duplicates(ds, variant)
    assert (
        report.n_unique,
        report.n_same_class_dup,
        report.n_mixed_dup,
    ) == oracle_counts(ds, variant)
    assert report.n_unique + report.n_same_class_dup + report.n_mixed_dup == len(ds)
    # cluster membership matches the oracle partition exactly
    oracle_sets = {
        frozenset(ds.flows[i].id for i in members)
        for members in oracle_clusters(ds, variant)
        if len(members) > 1
    }
    assert {frozenset(c.member_ids) for c in report.clusters} == oracle_sets


def test_fraction_matches_oracle():
    ds = random_dataset(np.random.default_rng(9), 300)
    report = cluster_duplicates(ds, KeyVariant.SIZES_DIRS)
    n_unique, _, _ = oracle_counts(ds, KeyVariant.SIZES_DIRS)
    assert redundancy_fraction(report) == n_unique / 300


def test_ipts_variant_never_merges_and_never_adds_duplicates():
    rng = np.random.default_rng(10)
    for seed in range(5):
        ds = random_dataset(np.random.default_rng(seed), 200)
        sd = cluster_duplicates(ds, KeyVariant.SIZES_DIRS)
        full = cluster_duplicates(ds, KeyVariant.SIZES_DIRS_IPTS)
        assert full.n_unique >= sd.n_unique
        assert (
            full.n_same_class_dup + full.n_mixed_dup
            <= sd.n_same_class_dup + sd.n_mixed_dup
        )
        # refinement: each full-variant cluster sits inside one sizes/dirs cluster
        sd_cluster_of = {}
        for c in sd.clusters:
            for fid in c.member_ids:
                sd_cluster_of[fid] = c.key
        for c in full.clusters:
            parents = {sd_cluster_of.get(fid) for fid in c.member_ids}
            assert len(parents) == 1


def all_same_length_dataset(length=5, n=6):
    return Dataset.from_flows(
        "fixed-len",
        [
            make_flow(f"f{i}", "A" if i % 2 else "B", sizes=[9] * length)
            for i in range(n)
        ],
    )


def test_ecdf_single_length_steps_at_that_length():
    ds = all_same_length_dataset(length=5)
    report = cluster_duplicates(ds, KeyVariant.SIZES_DIRS)
    curves = ecdf_by_length(report, ds)
    for curve in (curves.all_samples, curves.mixed_dups):
        assert curve  # population non-empty here: all six flows share one key
        assert [frac for x, frac in curve if x < 5] == [0.0] * 4
        assert all(frac == 1.0 for x, frac in curve if x >= 5)
    assert curves.same_class_dups == ()  # the only cluster is mixed


def test_ecdf_empty_population_is_empty_curve():
    ds = Dataset.from_flows(
        "uniq", [make_flow(f"f{i}", "A", sizes=[i + 1]) for i in range(4)]
    )
    report = cluster_duplicates(ds, KeyVariant.SIZES_DIRS)
    curves = ecdf_by_length(report, ds)
    assert curves.same_class_dups == ()
    assert curves.mixed_dups == ()
    assert curves.all_samples[-1] == (CAPTURE_CAP, 1.0)


def test_ecdf_monotone_and_terminal_one():
    ds = random_dataset(np.random.default_rng(21), 400)
    report = cluster_duplicates(ds, KeyVariant.SIZES_DIRS)
    curves = ecdf_by_length(report, ds)
    for curve in (curves.all_samples, curves.same_class_dups, curves.mixed_dups):
        if not curve:
            continue
        fracs = [f for _, f in curve]
        assert all(b >= a for a, b in zip(fracs, fracs[1:]))
        assert fracs[-1] == 1.0


def test_ecdf_matches_bruteforce_recount():
    ds = random_dataset(np.random.default_rng(22), 350)
    report = cluster_duplicates(ds, KeyVariant.SIZES_DIRS)
    curves = ecdf_by_length(report, ds)
    mixed_lengths = []
    for members in oracle_clusters(ds, KeyVariant.SIZES_DIRS):
        labels = {ds.flows[i].label for i in members}
        if len(members) > 1 and len(labels) > 1:
            mixed_lengths += [ds.flows[i].seq_len for i in members]
    assert curves.mixed_dups  # generator plants mixed clusters at this size
    for x, frac in curves.mixed_dups:
        expected = sum(1 for l in mixed_lengths if l <= x) / len(mixed_lengths)
        assert frac == expected


def test_heatmap_single_length_dataset():
    ds = all_same_length_dataset(length=7, n=4)
    report = cluster_duplicates(ds, KeyVariant.SIZES_DIRS)
    rows = heatmap_by_length(report, ds)
    assert len(rows) == 1
    assert rows[0].seq_len == 7
    assert rows[0].sample_fraction == 1.0


def test_heatmap_all_unique_stratum_has_zero_ratios():
    ds = Dataset.from_flows(
        "uniq", [make_flow(f"f{i}", "A", sizes=[i + 1, i + 2]) for i in range(5)]
    )
    report = cluster_duplicates(ds, KeyVariant.SIZES_DIRS)
    rows = heatmap_by_length(report, ds)
    assert len(rows) == 1 and rows[0].seq_len == 2
    assert rows[0].same_class_ratio == 0.0
    assert rows[0].mixed_ratio == 0.0


def test_heatmap_matches_stratified_oracle():
    ds = random_dataset(np.random.default_rng(23), 300)
    report = cluster_duplicates(ds, KeyVariant.SIZES_DIRS)
    per_len = defaultdict(lambda: [0, 0, 0])  # total, same, mixed
    for f in ds.flows:
        per_len[f.seq_len][0] += 1
    for members in oracle_clusters(ds, KeyVariant.SIZES_DIRS):
        if len(members) == 1:
            continue
        labels = {ds.flows[i].label for i in members}
        slot = 2 if len(labels) > 1 else 1
        for i in members:
            per_len[ds.flows[i].seq_len][slot] += 1
    rows = {r.seq_len: r for r in heatmap_by_length(report, ds)}
    assert set(rows) == set(per_len)
    for length, (total, same, mixed) in per_len.items():
        row = rows[length]
        assert row.sample_fraction == total / len(ds)
        assert row.same_class_ratio == same / total
        assert row.mixed_ratio == mixed / total


def test_csv_exports_have_expected_shape():
    ds = two_pairs_dataset()
    report = cluster_duplicates(ds, KeyVariant.SIZES_DIRS)
    curves = ecdf_by_length(report, ds)
    text = ecdf_csv(curves.mixed_dups)
    assert text.splitlines()[0] == "seq_len,cum_fraction"
    assert len(text.splitlines()) == 1 + CAPTURE_CAP
    hm = heatmap_csv(heatmap_by_length(report, ds))
    assert hm.splitlines()[0] == "seq_len,sample_fraction,same_class_ratio,mixed_ratio"
    assert len(hm.splitlines()) == 2


def test_report_json_dict():
    report = cluster_duplicates(two_pairs_dataset(), KeyVariant.SIZES_DIRS)
    obj = report.to_json_dict()
    assert obj["n_total"] == 4
    assert obj["label_counts"] == {"A": 3, "B": 1}
    assert obj["n_clusters"] == 2
