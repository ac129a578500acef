"""Dataset layer: CSV round trips, splitting, scaling, synthesis."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from botuq.datasets import (
    IOT23_FEATURES,
    NBAIOT_FEATURES,
    Dataset,
    NormStats,
    SplitSpec,
    SynthSpec,
    ceil_count,
    fit_norm_stats,
    load_csv,
    normalize,
    save_csv,
    split,
    synth_generate,
)
from botuq.errors import (
    DatasetTooSmall,
    FeatureCountMismatch,
    MissingLabelColumn,
    NonBinaryLabel,
    NonFiniteFeature,
    StatsLengthMismatch,
    UnparseableValue,
)

from .oracles import ceil_count_oracle


# -- ceil_count ---------------------------------------------------------------


def test_ceil_count_snaps_float_fuzz():
    # 0.1 * 2000 = 200.00000000000003 in binary; the count must still be 200
    assert ceil_count(0.1, 2000) == 200
    assert ceil_count(0.3, 10) == 3
    assert ceil_count(0.0, 50) == 0
    assert ceil_count(1.0, 50) == 50


@given(num=st.integers(0, 100), den=st.integers(1, 100), n=st.integers(0, 10_000))
def test_ceil_count_agrees_with_rational_oracle(num, den, n):
    if num > den:
        num = den  # keep the fraction inside [0, 1]
    assert ceil_count(num / den, n) == ceil_count_oracle(num, den, n)


# -- Dataset construction ------------------------------------------------------


def test_dataset_arrays_are_read_only(handmade):
    with pytest.raises(ValueError):
        handmade.features[0, 0] = 9.9
    with pytest.raises(ValueError):
        handmade.labels[0] = 1


def test_dataset_rejects_bad_labels():
    with pytest.raises(NonBinaryLabel):
        Dataset("x", np.zeros((2, 1)), np.array([0, 2]), ("a",))


def test_dataset_rejects_nonfinite():
    with pytest.raises(NonFiniteFeature):
        Dataset("x", np.array([[np.nan]]), np.array([0]), ("a",))


def test_subset_preserves_order(handmade):
    sub = handmade.subset([2, 0])
    assert np.array_equal(sub.features, handmade.features[[2, 0]])
    assert tuple(sub.labels) == (0, 0)


def test_class_counts(handmade):
    assert handmade.class_counts() == (2, 2)


# -- CSV ------------------------------------------------------------------------


def test_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    d = Dataset(
        "rt",
        rng.normal(size=(17, 4)) * 1e6,  # large magnitudes stress repr
        rng.integers(0, 2, size=17),
        ("a", "b", "c", "d"),
    )
    path = tmp_path / "rt.csv"
    save_csv(d, path)
    back = load_csv(path)
    assert np.array_equal(back.features, d.features)
    assert np.array_equal(back.labels, d.labels)
    assert back.feature_names == d.feature_names


def test_load_rejects_missing_label_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b,c\n1,2,0\n")
    with pytest.raises(MissingLabelColumn):
        load_csv(p)


def test_load_rejects_wrong_schema(tmp_path):
    p = tmp_path / "narrow.csv"
    p.write_text("a,b,label\n1,2,0\n")
    with pytest.raises(FeatureCountMismatch) as e:
        load_csv(p, schema=NBAIOT_FEATURES)
    assert e.value.expected == NBAIOT_FEATURES and e.value.found == 2
    # and the other canonical width is also enforced
    with pytest.raises(FeatureCountMismatch):
        load_csv(p, schema=IOT23_FEATURES)


def test_load_rejects_text_feature(tmp_path):
    p = tmp_path / "txt.csv"
    p.write_text("a,label\nhello,0\n")
    with pytest.raises(UnparseableValue):
        load_csv(p)


def test_load_rejects_fractional_label(tmp_path):
    p = tmp_path / "frac.csv"
    p.write_text("a,label\n1.0,0.5\n")
    with pytest.raises(NonBinaryLabel):
        load_csv(p)


# -- split ----------------------------------------------------------------------


def test_split_is_a_partition():
    d = synth_generate(SynthSpec(n=101, features=3, seed=2))
    tr, te = split(d, SplitSpec(train_fraction=0.7, seed=9))
    assert tr.n_samples + te.n_samples == d.n_samples
    # every original row appears exactly once across the two sides
    combined = np.vstack([tr.features, te.features])
    assert combined.shape == d.features.shape
    order_d = np.lexsort(d.features.T)
    order_c = np.lexsort(combined.T)
    assert np.array_equal(d.features[order_d], combined[order_c])


@settings(deadline=None, max_examples=25)
@given(
    n=st.integers(10, 120),
    frac=st.floats(0.2, 0.8),
    seed=st.integers(0, 2**31),
)
def test_split_partition_property(n, frac, seed):
    d = synth_generate(SynthSpec(n=n, features=2, seed=seed % 1000))
    tr, te = split(d, SplitSpec(train_fraction=frac, seed=seed))
    assert tr.n_samples + te.n_samples == n
    assert tr.n_samples >= 1 and te.n_samples >= 1
    # stratification keeps per-class counts within one row of proportional
    for c in (0, 1):
        total = int((d.labels == c).sum())
        got = int((tr.labels == c).sum())
        assert abs(got - frac * total) <= 1.0


def test_split_deterministic():
    d = synth_generate(SynthSpec(n=40, features=2, seed=1))
    a = split(d, SplitSpec(seed=4))
    b = split(d, SplitSpec(seed=4))
    assert np.array_equal(a[0].features, b[0].features)
    c = split(d, SplitSpec(seed=5))
    assert not np.array_equal(a[0].features, c[0].features)


def test_split_too_small():
    d = Dataset("s", np.zeros((4, 1)), np.array([0, 1, 0, 1]), ("a",))
    with pytest.raises(DatasetTooSmall):
        split(d, SplitSpec())


# -- normalize -------------------------------------------------------------------


def test_normalize_range_and_reuse():
    d = synth_generate(SynthSpec(n=30, features=4, seed=3))
    scaled, stats = normalize(d)
    assert scaled.features.min() >= 0.0 and scaled.features.max() <= 1.0
    # reapplying the same stats is the identity on already-scaled data
    again, _ = normalize(scaled, NormStats(np.zeros(4), np.ones(4)))
    assert np.allclose(again.features, scaled.features)


def test_normalize_constant_feature_maps_to_zero():
    d = Dataset("c", np.array([[5.0, 1.0], [5.0, 3.0]]), np.array([0, 1]), ("k", "v"))
    scaled, _ = normalize(d)
    assert np.array_equal(scaled.features[:, 0], [0.0, 0.0])
    assert np.array_equal(scaled.features[:, 1], [0.0, 1.0])


def test_normalize_stats_width_checked():
    d = synth_generate(SynthSpec(n=12, features=3, seed=0))
    with pytest.raises(StatsLengthMismatch):
        normalize(d, NormStats(np.zeros(2), np.ones(2)))


def test_fit_norm_stats_matches_minmax(handmade):
    st_ = fit_norm_stats(handmade)
    assert np.array_equal(st_.mins, handmade.features.min(axis=0))
    assert np.array_equal(st_.maxs, handmade.features.max(axis=0))


# -- synthesis --------------------------------------------------------------------


def test_synth_balanced_and_deterministic():
    a = synth_generate(SynthSpec(n=101, features=5, seed=11))
    b = synth_generate(SynthSpec(n=101, features=5, seed=11))
    assert np.array_equal(a.features, b.features)
    n0, n1 = a.class_counts()
    assert n0 == 51 and n1 == 50


def test_synth_separation_moves_the_means():
    d = synth_generate(SynthSpec(n=400, features=6, class_separation=4.0, seed=2))
    mu0 = d.features[d.labels == 0].mean(axis=0)
    mu1 = d.features[d.labels == 1].mean(axis=0)
    gap = np.linalg.norm(mu1 - mu0)
    assert 3.5 < gap < 4.5  # means sit class_separation apart before noise


def test_synth_zero_separation_overlaps():
    d = synth_generate(SynthSpec(n=400, features=6, class_separation=0.0, seed=2))
    mu0 = d.features[d.labels == 0].mean(axis=0)
    mu1 = d.features[d.labels == 1].mean(axis=0)
    assert np.linalg.norm(mu1 - mu0) < 0.5
