import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from potsbench.core import SampleSet, mask_from_missing
from potsbench.pipeline import (
    DatasetRecipe,
    Standardizer,
    csv_recipe,
    ett_h1_recipe,
    fit_standardizer,
    frame_from_arrays,
    load_csv,
    prepare,
    split_by_period,
    standardize,
    window,
    write_csv,
)

from .conftest import sinusoid_frame


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_csv_one_missing_cell(tmp_path):
    p = _write(tmp_path, "date,a,b\n2020-01-01 00:00:00,1,2\n2020-01-01 01:00:00,,4\n2020-01-01 02:00:00,5,6\n")
    f = load_csv(p)
    assert len(f) == 3 and f.feature_names == ("a", "b")
    assert np.isnan(f.data).sum() == 1 and np.isnan(f.data[1, 0])


def test_load_csv_nan_tokens_and_epoch(tmp_path):
    p = _write(tmp_path, "t,a\n0,NaN\n3600,nan\n7200,1.5\n")
    f = load_csv(p)
    assert np.isnan(f.data[:2, 0]).all() and f.data[2, 0] == 1.5
    assert f.timestamps[1] - f.timestamps[0] == np.timedelta64(3600, "s")


def test_load_csv_header_only(tmp_path):
    with pytest.raises(ValueError, match="zero data rows"):
        load_csv(_write(tmp_path, "date,a\n"))


def test_load_csv_sorts(tmp_path):
    rows = ["2020-01-01 02:00:00,3", "2020-01-01 00:00:00,1", "2020-01-01 01:00:00,2"]
    a = load_csv(_write(tmp_path, "date,a\n" + "\n".join(rows) + "\n", "a.csv"))
    b = load_csv(_write(tmp_path, "date,a\n" + "\n".join(sorted(rows)) + "\n", "b.csv"))
    np.testing.assert_array_equal(a.data, b.data)
    np.testing.assert_array_equal(a.timestamps, b.timestamps)
    np.testing.assert_array_equal(a.data[:, 0], [1, 2, 3])


def test_load_csv_rejects_duplicates_and_bad_stamps(tmp_path):
    with pytest.raises(ValueError, match="duplicate"):
        load_csv(_write(tmp_path, "date,a\n2020-01-01,1\n2020-01-01,2\n"))
    with pytest.raises(ValueError, match="rows 1"):
        load_csv(_write(tmp_path, "date,a\n2020-01-01,1\nnot-a-date,2\n"))


def test_load_csv_label_column(tmp_path):
    p = _write(tmp_path, "date,a,y\n2020-01-01 00:00,1,0\n2020-01-01 01:00,2,1\n")
    rec = csv_recipe("x", str(p), 2, label="y")
    f = load_csv(p, rec)
    assert f.feature_names == ("a",)
    np.testing.assert_array_equal(f.labels, [0, 1])


def _ten_rows():
    return frame_from_arrays(np.arange(10.0)[:, None], start="2020-01-01T00:00:00")


def test_split_by_boundaries():
    f = _ten_rows()
    # t1..t10 are hours 0..9; cutting "after t6" means at hour 6
    rec = DatasetRecipe("x", "-", 2, boundaries=("2020-01-01T06:00:00", "2020-01-01T08:00:00"))
    tr, va, te = split_by_period(f, rec)
    assert (len(tr), len(va), len(te)) == (6, 2, 2)
    assert tr.timestamps[-1] < va.timestamps[0] and va.timestamps[-1] < te.timestamps[0]
    np.testing.assert_array_equal(np.concatenate([tr.data, va.data, te.data]), f.data)


def test_split_by_fractions():
    tr, va, te = split_by_period(_ten_rows(), csv_recipe("x", "-", 2, (0.6, 0.2, 0.2)))
    assert (len(tr), len(va), len(te)) == (6, 2, 2)


def test_split_rejects_out_of_range_and_empty():
    f = _ten_rows()
    with pytest.raises(ValueError, match="outside"):
        split_by_period(f, DatasetRecipe("x", "-", 2, boundaries=("2019-12-31T00:00:00", "2020-01-01T05:00:00")))
    with pytest.raises(ValueError, match="empty"):
        split_by_period(f, csv_recipe("x", "-", 2, (0.6, 0.4, 0.0)))


def test_recipe_validation():
    with pytest.raises(ValueError):
        DatasetRecipe("x", "-", 1, fractions=(0.6, 0.2, 0.2))
    with pytest.raises(ValueError):
        DatasetRecipe("x", "-", 4, boundaries=("2020-02-01", "2020-01-01"))
    with pytest.raises(ValueError):
        DatasetRecipe("x", "-", 4, fractions=(0.6, 0.3, 0.2))


@pytest.mark.parametrize("L,T,N", [(10, 5, 2), (12, 5, 2)])
def test_window_counts(L, T, N):
    f = frame_from_arrays(np.arange(L * 2.0).reshape(L, 2))
    s = window(f, T)
    assert s.shape == (N, T, 2)
    # no overlap: sample i covers rows [iT, (i+1)T)
    np.testing.assert_array_equal(s.values[1, 0], f.data[T])
    # cell conservation
    assert s.values.size + (L - N * T) * 2 == L * 2


def test_window_rejects():
    f = frame_from_arrays(np.zeros((4, 1)))
    with pytest.raises(ValueError, match="longer than series"):
        window(f, 5)
    with pytest.raises(ValueError):
        window(f, 1)


def test_window_drop_final():
    f = frame_from_arrays(np.zeros((10, 1)))
    assert window(f, 5, drop_final_window=True).n_samples == 1


def test_ett_h1_window_counts_match_reference_calendar():
    # hourly rows 2016-07-01 00:00 .. 2018-06-26 19:00, as in the public ETTh1 file
    start = np.datetime64("2016-07-01T00:00:00")
    stop = np.datetime64("2018-06-26T19:00:00")
    L = int((stop - start) / np.timedelta64(1, "h")) + 1
    assert L == 17420
    f = frame_from_arrays(np.zeros((L, 7)), start="2016-07-01T00:00:00",
                          feature_names=["HUFL", "HULL", "MUFL", "MULL", "LUFL", "LULL", "OT"])
    d = prepare(ett_h1_recipe("unused.csv"), f)
    assert (d.train.n_samples, d.val.n_samples, d.test.n_samples) == (212, 75, 71)
    assert d.train.seq_len == 48


def test_fit_standardizer_examples():
    s = mask_from_missing(np.array([[[1.0, 5.0, np.nan], [3.0, 5.0, np.nan]]]))
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        sc = fit_standardizer(s)
    np.testing.assert_allclose(sc.mean, [2.0, 5.0, 0.0])
    np.testing.assert_allclose(sc.scale, [1.0, 1.0, 1.0])
    assert any("no observed" in str(x.message) for x in w)


def test_standardize_examples():
    s = mask_from_missing(np.array([[[1.0], [3.0]]]))
    out = standardize(s, Standardizer([2.0], [1.0]))
    np.testing.assert_array_equal(out.values.ravel(), [-1.0, 1.0])
    allmiss = mask_from_missing(np.full((1, 2, 1), np.nan))
    assert np.isnan(standardize(allmiss, Standardizer([2.0], [3.0])).values).all()
    with pytest.raises(ValueError, match="feature count"):
        standardize(s, Standardizer([0.0, 0.0], [1.0, 1.0]))


def test_standardize_round_trip(small_set):
    sc = fit_standardizer(small_set)
    back = standardize(standardize(small_set, sc), sc, "inverse")
    np.testing.assert_array_equal(back.mask, small_set.mask)
    np.testing.assert_allclose(back.values, small_set.values, atol=1e-12, equal_nan=True)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_no_leakage_from_val_and_test(seed):
    rng = np.random.default_rng(seed)
    base = sinusoid_frame(length=600, n_features=3)
    data = base.data.copy()
    data[360:] = rng.normal(50, 20, size=data[360:].shape)
    other = frame_from_arrays(data)
    rec = csv_recipe("s", "-", 24)
    a, b = prepare(rec, base), prepare(rec, other)
    np.testing.assert_array_equal(a.standardizer.mean, b.standardizer.mean)
    np.testing.assert_array_equal(a.standardizer.scale, b.standardizer.scale)


def test_pipeline_deterministic_and_csv_round_trip(tmp_path):
    f = sinusoid_frame(length=500, n_features=2)
    write_csv(f, tmp_path / "s.csv")
    rec = csv_recipe("s", str(tmp_path / "s.csv"), 24)
    a, b = prepare(rec), prepare(rec, f)
    np.testing.assert_array_equal(a.test.values, b.test.values)
    assert isinstance(a.train, SampleSet)
