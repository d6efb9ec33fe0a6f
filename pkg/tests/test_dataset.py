import json

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from recsel import dataset as ds


def write(tmp_path, text, name="log.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_ingest_skips_malformed_rows(tmp_path):
    p = write(tmp_path, "user,item,rating\nu1,i1,5\nu2,,3\nu3,i2,abc\nu4\nu5,i9,2\n")
    res = ds.ingest_csv(p, ds.CsvSchema(rating="rating"))
    assert [(r.user_key, r.item_key, r.rating) for r in res.records] == [("u1", "i1", 5.0), ("u5", "i9", 2.0)]
    assert res.n_malformed == 3


def test_ingest_missing_column_and_empty(tmp_path):
    with pytest.raises(ds.DatasetError):
        ds.ingest_csv(write(tmp_path, "a,b\n1,2\n"), ds.CsvSchema())
    with pytest.raises(ds.DatasetError):
        ds.ingest_csv(write(tmp_path, "user,item\n,\n"), ds.CsvSchema())
    with pytest.raises(FileNotFoundError):
        ds.ingest_csv(tmp_path / "nope.csv")


def test_schema_parse():
    s = ds.CsvSchema.parse("user=0,item=1,rating=2,delimiter=tab,header=false")
    assert (s.user, s.item, s.rating, s.delimiter, s.header) == (0, 1, 2, "\t", False)
    assert ds.CsvSchema.parse("grouplens") is ds.SCHEMA_PRESETS["grouplens"]
    with pytest.raises(ds.DatasetError):
        ds.CsvSchema.parse("colour=red")


def test_to_implicit_threshold():
    recs = [ds.InteractionRecord("a", "x", 1.0), ds.InteractionRecord("a", "y", 4.0), ds.InteractionRecord("b", "x")]
    out = ds.to_implicit(recs, min_rating=3)
    assert [(r.user_key, r.item_key, r.rating) for r in out] == [("a", "y", None), ("b", "x", None)]
    assert len(ds.to_implicit(recs)) == 3


def test_dedup_keeps_first():
    recs = [ds.InteractionRecord("a", "x", None, 5), ds.InteractionRecord("a", "x", None, 1)]
    assert ds.dedup(recs)[0].timestamp == 5


def _brute_core(pairs, core):
    pairs = set(pairs)
    while True:
        ud, idg = {}, {}
        for u, i in pairs:
            ud[u] = ud.get(u, 0) + 1
            idg[i] = idg.get(i, 0) + 1
        keep = {(u, i) for u, i in pairs if ud[u] >= core and idg[i] >= core}
        if keep == pairs:
            return pairs
        pairs = keep


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 12), st.integers(0, 12)), max_size=160), st.integers(1, 5))
def test_prune_matches_fixed_point(pairs, core):
    recs = [ds.InteractionRecord(f"u{u}", f"i{i}") for u, i in pairs]
    got = {(r.user_key, r.item_key) for r in ds.five_core_prune(recs, core)}
    want = {(f"u{u}", f"i{i}") for u, i in _brute_core(pairs, core)}
    assert got == want
    out = ds.five_core_prune(recs, core)
    if out:
        d = ds.index(out)
        assert d.user_degrees().min() >= core and d.item_degrees().min() >= core


def test_prune_empty_result_is_not_an_error():
    recs = [ds.InteractionRecord("a", "x"), ds.InteractionRecord("b", "y")]
    assert ds.five_core_prune(recs) == []
    d = ds.index([])
    assert d.n_users == 0 and d.n_interactions == 0


def test_index_first_appearance_and_dump_roundtrip(tmp_path):
    recs = [ds.InteractionRecord(u, i) for u, i in [("b", "y"), ("a", "x"), ("a", "y"), ("c", "x")]]
    d = ds.index(recs, source="toy")
    assert list(d.user_keys) == ["b", "a", "c"] and list(d.item_keys) == ["y", "x"]
    assert d.matrix.toarray().tolist() == [[1, 0], [1, 1], [0, 1]]
    ds.write_dump(d, tmp_path / "dump")
    back = ds.read_dump(tmp_path / "dump")
    assert list(back.user_keys) == list(d.user_keys)
    assert (back.matrix != d.matrix).nnz == 0
    st_ = json.loads((tmp_path / "dump" / "stats.json").read_text())
    assert st_["n_interactions"] == "4"


def test_stats_values():
    recs = [ds.InteractionRecord(u, i) for u, i in [("a", "x"), ("a", "y"), ("b", "x")]]
    s = ds.stats(ds.index(recs), "Toy")
    assert (s.n_interactions, s.n_users, s.n_items) == (3, 2, 2)
    assert s.avg_int_per_user == pytest.approx(1.5) and s.avg_int_per_item == pytest.approx(1.5)
    assert s.sparsity == pytest.approx(0.25)
    assert s.table_row("toy").endswith("| 25.00% | Toy")


def test_crossfold_partitions_each_user(small_matrix):
    folds = ds.crossfold(small_matrix, 5, seed=3)
    total = sum(f.test for f in folds)
    assert (total != small_matrix).nnz == 0  # every interaction tested exactly once
    for f in folds:
        assert (f.train + f.test != small_matrix).nnz == 0
        assert (f.train.multiply(f.test)).nnz == 0
        assert (f.inner_train + f.inner_valid != f.train).nnz == 0
        sizes = np.diff(small_matrix.indptr)
        tsz = np.diff(f.test.indptr)
        assert np.all(np.abs(tsz - sizes / 5) <= 1)


def test_crossfold_small_users_stay_in_train():
    X = sp.csr_matrix(np.array([[1, 1, 0, 0, 0, 0], [1, 1, 1, 1, 1, 1]], dtype=float))
    for f in ds.crossfold(X, 5, seed=0):
        assert f.test[0].nnz == 0 and f.train[0].nnz == 2


def test_crossfold_deterministic(small_matrix):
    a = ds.crossfold(small_matrix, 5, seed=11)
    b = ds.crossfold(small_matrix, 5, seed=11)
    assert all((x.test != y.test).nnz == 0 and (x.inner_valid != y.inner_valid).nnz == 0 for x, y in zip(a, b))


def test_inner_ratio_rounding_and_ladder():
    X = sp.csr_matrix(np.ones((1, 25)))
    f = ds.crossfold(X, 5, seed=1)[0]  # 20 train items per fold
    sizes = [f.inner_valid.nnz]
    while True:
        try:
            f2 = ds.shrink_inner_split(f)
        except ds.SplitExhausted:
            break
        # the validation set only ever grows, using the same shuffle
        assert set(f.inner_valid.indices) <= set(f2.inner_valid.indices)
        f = f2
        sizes.append(f.inner_valid.nnz)
    assert sizes == [4, 6, 8, 10]
    assert f.split_ratio == 0.5
    # round half up: 5 items at 0.5 -> 3 held out (2.5 rounds up)
    g = ds.with_inner_ratio(ds.crossfold(sp.csr_matrix(np.ones((1, 6))), 6, seed=0)[0], 0.5)
    assert g.inner_valid.nnz == 3
