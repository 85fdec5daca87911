import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptsa.data import (ParseError, SparseDataset, empirical_problem, load_libsvm, max_abs_scale, parse_libsvm,
                          serialize, split, synthetic_sparse, test_error)
from adaptsa.geometry import l1_ball, l2_ball


def test_parse_example():
    ds = parse_libsvm("+1 1:0.5 3:2\n-1 2:1.5\n")
    assert ds.n_rows == 2 and ds.n_features == 3
    assert ds.row(0) == (1.0, {1: 0.5, 3: 2.0})
    assert np.allclose(ds.dense(), [[0.5, 0, 2], [0, 1.5, 0]])


def test_parse_comments_blank_lines_and_bytes():
    ds = parse_libsvm(b"# header\n\n1 2:3 # trailing\n0\n")
    assert ds.n_rows == 2 and ds.row(1) == (0.0, {})


@pytest.mark.parametrize("text,msg", [
    ("1 3:1 2:1\n", "non-increasing index at line 1"),
    ("1 1:1\n1 0:1\n", "index must be positive at line 2"),
    ("1 a:1\n", "non-numeric token"),
    ("x 1:1\n", "non-numeric token"),
    ("1 1:nan\n", "non-finite value"),
    ("1 1\n", "expected idx:val"),
])
def test_parse_errors(text, msg):
    with pytest.raises(ParseError, match=msg):
        parse_libsvm(text)


def test_n_features_checks():
    assert parse_libsvm("1 2:1\n", n_features=5).n_features == 5
    with pytest.raises(ParseError):
        parse_libsvm("1 6:1\n", n_features=5)


def test_round_trip_file(tmp_path):
    ds, _ = synthetic_sparse(50, 30, density=0.1, support=5, seed=1)
    p = tmp_path / "d.svm"
    p.write_text(serialize(ds))
    back = load_libsvm(str(p), n_features=30)
    assert back.equals(ds)


rows = st.lists(
    st.tuples(st.integers(-3, 3).map(float),
              st.dictionaries(st.integers(1, 40), st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
                              .filter(lambda v: v != 0), max_size=6)),
    min_size=1, max_size=20)


@settings(max_examples=80, deadline=None)
@given(rows)
def test_round_trip_property(rs):
    text = "".join(f"{y:g} " + " ".join(f"{k}:{v!r}" for k, v in sorted(d.items())) + "\n" for y, d in rs)
    ds = parse_libsvm(text, n_features=40)
    again = parse_libsvm(io.StringIO(serialize(ds)), n_features=40)
    assert again.equals(ds)
    assert [r for r in again.rows] == [(y, dict(sorted(d.items()))) for y, d in rs]


def test_split_sizes():
    ds = parse_libsvm("".join(f"{i} 1:1\n" for i in range(6)))
    assert [p.n_rows for p in split(ds, (4, 1, 1))] == [4, 1, 1]
    ds7 = parse_libsvm("".join(f"{i} 1:1\n" for i in range(7)))
    assert sum(p.n_rows for p in split(ds7)) == 7
    assert [p.n_rows for p in split(ds, (1, 0, 0))] == [6, 0, 0]


def test_split_deterministic_and_disjoint():
    ds = parse_libsvm("".join(f"{i} 1:{i + 1}\n" for i in range(60)))
    for seed in range(100):
        a = split(ds, seed=seed)
        b = split(ds, seed=seed)
        assert all(x.equals(y) for x, y in zip(a, b))
        labels = np.concatenate([p.labels for p in a])
        assert sorted(labels.tolist()) == list(range(60))


def test_split_rejects_bad_ratios():
    ds = parse_libsvm("1 1:1\n")
    with pytest.raises(ValueError):
        split(ds, (-1, 2, 1))


def test_max_abs_scale():
    ds = parse_libsvm("1 1:2 2:-4\n1 1:-1\n")
    sc, scale = max_abs_scale(ds)
    assert np.allclose(scale, [2, 4]) and np.allclose(sc.dense(), [[1, -1], [-0.5, 0]])


def test_synthetic_rows_unit_norm():
    ds, w = synthetic_sparse(200, 100, density=0.05, support=7, noise=0.0, seed=3)
    X = ds.dense()
    assert np.allclose(np.linalg.norm(X, axis=1), 1.0)
    assert np.count_nonzero(w) == 7 and np.allclose(X @ w, ds.labels)


def test_empirical_problem_risk_matches_dense():
    ds, _ = synthetic_sparse(120, 20, density=0.2, support=4, seed=5)
    P = empirical_problem(ds, "square", l1_ball(20, 3.0), lam=0.01)
    X, y = ds.dense(), ds.labels
    w = np.random.default_rng(0).normal(0, 0.2, 20)
    assert np.isclose(P.risk(w), np.mean((X @ w - y) ** 2) + 0.01 * np.abs(w).sum())
    assert np.isclose(test_error(w, ds), np.mean((X @ w - y) ** 2))
    assert not P.has_optimum and np.isnan(P.meta.risk_min_Pstar)


def test_empirical_gradient_bound():
    ds, _ = synthetic_sparse(100, 10, density=0.3, support=3, seed=6)
    P = empirical_problem(ds, "square", l2_ball(10, 2.0))
    rng = np.random.default_rng(1)
    Z = P.sample(rng, 200)
    for w in P.set.sample(rng, 20):
        for z in Z[:10]:
            assert np.linalg.norm(P.subgradient(w, z)) <= P.meta.lipschitz_G + 1e-9


def test_hinge_labels_checked():
    ds = parse_libsvm("2 1:1\n")
    with pytest.raises(ValueError):
        empirical_problem(ds, "hinge", l2_ball(1))
    ok = parse_libsvm("1 1:0.5\n-1 1:0.25\n")
    P = empirical_problem(ok, "hinge", l2_ball(1))
    assert np.isclose(P.risk(np.array([1.0])), ((1 - 0.5) + (1 + 0.25)) / 2)


def test_dataset_is_dataclass():
    ds = parse_libsvm("1 1:1\n")
    assert isinstance(ds, SparseDataset) and len(ds) == 1
