import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glmcausal.data import DataError, Dataset, format_value, read_csv, write_csv


def load(text):
    return read_csv(io.StringIO(text))


def test_column_kinds_and_levels():
    d = load("x,site,y\n1,lung,0\n2.5,breast,1\n-3e2,lung,1\n")
    assert d.names == ("x", "site", "y")
    assert d.n == 3
    assert d.kind("x") == "numeric" and d.kind("site") == "categorical"
    np.testing.assert_array_equal(d["x"], [1.0, 2.5, -300.0])
    assert d.levels["site"] == ("lung", "breast")


def test_mixed_column_is_categorical():
    d = load("a\n1\nb\n2\n")
    assert d.kind("a") == "categorical"
    assert d.levels["a"] == ("1", "b", "2")


@pytest.mark.parametrize("cell", ["", "NA", "nan", "NaN"])
def test_missing_values_rejected(cell):
    with pytest.raises(DataError, match="missing"):
        load(f"x,y\n1,2\n{cell},3\n")


@pytest.mark.parametrize("cell", ["inf", "1_000"])
def test_non_decimal_numbers_are_categorical(cell):
    assert load(f"x\n1\n{cell}\n").kind("x") == "categorical"


def test_ragged_and_duplicate_header():
    with pytest.raises(DataError, match="line 3"):
        load("x,y\n1,2\n3\n")
    with pytest.raises(DataError, match="duplicate"):
        load("x,x\n1,2\n")
    with pytest.raises(DataError):
        load("")


def test_quoted_fields():
    d = load('name,v\n"a, b",1\n"c ""q""",2\n')
    assert d["name"].tolist() == ["a, b", 'c "q"']


def test_arrays_are_read_only():
    d = load("x\n1\n")
    with pytest.raises(ValueError):
        d["x"][0] = 5


def test_take_keeps_levels():
    d = load("g\na\nb\nc\n")
    sub = d.take(np.array([2]))
    assert sub.levels["g"] == ("a", "b", "c")
    assert sub.n == 1


def test_unknown_column():
    d = load("x\n1\n")
    with pytest.raises(DataError, match="'z'"):
        d["z"]


def test_from_columns():
    d = Dataset.from_columns({"a": [1, 2], "b": ["u", "v"]})
    assert d.is_numeric("a") and not d.is_numeric("b")
    with pytest.raises(DataError):
        Dataset.from_columns({"a": [1, 2], "b": [1]})
    with pytest.raises(DataError):
        Dataset.from_columns({"a": [1.0, float("nan")]})


def test_format_value():
    assert format_value(3.0) == "3"
    assert format_value(-0.1) == "-0.1"
    assert format_value(1 / 3) == repr(1 / 3)
    assert format_value("lung") == "lung"


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=30),
    st.lists(st.sampled_from(["a", "b,c", 'q"x', "zz"]), min_size=1, max_size=30),
)
def test_csv_round_trip(xs, cats):
    n = min(len(xs), len(cats))
    d = Dataset.from_columns({"x": xs[:n], "g": cats[:n]})
    buf = io.StringIO()
    write_csv(d, buf)
    again = load(buf.getvalue())
    np.testing.assert_array_equal(again["x"], d["x"])
    assert again["g"].tolist() == d["g"].tolist()
