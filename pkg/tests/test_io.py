import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from momlab import AtomicMeasure, Density, Field, Grid, Potential
from momlab.io import (FileFormatError, atomic_write, read_field, read_measure, read_potential,
                       read_table, write_field, write_measure, write_table)


def test_field_round_trip(tmp_path):
    f = Grid(-1, 2, 31).field(lambda x: np.sin(x) + x**3)
    back = read_field(write_field(tmp_path / "f.csv", f))
    assert back.grid == f.grid
    np.testing.assert_array_equal(back.values, f.values)
    assert back.meta["convex"] is False


def test_infinite_values_round_trip(tmp_path):
    f = Field(Grid(0, 1, 5), np.array([np.inf, 1.0, 0.0, 1.0, np.inf]))
    back = read_field(write_field(tmp_path / "f.csv", f))
    assert back.values[0] == np.inf and back.values[2] == 0.0


def test_two_dimensional_round_trip(tmp_path):
    g = Grid([0, -1], [1, 1], [4, 5])
    X, Y = g.mesh()
    f = Field(g, X * Y + 1)
    back = read_field(write_field(tmp_path / "f2.csv", f))
    assert back.grid == g
    np.testing.assert_array_equal(back.values, f.values)


def test_potential_round_trip(tmp_path):
    p = Potential.from_function(Grid(-2, 2, 41), lambda x: x**2)
    path = write_field(tmp_path / "p.csv", p)
    assert path.read_text().startswith("# convex")
    assert read_field(path).meta["convex"] is True
    np.testing.assert_array_equal(read_potential(path).values, p.values)


def test_nonconvex_potential_rejected(tmp_path):
    path = write_field(tmp_path / "p.csv", Grid(-2, 2, 41).field(lambda x: -x**2))
    with pytest.raises(FileFormatError):
        read_potential(path)


def test_measure_round_trips(tmp_path):
    mu = AtomicMeasure(np.array([-1.0, 0.5, 2.0]), np.array([0.2, 0.3, 0.5]))
    back = read_measure(write_measure(tmp_path / "a.csv", mu))
    np.testing.assert_array_equal(back.locations, mu.locations)
    np.testing.assert_array_equal(back.weights, mu.weights)

    rho = Density.from_function(Grid(-5, 5, 101), lambda x: np.exp(-x**2))
    back = read_measure(write_measure(tmp_path / "d.csv", rho))
    np.testing.assert_allclose(back.values, rho.values, rtol=1e-12)


def test_unnormalized_atoms(tmp_path):
    path = tmp_path / "a.csv"
    path.write_text("atoms\n# two atoms\n-1,3\n1,1\n")
    mu = read_measure(path)
    assert mu.weights.tolist() == [0.75, 0.25]


@pytest.mark.parametrize("text, line", [
    ("atoms\nx,weight\n0,1\n1,oops\n", 4),
    ("atoms\nx,weight\n0,1\n1,-1\n", 4),
    ("atoms\nx,weight\n0,1,2\n", 3),
    ("blob\n0,1\n", 1),
    ("density\nx,value\n0,1\n0.5,1\n0.7,1\n", 3),
    ("density\nq,value\n0,1\n", 2),
    ("\n\n", 1),
])
def test_malformed_measures_name_the_line(tmp_path, text, line):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(FileFormatError) as info:
        read_measure(path)
    assert info.value.line == line
    assert f"bad.csv:{line}" in str(info.value)


def test_missing_file(tmp_path):
    with pytest.raises(FileFormatError):
        read_measure(tmp_path / "nope.csv")


def test_nan_rejected(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text("x,value\n0,1\n1,nan\n2,1\n")
    with pytest.raises(FileFormatError):
        read_field(path)


def test_table_round_trip(tmp_path):
    path = write_table(tmp_path / "t.csv", ["k", "value", "ok"], [(1, 0.5, True), (2, float("nan"), False)],
                       comments=["slope 0.5"])
    cols, rows, comments = read_table(path)
    assert cols == ["k", "value", "ok"]
    assert rows == [["1", "0.5", "true"], ["2", "nan", "false"]]
    assert comments == ["slope 0.5"]


def test_atomic_write_leaves_no_temporaries(tmp_path):
    target = tmp_path / "sub" / "out.txt"
    atomic_write(target, "one")
    atomic_write(target, "two")
    assert target.read_text() == "two"
    assert [p.name for p in target.parent.iterdir()] == ["out.txt"]


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=3, max_size=40),
       st.floats(-10, 10), st.floats(0.01, 10))
def test_field_values_are_exact_after_round_trip(tmp_path_factory, vals, lo, width):
    f = Field(Grid(lo, lo + width, len(vals)), np.array(vals))
    back = read_field(write_field(tmp_path_factory.mktemp("h") / "f.csv", f))
    np.testing.assert_array_equal(back.values, f.values)
