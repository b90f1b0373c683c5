import numpy as np
from hypothesis import given, strategies as st

from collision_chords.tables import format_cell, read_table, render_table, write_table


def test_format():
    assert format_cell(0.1) == "0.10000000000000001"
    assert format_cell(True) == "1" and format_cell(np.int64(3)) == "3" and format_cell(None) == ""


def test_bytes_are_lf_utf8(tmp_path):
    write_table(tmp_path / "a.csv", ["x", "name"], [[1.5, "π"]])
    assert (tmp_path / "a.csv").read_bytes() == "x,name\n1.5,π\n".encode("utf-8")


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=20))
def test_floats_round_trip(values):
    text = render_table(["v"], [[v] for v in values])
    back = [float(line) for line in text.splitlines()[1:]]
    assert back == values


def test_read_back(tmp_path):
    digest = write_table(tmp_path / "t.csv", ["a", "b"], [[1, 2.0], [3, "x,y"]])
    header, rows = read_table(tmp_path / "t.csv")
    assert header == ["a", "b"] and rows[1]["b"] == "x,y" and len(digest) == 64
