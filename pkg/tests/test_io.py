import math

import numpy as np
import pytest

from otoclab.io import infer_type, read_table, write_table


def test_round_trip_restores_types(tmp_path):
    rows = [{"name": "a", "n": 3, "x": 0.1, "ok": True},
            {"name": "b", "n": np.int64(-2), "x": 1 / 3, "ok": False},
            {"name": "c", "n": None, "x": math.nan, "ok": np.bool_(True)}]
    back = read_table(write_table(tmp_path / "t.tsv", rows))
    assert [r["name"] for r in back] == ["a", "b", "c"]
    assert back[1]["x"] == 1 / 3 and back[1]["n"] == -2 and back[2]["n"] is None
    assert math.isnan(back[2]["x"]) and [r["ok"] for r in back] == [True, False, True]


def test_bytes_depend_only_on_values(tmp_path):
    rows = [{"x": 0.1 + 0.2, "k": 1}]
    a = write_table(tmp_path / "a.tsv", rows).read_bytes()
    b = write_table(tmp_path / "b.tsv", [{"x": np.float64(0.1 + 0.2), "k": np.int32(1)}]).read_bytes()
    assert a == b and a.startswith(b"x:float\tk:int\n")


def test_type_inference():
    assert infer_type([1, 2.5]) == "float"
    assert infer_type([1, "a"]) == "str"
    assert infer_type([None, None]) == "str"
    assert infer_type([True, None]) == "bool"


def test_columns_and_missing_cells(tmp_path):
    path = write_table(tmp_path / "t.tsv", [{"a": 1}, {"b": "z"}], columns=["b", "a"])
    assert read_table(path) == [{"b": None, "a": 1}, {"b": "z", "a": None}]


def test_bad_inputs(tmp_path):
    with pytest.raises(ValueError):
        write_table(tmp_path / "t.tsv", [{"s": "a\tb"}])
    bad = tmp_path / "bad.tsv"
    bad.write_text("a:complex\n1\n")
    with pytest.raises(ValueError):
        read_table(bad)
    bad.write_text("a:int\tb:int\n1\n")
    with pytest.raises(ValueError):
        read_table(bad)
    bad.write_text("")
    with pytest.raises(ValueError):
        read_table(bad)
