import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from speclp.io import atomic_write, csv_text, dumps, to_jsonable


def test_special_values():
    obj = {"c": 1 + 2j, "inf": math.inf, "nan": np.nan, (1, 2): np.arange(2), "b": np.bool_(True)}
    d = json.loads(dumps(obj))
    assert d == {"c": [1.0, 2.0], "inf": "inf", "nan": "nan", "1,2": [0, 1], "b": True}


@given(st.recursive(st.none() | st.booleans() | st.integers() | st.floats(allow_nan=False) | st.text(),
                    lambda c: st.lists(c, max_size=4) | st.dictionaries(st.text(max_size=5), c, max_size=4),
                    max_leaves=20))
def test_dumps_round_trips_plain_json(obj):
    text = dumps(obj)
    assert text.endswith("\n")
    assert dumps(json.loads(text)) == text


def test_dumps_is_order_independent():
    assert dumps({"a": 1, "b": 2}) == dumps({"b": 2, "a": 1})


def test_unserialisable():
    with pytest.raises(TypeError):
        to_jsonable(object())


def test_atomic_write(tmp_path):
    p = atomic_write(tmp_path / "sub" / "x.txt", "hello\n")
    assert p.read_text() == "hello\n"
    atomic_write(p, "again\n")
    assert p.read_text() == "again\n"
    assert sorted(f.name for f in p.parent.iterdir()) == ["x.txt"]


def test_csv_text_reprs_floats():
    assert csv_text(["a", "b"], [(0.1, 2)]) == "a,b\n0.1,2\n"
