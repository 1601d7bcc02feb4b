import csv
import json

import numpy as np
import pytest

from fairlend.lda import CandidateModel
from fairlend.reporting import (SCHEMA_NAMES, dumps, load_schema, sha256_file,
                                write_frontier_csv, write_json)


def test_dumps_maps_non_finite_and_numpy_types():
    text = dumps({"a": np.float64(np.nan), "b": np.int64(3), "c": (1.5, np.inf)})
    assert json.loads(text) == {"a": None, "b": 3, "c": [1.5, None]}
    assert text.endswith("}\n")


def test_write_json_is_byte_stable(tmp_path):
    doc = {"z": 1, "a": [0.1, 0.2]}
    write_json(tmp_path / "a.json", doc)
    write_json(tmp_path / "b.json", doc)
    assert sha256_file(tmp_path / "a.json") == sha256_file(tmp_path / "b.json")


def test_frontier_csv(tmp_path):
    rows = [CandidateModel("baseline", None, 0.75, 0.65), CandidateModel("drop:x", None, 0.73, None)]
    write_frontier_csv(tmp_path / "f.csv", rows)
    with open(tmp_path / "f.csv", newline="") as fh:
        got = list(csv.reader(fh))
    assert got == [["strategy", "predictiveness", "air"], ["baseline", "0.75", "0.65"],
                   ["drop:x", "0.73", ""]]


def test_every_schema_loads():
    for name in SCHEMA_NAMES:
        assert load_schema(name)["$schema"].endswith("2020-12/schema")
    with pytest.raises(KeyError):
        load_schema("nope")
