import json

import numpy as np
import pytest

from bilaf_engine.boundary_select import PickStage
from bilaf_engine.errors import (
    EXIT_DATA,
    EXIT_INTERNAL,
    EXIT_USAGE,
    ConfigurationError,
    DataFormatError,
    InfeasibleBudgetError,
    InvariantViolation,
    PoolIOError,
    exit_code_for,
)
from bilaf_engine.reporting import read_index_list, save_json, to_builtin, write_index_list
from bilaf_engine.seeding import derive_seed


class TestToBuiltin:
    def test_numpy_and_enums(self):
        data = {"a": np.int64(3), "b": np.array([1.5, np.nan]), "c": PickStage.CORE,
                "d": (np.bool_(True), float("inf"))}
        assert to_builtin(data) == {"a": 3, "b": [1.5, None], "c": "core", "d": [True, None]}


class TestWriters:
    def test_json_layout(self, tmp_path):
        path = tmp_path / "nested" / "report.json"
        save_json(path, {"k": 1})
        text = path.read_text()
        assert text == '{\n    "k": 1\n}\n'
        assert json.loads(text) == {"k": 1}

    def test_index_list(self, tmp_path):
        path = tmp_path / "idx.txt"
        write_index_list(path, [np.int64(5), 2, 9])
        assert path.read_text() == "5\n2\n9\n"
        assert read_index_list(path) == [5, 2, 9]

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(PoolIOError):
            save_json(blocker / "r.json", {})


class TestExitCodes:
    @pytest.mark.parametrize("exc,code", [
        (ConfigurationError("x"), EXIT_USAGE),
        (InfeasibleBudgetError("x"), EXIT_DATA),
        (DataFormatError("x", line=3), EXIT_DATA),
        (PoolIOError("x", "p"), EXIT_DATA),
        (InvariantViolation("x"), EXIT_INTERNAL),
        (KeyError("x"), EXIT_INTERNAL),
    ])
    def test_mapping(self, exc, code):
        assert exit_code_for(exc) == code

    def test_data_error_location(self):
        err = DataFormatError("bad magic", offset=0, path="p.blaf")
        assert str(err) == "bad magic (p.blaf, byte offset 0)"


class TestDeriveSeed:
    def test_stable_and_label_dependent(self):
        assert derive_seed(7, "trial:0") == derive_seed(7, "trial:0")
        assert derive_seed(7, "trial:0") != derive_seed(7, "trial:1")
        assert derive_seed(7, "trial:0") != derive_seed(8, "trial:0")

    def test_range(self):
        assert 0 <= derive_seed(2 ** 64 - 1, "activeft") < 2 ** 64
