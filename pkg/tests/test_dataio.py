"""Tests for the dataio module."""

import json
from pathlib import Path
from typing import List

import numpy as np
import pytest

from scpgcn.dataio import (
    DatasetManifest,
    ManifestRecord,
    load_dataset,
    load_manifest,
    save_dataset,
    write_csv,
    write_json,
)
from scpgcn.errors import DatasetError
from scpgcn.graph_core import AsymmetryWarning, NetworkInstance

from tests.builders import random_instance


def _instances(count: int = 3, n: int = 5) -> List[NetworkInstance]:
    rng = np.random.default_rng(0)
    return [random_instance(rng, n, k % 2, f"s{k}") for k in range(count)]


def _manifest(tmp_path: Path, n: int, files: dict, instance_id: str = "bad") -> Path:
    (tmp_path / "matrices").mkdir(exist_ok=True)
    for name, matrix in files.items():
        np.savetxt(tmp_path / "matrices" / name, matrix, fmt="%.17g")
    manifest = {
        "format": "scpgcn-dataset",
        "n": n,
        "records": [
            {
                "id": instance_id,
                "label": 1,
                "structural": "matrices/bad_structural.txt",
                "functional": "matrices/bad_functional.txt",
            }
        ],
    }
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(manifest), encoding="utf-8")
    return path


class TestRoundTrip:
    """Tests for saving and loading datasets."""

    def test_exact_round_trip(self, tmp_path) -> None:
        """Test matrices and labels survive a save/load cycle bit for bit."""
        original = _instances()
        loaded = load_dataset(save_dataset(original, str(tmp_path)))
        assert [i.id for i in loaded] == [i.id for i in original]
        assert [i.label for i in loaded] == [i.label for i in original]
        for a, b in zip(original, loaded):
            np.testing.assert_array_equal(a.structural, b.structural)
            np.testing.assert_array_equal(a.functional, b.functional)

    def test_layout(self, tmp_path) -> None:
        """Test two matrix files per subject with n lines each."""
        save_dataset(_instances(count=4, n=6), str(tmp_path))
        files = sorted((tmp_path / "matrices").iterdir())
        assert len(files) == 8
        assert len(files[0].read_text(encoding="utf-8").splitlines()) == 6
        assert (tmp_path / "manifest.json").exists()

    def test_resave_is_byte_identical(self, tmp_path) -> None:
        """Test saving a loaded dataset reproduces the same bytes."""
        first = tmp_path / "a"
        second = tmp_path / "b"
        manifest = save_dataset(_instances(), str(first), metadata={"seed": 4})
        save_dataset(load_dataset(manifest), str(second), metadata={"seed": 4})
        for path in sorted(first.rglob("*.*")):
            twin = second / path.relative_to(first)
            assert path.read_bytes() == twin.read_bytes()

    def test_metadata_stored_as_strings(self, tmp_path) -> None:
        """Test metadata values are written as strings."""
        manifest = load_manifest(save_dataset(_instances(), str(tmp_path), metadata={"seed": 4}))
        assert manifest.metadata == {"seed": "4"}
        assert manifest.n == 5


class TestValidation:
    """Tests for load-time validation errors."""

    def test_size_mismatch_names_instance(self, tmp_path) -> None:
        """Test a 4x4 matrix under a manifest declaring n=5 names the instance."""
        rng = np.random.default_rng(1)
        inst = random_instance(rng, 4, 1, "bad")
        path = _manifest(
            tmp_path, 5, {"bad_structural.txt": inst.structural, "bad_functional.txt": inst.functional}
        )
        with pytest.raises(DatasetError) as info:
            load_dataset(str(path))
        assert info.value.instance_id == "bad"
        assert "bad_structural.txt" in str(info.value)

    def test_functional_out_of_range_names_file(self, tmp_path) -> None:
        """Test a correlation above 1 names the functional file."""
        rng = np.random.default_rng(2)
        inst = random_instance(rng, 4, 0, "bad")
        f = np.array(inst.functional)
        f[0, 1] = f[1, 0] = 1.5
        path = _manifest(tmp_path, 4, {"bad_structural.txt": inst.structural, "bad_functional.txt": f})
        with pytest.raises(DatasetError) as info:
            load_dataset(str(path))
        assert info.value.path is not None and info.value.path.endswith("bad_functional.txt")

    def test_structural_error_names_structural_file(self, tmp_path) -> None:
        """Test an id mentioning the other view does not redirect the error to that file."""
        rng = np.random.default_rng(4)
        inst = random_instance(rng, 4, 0, "x")
        s = np.array(inst.structural)
        s[0, 1] = s[1, 0] = -1.0
        path = _manifest(
            tmp_path, 4, {"bad_structural.txt": s, "bad_functional.txt": inst.functional}, instance_id="functional_01"
        )
        with pytest.raises(DatasetError) as info:
            load_dataset(str(path))
        assert info.value.instance_id == "functional_01"
        assert info.value.path is not None and info.value.path.endswith("bad_structural.txt")

    def test_missing_file(self, tmp_path) -> None:
        """Test a missing matrix file is reported."""
        rng = np.random.default_rng(3)
        inst = random_instance(rng, 3, 0, "bad")
        path = _manifest(tmp_path, 3, {"bad_structural.txt": inst.structural})
        with pytest.raises(DatasetError, match="not found"):
            load_dataset(str(path))

    def test_missing_manifest(self, tmp_path) -> None:
        """Test a missing manifest raises DatasetError."""
        with pytest.raises(DatasetError):
            load_dataset(str(tmp_path / "nope.json"))

    def test_corrupt_manifest(self, tmp_path) -> None:
        """Test invalid JSON raises DatasetError."""
        path = tmp_path / "manifest.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(DatasetError):
            load_manifest(str(path))

    def test_asymmetric_matrix_warns_and_loads(self, tmp_path) -> None:
        """Test an asymmetric structural file is symmetrized with a warning."""
        rng = np.random.default_rng(4)
        inst = random_instance(rng, 4, 1, "bad")
        s = np.array(inst.structural)
        s[0, 1] += 0.2
        path = _manifest(tmp_path, 4, {"bad_structural.txt": s, "bad_functional.txt": inst.functional})
        with pytest.warns(AsymmetryWarning, match="bad_structural.txt"):
            loaded = load_dataset(str(path))
        np.testing.assert_array_equal(loaded[0].structural, loaded[0].structural.T)

    def test_duplicate_ids(self) -> None:
        """Test duplicate ids in a manifest are rejected."""
        rec = ManifestRecord("s1", "a.txt", "b.txt", 0)
        with pytest.raises(DatasetError, match="duplicate"):
            DatasetManifest(records=[rec, rec], n=3)

    def test_bad_label(self) -> None:
        """Test labels other than 0/1 are rejected."""
        with pytest.raises(DatasetError):
            DatasetManifest(records=[ManifestRecord("s1", "a.txt", "b.txt", 3)], n=3)

    def test_unknown_format(self) -> None:
        """Test a foreign manifest format is rejected."""
        with pytest.raises(DatasetError):
            DatasetManifest.from_dict({"format": "other", "n": 2, "records": []})

    def test_unsafe_id_rejected_on_save(self, tmp_path) -> None:
        """Test ids that are not file-name safe are refused."""
        rng = np.random.default_rng(5)
        with pytest.raises(DatasetError):
            save_dataset([random_instance(rng, 3, 0, "a/b")], str(tmp_path))

    def test_mixed_sizes_rejected_on_save(self, tmp_path) -> None:
        """Test saving subjects of different sizes is refused."""
        rng = np.random.default_rng(6)
        instances = [random_instance(rng, 3, 0, "a"), random_instance(rng, 4, 1, "b")]
        with pytest.raises(DatasetError):
            save_dataset(instances, str(tmp_path))


class TestResultWriters:
    """Tests for JSON and CSV result writers."""

    def test_json_sorted_with_newline(self, tmp_path) -> None:
        """Test JSON output has sorted keys and ends with a newline."""
        path = tmp_path / "out" / "r.json"
        write_json(str(path), {"b": 1, "a": 2})
        text = path.read_text(encoding="utf-8")
        assert text.endswith("}\n")
        assert text.index('"a"') < text.index('"b"')

    def test_csv_floats_round_trip(self, tmp_path) -> None:
        """Test floats are written with repr precision."""
        path = tmp_path / "r.csv"
        write_csv(str(path), ["name", "value"], [["x", 0.1 + 0.2], ["y", np.float64(1 / 3)]])
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines == ["name,value", "x,0.30000000000000004", f"y,{1 / 3!r}"]
