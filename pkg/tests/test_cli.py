"""Tests for the scpgcn command-line interface."""

import csv
import json
from pathlib import Path
from typing import List

import pytest

from scpgcn.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main, run

TINY_TRAIN = ["--epochs", "2", "--widths", "4,3", "--embedding-dim", "2", "--communities", "2"]


def _generate(out: Path, *extra: str) -> Path:
    code, message = run(
        ["generate", "--n", "12", "--communities-true", "2", "--per-class", "5", "--seed", "3", "--out", str(out)]
        + list(extra)
    )
    assert (code, message) == (EXIT_OK, None)
    return out / "manifest.json"


@pytest.fixture
def manifest(tmp_path: Path) -> Path:
    return _generate(tmp_path / "data")


def _csv_rows(path: Path) -> List[List[str]]:
    with open(path, encoding="utf-8", newline="") as f:
        return list(csv.reader(f))


class TestGenerate:
    """Tests for the generate subcommand."""

    def test_writes_dataset(self, tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
        """Test generation writes a manifest, matrices and the planted partition."""
        path = _generate(tmp_path / "data")
        data = json.loads(path.read_text(encoding="utf-8"))
        assert len(data["records"]) == 10
        assert data["metadata"]["generator.seed"] == "3"
        assert len(list((tmp_path / "data" / "matrices").iterdir())) == 20
        planted = json.loads((tmp_path / "data" / "planted.json").read_text(encoding="utf-8"))
        assert planted["C"] == 2
        resolved = json.loads(capsys.readouterr().out.split("\nWrote")[0])
        assert resolved["generator"]["n"] == 12
        assert resolved["run_id"].startswith("run_")

    def test_byte_identical_reruns(self, tmp_path: Path) -> None:
        """Test two runs with one seed write identical files."""
        a = _generate(tmp_path / "a").parent
        b = _generate(tmp_path / "b").parent
        for path in sorted(a.rglob("*.*")):
            assert path.read_bytes() == (b / path.relative_to(a)).read_bytes()

    def test_config_file(self, tmp_path: Path) -> None:
        """Test generator values come from a config file's generator section."""
        config = tmp_path / "c.json"
        config.write_text(json.dumps({"generator": {"noise": 0.05}}), encoding="utf-8")
        path = _generate(tmp_path / "data", "--config", str(config))
        assert json.loads(path.read_text(encoding="utf-8"))["metadata"]["generator.noise"] == "0.05"


class TestEvaluate:
    """Tests for the evaluate subcommand."""

    def test_report_and_csv(self, tmp_path: Path, manifest: Path) -> None:
        """Test evaluate writes a report JSON with per-repeat metrics and a CSV beside it."""
        out = tmp_path / "eval.json"
        code, _ = run(
            ["evaluate", "--manifest", str(manifest), "--repeats", "2", "--out", str(out)] + TINY_TRAIN
        )
        assert code == EXIT_OK
        report = json.loads(out.read_text(encoding="utf-8"))
        assert report["variant"] == "scp-gcn"
        assert len(report["accuracies"]) == 2
        assert 0.0 <= report["mean_accuracy"] <= 1.0
        assert report["config"]["epochs"] == 2
        assert len(_csv_rows(tmp_path / "eval.csv")) == 3

    def test_reruns_identical(self, tmp_path: Path, manifest: Path) -> None:
        """Test two runs with one seed produce byte-identical reports and event logs."""
        outputs = []
        for name in ("a", "b"):
            out = tmp_path / f"{name}.json"
            events = tmp_path / f"{name}.jsonl"
            code, _ = run(
                ["evaluate", "--manifest", str(manifest), "--repeats", "2", "--seed", "5",
                 "--out", str(out), "--events", str(events)] + TINY_TRAIN
            )
            assert code == EXIT_OK
            outputs.append((out.read_bytes(), events.read_bytes()))
        assert outputs[0] == outputs[1]

    def test_events(self, tmp_path: Path, manifest: Path) -> None:
        """Test the event file records the run start and every repeat."""
        events = tmp_path / "events.jsonl"
        run(
            ["evaluate", "--manifest", str(manifest), "--repeats", "2", "--out", str(tmp_path / "r.json"),
             "--events", str(events)] + TINY_TRAIN
        )
        types = [json.loads(line)["type"] for line in events.read_text(encoding="utf-8").splitlines()]
        assert types[0] == "run_start"
        assert types.count("repeat_complete") == 2
        assert types[-1] == "experiment_complete"

    def test_variant_case_insensitive(self, tmp_path: Path, manifest: Path) -> None:
        """Test --variant accepts upper case names."""
        out = tmp_path / "r.json"
        code, _ = run(
            ["evaluate", "--manifest", str(manifest), "--variant", "GCN", "--repeats", "1", "--out", str(out)]
            + TINY_TRAIN
        )
        assert code == EXIT_OK
        assert json.loads(out.read_text(encoding="utf-8"))["variant"] == "gcn"

    def test_jobs_from_environment(
        self, tmp_path: Path, manifest: Path, monkeypatch: pytest.MonkeyPatch
    ) -> None:
        """Test SCPGCN_JOBS runs repeats in parallel without changing the report."""
        serial = tmp_path / "serial.json"
        run(["evaluate", "--manifest", str(manifest), "--repeats", "2", "--out", str(serial)] + TINY_TRAIN)
        monkeypatch.setenv("SCPGCN_JOBS", "2")
        threaded = tmp_path / "threaded.json"
        run(["evaluate", "--manifest", str(manifest), "--repeats", "2", "--out", str(threaded)] + TINY_TRAIN)
        assert serial.read_bytes() == threaded.read_bytes()


class TestOtherCommands:
    """Tests for cluster, train, embed, gridsearch and ablate."""

    def test_cluster(self, tmp_path: Path, manifest: Path) -> None:
        """Test cluster writes one membership record per subject."""
        out = tmp_path / "communities.json"
        code, _ = run(["cluster", "--manifest", str(manifest), "--communities", "2", "--out", str(out)])
        assert code == EXIT_OK
        data = json.loads(out.read_text(encoding="utf-8"))
        assert data["C"] == 2
        assert len(data["instances"]) == 10
        first = data["instances"][0]
        assert first["id"] == "sub000"
        assert len(first["membership"]) == 12
        assert first["membership"][0] == 0

    def test_train_and_embed(self, tmp_path: Path, manifest: Path) -> None:
        """Test a trained model embeds every subject into n * d columns."""
        model = tmp_path / "model.json"
        history = tmp_path / "history.csv"
        code, _ = run(
            ["train", "--manifest", str(manifest), "--model-out", str(model), "--history-out", str(history)]
            + TINY_TRAIN
        )
        assert code == EXIT_OK
        assert len(_csv_rows(history)) == 3

        out = tmp_path / "emb.csv"
        code, _ = run(["embed", "--manifest", str(manifest), "--model-in", str(model), "--out", str(out)] + TINY_TRAIN)
        assert code == EXIT_OK
        rows = _csv_rows(out)
        assert rows[0][:2] == ["id", "g0"]
        assert len(rows[0]) == 1 + 12 * 2
        assert len(rows) == 11

    def test_embed_size_mismatch(self, tmp_path: Path, manifest: Path) -> None:
        """Test embedding a dataset of another size is a runtime error."""
        model = tmp_path / "model.json"
        run(["train", "--manifest", str(manifest), "--model-out", str(model)] + TINY_TRAIN)
        other = _generate(tmp_path / "other", "--n", "14")
        code, message = run(
            ["embed", "--manifest", str(other), "--model-in", str(model), "--out", str(tmp_path / "e.csv")]
            + TINY_TRAIN
        )
        assert code == EXIT_RUNTIME
        assert message is not None and "nodes" in message

    def test_embed_corrupt_checkpoint(self, tmp_path: Path, manifest: Path) -> None:
        """Test a checkpoint with a broken parameter entry exits 1 instead of crashing."""
        model = tmp_path / "model.json"
        run(["train", "--manifest", str(manifest), "--model-out", str(model)] + TINY_TRAIN)
        data = json.loads(model.read_text())
        del data["parameters"]["fc_bias"]["values"]
        model.write_text(json.dumps(data))
        code, message = run(
            ["embed", "--manifest", str(manifest), "--model-in", str(model), "--out", str(tmp_path / "e.csv")]
            + TINY_TRAIN
        )
        assert code == EXIT_RUNTIME
        assert message is not None and "fc_bias" in message

    def test_gridsearch_with_refinement(self, tmp_path: Path, manifest: Path) -> None:
        """Test coarse and refined sweeps are written."""
        out = tmp_path / "grid.json"
        code, _ = run(
            ["gridsearch", "--manifest", str(manifest), "--alpha-grid", "0.1", "--beta-grid", "1",
             "--c-grid", "2", "--folds", "2", "--refine-step", "0.5", "--refine-span", "1",
             "--out", str(out)] + TINY_TRAIN
        )
        assert code == EXIT_OK
        data = json.loads(out.read_text(encoding="utf-8"))
        assert data["coarse"]["best"]["C"] == 2
        assert [p["beta"] for p in data["refined"]["points"]] == [0.5, 1.0, 1.5]
        assert len(data["train_ids"]) == 6
        assert len(_csv_rows(tmp_path / "grid_sweep.csv")) == 3
        assert len(_csv_rows(tmp_path / "grid_refined_sweep.csv")) == 7

    def test_ablate(self, tmp_path: Path, manifest: Path) -> None:
        """Test the ablation CSV has one row per variant."""
        out = tmp_path / "ablation.json"
        code, _ = run(["ablate", "--manifest", str(manifest), "--repeats", "1", "--out", str(out)] + TINY_TRAIN)
        assert code == EXIT_OK
        rows = _csv_rows(tmp_path / "ablation.csv")
        assert rows[0] == ["variant", "repeats", "mean_accuracy", "std_accuracy", "mean_f1", "std_f1"]
        assert [r[0] for r in rows[1:]] == [
            "gcn", "cp-gcn", "s-gcn", "scp-gcn",
            "scp-gcn-fmri", "scp-gcn-dti", "scp-gcn-fmri-dti", "scp-gcn-dti-fmri",
        ]


class TestExitCodes:
    """Tests for usage and runtime failures."""

    def test_unknown_flag(self, manifest: Path) -> None:
        """Test an unknown flag is a usage error."""
        code, _ = run(["evaluate", "--manifest", str(manifest), "--out", "x.json", "--gamma", "1"])
        assert code == EXIT_USAGE

    def test_unknown_variant(self, manifest: Path) -> None:
        """Test an unknown variant is a usage error."""
        code, _ = run(["evaluate", "--manifest", str(manifest), "--out", "x.json", "--variant", "gat"])
        assert code == EXIT_USAGE

    def test_missing_manifest(self, tmp_path: Path) -> None:
        """Test a missing manifest is a usage error naming the file."""
        code, message = run(["evaluate", "--manifest", str(tmp_path / "nope.json"), "--out", str(tmp_path / "r.json")])
        assert code == EXIT_USAGE
        assert message is not None and "nope.json" in message

    def test_corrupt_manifest(self, tmp_path: Path) -> None:
        """Test an unreadable manifest is a runtime error."""
        path = tmp_path / "manifest.json"
        path.write_text("{broken", encoding="utf-8")
        code, _ = run(["evaluate", "--manifest", str(path), "--out", str(tmp_path / "r.json")])
        assert code == EXIT_RUNTIME

    def test_invalid_config_value(self, manifest: Path, tmp_path: Path) -> None:
        """Test an invalid hyperparameter is a usage error."""
        code, _ = run(["train", "--manifest", str(manifest), "--model-out", str(tmp_path / "m.json"), "--margin", "0"])
        assert code == EXIT_USAGE

    def test_main_reports_errors(self, tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
        """Test main prints the error and returns the exit code."""
        code = main(["evaluate", "--manifest", str(tmp_path / "nope.json"), "--out", str(tmp_path / "r.json")])
        assert code == EXIT_USAGE
        assert "error:" in capsys.readouterr().err
