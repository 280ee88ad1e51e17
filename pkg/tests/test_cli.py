import csv
import json

import pytest

from app.ingest import load_graph, save_graph
from app.reporting import read_json
from app.toy_graphs import medical_toy
from mpsgnn_cli import main
from tests.test_ingest import medical_database

GRAPH_FILES = ("relations.tsv", "node_types.tsv", "nodes.tsv", "edges.tsv", "labels.tsv", "ground_truth.json")
FAST_LEARN = ["--scoring-steps", "150", "--search-epochs", "300", "--epochs", "100"]


@pytest.fixture
def toy_dir(tmp_path):
    g, labels = medical_toy()
    save_graph(g, tmp_path / "toy", labels)
    return tmp_path / "toy"


def snapshot(directory):
    return {path.name: path.read_bytes() for path in sorted(directory.iterdir()) if path.is_file()}


def tree(directory):
    return {path.relative_to(directory).as_posix(): path.read_bytes()
            for path in sorted(directory.rglob("*")) if path.is_file()}


class TestGenerate:
    def test_rerun_is_byte_identical(self, tmp_path):
        args = ["generate", "--preset", "s1", "--targets", "80", "--seed", "7", "--quiet", "-o", str(tmp_path / "s1")]
        assert main(args) == 0
        first = snapshot(tmp_path / "s1")
        assert set(GRAPH_FILES) | {"run_manifest.json"} <= set(first)
        assert main(args) == 0
        assert snapshot(tmp_path / "s1") == first

    def test_spelled_out_scenario_matches_preset(self, tmp_path):
        common = ["--targets", "60", "--seed", "1", "--quiet"]
        assert main(["generate", "--preset", "s4", *common, "-o", str(tmp_path / "a")]) == 0
        assert main(["generate", "--relations", "5", "--count", "4", "--length", "2", *common,
                     "-o", str(tmp_path / "b")]) == 0
        for name in GRAPH_FILES:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        truth = read_json(tmp_path / "a" / "ground_truth.json")
        assert truth["threshold"] == 4
        assert truth["spec"]["num_relations"] == 5

    @pytest.mark.parametrize("argv", [
        [],
        ["generate"],
        ["generate", "--preset", "s9"],
        ["generate", "--preset", "s1", "--relations", "5"],
        ["generate", "--relations", "2", "--count", "2", "--length", "3"],
        ["frobnicate"],
    ])
    def test_bad_arguments_exit_one(self, tmp_path, argv):
        assert main(argv + ["-o", str(tmp_path)] if argv and argv[0] == "generate" else argv) == 1


class TestLearn:
    def test_medical_toy_fixture(self, tmp_path):
        out = tmp_path / "toy"
        assert main(["learn", "--fixture", "toy", "--beam", "1", "--lmax", "2", *FAST_LEARN,
                     "--quiet", "-o", str(out)]) == 0
        assert read_json(out / "metapaths.json") == [["b", "d"]]
        assert (out / "model_0.ckpt").exists()
        trace = read_json(out / "search_trace.json")
        assert trace["score_calls"] <= trace["call_bound"]
        metrics = read_json(out / "metrics.json")
        assert metrics["models"][0]["metapath"] == ["b", "d"]
        assert set(metrics["baselines"]) == {"majority", "degree"}
        g, labels, _ = load_graph(out / "graph")
        assert labels == {0: 1, 1: 0}

    def test_single_class_labels_exit_two(self, tmp_path):
        g, _ = medical_toy()
        save_graph(g, tmp_path / "graph", {0: 1, 1: 1})
        assert main(["learn", str(tmp_path / "graph"), "--quiet", "-o", str(tmp_path / "out")]) == 2

    def test_missing_graph_exits_two(self, tmp_path):
        assert main(["learn", str(tmp_path / "nowhere"), "--quiet", "-o", str(tmp_path / "out")]) == 2

    def test_config_file_with_flag_override(self, tmp_path):
        config_path = tmp_path / "run.json"
        config_path.write_text(json.dumps({"beam": 1, "lmax": 2, "scoring_steps": 150, "search_epochs": 300,
                                           "epochs": 100, "seed": 5}))
        out = tmp_path / "out"
        assert main(["learn", "--fixture", "toy", "--config", str(config_path), "--seed", "2",
                     "--quiet", "-o", str(out)]) == 0
        manifest = read_json(out / "run_manifest.json")
        assert manifest["seed"] == 2
        assert manifest["config"]["beam"] == 1
        assert manifest["config"]["lmax"] == 2

    def test_unknown_config_key_exits_one(self, tmp_path):
        config_path = tmp_path / "run.json"
        config_path.write_text(json.dumps({"beams": 1}))
        assert main(["learn", "--fixture", "toy", "--config", str(config_path), "-o", str(tmp_path)]) == 1


class TestTrainAndEvaluate:
    def test_train_then_evaluate(self, tmp_path, toy_dir):
        model_dir = tmp_path / "model"
        assert main(["train", str(toy_dir), "--metapath", "b,d", "--epochs", "100", "--quiet",
                     "-o", str(model_dir)]) == 0
        assert read_json(model_dir / "metrics.json")["metapaths"] == [["b", "d"]]

        eval_dir = tmp_path / "eval"
        assert main(["evaluate", str(toy_dir), "--model", str(model_dir / "model.ckpt"), "--fractions", "0",
                     "--sufficiency-perturbations", "10", "--quiet", "-o", str(eval_dir)]) == 0
        with open(eval_dir / "faithfulness.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        assert [float(row["fraction"]) for row in rows] == [0.0]
        assert float(rows[0]["necessity"]) == 0.0
        sufficiency = read_json(eval_dir / "sufficiency.json")
        assert sufficiency["verdict"] == "pass"
        assert sufficiency["self_test"]["changed"]

    def test_missing_model_exits_two(self, tmp_path, toy_dir):
        assert main(["evaluate", str(toy_dir), "--model", str(tmp_path / "absent.ckpt"), "--quiet",
                     "-o", str(tmp_path / "eval")]) == 2

    def test_train_without_metapath_or_ground_truth(self, tmp_path, toy_dir):
        assert main(["train", str(toy_dir), "--quiet", "-o", str(tmp_path / "out")]) == 1

    def test_unknown_relation_exits_one(self, tmp_path, toy_dir):
        assert main(["train", str(toy_dir), "--metapath", "b,z", "--quiet", "-o", str(tmp_path / "out")]) == 1


def test_oracle(toy_dir, capsys):
    assert main(["oracle", str(toy_dir), "--node", "0", "--metapath", "b,d", "--quiet"]) == 0
    result = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert result["occurrences"] == 4
    assert result["induced_nodes"] == 7
    assert result["induced_edges"] == 6
    assert main(["oracle", str(toy_dir), "--node", "99", "--metapath", "b", "--quiet"]) == 1


def test_ingest_with_supernodes(tmp_path):
    medical_database(tmp_path / "db", num_patients=20, num_medications=6, num_prescriptions=50)
    out = tmp_path / "graph"
    assert main(["ingest", str(tmp_path / "db" / "manifest.json"), "--group", "medication:ingredient",
                 "--quiet", "-o", str(out)]) == 0
    g, labels, report = load_graph(out)
    assert int((g.node_types == g.type_id("medication")).sum()) == 3
    assert len(labels) == 20
    assert report.node_ranges["medication"] == [20, 3]
    assert main(["ingest", str(tmp_path / "db" / "manifest.json"), "--group", "medication",
                 "--quiet", "-o", str(out)]) == 1


class TestRerunsAreByteIdentical:
    def rerun(self, argv, out):
        assert main(argv) == 0
        first = tree(out)
        assert "run_manifest.json" in first
        assert main(argv) == 0
        assert tree(out) == first
        return first

    def test_ingest(self, tmp_path):
        medical_database(tmp_path / "db", num_patients=20, num_medications=6, num_prescriptions=50)
        out = tmp_path / "graph"
        files = self.rerun(["ingest", str(tmp_path / "db" / "manifest.json"), "--group", "medication:ingredient",
                            "--quiet", "-o", str(out)], out)
        assert set(GRAPH_FILES) - {"ground_truth.json"} <= set(files)

    def test_learn(self, tmp_path):
        out = tmp_path / "learn"
        files = self.rerun(["learn", "--fixture", "toy", "--beam", "1", "--lmax", "2", *FAST_LEARN,
                            "--quiet", "-o", str(out)], out)
        assert {"metapaths.json", "search_trace.json", "metrics.json", "model_0.ckpt"} <= set(files)
        assert "graph/edges.tsv" in files

    def test_train_and_evaluate(self, tmp_path, toy_dir):
        model_dir = tmp_path / "model"
        self.rerun(["train", str(toy_dir), "--metapath", "b,d", "--epochs", "100", "--quiet",
                    "-o", str(model_dir)], model_dir)
        eval_dir = tmp_path / "eval"
        files = self.rerun(["evaluate", str(toy_dir), "--model", str(model_dir / "model.ckpt"),
                            "--fractions", "0,0.5,1", "--sufficiency-perturbations", "10", "--quiet",
                            "-o", str(eval_dir)], eval_dir)
        assert {"faithfulness.csv", "faithfulness.json", "sufficiency.json"} <= set(files)
