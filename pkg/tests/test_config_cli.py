import csv
import json
import shutil

import pytest

from pdfir.cli import main
from pdfir.config import ConfigError, PipelineConfig, load_manifest
from pdfir.embed import CbowEmbedder
from pdfir.gin import GINClassifier, MeanPoolDNNClassifier
from pdfir.synthetic import write_corpus

TINY_CFG = {"seed": 1, "embed": {"dim": 8, "epochs": 2},
            "gin": {"hidden": 8, "epochs": 2}, "dnn": {"hidden": [8], "epochs": 2}}


# ---------------------------------------------------------------------------
# configuration


def test_defaults_build_estimators():
    cfg = PipelineConfig()
    assert isinstance(cfg.make_embedder(), CbowEmbedder)
    assert isinstance(cfg.make_classifier(), GINClassifier)
    assert cfg.attack["budgets"] == [0, 10, 100, 1000]


@pytest.mark.parametrize("data", [
    {"nope": 1},
    {"embed": {"dimm": 3}},
    {"gin": {"hidden": 0}},
    {"scheme": "glove"},
    {"classifier": "svm"},
    {"attack": {"method": "magic"}},
    {"seed": -1},
])
def test_bad_configs_rejected(data):
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict(data)


def test_overrides_and_digest(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(TINY_CFG))
    cfg = PipelineConfig.load(path, {"gin.epochs": 5, "seed": None, "classifier": "dnn"})
    assert cfg.gin["epochs"] == 5 and cfg.seed == 1
    assert isinstance(cfg.make_classifier(), MeanPoolDNNClassifier)
    assert cfg.make_classifier().hidden == (8,)
    assert cfg.digest() == PipelineConfig.from_dict(cfg.to_dict()).digest()
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError):
        PipelineConfig.load(tmp_path / "bad.json")


def test_manifest_from_folders_dedupes(tmp_path, caplog):
    write_corpus(tmp_path, 2, 2, seed=0)
    shutil.copy(tmp_path / "benign" / sorted((tmp_path / "benign").iterdir())[0].name, tmp_path / "benign" / "zz.pdf")
    manifest = load_manifest(tmp_path)
    assert len(manifest) == 4
    assert manifest.labels == [0, 0, 1, 1]
    assert "same content" in caplog.text


def test_manifest_csv_and_conflicts(tmp_path):
    write_corpus(tmp_path, 1, 1, seed=0)
    b = sorted((tmp_path / "benign").iterdir())[0]
    m = sorted((tmp_path / "malicious").iterdir())[0]
    rows = [["path", "label"], [b.relative_to(tmp_path), "benign"], [m.relative_to(tmp_path), "1"]]
    with open(tmp_path / "list.csv", "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    assert load_manifest(tmp_path / "list.csv").labels == [0, 1]
    shutil.copy(b, tmp_path / "malicious" / "copy.pdf")
    with pytest.raises(ConfigError):
        load_manifest(tmp_path)


# ---------------------------------------------------------------------------
# command line


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "cfg.json"
    cfg.write_text(json.dumps(TINY_CFG))
    assert main(["synth", "-o", str(root / "data"), "--benign", "8", "--malicious", "8", "--fixtures"]) == 0
    common = ["--data", str(root / "data"), "--config", str(cfg)]
    assert main(["pretrain", *common, "-o", str(root / "emb.pov")]) == 0
    assert main(["train", *common, "--embedding", str(root / "emb.pov"), "-o", str(root / "gin.pov")]) == 0
    return root, common


def test_parse_and_graph_commands(pipeline, capsys):
    root, _ = pipeline
    assert main(["parse", str(root / "data" / "malformed"), "-o", str(root / "ir")]) == 0
    out = capsys.readouterr().out
    assert "E1" in out
    target = root / "ir" / "e2_in_array"
    assert (target / "program.ir").exists()
    assert (target / "diagnostics.tsv").read_text().startswith("E2\t")
    assert main(["graph", str(target), "-o", str(root / "g.json")]) == 0
    graph = json.loads((root / "g.json").read_text())
    assert {"nodes", "edges"} == set(graph)


def test_pretrain_outputs(pipeline):
    root, _ = pipeline
    metrics = json.loads((root / "emb.pov.metrics.json").read_text())
    assert metrics["split"] == {"train": 11, "test": 3, "valid": 2}
    assert 0.0 <= metrics["cloze_accuracy"] <= 1.0
    assert (root / "emb.pov.log").read_text().splitlines()[0] == "epoch\tloss\tmetric"


def test_train_metrics(pipeline):
    root, _ = pipeline
    metrics = json.loads((root / "gin.pov.metrics.json").read_text())
    assert metrics["n_train"] == 11 and metrics["n_test"] == 5


def test_classify_and_eval(pipeline, capsys):
    root, common = pipeline
    models = ["--embedding", str(root / "emb.pov"), "--model", str(root / "gin.pov")]
    assert main(["classify", str(root / "data" / "benign"), *models, "-o", str(root / "out.csv")]) == 0
    rows = list(csv.DictReader(open(root / "out.csv")))
    assert len(rows) == 8 and set(rows[0]) == {"path", "label", "confidence_malicious"}
    assert main(["eval", "--data", str(root / "data"), *models]) == 0
    metrics = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert metrics["tp"] + metrics["fn"] + metrics["tn"] + metrics["fp"] == 16


@pytest.mark.parametrize("method", ["gradargmax", "genetic", "random_noise"])
def test_attack_command(pipeline, method):
    root, common = pipeline
    out = root / f"att-{method}.jsonl"
    args = ["attack", *common, "--embedding", str(root / "emb.pov"), "--model", str(root / "gin.pov"),
            "--method", method, "--budgets", "0,2", "--max-queries", "30", "-o", str(out)]
    assert main(args) == 0
    reports = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(reports) == 10
    assert all(r["queries"] <= 30 and 0 <= r["rpr"] <= 1 for r in reports)
    summary = out.with_suffix(".csv").read_text().splitlines()
    assert summary[0] == "budget,tra,mean_rpr" and len(summary) == 3


def test_dnn_baseline_train(pipeline):
    root, common = pipeline
    assert main(["train", *common, "--embedding", str(root / "emb.pov"), "--dnn-baseline",
                 "-o", str(root / "dnn.pov")]) == 0
    assert json.loads((root / "dnn.pov.metrics.json").read_text())["model"] == "dnn"


def test_exit_codes(pipeline, tmp_path):
    root, common = pipeline
    assert main(["parse", str(tmp_path / "missing.pdf"), "-o", str(tmp_path / "o")]) == 2
    assert main(["frobnicate"]) == 1
    assert main(["attack", *common, "--embedding", "e", "--model", "m", "--budgets", "a,b", "-o", "x"]) == 1
    (tmp_path / "bad.json").write_text(json.dumps({"gin": {"hidden": -1}}))
    assert main(["train", "--data", str(root / "data"), "--config", str(tmp_path / "bad.json"),
                 "--embedding", str(root / "emb.pov"), "-o", str(tmp_path / "m.pov")]) == 3


def test_mismatched_embedding_rejected(pipeline, tmp_path):
    root, common = pipeline
    other = tmp_path / "other.pov"
    assert main(["pretrain", "--data", str(root / "data"), "--config", str(root / "cfg.json"),
                 "--seed", "9", "-o", str(other)]) == 0
    code = main(["eval", "--data", str(root / "data"), "--embedding", str(other), "--model", str(root / "gin.pov")])
    assert code == 3


def test_damaged_checkpoint_rejected(pipeline, tmp_path):
    root, _ = pipeline
    bad = tmp_path / "bad.pov"
    bad.write_bytes((root / "emb.pov").read_bytes()[:50])
    assert main(["classify", str(root / "data" / "benign"), "--embedding", str(bad),
                 "--model", str(root / "gin.pov")]) == 3
