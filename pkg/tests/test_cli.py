import json

import pytest

from progsearch.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory):
    """generate -> index -> train once for the whole module."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    queries = root / "queries"
    index = root / "tree.idx"
    bundle = root / "bundle.json"
    assert main(["generate", "--kind", "walk", "--n", "1500", "--length", "32",
                 "--seed", "21", "--out", str(data)]) == 0
    assert main(["generate", "--kind", "walk", "--n", "300", "--length", "32",
                 "--seed", "22", "--out", str(queries)]) == 0
    assert main(["index", "--dataset", str(data) + ".json", "--kind", "dstree",
                 "--segments", "8", "--leaf-threshold", "40",
                 "--out", str(index)]) == 0
    assert main(["train", "--dataset", str(data) + ".json", "--index", str(index),
                 "--queries", str(queries) + ".json", "--k", "2",
                 "--witnesses", "40", "--train-queries", "40", "--moments", "8",
                 "--seed", "1", "--out", str(bundle)]) == 0
    return {"data": str(data) + ".json", "queries": str(queries) + ".json",
            "index": str(index), "bundle": str(bundle), "root": root}


class TestCli:
    def test_generate_writes_descriptor(self, artifacts):
        doc = json.loads((artifacts["root"] / "data.json").read_text())
        assert doc["n"] == 1500 and doc["len"] == 32

    def test_query_prints_outcome(self, artifacts, capsys):
        code, out, _ = run_cli(capsys, "query", "--dataset", artifacts["data"],
                               "--index", artifacts["index"],
                               "--bundle", artifacts["bundle"],
                               "--query-index", "5", "--policy", "none")
        assert code == 0
        doc = json.loads(out)
        assert doc["savings"] == 0.0
        assert doc["exact"] is True
        assert len(doc["ids"]) == 2

    def test_query_with_policy_reports_savings_fields(self, artifacts, capsys):
        code, out, _ = run_cli(capsys, "query", "--dataset", artifacts["data"],
                               "--index", artifacts["index"],
                               "--bundle", artifacts["bundle"],
                               "--query-index", "7", "--policy", "prob:0.05")
        assert code == 0
        doc = json.loads(out)
        assert 0.0 <= doc["savings"] < 1.0
        assert doc["total_leaves_without_stop"] >= 1

    def test_query_k_mismatch_is_explicit_error(self, artifacts, capsys):
        code = main(["query", "--dataset", artifacts["data"],
                     "--index", artifacts["index"], "--bundle", artifacts["bundle"],
                     "--k", "5", "--query-index", "0"])
        assert code != 0

    def test_query_distance_mismatch_is_explicit_error(self, artifacts):
        code = main(["query", "--dataset", artifacts["data"],
                     "--index", artifacts["index"], "--bundle", artifacts["bundle"],
                     "--distance", "dtw:3", "--query-index", "0"])
        assert code != 0

    def test_bench_preset_writes_report_and_figures(self, tmp_path, capsys):
        code, out, _ = run_cli(capsys, "bench", "--preset", "smoke",
                               "--workdir", str(tmp_path / "work"),
                               "--out", str(tmp_path / "report"), "--quiet")
        assert code == 0
        doc = json.loads(out)
        report = json.loads((tmp_path / "report" / "report.json").read_text())
        assert report["repetitions"] == 2
        assert (tmp_path / "report" / "report.csv").exists()
        assert len(doc["figures"]) == 3

    def test_bench_config_file(self, artifacts, tmp_path, capsys):
        config = {
            "dataset": artifacts["data"], "index_kind": "isax",
            "leaf_threshold": 40, "segment_count": 8, "k": 1,
            "n_w": 25, "n_r": 25, "n_t": 10, "repetitions": 1,
            "witness_pool": 60, "query_pool": 120,
            "checkpoints": [1, 2, 4, 8], "moment_count": 4, "seed": 2,
            "estimators": ["baseline", "witness", "kde2"],
            "policies": ["none", "prob:0.05"],
        }
        cfg_path = tmp_path / "bench.json"
        cfg_path.write_text(json.dumps(config))
        code, out, _ = run_cli(capsys, "bench", "--config", str(cfg_path),
                               "--out", str(tmp_path / "rep"), "--quiet")
        assert code == 0

    def test_error_exit_code_on_missing_file(self, capsys):
        code = main(["index", "--dataset", "/nonexistent.json", "--out", "/tmp/x.idx"])
        assert code != 0
