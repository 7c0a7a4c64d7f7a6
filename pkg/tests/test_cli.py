import json

import numpy as np
import pytest

from conftest import make_graph

from dpevent.cli import main
from dpevent.corpus import SynthConfig, export, generate
from dpevent.entropy import Partition
from dpevent.persist import (read_graph_tsv, read_json, read_partition_csv, write_graph_tsv,
                             write_partition_csv)


@pytest.fixture(scope="module")
def corpus_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "corpus.jsonl"
    export(generate(SynthConfig(num_events=3, points_per_event=30, dim=16,
                                attribute_sharing_prob=0.7, seed=11)), path)
    return path


def read_bytes(path):
    return path.read_bytes()


class TestPersist:
    def test_graph_tsv_round_trip(self, tmp_path, rng):
        g = make_graph(4, [(0, 1, 0.123456789123), (1, 2, 1.0), (0, 3, 1e-6)])
        ids = ["a", "b", "c", "d"]
        path = tmp_path / "g.tsv"
        write_graph_tsv(path, g, ids)
        loaded = read_graph_tsv(path, ids)
        assert loaded.n == 4
        assert np.array_equal(loaded.u, g.u) and np.array_equal(loaded.v, g.v)
        assert np.allclose(loaded.w, g.w, rtol=1e-9)
        assert np.array_equal(loaded.provenance, g.provenance)
        first = path.read_text().splitlines()[0].split("\t")
        assert first[:2] == ["a", "b"] and first[3] == "SE"

    def test_partition_csv_round_trip(self, tmp_path):
        ids = ["m1", "m2", "m3"]
        part = Partition(np.array([0, 1, 0]))
        path = tmp_path / "p.csv"
        write_partition_csv(path, ids, part)
        assert path.read_text().splitlines()[0] == "id,cluster"
        got_ids, got_clusters = read_partition_csv(path)
        assert got_ids == ids and got_clusters == [0, 1, 0]


class TestPipelineCommands:
    def test_synth_outputs(self, tmp_path):
        out = tmp_path / "syn"
        assert main(["synth", "--out", str(out), "--events", "2", "--points", "5",
                     "--dim", "8", "--seed", "3"]) == 0
        lines = (out / "corpus.jsonl").read_text().splitlines()
        assert len(lines) == 10
        manifest = read_json(out / "manifest.json")
        assert manifest["seed"] == 3 and "config_hash" in manifest
        config = read_json(out / "config.json")
        assert config["config_hash"]

    def test_synth_rerun_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        args = ["synth", "--events", "2", "--points", "4", "--dim", "4", "--seed", "9"]
        main(args + ["--out", str(a)])
        main(args + ["--out", str(b)])
        assert read_bytes(a / "corpus.jsonl") == read_bytes(b / "corpus.jsonl")
        assert read_bytes(a / "manifest.json") == read_bytes(b / "manifest.json")

    def test_full_pipeline(self, tmp_path, corpus_file):
        gdir, cdir, edir = (tmp_path / d for d in ("graphs", "clusters", "eval"))
        assert main(["build-graph", "--input", str(corpus_file), "--out", str(gdir),
                     "--epsilon", "off", "--seed", "2"]) == 0
        sidecar = read_json(gdir / "graph_block0.json")
        assert sidecar["epsilon"] == "off"
        assert sidecar["sensitivity_report"]["noise_scale"] == 0.0
        assert sidecar["knn_trace"]["chosen_k"] >= 1
        # off mode: weights are exact cosines of unit embeddings, within [floor, 1]
        graph = read_graph_tsv(gdir / "graph_block0.tsv", sidecar["nodes"])
        assert graph.w.max() <= 1.0

        assert main(["cluster", "--graphs", str(gdir), "--out", str(cdir)]) == 0
        run = read_json(cdir / "run_block0.json")
        h2s = [r["h2"] for r in run["rounds"]]
        assert all(b <= a + 1e-12 for a, b in zip(h2s, h2s[1:]))

        assert main(["evaluate", "--input", str(corpus_file), "--partitions", str(cdir),
                     "--out", str(edir)]) == 0
        summary = read_json(edir / "metrics_summary.json")
        assert summary["mean_ari"] > 0.8
        block_metrics = read_json(edir / "metrics_block0.json")
        assert {"ami", "ari", "n", "num_true", "num_pred"} <= set(block_metrics)

    def test_build_graph_rerun_byte_identical(self, tmp_path, corpus_file):
        args = ["build-graph", "--input", str(corpus_file), "--epsilon", "5",
                "--mode", "mixed", "--seed", "4"]
        a, b = tmp_path / "a", tmp_path / "b"
        main(args + ["--out", str(a)])
        main(args + ["--out", str(b)])
        assert read_bytes(a / "graph_block0.tsv") == read_bytes(b / "graph_block0.tsv")
        assert read_bytes(a / "graph_block0.json") == read_bytes(b / "graph_block0.json")

    def test_epsilon_changes_weights_not_ids(self, tmp_path, corpus_file):
        outs = {}
        for eps in ("10", "15"):
            out = tmp_path / f"eps{eps}"
            main(["build-graph", "--input", str(corpus_file), "--out", str(out),
                  "--epsilon", eps, "--mode", "global", "--seed", "4"])
            outs[eps] = (out / "graph_block0.tsv").read_text()
        assert outs["10"] != outs["15"]

    def test_small_block_skipped_with_warning(self, tmp_path, capsys):
        path = tmp_path / "tiny.jsonl"
        rows = [{"id": "a", "block": 0, "embedding": [1.0, 0.0], "attributes": {}, "label": None},
                {"id": "b", "block": 1, "embedding": [1.0, 0.0], "attributes": {}, "label": None},
                {"id": "c", "block": 1, "embedding": [0.0, 1.0], "attributes": {}, "label": None}]
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        out = tmp_path / "out"
        assert main(["build-graph", "--input", str(path), "--out", str(out)]) == 0
        err = capsys.readouterr().err
        assert "skipped" in err
        assert not (out / "graph_block0.tsv").exists()
        assert (out / "graph_block1.tsv").exists()

    def test_pooled_merges_blocks(self, tmp_path):
        path = tmp_path / "two_blocks.jsonl"
        rows = []
        for i in range(6):
            rows.append({"id": f"r{i}", "block": i % 2,
                         "embedding": [1.0, float(i) / 10], "attributes": {}, "label": "e"})
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        out = tmp_path / "out"
        assert main(["build-graph", "--input", str(path), "--out", str(out), "--pooled"]) == 0
        sidecar = read_json(out / "graph_block0.json")
        assert sidecar["n"] == 6

    def test_evaluate_skips_unlabeled(self, tmp_path, capsys):
        path = tmp_path / "nolabel.jsonl"
        rows = [{"id": f"r{i}", "block": 0, "embedding": [1.0, float(i + 1)],
                 "attributes": {}, "label": None} for i in range(4)]
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        gdir, cdir, edir = (tmp_path / d for d in ("g", "c", "e"))
        main(["build-graph", "--input", str(path), "--out", str(gdir)])
        main(["cluster", "--graphs", str(gdir), "--out", str(cdir)])
        assert main(["evaluate", "--input", str(path), "--partitions", str(cdir),
                     "--out", str(edir)]) == 1
        assert "unlabeled" in capsys.readouterr().err


class TestSweep:
    def test_sweep_rows_and_summary(self, tmp_path, corpus_file):
        out = tmp_path / "sweep"
        assert main(["sweep", "--input", str(corpus_file), "--out", str(out),
                     "--epsilons", "2,6", "--mode", "global", "--seed", "5"]) == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == "epsilon,block,ami,ari,s_mixed"
        assert len(lines) == 1 + 3  # two epsilons + off ceiling, one block each
        assert lines[-1].startswith("off,")
        summary = read_json(out / "sweep_summary.json")
        assert set(summary["mean_ari_by_epsilon"]) == {"2.0", "6.0"}
        assert "mean_ari_off" in summary


class TestSensitivityReport:
    def test_per_block_grid(self, tmp_path, corpus_file):
        out = tmp_path / "sens"
        assert main(["sensitivity-report", "--input", str(corpus_file), "--out", str(out),
                     "--epsilons", "0.5,15"]) == 0
        report = read_json(out / "sensitivity_block0.json")
        assert [r["epsilon"] for r in report["reports"]] == [0.5, 15.0]
        eps15 = report["reports"][1]
        assert eps15["chosen"] == "smooth"
        assert eps15["s_mixed"] == min(2.0, eps15["s_smooth"])
