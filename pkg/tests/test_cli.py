"""Command-line interface: every subcommand, exit codes, manifests,
config files, and output reproducibility."""

import json

import pytest

from telerank.cli import main


@pytest.fixture()
def workspace(tmp_path):
    """Tiny corpus where each query's relevant document repeats its terms."""
    corpus = tmp_path / "corpus.jsonl"
    docs = []
    for i in range(3):
        docs.append({
            "id": f"rel{i}",
            "title": f"topic {i}",
            "body": f"term{i} term{i} term{i} is discussed. More on term{i} here.",
        })
        docs.append({
            "id": f"off{i}",
            "body": f"term{i} appears once among filler text number {i}. Nothing else.",
        })
    corpus.write_text("\n".join(json.dumps(d) for d in docs) + "\n")

    queries = tmp_path / "queries.tsv"
    queries.write_text("".join(f"q{i}\tterm{i}\n" for i in range(3)))

    qrels = tmp_path / "qrels.txt"
    qrels.write_text("".join(f"q{i} 0 rel{i} 1\n" for i in range(3)))

    pqrels = tmp_path / "passage_qrels.txt"
    pqrels.write_text("".join(f"q{i} rel{i} 0 1\n" for i in range(3)))
    return tmp_path


def _run_ok(argv):
    rc = main([str(a) for a in argv])
    assert rc == 0
    return rc


def _pipeline(ws, run_name="first.run"):
    idx = ws / "corpus.idx"
    run = ws / run_name
    passages = ws / "passages.jsonl"
    _run_ok(["index", "build", "--corpus", ws / "corpus.jsonl", "--format", "jsonl",
             "--out", idx])
    _run_ok(["retrieve", "--index", idx, "--queries", ws / "queries.tsv",
             "--model", "bm25", "--top-k", "5", "--run-out", run])
    _run_ok(["chunk", "--corpus", ws / "corpus.jsonl", "--format", "jsonl",
             "--policy", "sentence100", "--out", passages])
    return idx, run, passages


class TestPipeline:
    def test_full_flow(self, workspace, capsys):
        ws = workspace
        idx, run, passages = _pipeline(ws)
        assert (ws / "corpus.idx.manifest.json").exists()

        _run_ok(["folds", "--queries", ws / "queries.tsv", "--k", "3",
                 "--seed", "123", "--out", ws / "folds.json"])

        _run_ok(["label", "--policy", "teacher", "--tau", "0.5",
                 "--scorer", f"oracle:{ws / 'passage_qrels.txt'}",
                 "--run", run, "--qrels", ws / "qrels.txt",
                 "--queries", ws / "queries.tsv", "--passages", passages,
                 "--out", ws / "pool.jsonl"])
        pool_lines = [json.loads(l) for l in (ws / "pool.jsonl").read_text().splitlines()]
        assert any(r["label"] == "positive" for r in pool_lines)
        assert any(r["label"] == "negative" for r in pool_lines)

        _run_ok(["sample", "--pool", ws / "pool.jsonl", "--seed", "7",
                 "--out", ws / "train.jsonl"])
        train = [json.loads(l) for l in (ws / "train.jsonl").read_text().splitlines()]
        n_pos = sum(1 for r in train if r["label"] == "positive")
        n_neg = len(train) - n_pos
        assert n_pos == n_neg > 0

        _run_ok(["rerank", "--run", run, "--passages", passages,
                 "--scorer", f"oracle:{ws / 'passage_qrels.txt'}",
                 "--agg", "maxp", "--tag", "oracle-maxp",
                 "--out", ws / "reranked.run"])

        capsys.readouterr()
        _run_ok(["evaluate", "--run", ws / "reranked.run", "--qrels", ws / "qrels.txt",
                 "--metrics", "map,p20,ndcg20"])
        out = capsys.readouterr().out
        map_line = next(l for l in out.splitlines() if l.startswith("map"))
        assert "1.000000" in map_line

        _run_ok(["compare", "--run-a", ws / "reranked.run", "--run-b", run,
                 "--qrels", ws / "qrels.txt", "--metric", "map", "--bonferroni", "2"])

        _run_ok(["bench", "--queries", ws / "queries.tsv", "--index", idx,
                 "--corpus", ws / "corpus.jsonl", "--format", "jsonl",
                 "--scorer", f"oracle:{ws / 'passage_qrels.txt'}",
                 "--agg", "maxp", "--top-k", "5",
                 "--csv", ws / "timings.csv"])
        assert (ws / "timings.csv").read_text().startswith("query_id,milliseconds")

    def test_rerank_from_scores_file(self, workspace):
        ws = workspace
        _, run, passages = _pipeline(ws)
        _run_ok(["rerank", "--run", run, "--passages", passages,
                 "--scorer", f"oracle:{ws / 'passage_qrels.txt'}",
                 "--scores-out", ws / "scores.jsonl",
                 "--agg", "maxp", "--out", ws / "rr1.run"])
        _run_ok(["rerank", "--run", run, "--passage-scores", ws / "scores.jsonl",
                 "--agg", "maxp", "--out", ws / "rr2.run"])
        assert (ws / "rr1.run").read_text() == (ws / "rr2.run").read_text()


class TestReproducibility:
    def test_same_flags_byte_identical_outputs(self, workspace):
        ws = workspace
        _pipeline(ws, "a.run")
        first = [(ws / "a.run").read_bytes(), (ws / "passages.jsonl").read_bytes()]
        _pipeline(ws, "b.run")
        assert (ws / "b.run").read_bytes() == first[0]
        assert (ws / "passages.jsonl").read_bytes() == first[1]

    def test_manifest_contents(self, workspace):
        ws = workspace
        _pipeline(ws)
        manifest = json.loads((ws / "first.run.manifest.json").read_text())
        assert manifest["subcommand"] == "retrieve"
        assert manifest["flags"]["top_k"] == 5
        assert str(ws / "corpus.idx") in manifest["inputs"]
        assert len(manifest["inputs"][str(ws / "corpus.idx")]) == 64  # sha256 hex

    def test_label_identical_across_thread_counts(self, workspace):
        ws = workspace
        _, run, passages = _pipeline(ws)
        for threads, name in ((1, "pool1.jsonl"), (8, "pool8.jsonl")):
            _run_ok(["label", "--policy", "teacher",
                     "--scorer", f"oracle:{ws / 'passage_qrels.txt'}",
                     "--run", run, "--qrels", ws / "qrels.txt",
                     "--queries", ws / "queries.tsv", "--passages", passages,
                     "--threads", threads, "--out", ws / name])
        assert (ws / "pool1.jsonl").read_bytes() == (ws / "pool8.jsonl").read_bytes()


class TestExitCodes:
    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert capsys.readouterr().out.startswith("telerank ")

    def test_unknown_flag_is_usage_error(self, workspace):
        with pytest.raises(SystemExit) as exc:
            main(["evaluate", "--run", "x", "--qrels", "y", "--frobnicate"])
        assert exc.value.code == 2

    def test_missing_file_is_runtime_error(self, tmp_path, capsys):
        rc = main(["evaluate", "--run", str(tmp_path / "no.run"),
                   "--qrels", str(tmp_path / "no.qrels")])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_leakage_gate_exit_code(self, workspace):
        ws = workspace
        _, run, passages = _pipeline(ws)
        _run_ok(["folds", "--queries", ws / "queries.tsv", "--k", "3",
                 "--out", ws / "folds.json"])
        rc = main([str(a) for a in [
            "label", "--policy", "teacher",
            "--scorer", f"oracle:{ws / 'passage_qrels.txt'}",
            "--run", run, "--qrels", ws / "qrels.txt",
            "--queries", ws / "queries.tsv", "--passages", passages,
            "--folds", ws / "folds.json", "--round", "0",
            "--out", ws / "leaky.jsonl",
        ]])
        assert rc == 1  # all three queries are labeled; one sits in the test fold


class TestConfigFile:
    def test_config_presets_flags(self, workspace):
        ws = workspace
        idx, _, _ = _pipeline(ws)
        config = ws / "telerank.conf"
        config.write_text("top-k = 2\nmodel = bm25  # comment\n")
        _run_ok(["retrieve", "--config", config, "--index", idx,
                 "--queries", ws / "queries.tsv", "--run-out", ws / "cfg.run"])
        lines = (ws / "cfg.run").read_text().splitlines()
        per_query = {}
        for line in lines:
            per_query.setdefault(line.split()[0], []).append(line)
        assert all(len(v) <= 2 for v in per_query.values())

    def test_explicit_flag_beats_config(self, workspace):
        ws = workspace
        idx, _, _ = _pipeline(ws)
        config = ws / "telerank.conf"
        config.write_text("top-k = 2\n")
        _run_ok(["retrieve", "--config", config, "--index", idx,
                 "--queries", ws / "queries.tsv", "--top-k", "1",
                 "--run-out", ws / "cfg1.run"])
        lines = (ws / "cfg1.run").read_text().splitlines()
        assert len(lines) == 3  # one entry per query
