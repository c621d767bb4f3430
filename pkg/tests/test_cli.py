import json

import numpy as np
from click.testing import CliRunner

from itemseg.cli import main
from itemseg.items import AnnotatedDocument, write_label_file

from fixture_servidyne import ITEM1_LINE, ITEM7_LINE, ITEM9_LINE, build_document


def _write_converted(path, docs):
    with open(path, "w", encoding="utf-8") as fh:
        for doc_id, texts in docs:
            fh.write(json.dumps({"doc_id": doc_id, "lines": texts}) + "\n")


def test_segment_rule_on_fixture(tmp_path):
    lines, _ = build_document()
    inp = tmp_path / "docs.jsonl"
    out = tmp_path / "pred.jsonl"
    _write_converted(inp, [("servidyne", [ln.text for ln in lines])])
    result = CliRunner().invoke(
        main, ["segment", "--method", "rule", "--input", str(inp),
               "--output", str(out)]
    )
    assert result.exit_code == 0, result.output
    record = json.loads(out.read_text().strip())
    assert record["doc_id"] == "servidyne"
    labels = record["labels"]
    assert labels[ITEM1_LINE] == "B1"
    assert labels[ITEM7_LINE] == "B7"
    assert labels[ITEM9_LINE] == "B9"


def test_eval_gold_against_itself(tmp_path):
    lines, labels = build_document()
    gold = tmp_path / "gold.jsonl"
    write_label_file(gold, [AnnotatedDocument("d", lines, labels)])
    result = CliRunner().invoke(
        main, ["eval", "--gold", str(gold), "--pred", str(gold)]
    )
    assert result.exit_code == 0, result.output
    rows = [r for r in result.output.strip().splitlines()[1:] if r]
    for row in rows:
        assert row.rsplit(",", 1)[1] == "1.0000"


def test_synth_then_train_crf_then_segment_then_eval(tmp_path):
    runner = CliRunner()
    gold = tmp_path / "gold.jsonl"
    r = runner.invoke(
        main, ["synth", "--seed", "5", "--n-docs", "12", "--gold", str(gold)]
    )
    assert r.exit_code == 0, r.output

    model = tmp_path / "crf.json"
    r = runner.invoke(
        main, ["train-crf", "--gold", str(gold), "--model", str(model),
               "--max-iter", "40"]
    )
    assert r.exit_code == 0, r.output
    assert model.exists()

    # reuse gold lines as conversion output
    docs = []
    for raw in gold.read_text().splitlines():
        rec = json.loads(raw)
        docs.append((rec["doc_id"], rec["lines"]))
    inp = tmp_path / "docs.jsonl"
    _write_converted(inp, docs)
    pred = tmp_path / "pred.jsonl"
    r = runner.invoke(
        main, ["segment", "--method", "crf", "--input", str(inp),
               "--output", str(pred), "--model", str(model)]
    )
    assert r.exit_code == 0, r.output

    r = runner.invoke(main, ["eval", "--gold", str(gold), "--pred", str(pred)])
    assert r.exit_code == 0, r.output
    assert r.output.startswith("item,")


def test_synth_writes_embeddings(tmp_path):
    gold = tmp_path / "gold.jsonl"
    emb = tmp_path / "emb.lemb"
    r = CliRunner().invoke(
        main, ["synth", "--seed", "3", "--n-docs", "4", "--gold", str(gold),
               "--embeddings", str(emb), "--dim", "16"]
    )
    assert r.exit_code == 0, r.output
    from itemseg.embfile import read_embeddings

    docs, dim, meta = read_embeddings(emb)
    assert dim == 16
    assert len(docs) == 4
    assert meta["encoder"] == "pseudo-hash"


def test_train_lstm_missing_embeddings_exits_one(tmp_path):
    runner = CliRunner()
    gold = tmp_path / "gold.jsonl"
    emb = tmp_path / "emb.lemb"
    runner.invoke(main, ["synth", "--seed", "3", "--n-docs", "3",
                         "--gold", str(gold), "--embeddings", str(emb)])
    # drop one document's embeddings
    from itemseg.embfile import read_embeddings, write_embeddings

    docs, dim, _ = read_embeddings(emb)
    first = next(iter(docs))
    write_embeddings(emb, [(k, v) for k, v in docs.items() if k != first], dim)
    r = runner.invoke(
        main, ["train-lstm", "--gold", str(gold), "--embeddings", str(emb),
               "--model", str(tmp_path / "m.blsm"), "--max-epochs", "1"]
    )
    assert r.exit_code == 1
    assert "no embeddings" in r.output


def test_segment_llm_mock_backend(tmp_path):
    texts = ["filler"] * 30
    texts[5] = "ITEM 1. BUSINESS"
    texts[20] = "ITEM 7. MD&A"
    inp = tmp_path / "docs.jsonl"
    _write_converted(inp, [("d", texts)])
    script = tmp_path / "script.jsonl"
    rows = "\n".join(
        f"Item {i},NA" for i in
        ["1A", "2", "3", "4", "5", "6", "7A", "8", "9", "9A",
         "10", "11", "12", "13", "14", "15"]
    )
    script.write_text(json.dumps({"response": f"Item 1,5\nItem 7,20\n{rows}"}) + "\n")
    out = tmp_path / "pred.jsonl"
    r = CliRunner().invoke(
        main, ["segment", "--method", "llm", "--input", str(inp),
               "--output", str(out), "--backend", f"mock:{script}"]
    )
    assert r.exit_code == 0, r.output
    labels = json.loads(out.read_text())["labels"]
    assert labels[5] == "B1" and labels[20] == "B7"
    assert labels[0] == "O"


def test_stats_command(tmp_path):
    gold = tmp_path / "gold.jsonl"
    CliRunner().invoke(main, ["synth", "--seed", "1", "--n-docs", "5",
                              "--gold", str(gold)])
    r = CliRunner().invoke(main, ["stats", "--gold", str(gold)])
    assert r.exit_code == 0, r.output
    header = r.output.splitlines()[0]
    assert header == "item,avg_order,avg_word_length,avg_line_length,prevalence"
    assert len(r.output.splitlines()) > 1


def test_unknown_option_exits_two():
    r = CliRunner().invoke(main, ["segment", "--bogus"])
    assert r.exit_code == 2


def test_missing_input_exits_two(tmp_path):
    r = CliRunner().invoke(
        main, ["segment", "--method", "rule",
               "--input", str(tmp_path / "nope.jsonl"),
               "--output", str(tmp_path / "out.jsonl")]
    )
    assert r.exit_code == 2


def test_config_file_supplies_defaults(tmp_path):
    gold = tmp_path / "gold.jsonl"
    CliRunner().invoke(main, ["synth", "--seed", "2", "--n-docs", "5",
                              "--gold", str(gold)])
    cfg = tmp_path / "cfg.toml"
    cfg.write_text("[crf]\nl2 = 7.5\nmax_iter = 5\n")
    model = tmp_path / "crf.json"
    r = CliRunner().invoke(
        main, ["--config", str(cfg), "train-crf", "--gold", str(gold),
               "--model", str(model)]
    )
    assert r.exit_code == 0, r.output
    payload = json.loads(model.read_text())
    assert payload["l2"] == 7.5
    # a flag still overrides the file
    r = CliRunner().invoke(
        main, ["--config", str(cfg), "train-crf", "--gold", str(gold),
               "--model", str(model), "--l2", "2.0", "--max-iter", "5"]
    )
    assert r.exit_code == 0, r.output
    assert json.loads(model.read_text())["l2"] == 2.0


def test_atomic_output_no_temp_left_behind(tmp_path):
    lines, _ = build_document()
    inp = tmp_path / "docs.jsonl"
    out = tmp_path / "pred.jsonl"
    _write_converted(inp, [("d", [ln.text for ln in lines])])
    r = CliRunner().invoke(
        main, ["segment", "--method", "rule", "--input", str(inp),
               "--output", str(out)]
    )
    assert r.exit_code == 0
    leftovers = [p.name for p in tmp_path.iterdir() if p.name.startswith(".itemseg-")]
    assert leftovers == []
