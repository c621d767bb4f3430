"""Batch command line: fetch, convert, train, segment, eval, and stats.

Option precedence is flags > environment > config file (TOML) > defaults.
All outputs are written atomically (temp file + rename).
"""

from __future__ import annotations

import json
import os
import sys
import tempfile
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from concurrent.futures import ThreadPoolExecutor

import click
import numpy as np

from . import crf, edgar, embfile, evalkit, llm, lstm, rules, synth
from .items import (
    AnnotatedDocument,
    TextLine,
    read_label_file,
    spans_to_labels,
    write_label_file,
)

ENV_CACHE_DIR = "ITEMSEG_CACHE_DIR"


def _atomic_write(path: str, payload: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".itemseg-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _setting(flag, cfg: dict, key: str, default, env: str | None = None):
    if flag is not None:
        return flag
    if env and env in os.environ:
        return os.environ[env]
    if key in cfg:
        return cfg[key]
    return default


def _read_converted(path: str) -> list[tuple[str, list[TextLine]]]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            raw = raw.strip()
            if not raw:
                continue
            record = json.loads(raw)
            lines = [TextLine(i, t) for i, t in enumerate(record["lines"])]
            docs.append((record["doc_id"], lines))
    return docs


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="TOML config file; flags override its values.")
@click.pass_context
def main(ctx, config_path):
    """Segment SEC 10-K filings into numbered items."""
    ctx.ensure_object(dict)
    ctx.obj["cfg"] = _load_config(config_path)


@main.command()
@click.option("--index", "index_path", required=True, type=click.Path(exists=True),
              help="EDGAR full-index master file.")
@click.option("--forms", default="10-K,10-K405", show_default=True)
@click.option("--cache-dir", default=None)
@click.option("--base-url", default=None)
@click.option("--user-agent", default=None)
@click.option("--rate", type=float, default=None, help="Max requests per second.")
@click.option("--limit", type=int, default=None, help="Fetch at most N filings.")
@click.option("--keep-going", is_flag=True)
@click.pass_context
def fetch(ctx, index_path, forms, cache_dir, base_url, user_agent, rate, limit,
          keep_going):
    """Download filings listed in a master index into the cache."""
    cfg = ctx.obj["cfg"].get("fetch", {})
    cache_dir = _setting(cache_dir, cfg, "cache_dir", "edgar-cache", ENV_CACHE_DIR)
    base_url = _setting(base_url, cfg, "base_url", edgar.DEFAULT_BASE_URL)
    user_agent = _setting(user_agent, cfg, "user_agent", "itemseg research tool")
    rate = float(_setting(rate, cfg, "rate", edgar.DEFAULT_RATE_LIMIT))

    with open(index_path, encoding="utf-8", errors="replace") as fh:
        refs = edgar.parse_master_index(fh.read(), set(forms.split(",")))
    if limit:
        refs = refs[:limit]
    limiter = edgar.RateLimiter(rate)
    failures = 0
    for ref in refs:
        try:
            edgar.fetch_filing(
                ref, cache_dir, base_url=base_url, user_agent=user_agent,
                rate_limiter=limiter,
            )
            click.echo(f"fetched {ref.path}")
        except edgar.FetchError as exc:
            failures += 1
            click.echo(f"error: {ref.path}: {exc}", err=True)
            if not keep_going:
                sys.exit(1)
    sys.exit(1 if failures else 0)


@main.command()
@click.option("--input", "inputs", required=True, multiple=True,
              type=click.Path(exists=True), help="Raw submission file(s).")
@click.option("--output", required=True, type=click.Path())
@click.option("--form-type", default="10-K", show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--keep-going", is_flag=True)
def convert(inputs, output, form_type, jobs, keep_going):
    """Convert raw submissions to filtered text lines (JSON Lines)."""
    def one(path):
        with open(path, encoding="utf-8", errors="replace") as fh:
            raw = fh.read()
        lines = edgar.convert_submission(raw, form_type)
        doc_id = os.path.splitext(os.path.basename(path))[0]
        return doc_id, [ln.text for ln in lines]

    records = []
    failures = 0
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        for path, result in zip(inputs, pool.map(
            lambda p: _try(one, p, keep_going), inputs
        )):
            if result is None:
                failures += 1
                click.echo(f"error converting {path}", err=True)
            else:
                records.append(result)
    records.sort(key=lambda r: r[0])
    payload = "".join(
        json.dumps({"doc_id": d, "lines": lines}, ensure_ascii=False) + "\n"
        for d, lines in records
    )
    _atomic_write(output, payload)
    sys.exit(1 if failures and not keep_going else 0)


def _try(fn, arg, keep_going):
    try:
        return fn(arg)
    except Exception:
        if not keep_going:
            raise
        return None


@main.command("train-crf")
@click.option("--gold", required=True, type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--l2", type=float, default=None)
@click.option("--max-iter", type=int, default=None)
@click.pass_context
def train_crf_cmd(ctx, gold, model_path, l2, max_iter):
    """Train the linear-chain CRF on a gold label file."""
    cfg = ctx.obj["cfg"].get("crf", {})
    config = crf.CrfConfig(
        l2_lambda=float(_setting(l2, cfg, "l2", 1.0)),
        max_iter=int(_setting(max_iter, cfg, "max_iter", 300)),
    )
    corpus = read_label_file(gold)
    model = crf.train_crf(corpus, config)
    model.save(model_path)
    click.echo(f"trained CRF on {len(corpus)} documents -> {model_path}")


@main.command("train-lstm")
@click.option("--gold", required=True, type=click.Path(exists=True))
@click.option("--embeddings", required=True, type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--hidden", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--max-epochs", type=int, default=None)
@click.pass_context
def train_lstm_cmd(ctx, gold, embeddings, model_path, hidden, lr, seed, max_epochs):
    """Train the Bi-LSTM tagger from a gold file plus embedding file."""
    cfg = ctx.obj["cfg"].get("lstm", {})
    config = lstm.LstmConfig(
        hidden_dim=int(_setting(hidden, cfg, "hidden", 256)),
        learning_rate=float(_setting(lr, cfg, "lr", 1e-4)),
        seed=int(_setting(seed, cfg, "seed", 0)),
        max_epochs=int(_setting(max_epochs, cfg, "max_epochs", 200)),
    )
    corpus = read_label_file(gold)
    emb_docs, _, _ = embfile.read_embeddings(embeddings)
    labels = sorted({lab for doc in corpus for lab in doc.labels})
    lab_idx = {lab: i for i, lab in enumerate(labels)}
    train_docs = {}
    for doc in corpus:
        if doc.doc_id not in emb_docs:
            click.echo(f"error: no embeddings for {doc.doc_id}", err=True)
            sys.exit(1)
        emb = np.asarray(emb_docs[doc.doc_id], dtype=float)
        gold_idx = np.array([lab_idx[lab] for lab in doc.labels])
        train_docs[doc.doc_id] = (emb, gold_idx)
    model, state = lstm.train_bilstm(train_docs, labels, config)
    model.save(model_path)
    click.echo(
        f"trained Bi-LSTM for {state.epoch + 1} epochs "
        f"(best val loss {state.best_val_loss:.4f}) -> {model_path}"
    )


@main.command()
@click.option("--method", required=True,
              type=click.Choice(["rule", "crf", "lstm", "llm"]))
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--output", required=True, type=click.Path())
@click.option("--model", "model_path", default=None, type=click.Path())
@click.option("--embeddings", default=None, type=click.Path())
@click.option("--backend", default=None,
              help="llm backend: 'mock:script.jsonl' or an HTTP URL.")
@click.option("--model-name", default="gpt-4o")
@click.option("--audit-log", default=None, type=click.Path())
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--keep-going", is_flag=True)
@click.pass_context
def segment(ctx, method, input_path, output, model_path, embeddings, backend,
            model_name, audit_log, jobs, keep_going):
    """Segment converted documents with the chosen method."""
    docs = _read_converted(input_path)

    if method == "crf":
        if not model_path:
            raise click.UsageError("--model is required for --method crf")
        model = crf.CrfModel.load(model_path)
        run = lambda doc_id, lines: crf.segment_crf(model, lines)
    elif method == "lstm":
        if not model_path or not embeddings:
            raise click.UsageError(
                "--model and --embeddings are required for --method lstm"
            )
        model = lstm.BiLstmModel.load(model_path)
        emb_docs, _, _ = embfile.read_embeddings(embeddings)

        def run(doc_id, lines):
            if doc_id not in emb_docs:
                raise click.ClickException(f"no embeddings for {doc_id}")
            return lstm.segment_lstm(
                model, np.asarray(emb_docs[doc_id], dtype=float), lines
            )
    elif method == "llm":
        if not backend:
            raise click.UsageError("--backend is required for --method llm")
        if backend.startswith("mock:"):
            chat = llm.MockBackend.from_script(backend[len("mock:"):])
        else:
            chat = llm.HttpBackend(backend, model_name)
        config = llm.LlmConfig(audit_log=audit_log)
        run = lambda doc_id, lines: llm.segment_llm(
            lines, chat, config, doc_id=doc_id
        )
    else:
        run = lambda doc_id, lines: rules.segment_rule_based(lines)

    # llm documents run sequentially per retry loop; others parallelize freely
    workers = 1 if method == "llm" else max(1, jobs)
    failures = 0
    results: dict[str, list[str] | None] = {}

    def one(pair):
        doc_id, lines = pair
        spans = run(doc_id, lines)
        return doc_id, spans_to_labels(spans, len(lines))

    with ThreadPoolExecutor(max_workers=workers) as pool:
        for pair, result in zip(docs, pool.map(
            lambda p: _try(one, p, keep_going), docs
        )):
            if result is None:
                failures += 1
                results[pair[0]] = None
            else:
                results[result[0]] = result[1]

    out_docs = []
    for doc_id, lines in sorted(docs, key=lambda p: p[0]):
        labels = results.get(doc_id)
        if labels is None:
            continue
        out_docs.append(
            AnnotatedDocument(doc_id, lines, labels)
        )
    payload = "".join(
        json.dumps({"doc_id": d.doc_id, "labels": d.labels}, ensure_ascii=False)
        + "\n"
        for d in out_docs
    )
    _atomic_write(output, payload)
    sys.exit(1 if failures and not keep_going else 0)


@main.command("eval")
@click.option("--gold", required=True, type=click.Path(exists=True))
@click.option("--pred", required=True, type=click.Path(exists=True))
@click.option("--csv", "csv_out", default=None, type=click.Path())
@click.option("--json", "json_out", default=None, type=click.Path())
@click.option("--per-document-mean", is_flag=True,
              help="Average per-document F1 instead of pooling counts.")
def eval_cmd(gold, pred, csv_out, json_out, per_document_mean):
    """Score predictions against gold labels."""
    gold_docs = {d.doc_id: d.labels for d in read_label_file(gold)}
    pred_docs = {d.doc_id: d.labels for d in read_label_file(pred)}
    pooled = evalkit.corpus_scores(
        gold_docs, pred_docs, per_document_mean=per_document_mean
    )
    if per_document_mean:
        for item, f1 in pooled.items():
            click.echo(f"Item {item}: f1={f1:.4f}")
        return
    groups = []
    for name, members in (
        ("core", list(evalkit.CORE_ITEMS)),
        ("other", list(evalkit.OTHER_ITEMS)),
    ):
        try:
            groups.append(evalkit.group_report(pooled, name, members))
        except evalkit.EvalError:
            pass
    csv_text = evalkit.report_csv(pooled, groups)
    click.echo(csv_text, nl=False)
    if csv_out:
        _atomic_write(csv_out, csv_text)
    if json_out:
        _atomic_write(json_out, evalkit.report_json(pooled, groups))


@main.command()
@click.option("--gold", required=True, type=click.Path(exists=True))
def stats(gold):
    """Corpus summary statistics per item."""
    docs = read_label_file(gold)
    table = evalkit.corpus_stats(docs)
    click.echo("item,avg_order,avg_word_length,avg_line_length,prevalence")
    for item, s in table.items():
        click.echo(
            f"{item},{s.avg_order:.2f},{s.avg_word_length:.2f},"
            f"{s.avg_line_length:.2f},{s.prevalence:.4f}"
        )


@main.command("synth")
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--n-docs", type=int, default=100, show_default=True)
@click.option("--gold", "gold_out", required=True, type=click.Path())
@click.option("--embeddings", "emb_out", default=None, type=click.Path(),
              help="Also write pseudo-embeddings for the Bi-LSTM.")
@click.option("--dim", type=int, default=64, show_default=True)
def synth_cmd(seed, n_docs, gold_out, emb_out, dim):
    """Generate a synthetic labeled corpus (and optional pseudo-embeddings)."""
    spec = synth.GeneratorSpec(seed=seed, n_docs=n_docs)
    docs = synth.generate(spec)
    write_label_file(gold_out, docs)
    if emb_out:
        embfile.write_embeddings(
            emb_out,
            ((d.doc_id, synth.pseudo_embeddings(d, dim)) for d in docs),
            dim,
            metadata={"encoder": "pseudo-hash", "seed": seed},
        )
    click.echo(f"wrote {len(docs)} documents")


if __name__ == "__main__":
    main()
