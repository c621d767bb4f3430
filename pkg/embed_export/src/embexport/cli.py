"""embed-export: JSON Lines documents in, LEMB embedding file out."""

from __future__ import annotations

import json
import os
import sys
import tempfile

import click

from .encoders import MAX_TOKENS, EncoderError, load_encoder
from .lemb import write_lemb


def _read_documents(path: str) -> list[tuple[str, list[str]]]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                record = json.loads(raw)
                docs.append((record["doc_id"], list(record["lines"])))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise click.ClickException(f"{path}:{lineno}: bad record ({exc})")
    return docs


@click.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True),
              help="Converted documents (JSON Lines with doc_id and lines).")
@click.option("--output", required=True, type=click.Path())
@click.option("--encoder", default="hash", show_default=True,
              help="'hash' or a sentence-transformers checkpoint name.")
@click.option("--dim", type=int, default=64, show_default=True,
              help="Embedding width (hash encoder only).")
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--device", default=None, help="Encoder device, e.g. cpu or cuda.")
def main(input_path, output, encoder, dim, batch_size, device):
    """Encode every line of every document and write an embedding file."""
    docs = _read_documents(input_path)
    try:
        enc = load_encoder(encoder, dim=dim, device=device)
    except EncoderError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)

    records = []
    for doc_id, lines in docs:
        import numpy as np

        if lines:
            matrix = enc.encode(lines, batch_size=batch_size)
        else:
            matrix = np.zeros((0, enc.dim), dtype=np.float32)
        records.append((doc_id, matrix))

    metadata = {"encoder": enc.name, "max_tokens": MAX_TOKENS}
    directory = os.path.dirname(os.path.abspath(output)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".embexport-")
    os.close(fd)
    try:
        write_lemb(tmp, records, enc.dim, metadata=metadata)
        os.replace(tmp, output)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    click.echo(f"wrote {len(records)} documents (dim {enc.dim}) -> {output}")


if __name__ == "__main__":
    main()
