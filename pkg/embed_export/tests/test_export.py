import json
import struct

import numpy as np
import pytest
from click.testing import CliRunner

from embexport.cli import main
from embexport.encoders import (
    MAX_TOKENS,
    EncoderError,
    HashEncoder,
    truncate_tokens,
)
from embexport.lemb import LembError, read_lemb, write_lemb


def _write_docs(path, docs):
    with open(path, "w", encoding="utf-8") as fh:
        for doc_id, lines in docs:
            fh.write(json.dumps({"doc_id": doc_id, "lines": lines}) + "\n")


# --- truncation ---------------------------------------------------------------

def test_truncate_noop_below_limit():
    assert truncate_tokens("a b c") == "a b c"


def test_truncate_keeps_first_512_tokens():
    text = " ".join(f"t{i}" for i in range(2000))
    out = truncate_tokens(text)
    assert out.split() == [f"t{i}" for i in range(MAX_TOKENS)]


# --- hash encoder --------------------------------------------------------------

def test_hash_encoder_shape_and_dtype():
    enc = HashEncoder(dim=16)
    out = enc.encode(["one line", "another line", ""])
    assert out.shape == (3, 16)
    assert out.dtype == np.float32


def test_hash_encoder_deterministic():
    enc = HashEncoder(dim=32)
    a = enc.encode(["identical text", "identical text"])
    assert np.array_equal(a[0], a[1])
    assert np.array_equal(a, enc.encode(["identical text"] * 2))


def test_hash_encoder_long_line_equals_prefix():
    enc = HashEncoder(dim=32)
    long_text = " ".join(f"t{i}" for i in range(2000))
    prefix = " ".join(f"t{i}" for i in range(MAX_TOKENS))
    out = enc.encode([long_text, prefix])
    assert np.array_equal(out[0], out[1])


def test_hash_encoder_normalized():
    enc = HashEncoder(dim=64)
    out = enc.encode(["some words here"])
    assert np.linalg.norm(out[0]) == pytest.approx(1.0, abs=1e-6)


def test_hash_encoder_rejects_bad_dim():
    with pytest.raises(EncoderError):
        HashEncoder(dim=0)


# --- file format ----------------------------------------------------------------

def test_lemb_round_trip(tmp_path):
    path = tmp_path / "e.lemb"
    rng = np.random.default_rng(0)
    docs = [
        ("a", rng.normal(size=(3, 8)).astype(np.float32)),
        ("b", np.zeros((0, 8), dtype=np.float32)),
    ]
    write_lemb(path, docs, 8, metadata={"encoder": "hash"})
    loaded, dim, meta = read_lemb(path)
    assert dim == 8 and meta == {"encoder": "hash"}
    assert np.array_equal(loaded["a"], docs[0][1])
    assert loaded["b"].shape == (0, 8)


def test_lemb_header_layout(tmp_path):
    path = tmp_path / "e.lemb"
    write_lemb(path, [("x", np.ones((2, 4), dtype=np.float32))], 4)
    data = path.read_bytes()
    assert data[:4] == b"LEMB"
    version, dim, n_docs = struct.unpack("<III", data[4:16])
    assert (version, dim, n_docs) == (1, 4, 1)


def test_lemb_duplicate_id_rejected(tmp_path):
    with pytest.raises(LembError):
        write_lemb(
            tmp_path / "e.lemb",
            [("a", np.zeros((1, 2))), ("a", np.zeros((1, 2)))],
            2,
        )


def test_lemb_bad_magic_rejected(tmp_path):
    path = tmp_path / "e.lemb"
    path.write_bytes(b"XXXX" + b"\x00" * 20)
    with pytest.raises(LembError):
        read_lemb(path)


# --- CLI ------------------------------------------------------------------------

def test_cli_export_round_trip(tmp_path):
    inp = tmp_path / "docs.jsonl"
    out = tmp_path / "out.lemb"
    _write_docs(inp, [
        ("doc-a", ["first line", "second line", "third line"]),
        ("doc-b", []),
    ])
    result = CliRunner().invoke(
        main, ["--input", str(inp), "--output", str(out),
               "--encoder", "hash", "--dim", "16"]
    )
    assert result.exit_code == 0, result.output
    loaded, dim, meta = read_lemb(out)
    assert dim == 16
    assert loaded["doc-a"].shape == (3, 16)
    assert loaded["doc-b"].shape == (0, 16)
    assert meta == {"encoder": "hash", "max_tokens": MAX_TOKENS}


def test_cli_deterministic_output_bytes(tmp_path):
    inp = tmp_path / "docs.jsonl"
    _write_docs(inp, [("d", ["alpha beta", "gamma"])])
    runner = CliRunner()
    out1, out2 = tmp_path / "a.lemb", tmp_path / "b.lemb"
    for out in (out1, out2):
        r = runner.invoke(main, ["--input", str(inp), "--output", str(out)])
        assert r.exit_code == 0, r.output
    assert out1.read_bytes() == out2.read_bytes()


def test_cli_unloadable_encoder_exits_nonzero(tmp_path):
    inp = tmp_path / "docs.jsonl"
    _write_docs(inp, [("d", ["x"])])
    r = CliRunner().invoke(
        main, ["--input", str(inp), "--output", str(tmp_path / "o.lemb"),
               "--encoder", "no/such-checkpoint-anywhere"]
    )
    assert r.exit_code == 1
    assert "error:" in r.output


def test_cli_bad_record_reports_line(tmp_path):
    inp = tmp_path / "docs.jsonl"
    inp.write_text('{"doc_id": "a", "lines": ["x"]}\n{"oops": true}\n')
    r = CliRunner().invoke(
        main, ["--input", str(inp), "--output", str(tmp_path / "o.lemb")]
    )
    assert r.exit_code != 0
    assert ":2:" in r.output


def test_cli_preserves_document_order(tmp_path):
    inp = tmp_path / "docs.jsonl"
    out = tmp_path / "out.lemb"
    _write_docs(inp, [("zeta", ["x"]), ("alpha", ["y"]), ("mid", ["z"])])
    r = CliRunner().invoke(main, ["--input", str(inp), "--output", str(out)])
    assert r.exit_code == 0
    loaded, _, _ = read_lemb(out)
    assert list(loaded) == ["zeta", "alpha", "mid"]
