import json

import pytest

from itemseg.items import ItemSpan, TextLine
from itemseg.llm import (
    DEFAULT_ITEMS,
    DEMO_FENCE,
    Demonstration,
    LibResponse,
    LlmConfig,
    MockBackend,
    ParseRejection,
    PromptBudgetError,
    RetriesExhaustedError,
    assignments_to_spans,
    build_prompt,
    default_demonstrations,
    format_lib_report,
    parse_response,
    segment_llm,
)


def _lines(texts):
    return [TextLine(i, t) for i, t in enumerate(texts)]


# --- report formatting ---------------------------------------------------------

def test_report_numbering_from_zero():
    report = format_lib_report(_lines(["Table of Contents", "ITEM 1. BUSINESS"]), 30)
    assert report.render() == "0 Table of Contents\n1 ITEM 1. BUSINESS"


def test_report_truncates_to_word_limit():
    text = " ".join(f"w{i}" for i in range(50))
    report = format_lib_report(_lines([text]), 30)
    rendered = report.render()
    assert rendered.startswith("0 w0 ")
    assert rendered.endswith("w29")
    assert "w30" not in rendered


def test_report_empty_line_keeps_id():
    report = format_lib_report(_lines(["", "x"]), 5)
    assert report.render().splitlines() == ["0", "1 x"]


def test_report_rejects_zero_limit():
    with pytest.raises(ValueError):
        format_lib_report(_lines(["x"]), 0)


# --- prompt assembly -----------------------------------------------------------

def test_prompt_contains_fenced_demos_and_report():
    report = format_lib_report(_lines(["ITEM 1. BUSINESS"]), 30)
    demos = [Demonstration("0 ITEM 1. BUSINESS", "Item 1,0")]
    prompt = build_prompt(report, demos, ["1"])
    assert prompt.count(DEMO_FENCE) == 4  # demo open/close + task open/close
    assert "Example 1:" in prompt
    assert "Item 1,0" in prompt
    assert prompt.rstrip().endswith("Output:")
    assert "If the item is not available, print NA." in prompt
    assert "table of contents" in prompt.lower()


def test_prompt_zero_demos():
    report = format_lib_report(_lines(["x"]), 30)
    prompt = build_prompt(report, [], ["1"])
    assert "Example" not in prompt
    assert prompt.count(DEMO_FENCE) == 2


def test_default_demonstrations_load_and_parse():
    demos = default_demonstrations()
    assert len(demos) >= 1
    for demo in demos:
        assert demo.excerpt and demo.expected_output
        # each expected output must itself pass the response parser for the
        # items it mentions
        ids = {
            int(line.split(" ", 1)[0]) for line in demo.excerpt.splitlines()
        }
        items = [
            row.split(",")[0].split()[-1]
            for row in demo.expected_output.splitlines()
        ]
        result = parse_response(demo.expected_output, ids, items)
        assert isinstance(result, LibResponse)


# --- response parsing ----------------------------------------------------------

FULL_RESPONSE = """\
Item 1,67
Item 1A,277
Item 2,347
Item 3,359
Item 4,363
Item 5,365
Item 6,386
Item 7,388
Item 7A,571
Item 8,574
Item 9,1549
Item 9A,1551
Item 10,1572
Item 11,1577
Item 12,1579
Item 13,1584
Item 14,1586
Item 15,3171
"""

ISSUED = set(range(3495))


def test_parse_full_table():
    result = parse_response(FULL_RESPONSE, ISSUED, DEFAULT_ITEMS)
    assert isinstance(result, LibResponse)
    assert result.assignments["1"] == 67
    assert result.assignments["7A"] == 571
    assert result.assignments["15"] == 3171
    assert len(result.assignments) == 18


def test_parse_tolerates_code_fence_and_header():
    wrapped = "```plaintext\nItem ID,Line ID\n" + FULL_RESPONSE + "```\n"
    result = parse_response(wrapped, ISSUED, DEFAULT_ITEMS)
    assert isinstance(result, LibResponse)
    assert result.assignments["9A"] == 1551


def test_parse_tolerates_surrounding_prose():
    text = "Sure, here are the results:\n\n" + FULL_RESPONSE + "\nHope that helps!"
    result = parse_response(text, ISSUED, DEFAULT_ITEMS)
    assert isinstance(result, LibResponse)


def test_parse_na_rows():
    text = "Item 1,5\nItem 1A,NA"
    result = parse_response(text, {5}, ["1", "1A"])
    assert isinstance(result, LibResponse)
    assert result.assignments == {"1": 5, "1A": None}


def test_parse_rejects_non_integer():
    result = parse_response("Item 1,abc", {0, 1}, ["1"])
    assert isinstance(result, ParseRejection)
    assert any("non-integer" in r for r in result.reasons)


def test_parse_rejects_unissued_id():
    result = parse_response("Item 1,99999", ISSUED, ["1"])
    assert isinstance(result, ParseRejection)
    assert any("never issued" in r for r in result.reasons)


def test_parse_rejects_missing_items():
    result = parse_response("Item 1,5", {5}, ["1", "1A"])
    assert isinstance(result, ParseRejection)
    assert any("missing rows" in r and "1A" in r for r in result.reasons)


def test_parse_rejects_duplicate_rows():
    result = parse_response("Item 1,5\nItem 1,6", {5, 6}, ["1"])
    assert isinstance(result, ParseRejection)
    assert any("duplicate" in r for r in result.reasons)


def test_parse_flags_unexpected_item():
    result = parse_response("Item 1,5\nItem 99,6", {5, 6}, ["1"])
    assert isinstance(result, ParseRejection)
    assert any("unexpected" in r for r in result.reasons)


def test_render_parse_round_trip():
    response = LibResponse(
        {"1": 67, "1A": 277, "7": None, "15": 3171}
    )
    text = response.render(["1", "1A", "7", "15"])
    again = parse_response(text, ISSUED, ["1", "1A", "7", "15"])
    assert isinstance(again, LibResponse)
    assert again.assignments == response.assignments


# --- span reconstruction -------------------------------------------------------

def test_assignments_to_spans_basic():
    spans = assignments_to_spans({"1": 67, "1A": 277}, 300)
    assert spans == [ItemSpan("1", 67, 276), ItemSpan("1A", 277, 299)]


def test_assignments_single_item_runs_to_end():
    assert assignments_to_spans({"1": 0}, 10) == [ItemSpan("1", 0, 9)]


def test_assignments_na_dropped():
    spans = assignments_to_spans({"1": 2, "1A": None, "7": 5}, 10)
    assert [s.item for s in spans] == ["1", "7"]


def test_assignments_out_of_order_dropped():
    # Item 7 claims an earlier line than Item 1: canonical order wins
    spans = assignments_to_spans({"1": 10, "7": 4}, 20)
    assert spans == [ItemSpan("1", 10, 19)]


# --- end-to-end with the mock backend -------------------------------------------

def _doc(n=300):
    texts = ["filler prose line"] * n
    texts[67] = "ITEM 1. BUSINESS"
    texts[277] = "ITEM 1A. RISK FACTORS"
    return _lines(texts)


def _config(**kw):
    kw.setdefault("items", ["1", "1A"])
    kw.setdefault("max_retries", 3)
    return LlmConfig(**kw)


def test_segment_llm_happy_path():
    backend = MockBackend(["Item 1,67\nItem 1A,277"])
    spans = segment_llm(_doc(), backend, _config(), demos=[])
    assert spans == [ItemSpan("1", 67, 276), ItemSpan("1A", 277, 299)]
    assert backend.calls == 1


def test_segment_llm_retry_after_malformed():
    backend = MockBackend(["garbage output", "Item 1,67\nItem 1A,277"])
    spans = segment_llm(_doc(), backend, _config(), demos=[])
    assert backend.calls == 2
    assert spans[0] == ItemSpan("1", 67, 276)


def test_segment_llm_retries_exhausted():
    backend = MockBackend(["bad"] * 3)
    with pytest.raises(RetriesExhaustedError) as exc:
        segment_llm(_doc(), backend, _config(), demos=[])
    assert exc.value.attempts == 3
    assert backend.calls == 3


def test_segment_llm_empty_document():
    backend = MockBackend([])
    assert segment_llm([], backend, _config(), demos=[]) == []
    assert backend.calls == 0


def test_segment_llm_budget_halves_truncation():
    lines = _lines([" ".join(["word"] * 40)] * 20 + ["ITEM 1. BUSINESS"])
    backend = MockBackend(["Item 1,20"])
    # force the budget low enough that limit 30 overflows but 15 fits
    probe_30 = len(
        build_prompt(format_lib_report(lines, 30), [], ["1"])
    )
    probe_15 = len(
        build_prompt(format_lib_report(lines, 15), [], ["1"])
    )
    budget = (probe_30 + probe_15) // 2
    cfg = _config(items=["1"], prompt_char_budget=budget)
    spans = segment_llm(lines, backend, cfg, demos=[])
    assert spans == [ItemSpan("1", 20, 20)]
    sent = backend.prompts[0]
    assert len(sent) <= budget


def test_segment_llm_budget_error_when_floor_hit():
    lines = _lines([" ".join(["word"] * 40)] * 50)
    backend = MockBackend([])
    cfg = _config(items=["1"], prompt_char_budget=100)
    with pytest.raises(PromptBudgetError) as exc:
        segment_llm(lines, backend, cfg, demos=[])
    assert exc.value.available == 100
    assert backend.calls == 0


def test_segment_llm_audit_log(tmp_path):
    log = tmp_path / "audit.jsonl"
    backend = MockBackend(["nonsense", "Item 1,67\nItem 1A,277"])
    cfg = _config(audit_log=str(log))
    segment_llm(_doc(), backend, cfg, demos=[], doc_id="doc-7")
    records = [json.loads(l) for l in log.read_text().splitlines()]
    assert [r["verdict"] for r in records] == ["rejected", "accepted"]
    assert all(r["doc_id"] == "doc-7" for r in records)
    assert records[0]["attempt"] == 1 and records[1]["attempt"] == 2
    assert records[0]["prompt_sha256"] == records[1]["prompt_sha256"]


def test_mock_backend_from_script(tmp_path):
    script = tmp_path / "script.jsonl"
    script.write_text(
        json.dumps({"response": "Item 1,67\nItem 1A,277"}) + "\n"
    )
    backend = MockBackend.from_script(script)
    spans = segment_llm(_doc(), backend, _config(), demos=[])
    assert spans[0].item == "1"


def test_mock_backend_exhausted_script():
    backend = MockBackend([])
    with pytest.raises(Exception):
        backend.send("prompt")
