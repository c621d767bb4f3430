"""Line-ID-based (LIB) prompting for item segmentation with a pluggable
chat backend.

Every input line is numbered; the model must answer with "Item X,<line id>"
rows whose ids were actually issued, so a hallucinated id can never survive
validation and every reconstructed span is a verbatim slice of the input.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
from dataclasses import dataclass, field
from importlib import resources

from .items import ITEM_ORDER, ITEM_RANK, ItemSpan, TextLine

DEFAULT_ITEMS = [
    "1", "1A", "2", "3", "4", "5", "6", "7", "7A", "8",
    "9", "9A", "10", "11", "12", "13", "14", "15",
]
DEMO_FENCE = "====="


class LlmSegError(RuntimeError):
    pass


class PromptBudgetError(LlmSegError):
    def __init__(self, required: int, available: int):
        super().__init__(
            f"prompt needs {required} characters but budget is {available}"
        )
        self.required = required
        self.available = available


class RetriesExhaustedError(LlmSegError):
    def __init__(self, attempts: int, reasons: list[str]):
        super().__init__(
            f"no valid response after {attempts} attempts; "
            f"last rejection: {reasons}"
        )
        self.attempts = attempts
        self.reasons = reasons


@dataclass
class LibReport:
    lines: list[tuple[int, str]]
    truncation_limit: int

    def render(self) -> str:
        return "\n".join(f"{i} {text}".rstrip() for i, text in self.lines)


@dataclass
class Demonstration:
    excerpt: str
    expected_output: str


@dataclass
class LibResponse:
    assignments: dict[str, int | None]

    def render(self, items: list[str] | None = None) -> str:
        items = items or [i for i in ITEM_ORDER if i in self.assignments]
        rows = []
        for item in items:
            value = self.assignments.get(item)
            rows.append(f"Item {item},{'NA' if value is None else value}")
        return "\n".join(rows)


@dataclass
class ParseRejection:
    reasons: list[str]


@dataclass
class LlmConfig:
    items: list[str] = field(default_factory=lambda: list(DEFAULT_ITEMS))
    truncation_words: int = 30
    min_truncation_words: int = 5
    max_retries: int = 3
    prompt_char_budget: int = 4 * 120_000  # ~4 chars/token on a 120k window
    audit_log: str | None = None


def format_lib_report(lines: list[TextLine], limit: int) -> LibReport:
    if limit < 1:
        raise ValueError("truncation limit must be >= 1")
    out = []
    for i, line in enumerate(lines):
        words = line.text.split()
        out.append((i, " ".join(words[:limit])))
    return LibReport(out, limit)


def _task_description(items: list[str]) -> str:
    from .rules import ITEM_TITLES

    listing = " ".join(f"Item {i}. {ITEM_TITLES[i].title()}" for i in items)
    targets = ", ".join(f"Item {i}" for i in items)
    return (
        "I am an excellent financial professional. The task is to identify "
        "the starting lines of items in 10-K report.\n"
        f"A 10-K report may contain the following items: {listing}\n"
        "Each item may start with a title, followed by the content. Each "
        "line contains a line ID, followed by its content. Extract the line "
        f"ID of {targets}. If the item is not available, print NA.\n"
        "The beginning of a report may contain a table of contents that "
        "also lists the item heading but is irrelevant."
    )


_OUTPUT_INSTRUCTION = (
    "Below is a 10-K report.\n"
    "List the result in a table format. The first column is the item ID. "
    'The second column is the Line ID. Use comma (",") to separate the two '
    "columns. Include no additional white space."
)


def build_prompt(
    report: LibReport, demos: list[Demonstration], items: list[str]
) -> str:
    parts = [_task_description(items)]
    if demos:
        parts.append("Below are some examples.")
        for k, demo in enumerate(demos, start=1):
            parts.append(
                f"Example {k}:\n{DEMO_FENCE}\n{demo.excerpt}\n{DEMO_FENCE}\n"
                f"Output:\n{demo.expected_output}"
            )
    parts.append("The Task:")
    parts.append(_OUTPUT_INSTRUCTION)
    parts.append(f"{DEMO_FENCE}\n{report.render()}\n{DEMO_FENCE}\nOutput:")
    return "\n\n".join(parts)


def default_demonstrations() -> list[Demonstration]:
    raw = resources.files("itemseg.data").joinpath("lib_demos.json").read_text(
        encoding="utf-8"
    )
    return [Demonstration(**d) for d in json.loads(raw)]


_ROW_RE = re.compile(
    r"^\s*item\s+([0-9]{1,2}[A-C]?)\s*,\s*([^\s,]+)\s*$", re.IGNORECASE
)


def parse_response(
    text: str, issued_ids: set[int], items: list[str]
) -> LibResponse | ParseRejection:
    """Extract and validate "Item X,Y" rows.

    Tolerates surrounding prose, code fences, and a header row; rejects
    non-integer ids, ids that were never issued, missing items, and
    duplicate rows. Rejection is a value, not an exception: it drives the
    rerun loop in segment_llm.
    """
    reasons: list[str] = []
    seen: dict[str, int | None] = {}
    wanted = {item.upper(): item for item in items}
    for raw in text.splitlines():
        m = _ROW_RE.match(raw.strip().strip("`"))
        if m is None:
            continue
        item_key = m.group(1).upper()
        value = m.group(2)
        if item_key not in wanted:
            reasons.append(f"unexpected item {m.group(1)!r}")
            continue
        item = wanted[item_key]
        if item in seen:
            reasons.append(f"duplicate row for Item {item}")
            continue
        if value.upper() == "NA":
            seen[item] = None
            continue
        try:
            line_id = int(value)
        except ValueError:
            reasons.append(f"Item {item}: non-integer line id {value!r}")
            continue
        if line_id not in issued_ids:
            reasons.append(f"Item {item}: line id {line_id} was never issued")
            continue
        seen[item] = line_id
    missing = [item for item in items if item not in seen]
    if missing:
        reasons.append(f"missing rows for items: {', '.join(missing)}")
    if reasons:
        return ParseRejection(reasons)
    return LibResponse({item: seen[item] for item in items})


# --- backends ----------------------------------------------------------------

class MockBackend:
    """Scripted backend: returns canned responses in order. Deterministic."""

    def __init__(self, responses: list[str]):
        self._responses = list(responses)
        self.calls = 0
        self.prompts: list[str] = []

    @classmethod
    def from_script(cls, path) -> "MockBackend":
        responses = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    responses.append(json.loads(line)["response"])
        return cls(responses)

    def send(self, prompt: str) -> str:
        self.prompts.append(prompt)
        if self.calls >= len(self._responses):
            raise LlmSegError("mock backend script exhausted")
        response = self._responses[self.calls]
        self.calls += 1
        return response


class HttpBackend:
    """Chat-completion HTTP backend (OpenAI-style JSON wire format)."""

    def __init__(
        self,
        url: str,
        model: str,
        temperature: float = 0.0,
        timeout: float = 120.0,
        api_key_env: str = "ITEMSEG_API_KEY",
    ):
        self.url = url
        self.model = model
        self.temperature = temperature
        self.timeout = timeout
        self.api_key_env = api_key_env

    def send(self, prompt: str) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": prompt}],
        }
        try:
            resp = requests.post(
                self.url, json=payload, headers=headers, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise LlmSegError(f"backend request failed: {exc}") from exc
        if resp.status_code != 200:
            raise LlmSegError(f"backend returned HTTP {resp.status_code}")
        body = resp.json()
        return body["choices"][0]["message"]["content"]


_audit_lock = threading.Lock()


def _audit(path, record: dict) -> None:
    if path is None:
        return
    line = json.dumps(record, ensure_ascii=False) + "\n"
    with _audit_lock:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(line)


def assignments_to_spans(
    assignments: dict[str, int | None], n_lines: int
) -> list[ItemSpan]:
    """Start lines to contiguous spans: each item runs to the line before
    the next assigned start, the last item to the document end. Assignments
    that violate canonical item order are dropped first."""
    present = [
        (item, line_id)
        for item, line_id in assignments.items()
        if line_id is not None
    ]
    present.sort(key=lambda pair: ITEM_RANK[pair[0]])
    starts: list[tuple[str, int]] = []
    last = -1
    for item, line_id in present:
        if line_id > last:
            starts.append((item, line_id))
            last = line_id
    spans = []
    for idx, (item, start) in enumerate(starts):
        end = starts[idx + 1][1] - 1 if idx + 1 < len(starts) else n_lines - 1
        spans.append(ItemSpan(item, start, end))
    return spans


def segment_llm(
    lines: list[TextLine],
    backend,
    config: LlmConfig | None = None,
    demos: list[Demonstration] | None = None,
    doc_id: str = "",
) -> list[ItemSpan]:
    """Format, prompt, validate, rerun on rejection, and rebuild spans."""
    config = config or LlmConfig()
    if demos is None:
        demos = default_demonstrations()
    if not lines:
        return []

    limit = config.truncation_words
    while True:
        report = format_lib_report(lines, limit)
        prompt = build_prompt(report, demos, config.items)
        if len(prompt) <= config.prompt_char_budget:
            break
        if limit <= config.min_truncation_words:
            raise PromptBudgetError(len(prompt), config.prompt_char_budget)
        limit = max(config.min_truncation_words, limit // 2)

    issued = {i for i, _ in report.lines}
    prompt_sha = hashlib.sha256(prompt.encode("utf-8")).hexdigest()
    last_reasons: list[str] = []
    for attempt in range(1, config.max_retries + 1):
        response = backend.send(prompt)
        result = parse_response(response, issued, config.items)
        verdict = "accepted" if isinstance(result, LibResponse) else "rejected"
        _audit(
            config.audit_log,
            {
                "doc_id": doc_id,
                "attempt": attempt,
                "prompt_sha256": prompt_sha,
                "response": response,
                "verdict": verdict,
            },
        )
        if isinstance(result, LibResponse):
            return assignments_to_spans(result.assignments, len(lines))
        last_reasons = result.reasons
    raise RetriesExhaustedError(config.max_retries, last_reasons)
