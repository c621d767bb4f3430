"""EDGAR ingestion: master index, filing fetch with cache, SGML unwrap,
HTML-to-text conversion, and the non-alphabetic line filter."""

from __future__ import annotations

import html
import html.parser
import os
import re
import threading
import time
from dataclasses import dataclass, field
from datetime import date, datetime

from .items import TextLine

DEFAULT_BASE_URL = "https://www.sec.gov/Archives/"
DEFAULT_RATE_LIMIT = 8.0  # requests per second


class MasterIndexError(ValueError):
    pass


class SgmlError(ValueError):
    pass


class FetchError(RuntimeError):
    """Retriable fetch failure; carries the HTTP status when there is one."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


@dataclass(frozen=True)
class FilingRef:
    cik: str
    company_name: str
    form_type: str
    date_filed: date
    path: str

    def __post_init__(self):
        if not self.form_type:
            raise ValueError("form_type must be non-empty")
        if not self.path:
            raise ValueError("path must be non-empty")


@dataclass
class DocumentSession:
    doc_type: str
    filename: str
    body: str
    body_format: str  # "html" | "plain_text"


def parse_master_index(index_text: str, form_types: set[str]) -> list[FilingRef]:
    """Parse an EDGAR full-index master file, keeping the given form types.

    The file carries a free-text header, a dashed separator, then one
    pipe-delimited record per filing: CIK|Company Name|Form Type|Date|Path.
    """
    if not form_types:
        return []
    lines = index_text.splitlines()
    start = None
    for i, line in enumerate(lines):
        if set(line.strip()) == {"-"} and line.strip():
            start = i + 1
            break
        # headerless variants begin with a record immediately
        if line.count("|") == 4 and line.split("|")[0].strip().isdigit():
            start = i
            break
    if start is None:
        first = lines[0] if lines else ""
        raise MasterIndexError(
            f"no record separator or record found; first line: {first!r}"
        )
    refs: list[FilingRef] = []
    for lineno, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        fields = line.split("|")
        if len(fields) != 5:
            raise MasterIndexError(
                f"malformed record at line {lineno}: {line!r}"
            )
        cik, company, form_type, date_filed, path = (f.strip() for f in fields)
        if form_type not in form_types:
            continue
        try:
            parsed = datetime.strptime(date_filed, "%Y-%m-%d").date()
        except ValueError as exc:
            raise MasterIndexError(
                f"bad date at line {lineno}: {date_filed!r}"
            ) from exc
        refs.append(FilingRef(cik, company, form_type, parsed, path))
    return refs


class RateLimiter:
    """Token-free limiter: enforces a minimum interval between requests."""

    def __init__(self, per_second: float = DEFAULT_RATE_LIMIT):
        self._interval = 1.0 / per_second if per_second > 0 else 0.0
        self._lock = threading.Lock()
        self._next_at = 0.0

    def wait(self) -> None:
        with self._lock:
            now = time.monotonic()
            delay = self._next_at - now
            self._next_at = max(now, self._next_at) + self._interval
        if delay > 0:
            time.sleep(delay)


def _requests_transport(url: str, user_agent: str, timeout: float):
    import requests

    try:
        resp = requests.get(url, headers={"User-Agent": user_agent}, timeout=timeout)
    except requests.RequestException as exc:
        raise FetchError(f"network error fetching {url}: {exc}") from exc
    if resp.status_code != 200:
        raise FetchError(
            f"HTTP {resp.status_code} fetching {url}", status=resp.status_code
        )
    return resp.text


def cache_key(path: str) -> str:
    """Archive-relative path flattened into a single cache file name."""
    return path.replace("/", "__")


def fetch_filing(
    ref: FilingRef,
    cache_dir: str,
    *,
    base_url: str = DEFAULT_BASE_URL,
    user_agent: str = "itemseg research tool",
    rate_limiter: RateLimiter | None = None,
    transport=None,
    timeout: float = 60.0,
) -> str:
    """Return the raw SGML submission, caching it under cache_dir.

    ``transport`` is a callable ``(url, user_agent, timeout) -> text``; tests
    inject a recorder here. A warm cache performs no network access.
    """
    os.makedirs(cache_dir, exist_ok=True)
    cached = os.path.join(cache_dir, cache_key(ref.path))
    if os.path.exists(cached):
        with open(cached, encoding="utf-8", newline="") as fh:
            return fh.read()
    if rate_limiter is not None:
        rate_limiter.wait()
    fetch = transport or _requests_transport
    body = fetch(base_url + ref.path, user_agent, timeout)
    tmp = cached + f".tmp.{os.getpid()}.{threading.get_ident()}"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(body)
    os.replace(tmp, cached)
    return body


_DOC_OPEN = re.compile(r"<DOCUMENT>", re.IGNORECASE)
_HTML_MARKER = re.compile(r"\s*<(?:!DOCTYPE\s+)?HTML", re.IGNORECASE)


def _tag_value(block: str, tag: str) -> str:
    m = re.search(rf"<{tag}>([^\n<]*)", block, re.IGNORECASE)
    return m.group(1).strip() if m else ""


def unwrap_document_sessions(raw_sgml: str) -> list[DocumentSession]:
    """Split a raw EDGAR submission into its document sessions, in order."""
    sessions: list[DocumentSession] = []
    pos = 0
    while True:
        m = _DOC_OPEN.search(raw_sgml, pos)
        if m is None:
            break
        close = re.compile(r"</DOCUMENT>", re.IGNORECASE).search(raw_sgml, m.end())
        end = close.start() if close else -1
        if end < 0:
            raise SgmlError(
                f"unterminated <DOCUMENT> block at byte offset {m.start()}"
            )
        block = raw_sgml[m.end():end]
        pos = end + len("</DOCUMENT>")
        doc_type = _tag_value(block, "TYPE")
        filename = _tag_value(block, "FILENAME")
        text_m = re.search(r"<TEXT>", block, re.IGNORECASE)
        if text_m:
            body = block[text_m.end():]
            body = re.sub(r"</TEXT>\s*$", "", body, flags=re.IGNORECASE)
        else:
            body = block
        body = body.strip("\n")
        if not body:
            continue
        is_html = bool(
            filename.lower().endswith((".htm", ".html"))
            or _HTML_MARKER.match(body)
        )
        sessions.append(
            DocumentSession(
                doc_type=doc_type,
                filename=filename,
                body=body,
                body_format="html" if is_html else "plain_text",
            )
        )
    if not sessions:
        raise SgmlError("no <DOCUMENT> blocks found in submission")
    return sessions


def primary_session(
    sessions: list[DocumentSession], form_type: str
) -> DocumentSession:
    """First session whose type matches; several filings can carry multiple
    sessions of the target type and first-match is the convention here."""
    for s in sessions:
        if s.doc_type == form_type:
            return s
    raise SgmlError(f"no session of type {form_type!r}")


_BLOCK_TAGS = {
    "p", "div", "br", "li", "ul", "ol", "table", "tr", "h1", "h2", "h3",
    "h4", "h5", "h6", "hr", "blockquote", "section", "article", "center",
    "title", "dd", "dt", "pre",
}
_SKIP_TAGS = {"script", "style", "head"}


class _TextExtractor(html.parser.HTMLParser):
    """Flatten HTML to lines: block elements break lines, table cells within
    a row join with single spaces, inline markup disappears."""

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.lines: list[str] = []
        self._chunks: list[str] = []
        self._cells: list[str] = []
        self._in_row = False
        self._skip_depth = 0

    def _flush(self):
        if self._in_row:
            cell = "".join(self._chunks).strip()
            if cell:
                self._cells.append(" ".join(cell.split()))
            self._chunks = []
            return
        text = " ".join("".join(self._chunks).split())
        self._chunks = []
        if text:
            self.lines.append(text)

    def _end_row(self):
        self._flush()
        self._in_row = False
        if self._cells:
            self.lines.append(" ".join(self._cells))
        self._cells = []

    def handle_starttag(self, tag, attrs):
        if tag in _SKIP_TAGS:
            self._skip_depth += 1
            return
        if tag == "tr":
            self._end_row()
            self._in_row = True
        elif tag in ("td", "th"):
            self._flush()
        elif tag in _BLOCK_TAGS:
            if self._in_row and tag == "table":
                self._end_row()
            self._flush()

    def handle_endtag(self, tag):
        if tag in _SKIP_TAGS:
            self._skip_depth = max(0, self._skip_depth - 1)
            return
        if tag == "tr" or (tag == "table" and self._in_row):
            self._end_row()
        elif tag in ("td", "th"):
            self._flush()
        elif tag in _BLOCK_TAGS:
            self._flush()

    def handle_startendtag(self, tag, attrs):
        if tag in _BLOCK_TAGS:
            self._flush()

    def handle_data(self, data):
        if not self._skip_depth:
            self._chunks.append(data)

    def close(self):
        super().close()
        self._end_row()


def html_to_lines(session: DocumentSession) -> list[TextLine]:
    """Convert a session body into raw (unfiltered) text lines."""
    if session.body_format == "plain_text":
        texts = [ln.rstrip() for ln in session.body.split("\n")]
        texts = [html.unescape(t) for t in texts]
    else:
        extractor = _TextExtractor()
        extractor.feed(session.body)
        extractor.close()
        texts = extractor.lines
    return [TextLine(i, t.rstrip()) for i, t in enumerate(texts)]


def _is_alphabetic_word(word: str) -> bool:
    return any(ch.isalpha() for ch in word)


def filter_lines(lines: list[TextLine]) -> list[TextLine]:
    """Drop lines with strictly more than 50% non-alphabetic words, drop
    blank lines, and renumber line ids consecutively from 0. Idempotent."""
    kept: list[str] = []
    for line in lines:
        words = line.text.split()
        if not words:
            continue
        non_alpha = sum(1 for w in words if not _is_alphabetic_word(w))
        if non_alpha * 2 > len(words):
            continue
        kept.append(line.text.rstrip())
    return [TextLine(i, t) for i, t in enumerate(kept)]


def convert_submission(raw_sgml: str, form_type: str = "10-K") -> list[TextLine]:
    """Full pipeline: unwrap, pick the primary session, convert, filter."""
    sessions = unwrap_document_sessions(raw_sgml)
    try:
        session = primary_session(sessions, form_type)
    except SgmlError:
        session = sessions[0]
    return filter_lines(html_to_lines(session))
