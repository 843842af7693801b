"""Heterogeneous corpus loading, table flattening, and chunking.

Tables are flattened row-wise into a canonical text form::

    <title> || <h1>, <h2>, ... || <r1c1>, <r1c2>, ... || <r2c1>, ...

"||" separates the title, the header, and each row; cells within a segment
are joined with ", ". A "word" everywhere in this package is a maximal
whitespace-separated substring, so the `, ` separator glues a comma onto the
preceding cell's final token. The per-cell token offsets recorded in
``cell_map`` remain authoritative: :meth:`TableChunk.cell_text` recovers the
original cell string exactly (table titles and cells are whitespace-normalized
on construction, which is what makes exact recovery possible).

Long tables are split into chunks of approximately ``budget_words`` words by
greedy row packing; the title+header prefix is repeated in every chunk so each
chunk is self-describing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

KIND_TABLE_CHUNK = "table-chunk"
KIND_PASSAGE = "passage"

DEFAULT_CHUNK_BUDGET = 100

HEADER_ROW = -1


class CorpusError(ValueError):
    """Raised for malformed corpus files or records that violate invariants."""


def tokenize(text: str) -> list[str]:
    """Lowercased whitespace tokens; the shared lexical tokenizer."""
    return text.lower().split()


def _normalize_ws(s: str) -> str:
    return " ".join(s.split())


class CellSpan(NamedTuple):
    """Token offsets of one cell inside a flattened text.

    ``row`` is the absolute row index in the source table (-1 for header
    cells); ``start``/``end`` are whitespace-token offsets, end exclusive.
    """

    row: int
    col: int
    start: int
    end: int


@dataclass
class Passage:
    id: str
    title: str
    text: str

    def __post_init__(self) -> None:
        if not self.id:
            raise CorpusError("passage id must be non-empty")
        if not self.text:
            raise CorpusError(f"passage {self.id!r}: text must be non-empty")


def passage_text(p: Passage) -> str:
    """Canonical passage serialization: title followed by body text."""
    return f"{p.title} {p.text}".strip()


@dataclass
class Table:
    id: str
    title: str
    header: list[str]
    rows: list[list[str]]

    def __post_init__(self) -> None:
        if not self.id:
            raise CorpusError("table id must be non-empty")
        self.title = _normalize_ws(self.title)
        self.header = [_normalize_ws(h) for h in self.header]
        ncols = len(self.header)
        normalized_rows = []
        for i, row in enumerate(self.rows):
            if len(row) != ncols:
                raise CorpusError(
                    f"table {self.id!r}: row {i} has {len(row)} cells, expected {ncols}"
                )
            normalized_rows.append([_normalize_ws(c) for c in row])
        self.rows = normalized_rows


@dataclass
class TableChunk:
    """A ~budget-word slice of a flattened table; the unit of table retrieval."""

    chunk_id: str
    table_id: str
    text: str
    word_count: int
    cell_map: list[CellSpan]
    row_range: tuple[int, int] | None

    def tokens(self) -> list[str]:
        return self.text.split()

    def cell_text(self, span: CellSpan) -> str:
        """Recover the exact cell string addressed by a cell_map entry."""
        words = self.tokens()[span.start : span.end]
        if not words:
            return ""
        joined = " ".join(words)
        last_col = max(c.col for c in self.cell_map if c.row == span.row)
        if span.col < last_col:
            # the ", " cell separator glued a comma onto the final token
            joined = joined[:-1]
        return joined

    def cell_at(self, token_index: int) -> CellSpan | None:
        """The cell whose token span contains ``token_index``, if any."""
        for span in self.cell_map:
            if span.start <= token_index < span.end:
                return span
        return None


@dataclass(frozen=True)
class GoldLink:
    chunk_id: str
    start: int
    end: int
    passage_id: str


@dataclass
class GoldAnnotation:
    qid: str
    question: str
    answers: list[str]
    gold_chunks: list[str] = field(default_factory=list)
    gold_links: list[GoldLink] = field(default_factory=list)


def _segment(cells: list[str], row: int, base: int) -> tuple[list[str], list[CellSpan]]:
    """Render one header/row segment; returns its tokens and cell spans."""
    tokens: list[str] = []
    spans: list[CellSpan] = []
    last = len(cells) - 1
    for col, cell in enumerate(cells):
        words = cell.split()
        start = base + len(tokens)
        tokens.extend(words)
        if col < last:
            if words:
                tokens[-1] += ","
            else:
                tokens.append(",")
        spans.append(CellSpan(row, col, start, start + len(words)))
    return tokens, spans


def flatten_table(table: Table) -> tuple[str, list[CellSpan]]:
    """Flatten a whole table row-wise into its canonical text form."""
    tokens = table.title.split()
    cell_map: list[CellSpan] = []
    segments: list[tuple[int, list[str]]] = []
    if table.header:
        segments.append((HEADER_ROW, table.header))
    for i, row in enumerate(table.rows):
        if row:
            segments.append((i, row))
    for row_idx, cells in segments:
        tokens.append("||")
        seg_tokens, seg_spans = _segment(cells, row_idx, len(tokens))
        tokens.extend(seg_tokens)
        cell_map.extend(seg_spans)
    return " ".join(tokens), cell_map


def chunk_table(table: Table, budget_words: int = DEFAULT_CHUNK_BUDGET) -> list[TableChunk]:
    """Split a table into chunks of at most ``budget_words`` words.

    Greedy row packing: the title+header prefix is repeated in every chunk,
    rows are appended in order while the word count stays within budget. A
    row that cannot fit even alone still forms its own oversized chunk.
    """
    if budget_words < 1:
        raise ValueError("budget_words must be >= 1")

    prefix_tokens = table.title.split()
    prefix_map: list[CellSpan] = []
    if table.header:
        prefix_tokens.append("||")
        seg_tokens, seg_spans = _segment(table.header, HEADER_ROW, len(prefix_tokens))
        prefix_tokens.extend(seg_tokens)
        prefix_map.extend(seg_spans)

    row_segs = [_segment(row, i, 0) for i, row in enumerate(table.rows) if row]

    chunks: list[TableChunk] = []

    def flush(first: int, last: int, tokens: list[str], cmap: list[CellSpan]) -> None:
        chunk_id = f"{table.id}#{len(chunks)}"
        row_range = (first, last) if first <= last else None
        chunks.append(
            TableChunk(chunk_id, table.id, " ".join(tokens), len(tokens), cmap, row_range)
        )

    cur_tokens = list(prefix_tokens)
    cur_map = list(prefix_map)
    cur_first = -1
    cur_last = -2
    for row_idx, (seg_tokens, seg_spans) in enumerate(row_segs):
        cost = 1 + len(seg_tokens)
        if cur_first >= 0 and len(cur_tokens) + cost > budget_words:
            flush(cur_first, cur_last, cur_tokens, cur_map)
            cur_tokens = list(prefix_tokens)
            cur_map = list(prefix_map)
            cur_first = -1
        if cur_first < 0:
            cur_first = row_idx
        cur_tokens.append("||")
        offset = len(cur_tokens)
        cur_tokens.extend(seg_tokens)
        cur_map.extend(s._replace(start=s.start + offset, end=s.end + offset) for s in seg_spans)
        cur_last = row_idx
    if cur_first >= 0 or not chunks:
        flush(cur_first, cur_last, cur_tokens, cur_map)
    return chunks


@dataclass
class CorpusStore:
    """Immutable after load; safe for concurrent read access."""

    passages: dict[str, Passage]
    tables: dict[str, Table]
    chunks: dict[str, TableChunk]
    chunks_by_table: dict[str, list[str]]

    @property
    def counts(self) -> dict[str, int]:
        return {
            "passages": len(self.passages),
            "tables": len(self.tables),
            "chunks": len(self.chunks),
        }

    def doc_kind(self, doc_id: str) -> str:
        if doc_id in self.chunks:
            return KIND_TABLE_CHUNK
        if doc_id in self.passages:
            return KIND_PASSAGE
        raise KeyError(f"unknown doc id {doc_id!r}")

    def doc_text(self, doc_id: str) -> str:
        if doc_id in self.chunks:
            return self.chunks[doc_id].text
        if doc_id in self.passages:
            return passage_text(self.passages[doc_id])
        raise KeyError(f"unknown doc id {doc_id!r}")

    def iter_docs(self, include: str = "all") -> Iterator[tuple[str, str, str]]:
        """Yield (doc_id, kind, text) in load order.

        ``include`` is one of "table-chunks", "passages", "all".
        """
        if include not in ("table-chunks", "passages", "all"):
            raise ValueError(f"unknown include scope {include!r}")
        if include in ("table-chunks", "all"):
            for chunk in self.chunks.values():
                yield chunk.chunk_id, KIND_TABLE_CHUNK, chunk.text
        if include in ("passages", "all"):
            for p in self.passages.values():
                yield p.id, KIND_PASSAGE, passage_text(p)

    def check_gold(self, annotations: Iterable[GoldAnnotation]) -> None:
        """Verify that every id a gold record references exists in the store."""
        for ann in annotations:
            for cid in ann.gold_chunks:
                if cid not in self.chunks:
                    raise CorpusError(f"gold {ann.qid}: unknown chunk id {cid!r}")
            for link in ann.gold_links:
                if link.chunk_id not in self.chunks:
                    raise CorpusError(f"gold {ann.qid}: unknown chunk id {link.chunk_id!r}")
                if link.passage_id not in self.passages:
                    raise CorpusError(f"gold {ann.qid}: unknown passage id {link.passage_id!r}")


def _read_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed line: {exc}") from exc
            if not isinstance(record, dict):
                raise CorpusError(f"{path}:{lineno}: record is not an object")
            yield lineno, record


def _require(record: dict, key: str, path: str | Path, lineno: int):
    if key not in record:
        raise CorpusError(f"{path}:{lineno}: missing field {key!r}")
    return record[key]


def load_corpus(
    passages_path: str | Path,
    tables_path: str | Path,
    budget_words: int = DEFAULT_CHUNK_BUDGET,
) -> CorpusStore:
    """Load passage and table JSONL files into an in-memory store.

    Tables are chunked eagerly so retrieval units are ready after load.
    """
    passages: dict[str, Passage] = {}
    for lineno, rec in _read_jsonl(passages_path):
        try:
            p = Passage(
                id=_require(rec, "id", passages_path, lineno),
                title=rec.get("title", ""),
                text=_require(rec, "text", passages_path, lineno),
            )
        except CorpusError as exc:
            raise CorpusError(f"{passages_path}:{lineno}: {exc}") from exc
        if p.id in passages:
            raise CorpusError(f"{passages_path}:{lineno}: duplicate id {p.id!r}")
        passages[p.id] = p

    tables: dict[str, Table] = {}
    chunks: dict[str, TableChunk] = {}
    chunks_by_table: dict[str, list[str]] = {}
    for lineno, rec in _read_jsonl(tables_path):
        try:
            t = Table(
                id=_require(rec, "id", tables_path, lineno),
                title=rec.get("title", ""),
                header=_require(rec, "header", tables_path, lineno),
                rows=_require(rec, "rows", tables_path, lineno),
            )
        except CorpusError as exc:
            raise CorpusError(f"{tables_path}:{lineno}: {exc}") from exc
        if t.id in tables:
            raise CorpusError(f"{tables_path}:{lineno}: duplicate id {t.id!r}")
        if t.id in passages:
            raise CorpusError(f"{tables_path}:{lineno}: id {t.id!r} already used by a passage")
        tables[t.id] = t
        table_chunks = chunk_table(t, budget_words)
        chunks_by_table[t.id] = [c.chunk_id for c in table_chunks]
        for c in table_chunks:
            chunks[c.chunk_id] = c

    return CorpusStore(passages, tables, chunks, chunks_by_table)


def load_gold(path: str | Path) -> list[GoldAnnotation]:
    annotations: list[GoldAnnotation] = []
    seen: set[str] = set()
    for lineno, rec in _read_jsonl(path):
        qid = _require(rec, "qid", path, lineno)
        if qid in seen:
            raise CorpusError(f"{path}:{lineno}: duplicate qid {qid!r}")
        seen.add(qid)
        links = [
            GoldLink(
                chunk_id=_require(link, "chunk_id", path, lineno),
                start=_require(link, "start", path, lineno),
                end=_require(link, "end", path, lineno),
                passage_id=_require(link, "passage_id", path, lineno),
            )
            for link in rec.get("gold_links", [])
        ]
        annotations.append(
            GoldAnnotation(
                qid=qid,
                question=_require(rec, "question", path, lineno),
                answers=list(rec.get("answers", [])),
                gold_chunks=list(rec.get("gold_chunks", [])),
                gold_links=links,
            )
        )
    return annotations
