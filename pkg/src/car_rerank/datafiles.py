"""Line-oriented data files: queries and corpus documents as UTF-8 TSV."""

from __future__ import annotations

from pathlib import Path

from .errors import MalformedLineError
from .types import DocumentRecord, QueryRecord


def _tsv_records(path: str | Path) -> list[tuple[int, str, str]]:
    records: list[tuple[int, str, str]] = []
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        if "\t" not in line:
            raise MalformedLineError(line_no, "expected identifier TAB text")
        identifier, _, body = line.partition("\t")
        records.append((line_no, identifier, body))
    return records


def load_queries(path: str | Path) -> list[QueryRecord]:
    """Read "query_id TAB text" lines into query records."""
    queries = []
    for line_no, query_id, text in _tsv_records(path):
        try:
            queries.append(QueryRecord(query_id, text))
        except ValueError as err:
            raise MalformedLineError(line_no, str(err)) from err
    return queries


def load_corpus(path: str | Path) -> dict[str, DocumentRecord]:
    """Read "doc_id TAB text" lines into a doc_id-keyed corpus."""
    corpus: dict[str, DocumentRecord] = {}
    for line_no, doc_id, text in _tsv_records(path):
        try:
            corpus[doc_id] = DocumentRecord(doc_id, text)
        except ValueError as err:
            raise MalformedLineError(line_no, str(err)) from err
    return corpus
