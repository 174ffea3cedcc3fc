"""Prompt templates for the HTTP generator backend.

Templates are configuration, not code: the defaults below can be replaced by
a JSON file (keys: query_only, query_doc, entailment) so experiments stay
reproducible without touching the engine. Placeholders: {query}, {document},
{premise}, {hypothesis}.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .types import DocumentRecord, QueryRecord

DEFAULT_QUERY_ONLY_TEMPLATE = (
    "Answer the following question as concisely as possible.\n"
    "Question: {query}\n"
    "Answer:"
)

DEFAULT_QUERY_DOC_TEMPLATE = (
    "Use the document to answer the question as concisely as possible.\n"
    "Document: {document}\n"
    "Question: {query}\n"
    "Answer:"
)

DEFAULT_ENTAILMENT_TEMPLATE = (
    "Premise: {premise}\n"
    "Hypothesis: {hypothesis}\n"
    "Does the premise entail the hypothesis? Answer with yes or no only."
)

# Documents longer than this many characters are cut before prompting.
DEFAULT_DOC_CHAR_BUDGET = 4000


@dataclass(frozen=True)
class PromptTemplates:
    """The three prompt shapes plus the document character budget."""

    query_only: str = DEFAULT_QUERY_ONLY_TEMPLATE
    query_doc: str = DEFAULT_QUERY_DOC_TEMPLATE
    entailment: str = DEFAULT_ENTAILMENT_TEMPLATE
    doc_char_budget: int = DEFAULT_DOC_CHAR_BUDGET

    def __post_init__(self) -> None:
        if self.doc_char_budget < 1:
            raise ConfigError("doc_char_budget must be >= 1")

    @classmethod
    def load(cls, path: str | Path, doc_char_budget: int = DEFAULT_DOC_CHAR_BUDGET) -> "PromptTemplates":
        """Read templates from a JSON file; absent keys keep their defaults."""
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot load prompt templates from {path}: {err}") from err
        if not isinstance(data, dict):
            raise ConfigError(f"prompt template file {path} must hold a JSON object")
        unknown = set(data) - {"query_only", "query_doc", "entailment"}
        if unknown:
            raise ConfigError(f"unknown prompt template keys: {sorted(unknown)}")
        return cls(
            query_only=data.get("query_only", DEFAULT_QUERY_ONLY_TEMPLATE),
            query_doc=data.get("query_doc", DEFAULT_QUERY_DOC_TEMPLATE),
            entailment=data.get("entailment", DEFAULT_ENTAILMENT_TEMPLATE),
            doc_char_budget=doc_char_budget,
        )

    def render_query_only(self, query: QueryRecord) -> str:
        return self.query_only.format(query=query.text)

    def render_query_doc(self, query: QueryRecord, document: DocumentRecord) -> str:
        return self.query_doc.format(
            query=query.text, document=document.text[: self.doc_char_budget]
        )

    def render_entailment(self, premise: str, hypothesis: str) -> str:
        return self.entailment.format(premise=premise, hypothesis=hypothesis)
