"""Exception hierarchy shared across the package."""

from __future__ import annotations


class CarError(Exception):
    """Base class for all errors raised by this package."""


class DuplicateDocIdError(CarError):
    """A ranked list contains the same doc_id at two positions."""

    def __init__(self, doc_id: str) -> None:
        super().__init__(f"duplicate doc_id in ranked list: {doc_id!r}")
        self.doc_id = doc_id


class EmptyQueryIdError(CarError):
    """A ranked list carries an empty query_id."""

    def __init__(self) -> None:
        super().__init__("ranked list has an empty query_id")


class MissingLabelError(CarError):
    """A document to be sorted has no bin label."""

    def __init__(self, doc_id: str) -> None:
        super().__init__(f"no bin label for doc_id: {doc_id!r}")
        self.doc_id = doc_id


class MissingDocumentError(CarError):
    """A doc_id in the rerank scope has no corpus text."""

    def __init__(self, doc_id: str) -> None:
        super().__init__(f"document text not found for doc_id: {doc_id!r}")
        self.doc_id = doc_id


class BackendError(CarError):
    """Base class for generator-backend failures (fail-open at the query level)."""


class ScriptMissError(BackendError):
    """The scripted backend has no entry (or too few answers) for a request."""


class BackendUnavailableError(BackendError):
    """Transport-level failure that persisted through all retries."""


class BackendTimeoutError(BackendError):
    """The backend did not answer within the configured timeout, after retries."""


class UnparseableJudgmentError(BackendError):
    """The judge model's reply matched neither yes nor no."""

    def __init__(self, reply: str) -> None:
        super().__init__(f"entailment reply is neither yes nor no: {reply!r}")
        self.reply = reply


class MalformedLineError(CarError):
    """A line in a qrels/run/tsv file does not match the expected format."""

    def __init__(self, line_no: int, reason: str) -> None:
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no


class InconsistentRankError(CarError):
    """A run file's rank or score column disagrees with line order."""

    def __init__(self, query_id: str, doc_id: str, reason: str) -> None:
        super().__init__(f"run entry ({query_id}, {doc_id}): {reason}")
        self.query_id = query_id
        self.doc_id = doc_id


class EmptyEvaluationSetError(CarError):
    """No query in the evaluation set has any relevant document."""


class ZeroBaselineError(CarError):
    """Relative improvement is undefined for a non-positive baseline score."""


class ConfigError(CarError):
    """A configuration file or value is invalid."""
