"""Generator backends: answer sampling and directed entailment judging.

Two implementations share one interface: a scripted backend that replays
canned answers and verdicts (deterministic, used by tests and offline
experiments) and an HTTP backend speaking the OpenAI-compatible
chat-completions wire format. A counting wrapper instruments any backend
with thread-safe call tallies.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import httpx

from .errors import (
    BackendTimeoutError,
    BackendUnavailableError,
    ConfigError,
    ScriptMissError,
    UnparseableJudgmentError,
)
from .prompts import PromptTemplates
from .types import (
    AnswerNormalization,
    AnswerSample,
    DecodingParams,
    DocumentRecord,
    QueryRecord,
    normalize_answer,
)

logger = logging.getLogger(__name__)

API_KEY_ENV_VAR = "CAR_API_KEY"


class InputKind(Enum):
    QUERY_ONLY = "query_only"
    QUERY_DOC = "query_doc"


@dataclass(frozen=True, slots=True)
class GeneratorInput:
    """What the generator is conditioned on: the query alone, or query plus
    one candidate document."""

    kind: InputKind
    query: QueryRecord
    document: DocumentRecord | None = None

    def __post_init__(self) -> None:
        if self.kind is InputKind.QUERY_DOC and self.document is None:
            raise ValueError("query-document input requires a document")
        if self.kind is InputKind.QUERY_ONLY and self.document is not None:
            raise ValueError("query-only input must not carry a document")

    @classmethod
    def query_only(cls, query: QueryRecord) -> "GeneratorInput":
        return cls(InputKind.QUERY_ONLY, query)

    @classmethod
    def with_document(cls, query: QueryRecord, document: DocumentRecord) -> "GeneratorInput":
        return cls(InputKind.QUERY_DOC, query, document)

    @property
    def doc_id(self) -> str | None:
        return self.document.doc_id if self.document is not None else None


class EntailmentVerdict(Enum):
    ENTAILS = "entails"
    NOT_ENTAILS = "not_entails"


class BackendKind(Enum):
    SCRIPTED = "scripted"
    HTTP = "http"


@dataclass(frozen=True, slots=True)
class BackendDescriptor:
    """Connection settings for a backend; endpoint applies to HTTP only.

    judge_model_name lets a separate (e.g. discriminative) model handle
    entailment judging; when unset, the answer model judges too.
    """

    backend_kind: BackendKind
    model_name: str
    endpoint: str | None = None
    request_timeout: float = 30.0
    max_concurrency: int = 8
    judge_model_name: str | None = None

    def __post_init__(self) -> None:
        if self.backend_kind is BackendKind.HTTP and not self.endpoint:
            raise ConfigError("HTTP backend requires an endpoint URL")
        if self.backend_kind is BackendKind.SCRIPTED and self.endpoint:
            raise ConfigError("scripted backend must not set an endpoint")
        if self.request_timeout <= 0:
            raise ConfigError("request_timeout must be positive")
        if self.max_concurrency < 1:
            raise ConfigError("max_concurrency must be >= 1")


def empty_answer_verdict(
    premise: str, hypothesis: str, normalization: AnswerNormalization
) -> EntailmentVerdict | None:
    """Degenerate-text rule, applied before any real judging: two blank
    answers entail each other; a blank never entails (nor is entailed by)
    non-blank text. Returns None when the rule does not apply."""
    premise_empty = not normalize_answer(premise, normalization)
    hypothesis_empty = not normalize_answer(hypothesis, normalization)
    if not premise_empty and not hypothesis_empty:
        return None
    if premise_empty and hypothesis_empty:
        return EntailmentVerdict.ENTAILS
    return EntailmentVerdict.NOT_ENTAILS


class GeneratorBackend(ABC):
    """The two generator capabilities the reranker needs.

    Implementations must be safe for concurrent invocation; callers assign
    sample indices, so responses carry no ordering promise beyond that.
    """

    model_name: str = "unknown"

    @property
    def judge_model_name(self) -> str:
        return self.model_name

    @abstractmethod
    def sample_answers(
        self, gen_input: GeneratorInput, k: int, decoding: DecodingParams
    ) -> list[AnswerSample]:
        """Draw k independent answers for the input, normalized, indexed 0..k-1."""

    @abstractmethod
    def judge_entailment(self, premise: str, hypothesis: str) -> EntailmentVerdict:
        """One directed entailment judgment: does premise entail hypothesis?"""


ScriptKey = tuple[str, str | None]


def _script_key(key: object) -> ScriptKey:
    if isinstance(key, GeneratorInput):
        return (key.query.query_id, key.doc_id)
    if isinstance(key, tuple) and len(key) == 2:
        return (str(key[0]), None if key[1] is None else str(key[1]))
    raise TypeError(f"script keys must be GeneratorInput or (query_id, doc_id): {key!r}")


class ScriptedBackend(GeneratorBackend):
    """Replays pre-recorded answers and verdicts; a pure function of its scripts.

    sample_script maps an input (a GeneratorInput, or a (query_id, doc_id)
    pair with doc_id None for query-only) to the ordered answers returned for
    it. entailment is either the string "equality", judging ENTAILS exactly
    when the normalized strings are equal, or an explicit mapping from
    ordered (premise, hypothesis) pairs to verdicts. Requests outside the
    scripts raise ScriptMissError.
    """

    def __init__(
        self,
        sample_script: Mapping[object, Sequence[str]] | None = None,
        entailment: str | Mapping[tuple[str, str], EntailmentVerdict] = "equality",
        normalization: AnswerNormalization = AnswerNormalization.TRIM_LOWER,
        model_name: str = "scripted",
    ) -> None:
        self.model_name = model_name
        self._normalization = normalization
        self._samples: dict[ScriptKey, tuple[str, ...]] = {}
        for key, answers in (sample_script or {}).items():
            self._samples[_script_key(key)] = tuple(answers)
        if entailment == "equality":
            self._equality_rule = True
            self._verdicts: dict[tuple[str, str], EntailmentVerdict] = {}
        elif isinstance(entailment, Mapping):
            self._equality_rule = False
            self._verdicts = dict(entailment)
        else:
            raise ValueError("entailment must be 'equality' or a verdict mapping")

    def sample_answers(
        self, gen_input: GeneratorInput, k: int, decoding: DecodingParams
    ) -> list[AnswerSample]:
        if k < 1:
            raise ValueError("k must be >= 1")
        key = _script_key(gen_input)
        answers = self._samples.get(key)
        if answers is None:
            raise ScriptMissError(f"no scripted answers for input {key}")
        if len(answers) < k:
            raise ScriptMissError(
                f"scripted answers for input {key} cover only {len(answers)} of k={k}"
            )
        return [
            AnswerSample(normalize_answer(text, self._normalization), i)
            for i, text in enumerate(answers[:k])
        ]

    def judge_entailment(self, premise: str, hypothesis: str) -> EntailmentVerdict:
        degenerate = empty_answer_verdict(premise, hypothesis, self._normalization)
        if degenerate is not None:
            return degenerate
        if self._equality_rule:
            same = normalize_answer(premise, self._normalization) == normalize_answer(
                hypothesis, self._normalization
            )
            return EntailmentVerdict.ENTAILS if same else EntailmentVerdict.NOT_ENTAILS
        verdict = self._verdicts.get((premise, hypothesis))
        if verdict is None:
            raise ScriptMissError(
                f"no scripted verdict for pair ({premise!r}, {hypothesis!r})"
            )
        return verdict


def make_scripted_backend(
    sample_script: Mapping[object, Sequence[str]] | None = None,
    entailment: str | Mapping[tuple[str, str], EntailmentVerdict] = "equality",
    normalization: AnswerNormalization = AnswerNormalization.TRIM_LOWER,
) -> ScriptedBackend:
    """Build a deterministic replay backend from answer and verdict scripts."""
    return ScriptedBackend(sample_script, entailment, normalization)


def scripted_backend_from_json(
    path: str | Path, normalization: AnswerNormalization = AnswerNormalization.TRIM_LOWER
) -> ScriptedBackend:
    """Load a scripted backend from a JSON file.

    Expected shape::

        {
          "samples": [
            {"query_id": "q1", "doc_id": null, "answers": ["Paris", ...]},
            {"query_id": "q1", "doc_id": "d1", "answers": [...]}
          ],
          "entailment": {"rule": "equality"}
        }

    The entailment rule may instead be {"rule": "table", "pairs": [
    {"premise": ..., "hypothesis": ..., "verdict": "entails"|"not_entails"}]}.
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot load scripted backend from {path}: {err}") from err
    samples: dict[ScriptKey, list[str]] = {}
    for record in data.get("samples", []):
        samples[(record["query_id"], record.get("doc_id"))] = list(record["answers"])
    entailment_spec = data.get("entailment", {"rule": "equality"})
    rule = entailment_spec.get("rule", "equality")
    if rule == "equality":
        entailment: str | dict[tuple[str, str], EntailmentVerdict] = "equality"
    elif rule == "table":
        entailment = {
            (pair["premise"], pair["hypothesis"]): EntailmentVerdict(pair["verdict"])
            for pair in entailment_spec.get("pairs", [])
        }
    else:
        raise ConfigError(f"unknown entailment rule: {rule!r}")
    return ScriptedBackend(samples, entailment, normalization)


class HttpBackend(GeneratorBackend):
    """OpenAI-compatible chat-completions client.

    Issues one request per sample (never server-side n>1) through a thread
    pool capped at the descriptor's max_concurrency, with bearer-token auth
    read from the CAR_API_KEY environment variable. Transient transport
    failures are retried with exponential backoff before surfacing as
    BackendUnavailableError / BackendTimeoutError.
    """

    MAX_ATTEMPTS = 3

    def __init__(
        self,
        descriptor: BackendDescriptor,
        templates: PromptTemplates | None = None,
        normalization: AnswerNormalization = AnswerNormalization.TRIM_LOWER,
        judge_decoding: DecodingParams | None = None,
        retry_base_delay: float = 0.5,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        if descriptor.backend_kind is not BackendKind.HTTP:
            raise ConfigError("HttpBackend needs an HTTP descriptor")
        self.descriptor = descriptor
        self.model_name = descriptor.model_name
        self.templates = templates or PromptTemplates()
        self._normalization = normalization
        self._judge_decoding = judge_decoding or DecodingParams()
        self._retry_base_delay = retry_base_delay
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(API_KEY_ENV_VAR)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(
            base_url=descriptor.endpoint or "",
            headers=headers,
            timeout=descriptor.request_timeout,
            transport=transport,
        )
        self._pool = ThreadPoolExecutor(
            max_workers=descriptor.max_concurrency, thread_name_prefix="car-http"
        )

    def close(self) -> None:
        self._pool.shutdown(wait=True)
        self._client.close()

    @property
    def judge_model_name(self) -> str:
        return self.descriptor.judge_model_name or self.descriptor.model_name

    def _chat(
        self, prompt: str, temperature: float, max_tokens: int, model: str | None = None
    ) -> str:
        payload = {
            "model": model or self.descriptor.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            "max_tokens": max_tokens,
            "n": 1,
        }
        last_error: Exception | None = None
        timed_out = False
        for attempt in range(self.MAX_ATTEMPTS):
            if attempt:
                time.sleep(self._retry_base_delay * (2 ** (attempt - 1)))
            try:
                response = self._client.post("/chat/completions", json=payload)
            except httpx.TimeoutException as err:
                last_error, timed_out = err, True
                continue
            except httpx.TransportError as err:
                last_error, timed_out = err, False
                continue
            if response.status_code >= 500:
                last_error = BackendUnavailableError(
                    f"server error {response.status_code}"
                )
                timed_out = False
                continue
            if response.status_code >= 400:
                raise BackendUnavailableError(
                    f"request rejected with status {response.status_code}: "
                    f"{response.text[:200]}"
                )
            try:
                return response.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError, json.JSONDecodeError) as err:
                raise BackendUnavailableError(
                    f"malformed completion response: {err}"
                ) from err
        if timed_out:
            raise BackendTimeoutError(
                f"no response within {self.descriptor.request_timeout}s after "
                f"{self.MAX_ATTEMPTS} attempts"
            ) from last_error
        raise BackendUnavailableError(
            f"transport failed after {self.MAX_ATTEMPTS} attempts: {last_error}"
        ) from last_error

    def _render(self, gen_input: GeneratorInput) -> str:
        if gen_input.kind is InputKind.QUERY_ONLY:
            return self.templates.render_query_only(gen_input.query)
        assert gen_input.document is not None
        return self.templates.render_query_doc(gen_input.query, gen_input.document)

    def sample_answers(
        self, gen_input: GeneratorInput, k: int, decoding: DecodingParams
    ) -> list[AnswerSample]:
        if k < 1:
            raise ValueError("k must be >= 1")
        prompt = self._render(gen_input)
        futures = [
            self._pool.submit(self._chat, prompt, decoding.temperature, decoding.max_tokens)
            for _ in range(k)
        ]
        texts = [future.result() for future in futures]
        return [
            AnswerSample(normalize_answer(text, self._normalization), i)
            for i, text in enumerate(texts)
        ]

    def judge_entailment(self, premise: str, hypothesis: str) -> EntailmentVerdict:
        degenerate = empty_answer_verdict(premise, hypothesis, self._normalization)
        if degenerate is not None:
            return degenerate
        prompt = self.templates.render_entailment(premise, hypothesis)
        reply = self._chat(
            prompt,
            self._judge_decoding.judge_temperature,
            self._judge_decoding.max_tokens,
            model=self.judge_model_name,
        )
        lowered = reply.strip().lower()
        if lowered.startswith("yes"):
            return EntailmentVerdict.ENTAILS
        if lowered.startswith("no"):
            return EntailmentVerdict.NOT_ENTAILS
        # Lenient fallback for verbose judges that bury the verdict mid-reply.
        has_yes = "yes" in lowered
        has_no = "no" in lowered
        if has_yes and not has_no:
            return EntailmentVerdict.ENTAILS
        if has_no and not has_yes:
            return EntailmentVerdict.NOT_ENTAILS
        raise UnparseableJudgmentError(reply)


class CountingBackend(GeneratorBackend):
    """Delegating wrapper that tallies generator usage.

    sample_calls counts individual samples (each sampling request adds k);
    judge_calls counts directed entailment judgments. Thread-safe.
    """

    def __init__(self, inner: GeneratorBackend) -> None:
        self.inner = inner
        self.model_name = inner.model_name
        self.sample_calls = 0
        self.judge_calls = 0
        self._lock = threading.Lock()

    @property
    def judge_model_name(self) -> str:
        return self.inner.judge_model_name

    def sample_answers(
        self, gen_input: GeneratorInput, k: int, decoding: DecodingParams
    ) -> list[AnswerSample]:
        samples = self.inner.sample_answers(gen_input, k, decoding)
        with self._lock:
            self.sample_calls += len(samples)
        return samples

    def judge_entailment(self, premise: str, hypothesis: str) -> EntailmentVerdict:
        verdict = self.inner.judge_entailment(premise, hypothesis)
        with self._lock:
            self.judge_calls += 1
        return verdict
