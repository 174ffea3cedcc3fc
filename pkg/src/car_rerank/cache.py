"""Append-only response cache for byte-reproducible experiment replays.

Every generator output (one answer sample or one entailment verdict) is one
JSONL record carrying its key, payload, creation time, and a checksum.
Records never change once written; corrupt or truncated records are logged
and treated as misses. A warm cache lets any command rerun with zero
generator calls and byte-identical outputs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from pathlib import Path

from .backends import (
    EntailmentVerdict,
    GeneratorBackend,
    GeneratorInput,
    InputKind,
)
from .prompts import PromptTemplates
from .types import AnswerSample, DecodingParams

logger = logging.getLogger(__name__)

CACHE_FILE_NAME = "entries.jsonl"

# A key is a flat tuple of strings/ints: record kind, model, input kind,
# query id, doc id (or QUERY_ONLY), prompt hash, and sample index or pair hash.
CacheKey = tuple[str | int, ...]


def _canonical(value: object) -> str:
    return json.dumps(value, sort_keys=True, ensure_ascii=True, separators=(",", ":"))


def _checksum(key: CacheKey, payload: str) -> str:
    return hashlib.sha256(_canonical([list(key), payload]).encode("utf-8")).hexdigest()


def prompt_hash(template: str, rendered: str, temperature: float, max_tokens: int) -> str:
    """Fingerprint of everything that shapes one generator request, so that
    editing a template or decoding parameter naturally invalidates the cache."""
    body = _canonical(
        {
            "template": template,
            "rendered": rendered,
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
    )
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


class ResponseCache:
    """File-backed key/payload store with per-record checksums.

    Writes append one JSONL line per record; concurrent writers of distinct
    keys cannot corrupt each other because records are self-contained lines.
    A record that fails its checksum (or does not parse) is a miss.
    """

    def __init__(self, cache_dir: str | Path) -> None:
        self.path = Path(cache_dir) / CACHE_FILE_NAME
        self._entries: dict[CacheKey, str] = {}
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._load()

    def _load(self) -> None:
        if not self.path.exists():
            return
        with self.path.open(encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                    key = tuple(record["key"])
                    payload = record["payload"]
                    stored_sum = record["checksum"]
                except (json.JSONDecodeError, KeyError, TypeError):
                    logger.warning("cache record %d is unreadable; ignoring", line_no)
                    continue
                if _checksum(key, payload) != stored_sum:
                    logger.warning("cache record %d fails its checksum; ignoring", line_no)
                    continue
                self._entries[key] = payload

    def get(self, key: CacheKey) -> str | None:
        with self._lock:
            return self._entries.get(key)

    def put(self, key: CacheKey, payload: str) -> None:
        record = {
            "key": list(key),
            "payload": payload,
            "created_at": time.time(),
            "checksum": _checksum(key, payload),
        }
        line = _canonical(record) + "\n"
        with self._lock:
            if key in self._entries:
                return
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(line)
            self._entries[key] = payload

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


class CachingBackend(GeneratorBackend):
    """Write-through cache around any generator backend.

    Sample requests are keyed per sample index, so a k-sample set replays
    exactly; when only some indices are cached, just the missing ones are
    requested from the inner backend. Judgments are keyed by the judged pair
    and shared across queries.
    """

    def __init__(
        self,
        inner: GeneratorBackend,
        cache: ResponseCache,
        templates: PromptTemplates | None = None,
        judge_decoding: DecodingParams | None = None,
    ) -> None:
        self.inner = inner
        self.model_name = inner.model_name
        self.cache = cache
        self.templates = templates or PromptTemplates()
        self._judge_decoding = judge_decoding or DecodingParams()

    def _sample_key(
        self, gen_input: GeneratorInput, decoding: DecodingParams, sample_index: int
    ) -> CacheKey:
        if gen_input.kind is InputKind.QUERY_ONLY:
            template = self.templates.query_only
            rendered = self.templates.render_query_only(gen_input.query)
            doc_part = "QUERY_ONLY"
        else:
            assert gen_input.document is not None
            template = self.templates.query_doc
            rendered = self.templates.render_query_doc(gen_input.query, gen_input.document)
            doc_part = gen_input.document.doc_id
        fingerprint = prompt_hash(template, rendered, decoding.temperature, decoding.max_tokens)
        return (
            "sample",
            self.model_name,
            gen_input.kind.value,
            gen_input.query.query_id,
            doc_part,
            fingerprint,
            sample_index,
        )

    @property
    def judge_model_name(self) -> str:
        return self.inner.judge_model_name

    def _judge_key(self, premise: str, hypothesis: str) -> CacheKey:
        rendered = self.templates.render_entailment(premise, hypothesis)
        fingerprint = prompt_hash(
            self.templates.entailment,
            rendered,
            self._judge_decoding.judge_temperature,
            self._judge_decoding.max_tokens,
        )
        pair = hashlib.sha256(_canonical([premise, hypothesis]).encode("utf-8")).hexdigest()
        return ("judge", self.judge_model_name, fingerprint, pair)

    def sample_answers(
        self, gen_input: GeneratorInput, k: int, decoding: DecodingParams
    ) -> list[AnswerSample]:
        keys = [self._sample_key(gen_input, decoding, i) for i in range(k)]
        cached = [self.cache.get(key) for key in keys]
        missing = [i for i, payload in enumerate(cached) if payload is None]
        if missing:
            fresh = self.inner.sample_answers(gen_input, len(missing), decoding)
            for target_index, sample in zip(missing, fresh):
                self.cache.put(keys[target_index], sample.text)
                cached[target_index] = sample.text
        return [
            AnswerSample(text, i) for i, text in enumerate(cached) if text is not None
        ]

    def judge_entailment(self, premise: str, hypothesis: str) -> EntailmentVerdict:
        key = self._judge_key(premise, hypothesis)
        cached = self.cache.get(key)
        if cached is not None:
            return EntailmentVerdict(cached)
        verdict = self.inner.judge_entailment(premise, hypothesis)
        self.cache.put(key, verdict.value)
        return verdict
