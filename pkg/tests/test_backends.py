"""Backend behavior: scripted replay, the HTTP wire format, counting."""

import json
import threading
import time

import httpx
import pytest

from car_rerank import (
    BackendDescriptor,
    BackendKind,
    CountingBackend,
    DecodingParams,
    DocumentRecord,
    EntailmentVerdict,
    GeneratorInput,
    HttpBackend,
    QueryRecord,
    make_scripted_backend,
)
from car_rerank.errors import (
    BackendTimeoutError,
    BackendUnavailableError,
    ConfigError,
    ScriptMissError,
    UnparseableJudgmentError,
)
from car_rerank.types import AnswerNormalization

QUERY = QueryRecord("q1", "capital of France?")
Q_ONLY = GeneratorInput.query_only(QUERY)
DECODING = DecodingParams()


class TestGeneratorInput:
    def test_query_doc_requires_document(self):
        with pytest.raises(ValueError):
            GeneratorInput.with_document(QUERY, None)  # type: ignore[arg-type]

    def test_query_only_rejects_document(self):
        from car_rerank import InputKind

        with pytest.raises(ValueError):
            GeneratorInput(InputKind.QUERY_ONLY, QUERY, DocumentRecord("d", "text"))


class TestScriptedSampling:
    def test_replays_in_script_order(self):
        backend = make_scripted_backend({Q_ONLY: ["Paris", "Paris", "Lyon"]})
        samples = backend.sample_answers(Q_ONLY, 3, DECODING)
        assert [s.text for s in samples] == ["paris", "paris", "lyon"]
        assert [s.sample_index for s in samples] == [0, 1, 2]

    def test_insufficient_script_raises(self):
        backend = make_scripted_backend({("q1", None): ["Paris", "Lyon"]})
        with pytest.raises(ScriptMissError):
            backend.sample_answers(Q_ONLY, 3, DECODING)

    def test_k_one_returns_single_sample(self):
        backend = make_scripted_backend({("q1", None): ["Paris"]})
        samples = backend.sample_answers(Q_ONLY, 1, DECODING)
        assert len(samples) == 1
        assert samples[0].sample_index == 0

    def test_unknown_input_raises(self):
        backend = make_scripted_backend({})
        with pytest.raises(ScriptMissError):
            backend.sample_answers(Q_ONLY, 1, DECODING)

    def test_repeated_calls_identical(self):
        backend = make_scripted_backend({("q1", None): ["A", "B", "A"]})
        first = backend.sample_answers(Q_ONLY, 3, DECODING)
        second = backend.sample_answers(Q_ONLY, 3, DECODING)
        assert first == second

    def test_normalization_none_keeps_case(self):
        backend = make_scripted_backend(
            {("q1", None): ["Paris"]}, normalization=AnswerNormalization.NONE
        )
        assert backend.sample_answers(Q_ONLY, 1, DECODING)[0].text == "Paris"


class TestScriptedJudging:
    def test_equality_judge_reflexive(self):
        backend = make_scripted_backend()
        assert backend.judge_entailment("Paris", "Paris") is EntailmentVerdict.ENTAILS

    def test_equality_judge_distinct(self):
        backend = make_scripted_backend()
        assert backend.judge_entailment("Paris", "Lyon") is EntailmentVerdict.NOT_ENTAILS

    def test_equality_judge_normalizes(self):
        backend = make_scripted_backend()
        assert backend.judge_entailment(" PARIS ", "paris") is EntailmentVerdict.ENTAILS

    def test_explicit_asymmetric_table(self):
        backend = make_scripted_backend(
            entailment={
                ("a", "b"): EntailmentVerdict.ENTAILS,
                ("b", "a"): EntailmentVerdict.NOT_ENTAILS,
            }
        )
        assert backend.judge_entailment("a", "b") is EntailmentVerdict.ENTAILS
        assert backend.judge_entailment("b", "a") is EntailmentVerdict.NOT_ENTAILS

    def test_missing_pair_raises(self):
        backend = make_scripted_backend(entailment={})
        with pytest.raises(ScriptMissError):
            backend.judge_entailment("a", "b")

    def test_empty_answer_rule(self):
        backend = make_scripted_backend(entailment={})
        assert backend.judge_entailment("", "") is EntailmentVerdict.ENTAILS
        assert backend.judge_entailment("", "Paris") is EntailmentVerdict.NOT_ENTAILS
        assert backend.judge_entailment("Paris", " ") is EntailmentVerdict.NOT_ENTAILS


class TestCountingBackend:
    def test_counts_samples_and_judgments(self):
        backend = make_scripted_backend({("q1", None): ["A", "B", "A", "C"]})
        counter = CountingBackend(backend)
        counter.sample_answers(Q_ONLY, 4, DECODING)
        counter.judge_entailment("a", "b")
        counter.judge_entailment("a", "a")
        assert counter.sample_calls == 4
        assert counter.judge_calls == 2


class TestBackendDescriptor:
    def test_http_requires_endpoint(self):
        with pytest.raises(ConfigError):
            BackendDescriptor(BackendKind.HTTP, "model-x")

    def test_scripted_rejects_endpoint(self):
        with pytest.raises(ConfigError):
            BackendDescriptor(BackendKind.SCRIPTED, "s", endpoint="http://x")


def _http_backend(handler, max_concurrency=4, timeout=5.0, **kwargs) -> HttpBackend:
    descriptor = BackendDescriptor(
        BackendKind.HTTP,
        "model-x",
        endpoint="http://llm.test/v1",
        request_timeout=timeout,
        max_concurrency=max_concurrency,
    )
    return HttpBackend(
        descriptor,
        transport=httpx.MockTransport(handler),
        retry_base_delay=0.0,
        **kwargs,
    )


def _completion(text: str) -> httpx.Response:
    return httpx.Response(200, json={"choices": [{"message": {"content": text}}]})


class TestHttpWireFormat:
    def test_request_shape_and_auth(self, monkeypatch):
        monkeypatch.setenv("CAR_API_KEY", "secret-token")
        seen = {}

        def handler(request: httpx.Request) -> httpx.Response:
            seen["url"] = str(request.url)
            seen["auth"] = request.headers.get("Authorization")
            seen["body"] = json.loads(request.content)
            return _completion("Paris")

        backend = _http_backend(handler)
        samples = backend.sample_answers(Q_ONLY, 1, DecodingParams(temperature=0.7, max_tokens=32))
        backend.close()
        assert samples[0].text == "paris"
        assert seen["url"] == "http://llm.test/v1/chat/completions"
        assert seen["auth"] == "Bearer secret-token"
        assert seen["body"]["model"] == "model-x"
        assert seen["body"]["temperature"] == 0.7
        assert seen["body"]["max_tokens"] == 32
        assert seen["body"]["n"] == 1
        assert seen["body"]["messages"][0]["role"] == "user"
        assert "capital of France?" in seen["body"]["messages"][0]["content"]

    def test_one_request_per_sample(self):
        calls = []

        def handler(request: httpx.Request) -> httpx.Response:
            calls.append(1)
            return _completion("Paris")

        backend = _http_backend(handler)
        samples = backend.sample_answers(Q_ONLY, 5, DECODING)
        backend.close()
        assert len(calls) == 5
        assert [s.sample_index for s in samples] == [0, 1, 2, 3, 4]

    def test_document_truncated_to_char_budget(self):
        from car_rerank import PromptTemplates

        bodies = []

        def handler(request: httpx.Request) -> httpx.Response:
            bodies.append(json.loads(request.content)["messages"][0]["content"])
            return _completion("ok")

        templates = PromptTemplates(doc_char_budget=10)
        backend = _http_backend(handler, templates=templates)
        doc = DocumentRecord("d1", "x" * 100)
        backend.sample_answers(GeneratorInput.with_document(QUERY, doc), 1, DECODING)
        backend.close()
        assert "x" * 10 in bodies[0]
        assert "x" * 11 not in bodies[0]

    def test_max_concurrency_is_respected(self):
        lock = threading.Lock()
        state = {"active": 0, "peak": 0}

        def handler(request: httpx.Request) -> httpx.Response:
            with lock:
                state["active"] += 1
                state["peak"] = max(state["peak"], state["active"])
            time.sleep(0.02)
            with lock:
                state["active"] -= 1
            return _completion("Paris")

        backend = _http_backend(handler, max_concurrency=2)
        backend.sample_answers(Q_ONLY, 8, DECODING)
        backend.close()
        assert state["peak"] <= 2


class TestHttpJudging:
    @pytest.mark.parametrize(
        "reply,verdict",
        [
            ("Yes", EntailmentVerdict.ENTAILS),
            ("yes, it does.", EntailmentVerdict.ENTAILS),
            ("No.", EntailmentVerdict.NOT_ENTAILS),
            ("The answer is yes", EntailmentVerdict.ENTAILS),
        ],
    )
    def test_lenient_yes_no_parsing(self, reply, verdict):
        backend = _http_backend(lambda request: _completion(reply))
        assert backend.judge_entailment("a", "b") is verdict
        backend.close()

    def test_unparseable_reply_raises(self):
        backend = _http_backend(lambda request: _completion("maybe?"))
        with pytest.raises(UnparseableJudgmentError):
            backend.judge_entailment("a", "b")
        backend.close()

    def test_judge_uses_greedy_temperature(self):
        bodies = []

        def handler(request: httpx.Request) -> httpx.Response:
            bodies.append(json.loads(request.content))
            return _completion("yes")

        backend = _http_backend(handler, judge_decoding=DecodingParams(judge_temperature=0.0))
        backend.judge_entailment("a", "b")
        backend.close()
        assert bodies[0]["temperature"] == 0.0

    def test_separate_judge_model(self):
        bodies = []

        def handler(request: httpx.Request) -> httpx.Response:
            bodies.append(json.loads(request.content))
            return _completion("yes")

        descriptor = BackendDescriptor(
            BackendKind.HTTP,
            "answer-model",
            endpoint="http://llm.test/v1",
            judge_model_name="nli-model",
        )
        backend = HttpBackend(descriptor, transport=httpx.MockTransport(handler), retry_base_delay=0.0)
        backend.sample_answers(Q_ONLY, 1, DECODING)
        backend.judge_entailment("a", "b")
        backend.close()
        assert bodies[0]["model"] == "answer-model"
        assert bodies[1]["model"] == "nli-model"
        assert backend.judge_model_name == "nli-model"

    def test_empty_answer_rule_skips_request(self):
        def handler(request: httpx.Request) -> httpx.Response:
            raise AssertionError("the judge must not be called for blank answers")

        backend = _http_backend(handler)
        assert backend.judge_entailment("", "") is EntailmentVerdict.ENTAILS
        assert backend.judge_entailment("x", "") is EntailmentVerdict.NOT_ENTAILS
        backend.close()


class TestHttpResilience:
    def test_retries_then_succeeds(self):
        attempts = []

        def handler(request: httpx.Request) -> httpx.Response:
            attempts.append(1)
            if len(attempts) < 3:
                raise httpx.ConnectError("boom", request=request)
            return _completion("Paris")

        backend = _http_backend(handler)
        samples = backend.sample_answers(Q_ONLY, 1, DECODING)
        backend.close()
        assert samples[0].text == "paris"
        assert len(attempts) == 3

    def test_unavailable_after_exhausted_retries(self):
        def handler(request: httpx.Request) -> httpx.Response:
            raise httpx.ConnectError("down", request=request)

        backend = _http_backend(handler)
        with pytest.raises(BackendUnavailableError):
            backend.sample_answers(Q_ONLY, 1, DECODING)
        backend.close()

    def test_timeout_surfaces_as_timeout_error(self):
        def handler(request: httpx.Request) -> httpx.Response:
            raise httpx.ReadTimeout("slow", request=request)

        backend = _http_backend(handler)
        with pytest.raises(BackendTimeoutError):
            backend.sample_answers(Q_ONLY, 1, DECODING)
        backend.close()

    def test_server_errors_retry_then_fail(self):
        attempts = []

        def handler(request: httpx.Request) -> httpx.Response:
            attempts.append(1)
            return httpx.Response(503, text="overloaded")

        backend = _http_backend(handler)
        with pytest.raises(BackendUnavailableError):
            backend.sample_answers(Q_ONLY, 1, DECODING)
        backend.close()
        assert len(attempts) == 3

    def test_client_error_fails_fast(self):
        attempts = []

        def handler(request: httpx.Request) -> httpx.Response:
            attempts.append(1)
            return httpx.Response(401, text="bad key")

        backend = _http_backend(handler)
        with pytest.raises(BackendUnavailableError):
            backend.sample_answers(Q_ONLY, 1, DECODING)
        backend.close()
        assert len(attempts) == 1
