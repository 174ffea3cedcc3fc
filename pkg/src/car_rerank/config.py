"""Flat key=value configuration files and the config echo for output headers.

Every engine and backend knob has a documented default, so a config file
only needs the keys it changes. Lines starting with '#' and blank lines are
ignored; unknown keys are errors so typos cannot silently fall back to
defaults.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

from .backends import BackendDescriptor, BackendKind
from .errors import ConfigError
from .types import (
    AnswerNormalization,
    CarConfig,
    ClusteringMode,
    DecodingParams,
)

ENGINE_KEYS = {
    "k",
    "query_threshold",
    "confidence_margin",
    "top_n",
    "clustering_mode",
    "disable_qt",
    "disable_cm",
    "temperature",
    "judge_temperature",
    "max_tokens",
    "answer_normalization",
}

BACKEND_KEYS = {
    "backend",
    "model_name",
    "judge_model_name",
    "endpoint",
    "request_timeout",
    "max_concurrency",
    "doc_char_budget",
}

EXTRA_KEYS = {"run_tag"}

ALL_KEYS = ENGINE_KEYS | BACKEND_KEYS | EXTRA_KEYS


def load_config_file(path: str | Path) -> dict[str, str]:
    """Read a key=value file into a string mapping."""
    values: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config file {path}: {err}") from err
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path} line {line_no}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in ALL_KEYS:
            raise ConfigError(f"{path} line {line_no}: unknown config key {key!r}")
        values[key] = value.strip()
    return values


def _parse_bool(key: str, value: str) -> bool:
    lowered = value.lower()
    if lowered in {"true", "1", "yes"}:
        return True
    if lowered in {"false", "0", "no"}:
        return False
    raise ConfigError(f"config key {key} expects a boolean, got {value!r}")


def _parse_float(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"config key {key} expects a number, got {value!r}") from None


def _parse_int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"config key {key} expects an integer, got {value!r}") from None


def build_car_config(values: Mapping[str, str]) -> CarConfig:
    """Construct the engine configuration from string key/values."""
    defaults = CarConfig()
    decoding_defaults = DecodingParams()
    try:
        clustering_mode = (
            ClusteringMode(values["clustering_mode"])
            if "clustering_mode" in values
            else defaults.clustering_mode
        )
    except ValueError:
        raise ConfigError(
            f"clustering_mode must be one of {[m.value for m in ClusteringMode]}"
        ) from None
    try:
        normalization = (
            AnswerNormalization(values["answer_normalization"])
            if "answer_normalization" in values
            else defaults.answer_normalization
        )
    except ValueError:
        raise ConfigError(
            f"answer_normalization must be one of {[m.value for m in AnswerNormalization]}"
        ) from None
    decoding = DecodingParams(
        temperature=_parse_float("temperature", values["temperature"])
        if "temperature" in values
        else decoding_defaults.temperature,
        judge_temperature=_parse_float("judge_temperature", values["judge_temperature"])
        if "judge_temperature" in values
        else decoding_defaults.judge_temperature,
        max_tokens=_parse_int("max_tokens", values["max_tokens"])
        if "max_tokens" in values
        else decoding_defaults.max_tokens,
    )
    try:
        return CarConfig(
            k=_parse_int("k", values["k"]) if "k" in values else defaults.k,
            query_threshold=_parse_float("query_threshold", values["query_threshold"])
            if "query_threshold" in values
            else defaults.query_threshold,
            confidence_margin=_parse_float("confidence_margin", values["confidence_margin"])
            if "confidence_margin" in values
            else defaults.confidence_margin,
            top_n=_parse_int("top_n", values["top_n"]) if "top_n" in values else defaults.top_n,
            clustering_mode=clustering_mode,
            disable_qt=_parse_bool("disable_qt", values["disable_qt"])
            if "disable_qt" in values
            else defaults.disable_qt,
            disable_cm=_parse_bool("disable_cm", values["disable_cm"])
            if "disable_cm" in values
            else defaults.disable_cm,
            decoding=decoding,
            answer_normalization=normalization,
        )
    except ValueError as err:
        raise ConfigError(str(err)) from err


def build_backend_descriptor(values: Mapping[str, str]) -> BackendDescriptor:
    """Construct backend connection settings from string key/values."""
    kind_text = values.get("backend", "scripted")
    try:
        kind = BackendKind(kind_text)
    except ValueError:
        raise ConfigError(
            f"backend must be one of {[k.value for k in BackendKind]}, got {kind_text!r}"
        ) from None
    try:
        return BackendDescriptor(
            backend_kind=kind,
            model_name=values.get("model_name", "scripted" if kind is BackendKind.SCRIPTED else "model"),
            endpoint=values.get("endpoint"),
            request_timeout=_parse_float("request_timeout", values["request_timeout"])
            if "request_timeout" in values
            else 30.0,
            max_concurrency=_parse_int("max_concurrency", values["max_concurrency"])
            if "max_concurrency" in values
            else 8,
            judge_model_name=values.get("judge_model_name"),
        )
    except ConfigError:
        raise
    except ValueError as err:
        raise ConfigError(str(err)) from err


def config_echo_lines(
    config: CarConfig, descriptor: BackendDescriptor | None = None
) -> list[str]:
    """Deterministic "key=value" lines describing a resolved configuration,
    written into output-file headers so results are self-describing."""
    pairs = {
        "k": config.k,
        "query_threshold": config.query_threshold,
        "confidence_margin": config.confidence_margin,
        "top_n": config.top_n,
        "clustering_mode": config.clustering_mode.value,
        "disable_qt": config.disable_qt,
        "disable_cm": config.disable_cm,
        "temperature": config.decoding.temperature,
        "judge_temperature": config.decoding.judge_temperature,
        "max_tokens": config.decoding.max_tokens,
        "answer_normalization": config.answer_normalization.value,
    }
    if descriptor is not None:
        pairs["backend"] = descriptor.backend_kind.value
        pairs["model_name"] = descriptor.model_name
        if descriptor.endpoint:
            pairs["endpoint"] = descriptor.endpoint
    return [f"{key}={pairs[key]}" for key in sorted(pairs)]
