"""HTTP client for a model service speaking the /v1 backend protocol.

Endpoints (UTF-8 JSON bodies):

    POST /v1/score      {"input": str, "target": str}
                        -> {"logprob_sum": number, "tokens": int}
    POST /v1/next_token {"input": str, "prefix_ids": [int], "allowed_ids": [int]}
                        -> {"id": int, "logprob": number}
    GET  /v1/info       -> {"tokenizer_artifact": str, "model_name": str}

The server reports raw (sum, count) scores so either normalization mode
is computed client-side.  Transport and 5xx failures are classified
retryable; protocol violations and 4xx are not.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import requests

from .backend import Backend, BackendError, Capabilities

ENV_URL = "MVABSA_BACKEND_URL"
ENV_TOKEN = "MVABSA_BACKEND_TOKEN"
ENV_TIMEOUT = "MVABSA_BACKEND_TIMEOUT"


@dataclass(frozen=True)
class RemoteConfig:
    base_url: str
    timeout: float = 30.0
    token: str | None = None
    max_in_flight: int = 4


def read_config_file(path: str | Path) -> dict[str, str]:
    """Parse a `key = value` config file, ignoring blanks and # comments."""
    values: dict[str, str] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{line_no}: expected key = value")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def remote_config(
    path: str | Path | None = None, env: Mapping[str, str] | None = None
) -> RemoteConfig:
    """Config file values overridden by environment variables."""
    env = os.environ if env is None else env
    values = read_config_file(path) if path else {}
    url = env.get(ENV_URL, values.get("backend_url", ""))
    if not url:
        raise ValueError(f"no backend URL: set backend_url in the config file or {ENV_URL}")
    timeout = float(env.get(ENV_TIMEOUT, values.get("timeout", "30")))
    token = env.get(ENV_TOKEN, values.get("backend_token")) or None
    max_in_flight = int(values.get("max_in_flight", "4"))
    return RemoteConfig(base_url=url, timeout=timeout, token=token, max_in_flight=max_in_flight)


class RemoteBackend(Backend):
    """Backend proxying score/next_token to a remote /v1 service."""

    def __init__(self, config: RemoteConfig, session: requests.Session | None = None):
        self._config = config
        self._session = session or requests.Session()
        self._gate = threading.BoundedSemaphore(config.max_in_flight)
        self._artifact: str | None = None

    @classmethod
    def from_url(cls, url: str, **kwargs) -> "RemoteBackend":
        return cls(RemoteConfig(base_url=url, **kwargs))

    @property
    def capabilities(self) -> Capabilities:
        return Capabilities(
            supports_score=True, supports_generate=True, tokenizer_artifact=self._artifact
        )

    def _request(self, method: str, path: str, payload: dict | None = None) -> dict:
        url = self._config.base_url.rstrip("/") + path
        headers = {}
        if self._config.token:
            headers["Authorization"] = f"Bearer {self._config.token}"
        try:
            with self._gate:
                response = self._session.request(
                    method, url, json=payload, headers=headers, timeout=self._config.timeout
                )
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise BackendError(f"transport failure for {path}: {exc}", retryable=True) from exc
        if response.status_code >= 500:
            raise BackendError(f"{path} returned {response.status_code}", retryable=True)
        if response.status_code >= 400:
            raise BackendError(
                f"{path} returned {response.status_code}: {response.text[:200]}", retryable=False
            )
        try:
            return response.json()
        except ValueError as exc:
            raise BackendError(f"{path} returned non-JSON body", retryable=False) from exc

    def _score_parts(self, input_text: str, target_text: str) -> tuple[float, int]:
        if not input_text or not target_text:
            raise BackendError("score requires non-empty input and target", retryable=False)
        body = self._request("POST", "/v1/score", {"input": input_text, "target": target_text})
        try:
            logprob_sum, tokens = float(body["logprob_sum"]), int(body["tokens"])
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(f"malformed /v1/score response: {body!r}", retryable=False) from exc
        if tokens < 1:
            raise BackendError(f"/v1/score reported {tokens} tokens", retryable=False)
        return logprob_sum, tokens

    def score(self, input_text: str, target_text: str) -> float:
        logprob_sum, tokens = self._score_parts(input_text, target_text)
        return logprob_sum / tokens

    def score_total(self, input_text: str, target_text: str) -> float:
        logprob_sum, _ = self._score_parts(input_text, target_text)
        return logprob_sum

    def next_token(
        self, input_text: str, prefix_ids: Sequence[int], allowed_ids: Iterable[int]
    ) -> tuple[int, float]:
        allowed = sorted(set(allowed_ids))
        if not allowed:
            raise BackendError("empty allowed_ids: constraint automaton produced no candidates")
        body = self._request(
            "POST",
            "/v1/next_token",
            {"input": input_text, "prefix_ids": list(prefix_ids), "allowed_ids": allowed},
        )
        try:
            token, logprob = int(body["id"]), float(body["logprob"])
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(f"malformed /v1/next_token response: {body!r}", retryable=False) from exc
        if token not in allowed:
            raise BackendError(f"server chose id {token} outside allowed_ids", retryable=False)
        return token, logprob

    def info(self) -> dict:
        body = self._request("GET", "/v1/info")
        self._artifact = body.get("tokenizer_artifact")
        return body
