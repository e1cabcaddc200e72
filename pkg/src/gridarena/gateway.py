"""HTTP client for chat-completion endpoints with bounded concurrency.

One POST per prompt: ``{model, messages, temperature, max_tokens}`` with a
Bearer token read from a named environment variable. Transport errors, 429s,
and 5xx responses retry with jittered exponential backoff; authentication
failures never retry. ``batch_complete`` fans out over a thread pool capped
at ``max_concurrency`` (default 4) and reports per-prompt failures in place,
so one bad prompt never cancels its siblings.
"""

from __future__ import annotations

import os
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import requests

_jitter = random.Random()


class GatewayError(Exception):
    """A completion could not be obtained."""

    def __init__(self, message: str, status: int | None = None, attempts: int = 1):
        super().__init__(message)
        self.status = status
        self.attempts = attempts


class GatewayAuthError(GatewayError):
    """Credential missing or rejected; not retryable."""


@dataclass(frozen=True)
class GatewayConfig:
    """Endpoint, credential source, sampling, and retry behavior.

    ``api_key_env_var`` names the environment variable holding the key; the
    key itself never lands in configs or logs. The 60 s timeout leaves ample
    headroom over typical long completions.
    """

    endpoint_url: str
    model_name: str
    api_key_env_var: str = "ARENA_API_KEY"
    max_concurrency: int = 4
    request_timeout: float = 60.0
    max_retries: int = 4
    backoff_base: float = 0.5
    backoff_cap: float = 8.0
    temperature: float = 1.0
    max_tokens: int = 256

    def __post_init__(self):
        if not self.endpoint_url:
            raise ValueError("endpoint_url must be set")
        if not self.model_name:
            raise ValueError("model_name must be set")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


def _request_body(prompt: str, config: GatewayConfig) -> dict:
    return {
        "model": config.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
    }


def _extract_text(payload: dict) -> str:
    try:
        return payload["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise GatewayError(f"malformed completion payload: {exc!r}") from exc


def _backoff_delay(attempt: int, config: GatewayConfig) -> float:
    delay = min(config.backoff_cap, config.backoff_base * (2 ** attempt))
    return delay * _jitter.uniform(0.5, 1.0)


def complete(prompt: str, config: GatewayConfig) -> str:
    """Return the assistant text for one prompt, retrying retryable failures.

    Raises GatewayAuthError before any request when the credential is
    missing, and GatewayError once retries are exhausted.
    """
    key = os.environ.get(config.api_key_env_var)
    if not key:
        raise GatewayAuthError(
            f"environment variable {config.api_key_env_var} is not set")
    headers = {"Authorization": f"Bearer {key}"}
    body = _request_body(prompt, config)

    last_error: GatewayError | None = None
    attempts = 0
    for attempt in range(config.max_retries + 1):
        attempts = attempt + 1
        try:
            response = requests.post(config.endpoint_url, json=body,
                                     headers=headers, timeout=config.request_timeout)
        except requests.RequestException as exc:
            last_error = GatewayError(f"transport error: {exc}", attempts=attempts)
        else:
            if response.status_code == 200:
                try:
                    payload = response.json()
                except ValueError as exc:
                    raise GatewayError(f"non-JSON completion body: {exc}",
                                       status=200, attempts=attempts) from exc
                return _extract_text(payload)
            if response.status_code in (401, 403):
                raise GatewayAuthError(
                    f"authentication rejected (HTTP {response.status_code})",
                    status=response.status_code, attempts=attempts)
            if response.status_code == 429 or response.status_code >= 500:
                last_error = GatewayError(f"HTTP {response.status_code}",
                                          status=response.status_code, attempts=attempts)
            else:
                raise GatewayError(f"HTTP {response.status_code}",
                                   status=response.status_code, attempts=attempts)
        if attempt < config.max_retries:
            time.sleep(_backoff_delay(attempt, config))

    assert last_error is not None
    last_error.attempts = attempts
    raise last_error


def _complete_or_error(prompt: str, config: GatewayConfig) -> str | GatewayError:
    try:
        return complete(prompt, config)
    except GatewayError as exc:
        return exc


def batch_complete(prompts: list[str], config: GatewayConfig) -> list[str | GatewayError]:
    """Complete many prompts with at most ``max_concurrency`` in flight.

    The result list matches the input order; failed prompts hold their
    GatewayError in place of text.
    """
    if not prompts:
        return []
    with ThreadPoolExecutor(max_workers=config.max_concurrency) as pool:
        futures = [pool.submit(_complete_or_error, p, config) for p in prompts]
        return [f.result() for f in futures]
