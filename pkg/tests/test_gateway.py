"""HTTP client behavior: auth, retries, backoff bounds, batching."""

import time

import pytest

from gridarena.gateway import (
    GatewayAuthError,
    GatewayConfig,
    GatewayError,
    _backoff_delay,
    batch_complete,
    complete,
)

from conftest import KEY_ENV, gateway_config


def test_gateway_config_validation():
    with pytest.raises(ValueError):
        GatewayConfig(endpoint_url="", model_name="m")
    with pytest.raises(ValueError):
        GatewayConfig(endpoint_url="http://x", model_name="")
    with pytest.raises(ValueError):
        GatewayConfig(endpoint_url="http://x", model_name="m", max_concurrency=0)
    with pytest.raises(ValueError):
        GatewayConfig(endpoint_url="http://x", model_name="m", max_retries=-1)


def test_complete_happy_path_sends_expected_body(stub_gateway):
    stub_gateway.responder = lambda prompt: f"saw[{prompt}]"
    config = gateway_config(stub_gateway, temperature=0.5, max_tokens=128)
    assert complete("hello", config) == "saw[hello]"
    (request,) = stub_gateway.requests
    assert request["model"] == "stub-model"
    assert request["temperature"] == 0.5
    assert request["max_tokens"] == 128
    assert request["messages"] == [{"role": "user", "content": "hello"}]
    assert stub_gateway.auth_headers == ["Bearer stub-key"]


def test_missing_api_key_fails_before_any_request(stub_gateway, monkeypatch):
    monkeypatch.delenv(KEY_ENV, raising=False)
    with pytest.raises(GatewayAuthError):
        complete("hello", gateway_config(stub_gateway))
    assert stub_gateway.request_count == 0


@pytest.mark.parametrize("status", [401, 403])
def test_auth_failures_never_retry(stub_gateway, status):
    stub_gateway.status_script = [status]
    with pytest.raises(GatewayAuthError):
        complete("hello", gateway_config(stub_gateway))
    assert stub_gateway.request_count == 1


def test_retry_then_succeed_transcript(stub_gateway):
    stub_gateway.responder = lambda prompt: "recovered"
    stub_gateway.status_script = [429, 429, 200]
    assert complete("hello", gateway_config(stub_gateway)) == "recovered"
    assert stub_gateway.request_count == 3


def test_server_errors_exhaust_retries(stub_gateway):
    stub_gateway.status_script = [500] * 10
    config = gateway_config(stub_gateway, max_retries=2)
    with pytest.raises(GatewayError) as excinfo:
        complete("hello", config)
    assert stub_gateway.request_count == 3  # initial try + 2 retries
    assert excinfo.value.attempts == 3
    assert not isinstance(excinfo.value, GatewayAuthError)


def test_client_errors_do_not_retry(stub_gateway):
    stub_gateway.status_script = [404]
    with pytest.raises(GatewayError):
        complete("hello", gateway_config(stub_gateway))
    assert stub_gateway.request_count == 1


def test_malformed_payload_is_an_immediate_error():
    from gridarena.gateway import _extract_text

    with pytest.raises(GatewayError):
        _extract_text({"choices": []})
    with pytest.raises(GatewayError):
        _extract_text({"choices": [{"message": {}}]})
    with pytest.raises(GatewayError):
        _extract_text({})


def test_backoff_delay_grows_and_caps():
    config = GatewayConfig(endpoint_url="http://x", model_name="m",
                           backoff_base=0.5, backoff_cap=8.0)
    for attempt in range(8):
        ceiling = min(8.0, 0.5 * 2 ** attempt)
        for _ in range(50):
            delay = _backoff_delay(attempt, config)
            assert 0.5 * ceiling <= delay <= ceiling


def test_batch_preserves_order_and_isolates_errors(stub_gateway):
    def responder(prompt):
        return f"reply:{prompt}"

    stub_gateway.responder = responder
    stub_gateway.status_script = [200, 500, 500, 500, 500, 200]
    config = gateway_config(stub_gateway, max_retries=3, max_concurrency=1)
    prompts = ["a", "b", "c"]
    results = batch_complete(prompts, config)
    assert results[0] == "reply:a"
    assert isinstance(results[1], GatewayError)
    assert results[2] == "reply:c"


def test_batch_empty_is_empty(stub_gateway):
    assert batch_complete([], gateway_config(stub_gateway)) == []
    assert stub_gateway.request_count == 0


def test_batch_bounds_in_flight_requests(stub_gateway):
    stub_gateway.responder = lambda prompt: "ok"
    stub_gateway.hold_seconds = 0.05
    config = gateway_config(stub_gateway, max_concurrency=4)
    results = batch_complete([f"p{i}" for i in range(16)], config)
    assert results == ["ok"] * 16
    assert stub_gateway.request_count == 16
    assert stub_gateway.max_in_flight <= 4
    assert stub_gateway.max_in_flight >= 2  # pool actually ran in parallel
