import hashlib
import json
import threading

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import TARGET, gateway
from reflectkit.gateway import (
    AnnotatorGateway,
    AnnotatorRequest,
    AnnotatorResponse,
    BackendResult,
    BackendTarget,
    CacheConflictError,
    CallableBackend,
    DecodeParams,
    HTTPBackend,
    MockBackend,
    RateLimiter,
    ResponseCache,
    RetryPolicy,
    TransportError,
    mock_backend,
)


def req(prompt="Explain why.", temperature=0.7, image="img/1.jpg"):
    return AnnotatorRequest("mock", "mock-model", prompt, image, DecodeParams(temperature, 1024))


def test_second_identical_request_comes_from_cache(tmp_path):
    gw = gateway([("Explain", "Because it is blue.")], tmp_path)
    first = gw.complete(req())
    second = gw.complete(req())
    assert not first.from_cache and second.from_cache
    assert second.text == first.text == "Because it is blue."
    assert [c.from_cache for c in gw.calls] == [False, True]


def test_warm_cache_makes_no_backend_call(tmp_path):
    gateway([("Explain", "cached text")], tmp_path).complete(req())
    calls = []
    fresh = gateway(CallableBackend(lambda r: calls.append(r) or "different"), tmp_path)
    resp = fresh.complete(req())
    assert resp.from_cache and resp.text == "cached text" and calls == []


def test_cache_entry_layout(tmp_path):
    r = req()
    gateway([("Explain", "x y z")], tmp_path).complete(r)
    key = r.request_key
    path = tmp_path / "mock" / key[:2] / f"{key}.json"
    entry = json.loads(path.read_text())
    assert set(entry) == {"request", "text", "status", "timestamp"}
    assert entry["request"] == r.canonical() and entry["text"] == "x y z" and entry["status"] == "ok"


def test_temperature_changes_request_key():
    cold, hot = req(temperature=0.0), req(temperature=1.0)

    def oracle(temp):
        canonical = {
            "backend_id": "mock",
            "decode_params": {"max_output_tokens": 1024, "temperature": temp},
            "image_ref": "img/1.jpg",
            "model_id": "mock-model",
            "prompt": "Explain why.",
        }
        blob = json.dumps(canonical, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    assert cold.request_key == oracle(0.0)
    assert hot.request_key == oracle(1.0)
    assert cold.request_key != hot.request_key


def test_key_ignores_log_labels_but_not_content():
    a = AnnotatorRequest("mock", "m", "p", None, DecodeParams(), purpose="x", subject="1")
    b = AnnotatorRequest("mock", "m", "p", None, DecodeParams(), purpose="y", subject="2")
    assert a.request_key == b.request_key
    assert a.request_key != AnnotatorRequest("mock", "m", "p", "img", DecodeParams()).request_key
    assert DecodeParams(1, 10).canonical() == DecodeParams(1.0, 10).canonical()


def test_response_invariants():
    with pytest.raises(ValueError):
        AnnotatorResponse("k", "", "ok")
    with pytest.raises(ValueError):
        AnnotatorResponse("k", "x", "weird")
    with pytest.raises(ValueError):
        DecodeParams(temperature=-0.1)


def test_mock_returns_script_entry_first_match_wins():
    gw = gateway(mock_backend({"Explain why": "scripted rationale", "Explain": "never reached"}))
    assert gw.complete(req("Explain why. Including any necessary facts")).text == "scripted rationale"
    assert gw.complete(req("Please Explain")).text == "never reached"


def test_mock_regex_and_image_substitution():
    backend = MockBackend([("re:^Q\\d+$", "answer about {image_ref}")])
    gw = gateway(backend)
    assert gw.complete(req("Q12")).text == "answer about img/1.jpg"
    assert gw.complete(req("Q12 extra")).status == "refused"


def test_empty_script_refuses_everything():
    gw = gateway([])
    for prompt in ("a", "Explain why", ""):
        resp = gw.complete(req(prompt))
        assert resp.status == "refused" and resp.text == ""


def test_refusals_are_not_cached(tmp_path):
    gateway([], tmp_path).complete(req())
    assert not any(tmp_path.rglob("*.json"))


def test_mock_script_file(tmp_path):
    path = tmp_path / "script.jsonl"
    path.write_text(json.dumps({"pattern": "hi", "response": "hello"}) + "\n\n")
    assert MockBackend.from_file(path).match("say hi") == "hello"
    path.write_text(json.dumps({"pattern": "hi"}) + "\n")
    with pytest.raises(ValueError, match="script.jsonl:1"):
        MockBackend.from_file(path)


def test_unregistered_backend_is_an_error():
    with pytest.raises(LookupError):
        AnnotatorGateway().complete(req())


def test_cache_is_write_once(tmp_path):
    cache = ResponseCache(tmp_path)
    cache.put("mock", "ab" * 32, {"p": 1}, "first")
    cache.put("mock", "ab" * 32, {"p": 1}, "first")
    with pytest.raises(CacheConflictError):
        cache.put("mock", "ab" * 32, {"p": 1}, "second")
    assert cache.get("mock", "ab" * 32)["text"] == "first"
    assert [p.name for p in (tmp_path / "mock" / "ab").iterdir()] == ["ab" * 32 + ".json"]


def test_retries_with_exponential_backoff_then_success():
    attempts = []

    def flaky(r):
        attempts.append(r)
        if len(attempts) < 3:
            raise TransportError("boom")
        return "finally"

    sleeps = []
    gw = AnnotatorGateway(sleep=sleeps.append)
    gw.register("mock", CallableBackend(flaky), retry=RetryPolicy(5, 0.5, 8.0))
    resp = gw.complete(req())
    assert resp.text == "finally" and gw.calls[-1].attempts == 3
    assert sleeps == [0.5, 1.0]


def test_retries_exhausted_gives_transport_error():
    sleeps = []
    gw = AnnotatorGateway(sleep=sleeps.append)

    def down(r):
        raise TransportError("down")

    gw.register("mock", CallableBackend(down), retry=RetryPolicy(6, 1.0, 4.0))
    resp = gw.complete(req())
    assert resp.status == "transport_error" and resp.text == ""
    assert sleeps == [1.0, 2.0, 4.0, 4.0, 4.0]


def test_whitespace_only_text_is_empty_status():
    gw = gateway(CallableBackend(lambda r: "   "))
    assert gw.complete(req()).status == "empty"


def test_concurrent_identical_requests_invoke_backend_once(tmp_path):
    calls = []
    barrier = threading.Barrier(8)

    def slow(r):
        calls.append(1)
        return "text"

    gw = gateway(CallableBackend(slow), tmp_path)
    results = []

    def worker():
        barrier.wait()
        results.append(gw.complete(req()))

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(calls) == 1
    assert sorted(r.from_cache for r in results) == [False] + [True] * 7


class FakeClock:
    def __init__(self):
        self.now = 0.0

    def __call__(self):
        return self.now

    def sleep(self, s):
        self.now += s


@settings(max_examples=80, deadline=None)
@given(
    st.integers(1, 5),
    st.floats(0.1, 5.0),
    st.lists(st.floats(0.0, 2.0), min_size=1, max_size=40),
)
def test_rate_limiter_never_exceeds_window(max_requests, window, gaps):
    clock = FakeClock()
    limiter = RateLimiter(max_requests, window, clock=clock, sleep=clock.sleep)
    sent = []
    for gap in gaps:
        clock.now += gap
        sent.append(limiter.acquire())
    # brute force over every dispatch: the window ending there holds at most max_requests
    # (edges shrunk by 1e-6 to stay clear of float rounding at the boundary)
    for t in sent:
        assert sum(1 for s in sent if t - window + 1e-6 < s <= t) <= max_requests
    assert sent == sorted(sent)


def test_rate_limiter_in_gateway_blocks_excess_calls():
    clock = FakeClock()
    gw = AnnotatorGateway()
    gw.register(
        "mock", CallableBackend(lambda r: "ok " + r.prompt), rate_limit=RateLimiter(2, 10.0, clock=clock, sleep=clock.sleep)
    )
    for i in range(5):
        gw.complete(req(f"p{i}"))
    assert clock.now == pytest.approx(20.0)


def _http(handler, **kwargs):
    return HTTPBackend("http://annotator.test/v1", transport=httpx.MockTransport(handler), **kwargs)


def test_http_backend_payload_and_auth(monkeypatch, tmp_path):
    monkeypatch.setenv("ANNOTATOR_KEY", "sk-secret-value")
    seen = {}

    def handler(request):
        seen["body"] = json.loads(request.content)
        seen["auth"] = request.headers.get("authorization")
        return httpx.Response(200, json={"text": "a rationale"})

    log_path = tmp_path / "calls.jsonl"
    gw = AnnotatorGateway(ResponseCache(tmp_path / "cache"), call_log_path=log_path)
    gw.register("mock", _http(handler, api_key_env="ANNOTATOR_KEY"))
    resp = gw.complete(req())
    gw.close()
    assert resp.text == "a rationale"
    assert seen["auth"] == "Bearer sk-secret-value"
    assert seen["body"] == {
        "model": "mock-model",
        "prompt": "Explain why.",
        "image": "img/1.jpg",
        "temperature": 0.7,
        "max_output_tokens": 1024,
    }
    # the credential value never lands on disk
    for path in tmp_path.rglob("*"):
        if path.is_file():
            assert "sk-secret-value" not in path.read_text()


@pytest.mark.parametrize(
    "status,body,expected",
    [(400, {}, "refused"), (200, {"refused": True}, "refused"), (200, {"text": ""}, "empty"), (200, {"text": "hi"}, "ok")],
)
def test_http_backend_statuses(status, body, expected):
    gw = gateway(_http(lambda r: httpx.Response(status, json=body)))
    assert gw.complete(req()).status == expected


def test_http_backend_retries_on_429():
    replies = iter([httpx.Response(429), httpx.Response(503), httpx.Response(200, json={"out": "done"})])
    gw = gateway(_http(lambda r: next(replies), response_field="out"))
    resp = gw.complete(req())
    assert resp.text == "done" and gw.calls[-1].attempts == 3


def test_http_backend_missing_env_var_is_transport_error(monkeypatch):
    monkeypatch.delenv("NOPE_KEY", raising=False)
    gw = gateway(_http(lambda r: httpx.Response(200, json={"text": "x"}), api_key_env="NOPE_KEY"), retry=RetryPolicy(2, 0, 0))
    assert gw.complete(req()).status == "transport_error"


def test_backend_target_builds_requests():
    r = TARGET.request("prompt", "img", purpose="pos_rationale_gen", subject="s1")
    assert (r.backend_id, r.model_id, r.purpose, r.subject) == ("mock", "mock-model", "pos_rationale_gen", "s1")
    assert BackendTarget("b", "m").request("p").decode_params == DecodeParams()
    assert CallableBackend(lambda r: BackendResult("", "refused")).invoke(r).status == "refused"
