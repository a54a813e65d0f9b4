import json
import random

import pytest

from agentspec.backends import (
    Completion,
    CompletionRequest,
    HttpBackend,
    HttpConfig,
    MockBackend,
    apply_stops,
    load_mock_script,
)
from agentspec.errors import BackendError, CapabilityError, MockScriptError


def req(prompt="go", stops=(), max_tokens=64):
    return CompletionRequest(prompt=prompt, stop_sequences=tuple(stops), max_tokens=max_tokens)


# --- apply_stops --------------------------------------------------------------


def test_apply_stops_earliest_wins():
    assert apply_stops("A[Observation]B", ("[Observation]",)) == ("A", "[Observation]")
    assert apply_stops("no stops here", ("[Observation]",)) == ("no stops here", None)
    text = "x [B] y [A] z"
    assert apply_stops(text, ("[A]", "[B]")) == ("x ", "[B]")


def test_apply_stops_longest_at_same_offset():
    cut, stop = apply_stops("pre[Action Input]post", ("[Action]", "[Action Input]", "[Action"))
    assert (cut, stop) == ("pre", "[Action Input]")


def test_apply_stops_fuzz_prefix_clean():
    rng = random.Random(42)
    alphabet = "ab[]OIT "
    for _ in range(500):
        text = "".join(rng.choices(alphabet, k=rng.randint(0, 30)))
        stops = tuple(
            "".join(rng.choices(alphabet, k=rng.randint(1, 4))) for _ in range(rng.randint(1, 3))
        )
        cut, stop = apply_stops(text, stops)
        if stop is not None:
            for s in stops:
                assert s not in cut
            assert text.startswith(cut)
        else:
            assert cut == text


# --- ordered mock --------------------------------------------------------------


def test_ordered_mock_replays_then_errors():
    mock = MockBackend.ordered(["one", "two", "three", "four"])
    outs = [mock.complete(req()).text for _ in range(4)]
    assert outs == ["one", "two", "three", "four"]
    with pytest.raises(BackendError, match="exhausted"):
        mock.complete(req())


def test_ordered_mock_exhausted_ok():
    mock = MockBackend.ordered(["only"], exhausted_ok=True)
    mock.complete(req())
    assert mock.complete(req()) == Completion("", None, finished=True)


def test_mock_stop_contract():
    mock = MockBackend.ordered(["A[Observation]B"])
    out = mock.complete(req(stops=["[Observation]"]))
    assert out == Completion("A", "[Observation]", finished=False)


def test_mock_token_truncation():
    mock = MockBackend.ordered(["one two three"])
    out = mock.complete(req(max_tokens=2))
    assert out.text == "one two"
    assert out.finished is False
    assert out.stop_hit is None


def test_mock_determinism():
    a = MockBackend.ordered(["x y", "z"])
    b = MockBackend.ordered(["x y", "z"])
    seq = [req(max_tokens=1), req()]
    assert [a.complete(r) for r in seq] == [b.complete(r) for r in seq]


# --- suffix mock ----------------------------------------------------------------


def test_suffix_mock_longest_key_wins():
    mock = MockBackend.suffix({
        "[Thought]": "generic thought",
        "deep [Thought]": "specific thought",
    })
    assert mock.complete(req(prompt="shallow [Thought]")).text == "generic thought"
    assert mock.complete(req(prompt="very deep [Thought]")).text == "specific thought"
    with pytest.raises(BackendError, match="suffix"):
        mock.complete(req(prompt="unmatched"))


# --- script files ----------------------------------------------------------------


def test_load_script_ordered(tmp_path):
    script = tmp_path / "s.script"
    script.write_text("mode: ordered\n---\nfirst line\nsecond line\n---\nnext\n")
    mock = load_mock_script(script)
    assert mock.complete(req()).text == "first line\nsecond line"
    assert mock.complete(req()).text == "next"


def test_load_script_leading_blank_line_is_content(tmp_path):
    script = tmp_path / "s.script"
    script.write_text("mode: ordered\n---\n\n[Thought] hm\n")
    assert load_mock_script(script).complete(req()).text == "\n[Thought] hm"


def test_load_script_suffix_mode(tmp_path):
    script = tmp_path / "s.script"
    script.write_text(
        "mode: suffix\n---\nsuffix: [Action Input] Milhouse\\n[Observation]\nunused\n---\nsuffix: [Question]\nhello\n"
    )
    mock = load_mock_script(script)
    assert mock.complete(req(prompt="some [Question]")).text == "hello"


@pytest.mark.parametrize(
    "text,match",
    [
        ("no mode\n---\nx\n", "first line"),
        ("mode: wild\n---\nx\n", "unknown mode"),
        ("mode: ordered\nx\n", "expected '---'"),
        ("mode: suffix\n---\nmissing key\n", "must begin with 'suffix:'"),
        ("mode: suffix\n---\nsuffix:\nbody\n", "empty suffix"),
    ],
)
def test_script_parse_errors(tmp_path, text, match):
    script = tmp_path / "bad.script"
    script.write_text(text)
    with pytest.raises(MockScriptError, match=match):
        load_mock_script(script)


# --- scoring --------------------------------------------------------------------


def test_score_table_lookup():
    mock = MockBackend(score_table={("h1", "yes"): [-0.1]}, context_hasher=lambda s: "h1")
    assert mock.score("anything", "yes") == [-0.1]


def test_score_default_per_token():
    mock = MockBackend(default_logprob=-2.0)
    assert mock.score("ctx", "three token reply") == [-2.0, -2.0, -2.0]


def test_score_empty_continuation_errors():
    with pytest.raises(BackendError, match="empty continuation"):
        MockBackend().score("ctx", "")


def test_score_sum_is_what_selection_consumes():
    mock = MockBackend(default_logprob=-1.5)
    scores = mock.score("ctx", "a b c d")
    assert sum(scores) == pytest.approx(-6.0)


# --- HTTP client ------------------------------------------------------------------


class FakeResponse:
    def __init__(self, status_code, payload):
        self.status_code = status_code
        self._payload = payload
        self.text = json.dumps(payload)

    def json(self):
        return self._payload


class FakeSession:
    """Pinned request/response pairs standing in for a live endpoint."""

    def __init__(self, responses):
        self.responses = responses
        self.requests = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.requests.append({"url": url, "json": json, "headers": headers})
        out = self.responses.pop(0)
        if isinstance(out, Exception):
            raise out
        return out


def http(responses):
    cfg = HttpConfig(base_url="http://fake", api_key="secret", model="m1")
    return HttpBackend(cfg, session=FakeSession(responses))


def test_http_complete_roundtrip():
    backend = http([FakeResponse(200, {"text": "[Thought] I should search.", "finish_reason": "stop"})])
    out = backend.complete(req(prompt="[Question] q"))
    assert out.text == "[Thought] I should search."
    assert out.finished is True
    sent = backend.session.requests[0]
    assert sent["url"] == "http://fake/completions"
    assert sent["json"]["prompt"] == "[Question] q"
    assert sent["headers"]["Authorization"] == "Bearer secret"


def test_http_cuts_leaked_stop_text():
    backend = http([FakeResponse(200, {"text": "before[Observation]after", "finish_reason": "stop"})])
    out = backend.complete(req(stops=["[Observation]"]))
    assert out == Completion("before", "[Observation]", finished=False)


def test_http_error_classification():
    backend = http([FakeResponse(503, {"error": "busy"})])
    with pytest.raises(BackendError) as err:
        backend.complete(req())
    assert err.value.retryable is True
    backend = http([FakeResponse(400, {"error": "bad"})])
    with pytest.raises(BackendError) as err:
        backend.complete(req())
    assert err.value.retryable is False
    backend = http([ConnectionError("down")])
    with pytest.raises(BackendError) as err:
        backend.complete(req())
    assert err.value.retryable is True


def test_http_score_and_capability():
    backend = http([FakeResponse(200, {"token_logprobs": [-0.5, -1.0]})])
    assert backend.score("ctx", "a b") == [-0.5, -1.0]
    backend = http([FakeResponse(404, {})])
    with pytest.raises(CapabilityError):
        backend.score("ctx", "a b")


def test_http_config_from_env(monkeypatch, tmp_path):
    monkeypatch.setenv("AGENTSPEC_API_URL", "http://env-url/")
    monkeypatch.setenv("AGENTSPEC_API_KEY", "k")
    monkeypatch.setenv("AGENTSPEC_MODEL", "m")
    cfg = HttpConfig.from_env()
    assert (cfg.base_url, cfg.api_key, cfg.model) == ("http://env-url", "k", "m")

    monkeypatch.delenv("AGENTSPEC_API_URL")
    monkeypatch.delenv("AGENTSPEC_API_KEY")
    monkeypatch.delenv("AGENTSPEC_MODEL")
    with pytest.raises(BackendError, match="no endpoint configured"):
        HttpConfig.from_env()

    conf = tmp_path / "cfg.json"
    conf.write_text(json.dumps({"url": "http://file-url", "model": "fm", "timeout": 5}))
    cfg = HttpConfig.from_env(str(conf))
    assert cfg.base_url == "http://file-url"
    assert cfg.model == "fm"
    assert cfg.timeout == 5.0
