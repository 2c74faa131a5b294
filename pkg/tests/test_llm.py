import json
import threading

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from policyflow.errors import BackendError, LabelOutOfVocabulary, MockMiss, ParseFailure
from policyflow.knowledge import REQUIRED_NODES
from policyflow.llm import (ChatRequest, Gateway, LiveBackend, MockBackend, RawFlow, cache_key, parse_flow_output,
                            parse_label_output, render_flow_output, strip_fences)

CATEGORIES = REQUIRED_NODES["data_category"]


def req(user="hello", **kw):
    return ChatRequest("rules", user, "model-a", **kw)


def test_request_defaults():
    r = req()
    assert (r.temperature, r.top_p) == (0.5, 0.5)
    assert r.messages() == [{"role": "system", "content": "rules"}, {"role": "user", "content": "hello"}]


@pytest.mark.parametrize("kw", [{"temperature": 1.5}, {"top_p": -0.1}])
def test_request_ranges(kw):
    with pytest.raises(ValueError):
        req(**kw)


def test_request_needs_content():
    with pytest.raises(ValueError):
        ChatRequest("", "u", "m")


def test_cache_key_stable_and_sensitive():
    assert cache_key("mock", req()) == cache_key("mock", req())
    assert cache_key("mock", req()) != cache_key("live", req())
    assert cache_key("mock", req()) != cache_key("mock", req(temperature=0.4))
    # the agent tag is routing metadata only
    assert cache_key("mock", req()) == cache_key("mock", ChatRequest("rules", "hello", "model-a", agent="flow"))


def test_cache_hit_skips_backend(tmp_path):
    backend = MockBackend(rules=[{"response": "YES"}])
    gw = Gateway(backend, cache_dir=tmp_path)
    first = gw.complete(req())
    second = gw.complete(req())
    assert (first.cached, second.cached) == (False, True)
    assert first.text == second.text == "YES"
    assert backend.calls == 1
    assert len(list(tmp_path.glob("*.txt"))) == 1


def test_mock_digest_fixture(tmp_path):
    r = req("what")
    (tmp_path / f"{cache_key('mock', r)}.txt").write_text("F")
    assert Gateway(MockBackend(tmp_path)).complete(r).text == "F"


def test_mock_manifest_rules(tmp_path):
    (tmp_path / "manifest.json").write_text(json.dumps([
        {"agent": "flow", "user_contains": "VIN", "response": "flow-vin"},
        {"agent": "flow", "response": "flow-any"},
    ]))
    mb = MockBackend(tmp_path)
    assert mb(ChatRequest("s", "the VIN", "m", agent="flow")) == "flow-vin"
    assert mb(ChatRequest("s", "other", "m", agent="flow")) == "flow-any"
    with pytest.raises(MockMiss):
        mb(ChatRequest("s", "other", "m", agent="purpose"))


def _live(handler, attempts=3, sleeps=None):
    sleeps = sleeps if sleeps is not None else []
    return LiveBackend("http://llm", "TEST_LLM_KEY", attempts=attempts, backoff=0.01,
                       transport=httpx.MockTransport(handler), sleep=sleeps.append)


def test_live_success(monkeypatch):
    monkeypatch.setenv("TEST_LLM_KEY", "k")
    seen = {}

    def handler(request):
        seen["auth"] = request.headers["authorization"]
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={"choices": [{"message": {"content": "None"}}]})

    assert _live(handler)(req()) == "None"
    assert seen["auth"] == "Bearer k"
    assert seen["body"]["temperature"] == 0.5 and seen["body"]["top_p"] == 0.5


def test_live_429_exhausts_retries(monkeypatch):
    monkeypatch.setenv("TEST_LLM_KEY", "k")
    calls, sleeps = [], []

    def handler(request):
        calls.append(1)
        return httpx.Response(429)

    with pytest.raises(BackendError):
        _live(handler, sleeps=sleeps)(req())
    assert len(calls) == 3 and len(sleeps) == 2
    assert sleeps[1] > sleeps[0] * 1.0 - 0.01  # backoff grows


def test_live_retry_then_ok(monkeypatch):
    monkeypatch.setenv("TEST_LLM_KEY", "k")
    answers = iter([httpx.Response(503), httpx.Response(200, json={"choices": [{"message": {"content": "YES"}}]})])
    assert _live(lambda r: next(answers))(req()) == "YES"


def test_live_client_error_not_retried(monkeypatch):
    monkeypatch.setenv("TEST_LLM_KEY", "k")
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(401)

    with pytest.raises(BackendError):
        _live(handler)(req())
    assert len(calls) == 1


def test_live_needs_key(monkeypatch):
    monkeypatch.delenv("TEST_LLM_KEY", raising=False)
    with pytest.raises(BackendError):
        _live(lambda r: httpx.Response(200))(req())


def test_gateway_bounds_in_flight():
    active, peak = [0], [0]
    lock = threading.Lock()

    class Slow:
        name = "slow"

        def __call__(self, r):
            with lock:
                active[0] += 1
                peak[0] = max(peak[0], active[0])
            threading.Event().wait(0.01)
            with lock:
                active[0] -= 1
            return "ok"

    gw = Gateway(Slow(), max_in_flight=2)
    threads = [threading.Thread(target=gw.complete, args=(req(f"u{i}"),)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert peak[0] <= 2


# --- parsing ----------------------------------------------------------------------

def test_parse_none():
    assert parse_flow_output("None") == []
    assert parse_flow_output("  none. ") == []


def test_parse_flow_example():
    text = '{"Output":[{"data_sender":"you","data_type":["name","email address"],"data_receiver":["we","Google"]}]}'
    (flow,) = parse_flow_output(text)
    assert flow == RawFlow(("you",), ("name", "email address"), ("we", "Google"))


def test_parse_flow_fenced_and_empty_sender():
    text = '```json\n{"Output":[{"data_sender":"","data_type":["VIN"],"data_receiver":[]}]}\n```'
    assert parse_flow_output(text) == [RawFlow((), ("VIN",), ())]


def test_parse_flow_list_sender():
    text = '{"Output":[{"data_sender":["you","your device"],"data_type":"IP address","data_receiver":"we"}]}'
    assert parse_flow_output(text) == [RawFlow(("you", "your device"), ("IP address",), ("we",))]


@pytest.mark.parametrize("text", ['{"Output": "oops"', '{"Result": []}', '{"Output": "oops"}', "[1, 2]",
                                  '{"Output":[{"data_type": [1]}]}'])
def test_parse_flow_failures(text):
    with pytest.raises(ParseFailure):
        parse_flow_output(text)


_entity = st.text(alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\x00"),
                  min_size=1, max_size=10).filter(lambda s: s.strip() == s and s)
_raw = st.builds(lambda s, t, r: RawFlow(tuple(s), tuple(t), tuple(r)),
                 st.lists(_entity, max_size=1), st.lists(_entity, min_size=1, max_size=3),
                 st.lists(_entity, max_size=3))


@settings(max_examples=200, deadline=None)
@given(st.lists(_raw, max_size=4))
def test_flow_render_round_trip(flows):
    assert parse_flow_output(render_flow_output(flows)) == flows


def test_label_example():
    text = '{"Output":[{"DataCategory":"Location","DataType":"GPS information","InputText":"..."}]}'
    assert parse_label_output(text, CATEGORIES) == "Location"


def test_label_none_to_unspecified():
    assert parse_label_output("None", CATEGORIES) == "Unspecified"


def test_label_none_without_unspecified():
    with pytest.raises(LabelOutOfVocabulary):
        parse_label_output("None", ["First Party", "Third Party"])


def test_label_out_of_vocabulary():
    with pytest.raises(LabelOutOfVocabulary):
        parse_label_output('{"Output":[{"DataCategory":"Geo stuff"}]}', CATEGORIES)


def test_label_case_insensitive():
    assert parse_label_output('{"Output":[{"Method":"passive"}]}', ["Active", "Passive"], key="Method") == "Passive"


def test_label_missing_key():
    with pytest.raises(ParseFailure):
        parse_label_output('{"Output":[{"Other":"Active"}]}', ["Active"], key="Method")


def test_strip_fences():
    assert strip_fences("```\nNone\n```") == "None"
