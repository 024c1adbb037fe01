import math

import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from specagent.backends import (
    BackendResponse,
    ChatCompletionBackend,
    DecodingParams,
    EndpointConfig,
    NextTokenDistribution,
    ScriptedBackend,
    dump_scenario,
    load_scenario,
)
from specagent.backends.builders import critic_distribution, tokenize
from specagent.core import GenerationMode, Role
from specagent.demo import ten_step_scenario
from specagent.errors import (
    BackendTimeout,
    DuplicateKey,
    InsufficientTopK,
    MalformedResponse,
    ParseError,
    WireError,
)

from conftest import run

MINIMAL = """\
version: 1
entries:
  - role: slm
    step: 0
    mode: with_reasoning
    text: 'search{query="capital of France"}'
    latency_ms: 300
"""


def test_load_minimal_scenario():
    script = load_scenario(MINIMAL)
    assert len(script) == 1
    resp = script.lookup(Role.SLM, 0, GenerationMode.WITH_REASONING)
    assert resp.text == 'search{query="capital of France"}'
    assert resp.latency_ms == 300


def test_duplicate_entry_key_rejected():
    doc = MINIMAL + """\
  - role: slm
    step: 0
    mode: with_reasoning
    text: 'finish{answer="x"}'
"""
    with pytest.raises(DuplicateKey) as info:
        load_scenario(doc)
    assert info.value.line == 8


def test_duplicate_mapping_field_rejected():
    doc = MINIMAL + "    latency_ms: 5\n"
    with pytest.raises(DuplicateKey):
        load_scenario(doc)


@pytest.mark.parametrize(
    "doc, line",
    [
        ("version: 1\nentries:\n  - role: slm\n    step: 0\n    mode: with_reasoning\n    text: [unclosed\n", 7),
        ("version: 2\nentries: []\n", 1),
        ("version: 1\nextra: 1\n", 1),
        ("version: 1\nentries:\n  - role: slm\n    step: 0\n    mode: with_reasoning\n    text: x\n    colour: red\n", 3),
        ("version: 1\nentries:\n  - role: judge\n    step: 0\n", 3),
        ("version: 1\nentries:\n  - role: critic\n    step: 0\n    text: x\n    topk: [[Yes, -0.1]]\n", 3),
    ],
)
def test_parse_errors_carry_positions(doc, line):
    with pytest.raises(ParseError) as info:
        load_scenario(doc)
    assert info.value.line == line


def test_ten_step_fixture_entry_count_matches_document():
    doc = dump_scenario(ten_step_scenario())
    # independent count straight off the YAML document
    raw = yaml.safe_load(doc)
    keys = {(e["role"], e["step"], e.get("mode")) for e in raw["entries"]}
    assert len(keys) == len(raw["entries"])
    script = load_scenario(doc)
    assert len(script) == len(keys) == 40
    drafting = {k for k in keys if k[1:] and (k[0], k[2]) in {("slm", "with_reasoning"), ("llm", "action_only")}}
    assert len(drafting) == 20


def test_dump_load_round_trip():
    script = ten_step_scenario()
    again = load_scenario(dump_scenario(script))
    assert again.entries == script.entries
    assert again.question == script.question


def test_scripted_generate_is_identity():
    script = load_scenario(MINIMAL)
    backend = ScriptedBackend(script)
    resp = run(backend.generate(Role.SLM, "ctx", GenerationMode.WITH_REASONING, DecodingParams(), step=0))
    assert resp is script.lookup(Role.SLM, 0, GenerationMode.WITH_REASONING)
    assert backend.count(Role.SLM) == 1


def test_scripted_missing_entry_is_malformed():
    backend = ScriptedBackend(load_scenario(MINIMAL))
    with pytest.raises(MalformedResponse):
        run(backend.generate(Role.LLM, "ctx", GenerationMode.ACTION_ONLY, DecodingParams(), step=0))


def test_scripted_judge_identity_and_k_contract():
    dist = critic_distribution(0.9, 0.1)
    doc = {"version": 1, "entries": [{"role": "critic", "step": 0, "topk": [[t, lp] for t, lp in dist.entries]}]}
    backend = ScriptedBackend(load_scenario(yaml.safe_dump(doc)))
    got = run(backend.judge_next_token(Role.CRITIC, "prompt", 20))
    assert got.entries == dist.entries
    assert got.entries[0] == ("Yes", math.log(0.9))
    with pytest.raises(ValueError):
        run(backend.judge_next_token(Role.CRITIC, "prompt", 0))
    with pytest.raises(InsufficientTopK):
        run(backend.judge_next_token(Role.CRITIC, "prompt", 21))


def test_scripted_backend_is_deterministic():
    def calls():
        backend = ScriptedBackend(ten_step_scenario())
        out = []
        for step in range(10):
            for role, mode in ((Role.SLM, GenerationMode.WITH_REASONING), (Role.LLM, GenerationMode.ACTION_ONLY)):
                out.append(run(backend.generate(role, "c", mode, DecodingParams(), step=step)))
            out.append(run(backend.judge_next_token(Role.CRITIC, "p", 20, step=step)))
        return out

    assert calls() == calls()


def test_response_invariants():
    with pytest.raises(ValueError):
        BackendResponse("x", ("a", "b"), (-0.1,))
    BackendResponse("ab", ("a", "b"), ())  # logprobs omitted is allowed


def test_distribution_invariants():
    with pytest.raises(ValueError):
        NextTokenDistribution((("a", -2.0), ("b", -1.0)))
    with pytest.raises(ValueError):
        NextTokenDistribution((("a", math.log(0.7)), ("b", math.log(0.7))))


@given(st.floats(1e-6, 0.5), st.floats(1e-6, 0.5))
def test_critic_distribution_well_formed(p_yes, p_no):
    d = critic_distribution(p_yes, p_no)
    assert d.k == 20
    lps = [lp for _, lp in d.entries]
    assert lps == sorted(lps, reverse=True)


@given(st.text(max_size=60))
def test_tokenize_reproduces_text(text):
    assert "".join(tokenize(text)) == text


# -- live client against a local stub server ---------------------------------------


def _completion(content, tokens, logprobs, reasoning=None):
    message = {"role": "assistant", "content": content}
    if reasoning is not None:
        message["reasoning_content"] = reasoning
    return {
        "choices": [
            {
                "message": message,
                "finish_reason": "stop",
                "logprobs": {"content": [{"token": t, "logprob": lp} for t, lp in zip(tokens, logprobs)]},
            }
        ]
    }


def _judge_body(pairs):
    return {
        "choices": [
            {
                "message": {"role": "assistant", "content": pairs[0][0]},
                "finish_reason": "length",
                "logprobs": {
                    "content": [
                        {"token": pairs[0][0], "logprob": pairs[0][1],
                         "top_logprobs": [{"token": t, "logprob": lp} for t, lp in pairs]}
                    ]
                },
            }
        ]
    }


def _client(server, **kw):
    ep = EndpointConfig(base_url=server.url, model="m", backoff_ms=1, timeout_ms=5000, **kw)
    return ChatCompletionBackend({"slm": ep, "llm": ep})


def test_live_generate_echoes_logprobs(stub_server):
    stub_server.default = (200, _completion('finish{answer="1"}', ["finish", '{answer="1"}'], [-0.1, -0.2]))
    resp = run(_client(stub_server).generate(Role.SLM, "ctx", GenerationMode.WITH_REASONING, DecodingParams(max_tokens=16)))
    assert resp.token_logprobs == (-0.1, -0.2)
    assert resp.tokens == ("finish", '{answer="1"}')
    body = stub_server.requests[0]["body"]
    assert body["logprobs"] is True and body["max_tokens"] == 16
    assert "chat_template_kwargs" not in body


def test_live_action_only_sends_directive(stub_server, monkeypatch):
    monkeypatch.setenv("TEST_KEY", "sekrit")
    stub_server.default = (200, _completion('search{query="q"}', [], []))
    backend = _client(stub_server, api_key_env="TEST_KEY", action_only_directive="ACT NOW")
    run(backend.generate(Role.LLM, "ctx", GenerationMode.ACTION_ONLY, DecodingParams()))
    req = stub_server.requests[0]
    assert req["body"]["messages"][0] == {"role": "system", "content": "ACT NOW"}
    assert req["body"]["chat_template_kwargs"] == {"enable_thinking": False}
    assert req["headers"]["Authorization"] == "Bearer sekrit"
    assert req["path"] == "/chat/completions"


def test_live_reasoning_channel_is_wrapped(stub_server):
    stub_server.default = (200, _completion('search{query="q"}', [], [], reasoning="think hard"))
    resp = run(_client(stub_server).generate(Role.SLM, "ctx", GenerationMode.WITH_REASONING, DecodingParams()))
    assert resp.text == '<think>think hard</think>\nsearch{query="q"}'


def test_live_judge_uniform_top20(stub_server):
    lp = math.log(1 / 20)
    stub_server.default = (200, _judge_body([(f"t{i}", lp) for i in range(20)]))
    dist = run(_client(stub_server).judge_next_token(Role.CRITIC, "prompt", 20))
    assert dist.k == 20
    for _, got in dist.entries:
        assert got == pytest.approx(-2.9957, abs=1e-4)
    assert stub_server.requests[0]["body"]["top_logprobs"] == 20


def test_live_judge_insufficient_topk(stub_server):
    stub_server.default = (200, _judge_body([("Yes", -0.1), ("No", -2.4)]))
    with pytest.raises(InsufficientTopK):
        run(_client(stub_server).judge_next_token(Role.CRITIC, "prompt", 20))


def test_live_retries_then_succeeds(stub_server):
    stub_server.replies = [(503, {}), (502, {})]
    stub_server.default = (200, _completion('search{query="q"}', [], []))
    sleeps = []

    async def fake_sleep(s):
        sleeps.append(s)

    backend = _client(stub_server)
    backend._sleep = fake_sleep
    resp = run(backend.generate(Role.SLM, "ctx", GenerationMode.WITH_REASONING, DecodingParams()))
    assert resp.text == 'search{query="q"}'
    assert len(stub_server.requests) == 3
    assert sleeps == [0.001, 0.002]


def test_live_gives_up_after_two_retries(stub_server):
    stub_server.default = (500, {})
    with pytest.raises(WireError):
        run(_client(stub_server).generate(Role.SLM, "ctx", GenerationMode.WITH_REASONING, DecodingParams()))
    assert len(stub_server.requests) == 3


def test_live_malformed_body(stub_server):
    stub_server.default = (200, {"choices": []})
    with pytest.raises(MalformedResponse):
        run(_client(stub_server).generate(Role.SLM, "ctx", GenerationMode.WITH_REASONING, DecodingParams()))


def test_live_timeout():
    import socket

    # a listening socket that never answers
    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    sock.listen(1)
    try:
        host, port = sock.getsockname()
        ep = EndpointConfig(base_url=f"http://{host}:{port}", model="m", timeout_ms=50, max_retries=0)
        backend = ChatCompletionBackend({"slm": ep})
        with pytest.raises(BackendTimeout):
            run(backend.generate(Role.SLM, "ctx", GenerationMode.WITH_REASONING, DecodingParams()))
    finally:
        sock.close()


def test_decoding_params_need_budget():
    with pytest.raises(ValueError):
        DecodingParams(max_tokens=0)
