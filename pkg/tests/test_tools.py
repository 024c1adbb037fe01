import pytest
from hypothesis import given
from hypothesis import strategies as st

from specagent.core import Action, ObservationKind
from specagent.errors import NoFixture, ParseError
from specagent.tools import (
    TRUNCATION_MARKER,
    FixtureToolBackend,
    HttpToolBackend,
    HttpToolConfig,
    ToolExecutor,
    is_valid_url,
    load_fixtures,
    truncate,
)

from conftest import run

FIXTURES = """\
version: 1
search:
  - query: capital of France
    latency_ms: 800
    items:
      - {url: "https://en.wikipedia.org/wiki/Paris", title: Paris, snippet: "Capital of France."}
      - {url: "https://example.org/a", title: A, snippet: ""}
visit:
  - url: https://en.wikipedia.org/wiki/Paris
    latency_ms: 1500
    content: Paris is the capital of France.
"""


def _executor(**kw):
    backend = FixtureToolBackend(load_fixtures(FIXTURES))
    return ToolExecutor(backend, **kw), backend


def test_fixture_search_is_identity():
    ex, _ = _executor()
    results, latency = run(ex.execute_search("capital of France"))
    assert latency == 800
    assert [i.url for i in results.items] == ["https://en.wikipedia.org/wiki/Paris", "https://example.org/a"]
    assert results.query_echo == "capital of France"


def test_fixture_visit_is_identity():
    ex, _ = _executor()
    ext, latency = run(ex.execute_visit("https://en.wikipedia.org/wiki/Paris", "find it"))
    assert ext.content == "Paris is the capital of France."
    assert ext.instruction_echo == "find it"
    assert latency == 1500


def test_missing_fixture_raises():
    ex, _ = _executor()
    with pytest.raises(NoFixture):
        run(ex.execute_search("something else"))


def test_missing_fixture_becomes_error_observation():
    ex, _ = _executor()
    obs = run(ex.observe(Action.search("something else")))
    assert obs.kind is ObservationKind.TOOL_ERROR
    assert "NoFixture" in obs.payload


def test_cache_hits_skip_backend():
    ex, backend = _executor()
    run(ex.execute_search("capital of France"))
    _, latency = run(ex.execute_search("capital  of France"))
    assert latency == 0
    assert ex.hits == 1
    assert backend.calls == [("search", "capital of France")]


def test_cache_is_bounded():
    ex, backend = _executor(cache_size=1)
    run(ex.execute_search("capital of France"))
    run(ex.execute_visit("https://en.wikipedia.org/wiki/Paris", "i"))
    run(ex.execute_search("capital of France"))
    assert ex.hits == 0
    assert len(backend.calls) == 3


def test_results_capped_at_max_results():
    ex, _ = _executor(max_results=1)
    results, _ = run(ex.execute_search("capital of France"))
    assert len(results.items) == 1


@pytest.mark.parametrize("url", ["", "ftp://x.org/a", "not a url", "https://", "http://a b.com"])
def test_visit_requires_http_url(url):
    ex, backend = _executor()
    with pytest.raises(ValueError):
        run(ex.execute_visit(url, "i"))
    assert backend.calls == []


def test_search_requires_query():
    ex, _ = _executor()
    with pytest.raises(ValueError):
        run(ex.execute_search("   "))


def test_long_page_truncated_to_cap():
    doc = f"version: 1\nvisit:\n  - url: https://x.org/\n    content: {'a' * 10000}\n"
    ex = ToolExecutor(FixtureToolBackend(load_fixtures(doc)), content_cap=8192)
    ext, _ = run(ex.execute_visit("https://x.org/", "i"))
    assert len(ext.content) == 8192
    assert ext.content.endswith(TRUNCATION_MARKER)


@given(st.text(max_size=300), st.integers(0, 200))
def test_truncate_never_exceeds_cap(text, cap):
    out = truncate(text, cap)
    assert len(out) <= cap or out == text and len(text) <= cap
    if len(text) <= cap:
        assert out == text


def test_finish_echoes_answer():
    ex, backend = _executor()
    obs = run(ex.observe(Action.finish("42")))
    assert obs.kind is ObservationKind.ANSWER_ECHO and obs.payload == "42"
    assert backend.calls == []


def test_other_tool_unavailable_in_fixture_mode():
    ex, _ = _executor()
    obs = run(ex.observe(Action.tool("python", {"code": "1+1"})))
    assert obs.kind is ObservationKind.TOOL_ERROR


def test_fixture_parse_errors():
    with pytest.raises(ParseError):
        load_fixtures("version: 1\nsearch:\n  - query: a\n  - query: a\n")
    with pytest.raises(ParseError):
        load_fixtures("version: 3\n")
    with pytest.raises(ParseError):
        load_fixtures("version: 1\nsearch: [{query: a, items: [{url: u, rank: 1}]}]\n")


def test_is_valid_url():
    assert is_valid_url("https://a.org/x?y=1")
    assert not is_valid_url("mailto:a@b.c")


def test_http_tools_against_stub(stub_server):
    stub_server.replies = [
        (200, {"results": [{"url": "https://a.org", "title": "A", "snippet": "s"}]}),
        (200, {"content": "page text"}),
    ]
    cfg = HttpToolConfig(search_url=stub_server.url + "/search", reader_url=stub_server.url + "/read")
    ex = ToolExecutor(HttpToolBackend(cfg))
    results, _ = run(ex.execute_search("q"))
    ext, _ = run(ex.execute_visit("https://a.org", "summarise"))
    assert results.items[0].url == "https://a.org"
    assert ext.content == "page text"
    assert stub_server.requests[0]["path"] == "/search?q=q"
    assert stub_server.requests[1]["body"] == {"url": "https://a.org", "instruction": "summarise"}


def test_http_tool_error_status(stub_server):
    stub_server.default = (500, {})
    cfg = HttpToolConfig(search_url=stub_server.url + "/search", reader_url=stub_server.url + "/read")
    obs = run(ToolExecutor(HttpToolBackend(cfg)).observe(Action.search("q")))
    assert obs.kind is ObservationKind.TOOL_ERROR
