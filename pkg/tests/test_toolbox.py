import pytest

from agentspec.toolbox import (
    Corpus,
    PageCursor,
    build_registry,
    calculator_eval,
    lookup,
    run_tool,
    search,
    similar_titles,
)


# --- calculator -----------------------------------------------------------------


@pytest.mark.parametrize(
    "expr,expected",
    [
        ("2*(3+4)", "14"),
        ("-3 + 3", "0"),
        ("10/4", "2.5"),
        ("1+2*3", "7"),
        ("(1+2)*3", "9"),
        ("2^10", "1024"),
        ("2^-2", "0.25"),
        ("-2^2", "-4"),
        ("2^3^2", "512"),
        ("1/3", "0.3333333333"),
        ("0.1 + 0.2", "0.3"),
        ("  7 ", "7"),
        ("3 × 4 − 2 ÷ 2", "11"),
        ("--4", "4"),
    ],
)
def test_calculator_values(expr, expected):
    assert calculator_eval(expr) == expected


@pytest.mark.parametrize(
    "expr,fragment",
    [
        ("1/0", "division by zero"),
        ("2^(1/2)", "integer"),
        ("2 +", "unexpected end"),
        ("(1+2", "expected ')'"),
        ("1 + x", "expected a number"),
        ("0^-1", "division by zero"),
    ],
)
def test_calculator_errors_are_strings(expr, fragment):
    out = calculator_eval(expr)
    assert out.startswith("Calculator error:")
    assert fragment in out


# --- search ----------------------------------------------------------------------


def test_search_milhouse_first_sentences(corpus):
    cursor = PageCursor()
    out = search(corpus, cursor, "Milhouse")
    assert out.startswith("Milhouse Mussolini Van Houten is a recurring character in")
    assert "named after" not in out  # the answer stays behind the lead
    assert cursor.last_title == "Milhouse"


def test_search_is_case_insensitive(corpus):
    cursor = PageCursor()
    assert search(corpus, cursor, "milhouse") == search(corpus, PageCursor(), "MILHOUSE")
    assert cursor.last_title == "Milhouse"


def test_search_arthurs_magazine_statement(corpus):
    out = search(corpus, PageCursor(), "Arthur's Magazine")
    assert out == (
        "Arthur's Magazine (1844-1846) was an American periodical published "
        "in Philadelphia in the 19th century."
    )


def test_search_miss_lists_similar(corpus):
    cursor = PageCursor()
    out = search(corpus, cursor, "Milhouze")
    assert out.startswith("Could not find Milhouze. Similar: ")
    assert "Milhouse" in out
    assert cursor.last_title is None  # unchanged on a miss


def test_search_miss_empty_corpus():
    out = search(Corpus(), PageCursor(), "anything")
    assert out == "Could not find anything. Similar: ."


def test_similarity_ties_break_lexicographically():
    corpus = Corpus.from_records(
        [
            {"title": "ab", "sentences": ["x."]},
            {"title": "ad", "sentences": ["x."]},
            {"title": "ac", "sentences": ["x."]},
        ]
    )
    assert similar_titles(corpus, "aa") == ["ab", "ac", "ad"]


def test_search_first_sentences_k(corpus):
    out = search(corpus, PageCursor(), "Milhouse", first_sentences=1)
    assert out == (
        "Milhouse Mussolini Van Houten is a recurring character in the Fox "
        "animated television series The Simpsons voiced by Pamela Hayden."
    )


# --- lookup -----------------------------------------------------------------------


def test_lookup_named_after(corpus):
    cursor = PageCursor()
    search(corpus, cursor, "Milhouse")
    out = lookup(corpus, cursor, "named after")
    assert out == (
        "(Result 1 / 1) Milhouse was named after U.S. president Richard Nixon, "
        "whose middle name was Milhous."
    )
    assert lookup(corpus, cursor, "named after") == "No more results."


def test_lookup_before_search(corpus):
    assert lookup(corpus, PageCursor(), "anything") == "No page has been searched."


def test_lookup_counter_semantics(corpus):
    cursor = PageCursor()
    search(corpus, cursor, "Bart Simpson")
    first = lookup(corpus, cursor, "Simpson")
    second = lookup(corpus, cursor, "Simpson")
    assert first.startswith("(Result 1 / 2)")
    assert second.startswith("(Result 2 / 2)")
    assert lookup(corpus, cursor, "Simpson") == "No more results."


def test_lookup_no_match(corpus):
    cursor = PageCursor()
    search(corpus, cursor, "Milhouse")
    assert lookup(corpus, cursor, "zebra") == "No sentence contains 'zebra'."


def test_new_search_resets_lookup_counters(corpus):
    cursor = PageCursor()
    search(corpus, cursor, "Bart Simpson")
    lookup(corpus, cursor, "Simpson")
    search(corpus, cursor, "Bart Simpson")
    assert lookup(corpus, cursor, "Simpson").startswith("(Result 1 / 2)")


def test_tool_determinism(corpus):
    def run():
        cursor = PageCursor()
        return [
            search(corpus, cursor, "Milhouse"),
            lookup(corpus, cursor, "named after"),
            search(corpus, cursor, "Nope"),
        ]

    assert run() == run()


# --- registry ----------------------------------------------------------------------


def test_registry_names(corpus):
    assert set(build_registry(corpus)) == {"Calculator", "Search", "Lookup"}
    assert set(build_registry(None)) == {"Calculator"}


def test_run_tool_dispatch_and_unknown(corpus):
    registry = build_registry(corpus)
    cursor = PageCursor()
    assert run_tool(registry, "Calculator", "1+1", cursor) == "2"
    out = run_tool(registry, "Fly", "x", cursor)
    assert out.startswith("Unknown tool 'Fly'")
    assert "Calculator" in out


def test_corpus_load_errors(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"title": "X", "sentences": ["a."]}\nnot json\n')
    with pytest.raises(ValueError, match="bad corpus record"):
        Corpus.load(bad)
    dup = tmp_path / "dup.jsonl"
    dup.write_text('{"title": "X", "sentences": ["a."]}\n{"title": "x", "sentences": ["b."]}\n')
    with pytest.raises(ValueError, match="duplicate title"):
        Corpus.load(dup)
