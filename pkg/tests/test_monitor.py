import random

import pytest

from agentspec import parse_spec
from agentspec.monitor import (
    Conforming,
    Violation,
    count_tokens,
    longest_common_prefix,
    make_correction,
    segment,
    truncate_tokens,
    validate_events,
)

from conftest import golden

FIG1_STATES = ["Ques", "Tht", "Act", "Act-Inp", "Obs", "Tht", "Act", "Act-Inp", "Obs", "Final-Tht", "Ans"]


# --- segmentation ------------------------------------------------------------


def test_segment_empty(react):
    assert segment("", react) == []


def test_segment_figure1(react):
    text = golden("golden_react_figure1.txt")
    events = segment(text, react)
    assert [e.state for e in events] == FIG1_STATES
    assert events[2].content == "Search"
    assert events[3].content == "Milhouse"
    assert events[6].content == "Lookup"
    assert events[7].content == "named after"
    assert events[8].content.startswith("(Result 1 / 1)")
    assert events[10].content == "Richard Nixon"


def test_segment_longest_match(react):
    events = segment("[Action] Search [Action Input] Milhouse", react)
    assert [e.state for e in events] == ["Act", "Act-Inp"]
    assert events[0].content == "Search "  # trailing space is content; only the newline separator is stripped
    assert events[1].content == "Milhouse"


def test_segment_spans_contiguous(react):
    text = golden("golden_react_figure1.txt")
    events = segment(text, react)
    assert events[0].byte_span[0] == 0
    assert events[-1].byte_span[1] == len(text)
    for a, b in zip(events, events[1:]):
        assert a.byte_span[1] == b.byte_span[0]


def test_segment_leading_fragment(react):
    events = segment("stray text\n[Question] hi", react)
    assert events[0].state is None
    assert events[0].content == "stray text"
    assert events[1].state == "Ques"


def test_segment_sources_follow_env_flag(react):
    events = segment("[Question] q\n[Observation] tool text", react)
    assert [e.source for e in events] == ["llm", "env"]


def test_builtin_prompt_sets_unambiguous():
    # No prompt occurs inside another at a positive offset, so longest match
    # at the scan position resolves every overlap; checked over all pairs of
    # every built-in prompt set.
    from agentspec.harness import BUILTIN_AGENTS, load_builtin

    for name in BUILTIN_AGENTS:
        prompts = list(load_builtin(name).prompts.values())
        for p in prompts:
            for q in prompts:
                if p is q:
                    continue
                assert q not in p[1:], f"{q!r} hides inside {p!r} in {name}"


def test_segment_round_trip_random(react):
    rng = random.Random(99)
    prompts = react.prompts
    ids = list(prompts)
    for _ in range(100):
        states = [rng.choice(ids) for _ in range(rng.randint(1, 8))]
        contents = ["".join(rng.choices("ab cd.", k=rng.randint(0, 8))).strip() for _ in states]
        text = "\n".join(
            f"{prompts[s]} {c}" if c else prompts[s] for s, c in zip(states, contents)
        )
        events = segment(text, react)
        assert [e.state for e in events] == states
        assert [e.content for e in events] == contents


# --- validation ---------------------------------------------------------------


def test_validate_figure1_conforming(react):
    events = segment(golden("golden_react_figure1.txt"), react)
    verdict = validate_events(events, react.automaton, react)
    assert isinstance(verdict, Conforming)


def test_validate_transition_error(react):
    text = "[Question] q\n[Thought] a\n[Thought] b"
    events = segment(text, react)
    verdict = validate_events(events, react.automaton, react)
    assert isinstance(verdict, Violation)
    assert verdict.offending_symbol == "Tht"
    assert verdict.expected == ("Act",)
    assert verdict.truncate_at == text.index("[Thought] b")
    assert [e.state for e in verdict.valid_prefix_events] == ["Ques", "Tht"]


def test_validate_monotone_on_prefixes(react):
    events = segment(golden("golden_react_figure1.txt"), react)
    for n in range(len(events) + 1):
        assert isinstance(validate_events(events[:n], react.automaton, react), Conforming)


TOOL_SPEC = parse_spec(
    """
    (define tooly
      (:states
        (Q (:text "[Question]"))
        (Act (:text "[Action]") (:allowed "Search" "Lookup"))
        (Arg (:text "[Action Input]") (:max-tokens 2))
        (A (:text "[Answer]")))
      (:behavior (next Q Act Arg A)))
    """
)


def test_validate_allowed_values_violation():
    text = "[Question] q\n[Action] Fly\n[Action Input] x\n[Answer] done"
    events = segment(text, TOOL_SPEC)
    verdict = validate_events(events, TOOL_SPEC.automaton, TOOL_SPEC)
    assert isinstance(verdict, Violation)
    assert verdict.constraint == "allowed_values"
    assert verdict.expected == ("Act",)
    assert verdict.offending_symbol is None
    assert verdict.truncate_at == text.index("Fly")
    assert verdict.followups == ("Arg",)


def test_validate_max_tokens_violation():
    text = "[Question] q\n[Action] Search\n[Action Input] one two three\n[Answer] done"
    events = segment(text, TOOL_SPEC)
    verdict = validate_events(events, TOOL_SPEC.automaton, TOOL_SPEC)
    assert isinstance(verdict, Violation)
    assert verdict.constraint == "max_tokens"
    assert verdict.truncate_at == text.index("one")


def test_validate_open_ended_defers_partial_values():
    text = "[Question] q\n[Action] Sea"
    events = segment(text, TOOL_SPEC)
    assert isinstance(validate_events(events, TOOL_SPEC.automaton, TOOL_SPEC, open_ended=True), Conforming)
    assert isinstance(validate_events(events, TOOL_SPEC.automaton, TOOL_SPEC), Violation)
    junk = segment("[Question] q\n[Action] Fly", TOOL_SPEC)
    assert isinstance(validate_events(junk, TOOL_SPEC.automaton, TOOL_SPEC, open_ended=True), Violation)


def test_validate_leading_fragment_is_violation(react):
    events = segment("no prompt here", react)
    verdict = validate_events(events, react.automaton, react)
    assert isinstance(verdict, Violation)
    assert verdict.truncate_at == 0
    assert verdict.expected == ("Ques",)


# --- longest_common_prefix ----------------------------------------------------


@pytest.mark.parametrize(
    "prompts,expected",
    [
        (["[Action]", "[Action Input]"], "[Action"),
        (["[Action]", "[Thought]"], "["),
        (["[Answer]"], "[Answer]"),
        (["abc", "xyz"], ""),
    ],
)
def test_longest_common_prefix(prompts, expected):
    assert longest_common_prefix(prompts) == expected


# --- corrections ---------------------------------------------------------------


def _violation_after(text, spec):
    verdict = validate_events(segment(text, spec), spec.automaton, spec)
    assert isinstance(verdict, Violation)
    return verdict


def test_correction_singleton_expected_is_full_prompt(react):
    # after Act-Inp only Obs may follow, so the LCP is already a full prompt
    text = "[Question] q\n[Thought] t\n[Action] Search\n[Action Input] x\n[Answer] nope"
    verdict = _violation_after(text, react)
    assert verdict.expected == ("Obs",)
    correction = make_correction(text, verdict, react, retry_count=0)
    assert correction.injected == "[Observation]"
    assert not correction.forced
    assert correction.resume_text == text[: text.index("[Answer]")] + "[Observation]"


def test_correction_lcp_injection(pass_agent):
    # after Act-Inp in the PASS agent both Act and Sum are valid
    text = "[Question] q\n[Thought] p\n[Action] Search\n[Action Input] x\n[Answer] nope"
    verdict = _violation_after(text, pass_agent)
    assert set(verdict.expected) == {"Act", "Sum"}
    correction = make_correction(text, verdict, pass_agent, retry_count=0)
    assert correction.injected == "["
    assert not correction.forced


def test_correction_forced_uses_declaration_order(react):
    text = "[Question] q\n[Thought] t\n[Action] Search\n[Action Input] x\n[Observation] o\n[Answer] early"
    verdict = _violation_after(text, react)
    assert verdict.expected == ("Tht", "Final-Tht")
    soft = make_correction(text, verdict, react, retry_count=2, max_retries=3)
    assert soft.injected == "[" and not soft.forced
    forced = make_correction(text, verdict, react, retry_count=3, max_retries=3)
    assert forced.injected == "[Thought]"  # Tht is declared before Final-Tht
    assert forced.forced


def test_correction_content_retry_then_force():
    text = "[Question] q\n[Action] Fly\n[Action Input] x"
    verdict = _violation_after(text, TOOL_SPEC)
    retry = make_correction(text, verdict, TOOL_SPEC, retry_count=0)
    assert retry.injected == ""
    assert retry.resume_text == "[Question] q\n[Action] "
    forced = make_correction(text, verdict, TOOL_SPEC, retry_count=3)
    assert forced.forced
    assert forced.resume_text == "[Question] q\n[Action] Search\n[Action Input]"


def test_correction_soundness_injected_prefixes_all_expected(react, pass_agent):
    rng = random.Random(5)
    for spec in (react, pass_agent):
        prompts = spec.prompts
        ids = list(prompts)
        for _ in range(200):
            states = [rng.choice(ids) for _ in range(rng.randint(1, 7))]
            text = "\n".join(f"{prompts[s]} c" for s in states)
            verdict = validate_events(segment(text, spec), spec.automaton, spec)
            if isinstance(verdict, Conforming):
                continue
            correction = make_correction(text, verdict, spec, retry_count=0)
            for state in verdict.expected:
                assert prompts[state].startswith(correction.injected)


def test_truncation_correctness(react, pass_agent):
    # after a correction, re-validation never reports a violation at or
    # before the original truncation point
    rng = random.Random(6)
    for spec in (react, pass_agent):
        prompts = spec.prompts
        ids = list(prompts)
        checked = 0
        while checked < 100:
            states = [rng.choice(ids) for _ in range(rng.randint(2, 7))]
            text = "\n".join(f"{prompts[s]} c" for s in states)
            verdict = validate_events(segment(text, spec), spec.automaton, spec)
            if isinstance(verdict, Conforming):
                continue
            checked += 1
            for retry in (0, 5):
                correction = make_correction(text, verdict, spec, retry_count=retry)
                redo = validate_events(segment(correction.resume_text, spec), spec.automaton, spec, open_ended=True)
                if isinstance(redo, Violation):
                    assert redo.truncate_at > verdict.truncate_at


# --- token helpers -------------------------------------------------------------


def test_count_and_truncate_tokens():
    assert count_tokens("a b  c\nd") == 4
    assert truncate_tokens("one two three", 2) == "one two"
    assert truncate_tokens("one\ntwo three", 2) == "one\ntwo"
    assert truncate_tokens("one", 5) == "one"
    assert truncate_tokens("anything", 0) == ""
