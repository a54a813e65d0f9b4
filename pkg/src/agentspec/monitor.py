"""Decoding monitor: segmentation, validation, and corrections.

Raw generated text is split on occurrences of state prompt strings
(longest match at each scan position), producing state/content events.
Events are folded through the automaton; the first bad transition or
content-constraint breach yields a :class:`Violation` that records where
to truncate. Corrections rebuild the text up to that point and append a
prefix that steers the model back onto a valid path.

Separator convention: one space or newline directly after a prompt, and
one newline directly before the next prompt, belong to formatting and are
excluded from event content; all other whitespace is content.
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from typing import Sequence, Union

from .automaton import Automaton
from .errors import TransitionError
from .spec import AgentSpec


@dataclass(frozen=True)
class StateEvent:
    """One state/content pair. ``state`` is None only for the fragment of
    text preceding the first recognizable prompt."""

    state: str | None
    content: str
    source: str = "llm"  # "llm" | "env"
    byte_span: tuple[int, int] = (0, 0)
    content_span: tuple[int, int] = (0, 0)

    @property
    def pair(self) -> tuple[str | None, str]:
        return (self.state, self.content)


@dataclass(frozen=True)
class Conforming:
    events: tuple[StateEvent, ...]


@dataclass(frozen=True)
class Violation:
    valid_prefix_events: tuple[StateEvent, ...]
    offending_symbol: str | None
    truncate_at: int
    expected: tuple[str, ...]
    constraint: str | None = None  # "allowed_values" | "max_tokens" when content-level
    offending_event: StateEvent | None = field(default=None, compare=False)
    followups: tuple[str, ...] = ()  # valid symbols after the offending state (content violations)


Verdict = Union[Conforming, Violation]


@dataclass(frozen=True)
class Correction:
    resume_text: str
    injected: str
    forced: bool


def count_tokens(text: str) -> int:
    """Whitespace-delimited pseudo-token count, the unit used everywhere."""
    return len(text.split())


_TOKEN_RE = re.compile(r"\S+")


def truncate_tokens(text: str, limit: int) -> str:
    """Cut after the ``limit``-th pseudo-token, preserving inner whitespace."""
    if limit <= 0:
        return ""
    for i, m in enumerate(_TOKEN_RE.finditer(text), start=1):
        if i == limit:
            return text[: m.end()]
    return text


def _prompt_pattern(spec: AgentSpec) -> re.Pattern[str]:
    # Longer alternatives first: at a given position the longest prompt wins.
    ordered = sorted(spec.prompts.values(), key=len, reverse=True)
    return re.compile("|".join(re.escape(p) for p in ordered))


def _strip_content(raw: str, at_end: bool) -> tuple[str, int]:
    """Apply the separator convention; returns (content, leading offset)."""
    lead = 1 if raw[:1] in (" ", "\n") else 0
    body = raw[lead:]
    if not at_end and body.endswith("\n"):
        body = body[:-1]
    return body, lead


def segment(text: str, spec: AgentSpec) -> list[StateEvent]:
    """Split ``text`` into prompt-delimited events.

    Text before the first prompt becomes a leading event with ``state=None``
    (the runtime merges it into whatever state is in progress). Segmentation
    is total: any text yields a (possibly empty) event list.
    """
    if not text:
        return []
    by_prompt = {sd.prompt_text: sd for sd in spec.states}
    matches = list(_prompt_pattern(spec).finditer(text))
    events: list[StateEvent] = []
    if not matches or matches[0].start() > 0:
        # Leading fragment: continuation of in-progress content, so no
        # leading separator exists; only the pre-prompt newline is stripped.
        end = matches[0].start() if matches else len(text)
        raw = text[:end]
        content = raw[:-1] if (matches and raw.endswith("\n")) else raw
        events.append(StateEvent(None, content, "llm", (0, end), (0, end)))
    for i, m in enumerate(matches):
        sd = by_prompt[m.group()]
        nxt = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        raw = text[m.end() : nxt]
        content, lead = _strip_content(raw, at_end=i + 1 == len(matches))
        source = "env" if sd.env_input else "llm"
        events.append(StateEvent(sd.id, content, source, (m.start(), nxt), (m.end() + lead, nxt)))
    return events


def validate_events(
    events: Sequence[StateEvent],
    aut: Automaton,
    spec: AgentSpec,
    open_ended: bool = False,
) -> Verdict:
    """Fold events through the automaton and the per-state content checks.

    Returns :class:`Conforming` when the whole sequence is a valid prefix of
    the behavior (acceptance is the runtime's concern, not ours). With
    ``open_ended`` the last event's content is treated as still being
    generated: an allowed-values check is deferred while the content can
    still grow into a legal value.
    """
    pos = aut.start_position()
    for i, ev in enumerate(events):
        if ev.state is None:
            return Violation(
                valid_prefix_events=(),
                offending_symbol=None,
                truncate_at=0,
                expected=aut.valid_next(pos),
            )
        try:
            nxt = aut.advance(pos, ev.state)
        except TransitionError as err:
            return Violation(
                valid_prefix_events=tuple(events[:i]),
                offending_symbol=ev.state,
                truncate_at=ev.byte_span[0],
                expected=err.expected,
                offending_event=ev,
            )
        sd = spec.state(ev.state)
        last_and_open = open_ended and i == len(events) - 1
        constraint = None
        if sd.allowed_values is not None and ev.content.strip() not in sd.allowed_values:
            still_growable = last_and_open and any(
                v.startswith(ev.content.strip()) for v in sd.allowed_values
            )
            if not still_growable:
                constraint = "allowed_values"
        if constraint is None and sd.max_tokens is not None and count_tokens(ev.content) > sd.max_tokens:
            constraint = "max_tokens"
        if constraint:
            return Violation(
                valid_prefix_events=tuple(events[:i]),
                offending_symbol=None,
                truncate_at=ev.content_span[0],
                expected=(ev.state,),
                constraint=constraint,
                offending_event=ev,
                followups=aut.valid_next(nxt),
            )
        pos = nxt
    return Conforming(tuple(events))


def longest_common_prefix(prompts: Sequence[str]) -> str:
    """Byte-wise longest common prefix of a non-empty prompt collection."""
    if not prompts:
        raise ValueError("prompts must be non-empty")
    return os.path.commonprefix(list(prompts))


def _content_stub(verdict: Violation, spec: AgentSpec) -> str:
    sd = spec.state(verdict.expected[0])
    if sd.allowed_values:
        return sd.allowed_values[0]
    event = verdict.offending_event
    if sd.max_tokens is not None and event is not None:
        return truncate_tokens(event.content, sd.max_tokens)
    return ""


def make_correction(
    transcript_text: str,
    verdict: Violation,
    spec: AgentSpec,
    retry_count: int,
    max_retries: int = 3,
) -> Correction:
    """Valid state prefixing.

    Transition errors: truncate before the offending prompt and append the
    longest common prefix of the expected states' prompts; once retries are
    spent, append the full prompt of the first expected state (declaration
    order), which removes all slack.

    Content violations: truncate the offending content and let the model
    retry it; once retries are spent, splice in a replacement that cannot
    violate again (first allowed value, or the content cut to its token cap)
    and force the next state's prompt so the run keeps moving.
    """
    base = transcript_text[: verdict.truncate_at]
    prompts = spec.prompts
    if verdict.constraint is None:
        if not verdict.expected:
            # the behavior is complete; nothing may follow, so the cure is
            # pure truncation
            injected, forced = "", False
        elif retry_count < max_retries:
            injected = longest_common_prefix([prompts[s] for s in verdict.expected])
            forced = False
        else:
            injected = prompts[verdict.expected[0]]
            forced = True
    else:
        if retry_count < max_retries:
            injected = ""
            forced = False
        else:
            stub = _content_stub(verdict, spec)
            injected = stub
            if verdict.followups:
                injected += "\n" + prompts[verdict.followups[0]]
            forced = True
    return Correction(resume_text=base + injected, injected=injected, forced=forced)
