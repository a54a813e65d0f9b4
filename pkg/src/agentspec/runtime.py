"""The generation loop: generate, validate, correct, repeat.

A session owns a transcript (monitored text only; instructions and few-shot
examples live in an opaque preamble that is prepended to every backend call
but never validated). Each iteration either asks the backend for a chunk,
fills an environment state, or applies a correction. The loop ends when the
automaton accepts and the final state's content is closed, or when a budget
runs out.

Environment text is validated exactly like model text. Before it enters the
transcript it is sanitized so that embedded prompt strings cannot fire
transitions: the leading ``[`` of any embedded prompt occurrence is replaced
with a configurable marker (a lone backslash by default).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

from .automaton import Automaton, MonitorPosition
from .backends import Backend, Completion, CompletionRequest
from .errors import BudgetExhausted, EnvError
from .monitor import (
    Conforming,
    StateEvent,
    Violation,
    make_correction,
    segment,
    validate_events,
)
from .spec import AgentSpec

EnvHandler = Callable[[AgentSpec, "Transcript", str], str]


@dataclass(frozen=True)
class RunConfig:
    chunk_size: int = 256
    max_steps: int = 50
    max_retries: int = 3
    temperature: float = 0.0
    seed: int | None = None
    sanitize_marker: str = "\\"

    def __post_init__(self):
        if self.chunk_size < 1 or self.max_steps < 1 or self.max_retries < 1:
            raise ValueError("chunk_size, max_steps and max_retries must all be >= 1")


@dataclass
class Transcript:
    """Mutable session state; the monitored text plus bookkeeping."""

    spec: AgentSpec
    preamble: str = ""
    text: str = ""
    events: tuple[StateEvent, ...] = ()
    position: MonitorPosition = MonitorPosition(0, 0)
    corrections: int = 0
    env_calls: int = 0
    steps: int = 0
    closed: bool = False
    pending_env: str | None = None
    status: str = "running"  # "running" | "done" | "failed"
    log: list[dict] = field(default_factory=list)

    def final_answer(self) -> str | None:
        """Content of the last event when the run ended in a final state."""
        if self.events and self.events[-1].state in self.spec.final_states:
            return self.events[-1].content
        return None


def sanitize_env_text(text: str, spec: AgentSpec, marker: str = "\\") -> str:
    """Break every embedded prompt occurrence so it cannot match."""
    prompts = sorted(spec.prompts.values(), key=len, reverse=True)
    for _ in range(10):
        dirty = False
        for prompt in prompts:
            if prompt in text:
                text = text.replace(prompt, marker + prompt[1:])
                dirty = True
        if not dirty:
            break
    assert not any(p in text for p in prompts), "sanitizer failed to remove a prompt"
    return text


def generate_step(transcript: Transcript, backend: Backend, spec: AgentSpec, cfg: RunConfig) -> Completion:
    """One completion call. Stop sequences are the prompts of all
    environment-produced states; a fired stop is excluded from the chunk."""
    stops = tuple(spec.prompt_of(s) for s in spec.env_states)
    req = CompletionRequest(
        prompt=transcript.preamble + transcript.text,
        stop_sequences=stops,
        max_tokens=cfg.chunk_size,
        temperature=cfg.temperature,
        seed=cfg.seed,
    )
    return backend.complete(req)


def check_termination(transcript: Transcript, aut: Automaton, cfg: RunConfig) -> str:
    """``done`` / ``failed`` / ``continue`` for the current session state."""
    if transcript.pending_env is None and transcript.closed and aut.is_accepting(transcript.position):
        return "done"
    if transcript.steps >= cfg.max_steps:
        return "failed"
    return "continue"


class _Session:
    def __init__(self, spec: AgentSpec, preamble: str, backend: Backend, env: EnvHandler, cfg: RunConfig):
        self.spec = spec
        self.aut = spec.automaton
        self.backend = backend
        self.env = env
        self.cfg = cfg
        self.t = Transcript(spec=spec, preamble=preamble)
        self.retry_counts: dict[tuple[int, int], int] = {}

    def _log(self, kind: str, state: str | None, nbytes: int, started: float):
        self.t.log.append({
            "step": self.t.steps,
            "kind": kind,
            "state": state,
            "bytes": nbytes,
            "duration": round(time.monotonic() - started, 6),
        })

    def _revalidate(self, candidate: str, open_ended: bool):
        """Adopt ``candidate`` if it validates; else correct it. Returns the
        verdict so callers can branch."""
        events = segment(candidate, self.spec)
        verdict = validate_events(events, self.aut, self.spec, open_ended=open_ended)
        if isinstance(verdict, Conforming):
            self.t.text = candidate
            self.t.events = verdict.events
            pos = self.aut.start_position()
            for ev in verdict.events:
                pos = self.aut.advance(pos, ev.state)
            self.t.position = pos
        return verdict

    def _correct(self, candidate: str, verdict: Violation):
        started = time.monotonic()
        self.t.corrections += 1
        key = (len(verdict.valid_prefix_events), verdict.truncate_at == len(candidate))
        retry = self.retry_counts.get(key, 0)
        self.retry_counts[key] = retry + 1
        correction = make_correction(candidate, verdict, self.spec, retry, self.cfg.max_retries)
        redo = self._revalidate(correction.resume_text, open_ended=True)
        assert isinstance(redo, Conforming), "correction produced an invalid transcript"
        self._log("correction", verdict.offending_symbol, len(correction.injected), started)

        # Decide whether the environment owes content now: either the
        # correction injected a full env-state prompt, or a content
        # violation on an env state discarded content that only the
        # environment can regenerate.
        self.t.pending_env = None
        if self.t.events:
            last = self.t.events[-1]
            if last.state is not None and self.spec.state(last.state).env_input:
                ends_at_prompt = self.t.text.endswith(self.spec.prompt_of(last.state))
                content_retry = verdict.constraint is not None and not correction.forced
                if ends_at_prompt or content_retry:
                    self.t.pending_env = last.state
        self.t.closed = False
        if not verdict.expected and self.aut.is_accepting(self.t.position):
            # over-generation past the final state: cut it and stop
            self.t.closed = True

    def _apply_env(self):
        state = self.t.pending_env
        assert state is not None
        started = time.monotonic()
        self.t.steps += 1
        self.t.env_calls += 1
        try:
            out = self.env(self.spec, self.t, state)
        except Exception as exc:
            raise EnvError(state, exc) from exc
        out = sanitize_env_text(out, self.spec, self.cfg.sanitize_marker)
        prompt = self.spec.prompt_of(state)
        base = self.t.text
        if base.endswith(prompt + " "):
            candidate = base + out + "\n"  # separator left behind by a content retry
        elif base.endswith(prompt):
            candidate = base + " " + out + "\n"
        else:
            candidate = base + prompt + " " + out + "\n"
        self._log("env", state, len(out), started)
        verdict = self._revalidate(candidate, open_ended=False)
        if isinstance(verdict, Violation):
            self._correct(candidate, verdict)
        else:
            self.t.pending_env = None
            self.t.closed = False

    def _apply_generation(self):
        started = time.monotonic()
        self.t.steps += 1
        completion = generate_step(self.t, self.backend, self.spec, self.cfg)
        self._log("generate", None, len(completion.text), started)
        candidate = self.t.text + completion.text
        stop_state = None
        if completion.stop_hit is not None:
            by_prompt = {sd.prompt_text: sd.id for sd in self.spec.states}
            stop_state = by_prompt.get(completion.stop_hit)
        closing = completion.finished or (completion.stop_hit is None and not completion.text)
        verdict = self._revalidate(candidate, open_ended=not closing and stop_state is None)
        if isinstance(verdict, Violation):
            self._correct(candidate, verdict)
            return
        if stop_state is not None:
            if stop_state in self.aut.valid_next(self.t.position):
                entered = self._revalidate(self.t.text + self.spec.prompt_of(stop_state), open_ended=True)
                assert isinstance(entered, Conforming), "env prompt entry failed validation"
                self.t.pending_env = stop_state
            else:
                self._correct(candidate, Violation(
                    valid_prefix_events=self.t.events,
                    offending_symbol=stop_state,
                    truncate_at=len(candidate),
                    expected=self.aut.valid_next(self.t.position),
                ))
            return
        self.t.closed = closing
        if closing and not self.aut.is_accepting(self.t.position):
            # The model stopped without reaching a final state: same cure as
            # a transition error, anchored at the end of the text.
            self._correct(candidate, Violation(
                valid_prefix_events=self.t.events,
                offending_symbol=None,
                truncate_at=len(candidate),
                expected=self.aut.valid_next(self.t.position),
            ))

    def run(self, question: str) -> Transcript:
        first = self.spec.initial_state
        if self.spec.state(first).env_input:
            raise EnvError(first, ValueError("initial state cannot be environment-produced"))
        question = sanitize_env_text(question, self.spec, self.cfg.sanitize_marker)
        opening = self._revalidate(self.spec.prompt_of(first) + " " + question, open_ended=True)
        assert isinstance(opening, Conforming), "initial prompt failed validation"

        hard_cap = self.cfg.max_steps * (self.cfg.max_retries + 2)
        iterations = 0
        while True:
            iterations += 1
            if iterations > hard_cap:
                self.t.status = "failed"
                raise BudgetExhausted("retries", self.t)
            outcome = check_termination(self.t, self.aut, self.cfg)
            if outcome == "done":
                self.t.status = "done"
                return self.t
            if outcome == "failed":
                self.t.status = "failed"
                raise BudgetExhausted("steps", self.t)
            if self.t.pending_env is not None:
                self._apply_env()
            else:
                self._apply_generation()


def run_session(
    spec: AgentSpec,
    preamble: str,
    question: str,
    backend: Backend,
    env: EnvHandler,
    cfg: RunConfig | None = None,
) -> Transcript:
    """Drive one full agent run; returns the accepted transcript.

    Raises :class:`BudgetExhausted` (with the partial transcript attached)
    when step or retry budgets run out, and propagates backend/environment
    errors.
    """
    if not question:
        raise ValueError("question must be non-empty")
    return _Session(spec, preamble, backend, env, cfg or RunConfig()).run(question)
