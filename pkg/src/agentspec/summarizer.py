"""Parallel action execution and summary-vs-raw selection.

This is the environment handler behind a plan/act/summarize agent: it
gathers the tool calls written since the last plan step, executes them
concurrently, asks the backend for a one-line summary of the results, and
then returns whichever of {summary, raw numbered list} scores higher under
a length-normalized log-probability. With scoring unavailable the summary
wins by default; with the no-summarizer ablation the raw list is returned
untouched and no backend calls happen at all.
"""
from __future__ import annotations

import hashlib
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .backends import Backend, CompletionRequest
from .errors import BackendError, CapabilityError
from .monitor import count_tokens
from .spec import AgentSpec
from .toolbox import PageCursor, ToolDescriptor, run_tool


@dataclass(frozen=True)
class ActionBatch:
    pairs: tuple[tuple[str, str], ...]  # (tool name, tool input)
    plan_text: str
    question: str = ""


class CandidateKind(Enum):
    SUMMARY = "summary"
    RAW = "raw"


@dataclass(frozen=True)
class SummaryCandidate:
    kind: CandidateKind
    text: str
    token_count: int
    logprob_sum: float
    normalized_score: float


@dataclass(frozen=True)
class SelectionResult:
    chosen: SummaryCandidate
    alpha: float
    context_hash: str
    degraded: bool = False


def collect_action_batch(
    transcript,
    spec: AgentSpec,
    plan_state: str = "Plan",
    act_state: str = "Act",
    input_state: str = "Act-Inp",
    question_state: str = "Ques",
) -> ActionBatch:
    """Pairs of (tool, input) emitted since the most recent plan event.

    The transcript's last event must be the just-entered summary state; the
    behavior automaton guarantees actions come in Act/Act-Inp pairs, so an
    unpaired Act here is a programming error, not an input error.
    """
    events = list(transcript.events)
    question = next((e.content for e in events if e.state == question_state), "")
    last_plan = max(i for i, e in enumerate(events) if e.state == plan_state)
    plan_text = events[last_plan].content
    pairs: list[tuple[str, str]] = []
    pending_tool: str | None = None
    for ev in events[last_plan + 1 :]:
        if ev.state == act_state:
            assert pending_tool is None, "Act without a following Act-Inp"
            pending_tool = ev.content.strip()
        elif ev.state == input_state:
            assert pending_tool is not None, "Act-Inp without a preceding Act"
            pairs.append((pending_tool, ev.content.strip()))
            pending_tool = None
    assert pending_tool is None, "Act without a following Act-Inp"
    if not pairs:
        raise ValueError("no actions emitted since the last plan step")
    return ActionBatch(tuple(pairs), plan_text, question)


def execute_batch(
    batch: ActionBatch,
    registry: dict[str, ToolDescriptor],
    cursor: PageCursor,
    max_workers: int | None = None,
) -> list[str]:
    """Run every action concurrently; results keep declaration order.

    Each action sees a snapshot of the pre-batch cursor (the batch is
    supposed to be independent, so no action observes another's effect).
    After all actions finish, each action's cursor delta is replayed onto
    the session cursor in declaration order, so the post-batch state is
    deterministic no matter how the threads interleave. Failures occupy
    their result slot as error text and never abort the batch.
    """
    pre = cursor.copy()
    snapshots = [cursor.copy() for _ in batch.pairs]

    def invoke(i: int) -> str:
        tool, text = batch.pairs[i]
        return run_tool(registry, tool, text, snapshots[i])

    with ThreadPoolExecutor(max_workers=max_workers or len(batch.pairs)) as pool:
        results = list(pool.map(invoke, range(len(batch.pairs))))
    for snap in snapshots:
        if snap.last_title != pre.last_title:
            cursor.assign(snap)  # a search moved the page (and reset lookups)
        else:
            for term, idx in snap.indices.items():
                if pre.indices.get(term, 0) != idx:
                    cursor.indices[term] = max(cursor.indices.get(term, 0), idx)
    return results


_WS_RUN = re.compile(r"\s*\n\s*")


def _one_line(text: str) -> str:
    return _WS_RUN.sub(" ", text).strip()


def numbered_list(results: Sequence[str]) -> str:
    """The raw-results rendering: one numbered, single-line entry each."""
    return "\n".join(f"{i}. {_one_line(r)}" for i, r in enumerate(results, start=1))


def build_summary_prompt(results: Sequence[str], question: str, plan_text: str) -> str:
    """Statements / Context / Goal sections, ending at the summary cue."""
    statements = "\n".join(_one_line(r) for r in results)
    return (
        f"Statements: {statements}\n"
        f"Context: {_one_line(question)}\n"
        f"Goal: {_one_line(plan_text)}\n"
        "Summary:"
    )


def length_penalty(token_count: int, alpha: float) -> float:
    """Divisor ((5 + n) ** alpha) / ((5 + 1) ** alpha); 1.0 at n == 1."""
    if token_count < 1:
        raise ValueError("token_count must be >= 1")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    return ((5 + token_count) / 6) ** alpha


def _candidate(kind: CandidateKind, text: str, scores: list[float], alpha: float) -> SummaryCandidate:
    total = float(sum(scores))
    tokens = max(1, count_tokens(text))
    return SummaryCandidate(kind, text, tokens, total, total / length_penalty(tokens, alpha))


def select_summary_or_raw(
    context_x: str,
    summary_s: str,
    raw_o: str,
    backend: Backend,
    alpha: float = 0.6,
) -> SelectionResult:
    """Argmax over the two candidates by normalized log-probability.

    Ties go to the summary. If the backend cannot score either candidate the
    summary is returned; if exactly one candidate fails to score, the other
    wins and the result is flagged degraded.
    """
    if not summary_s or not raw_o:
        raise ValueError("both candidates must be non-empty")
    context_hash = hashlib.sha256(context_x.encode()).hexdigest()[:16]

    def try_score(text: str) -> list[float] | None:
        try:
            return backend.score(context_x, text)
        except (CapabilityError, BackendError):
            return None

    s_scores = try_score(summary_s)
    o_scores = try_score(raw_o)
    if s_scores is None and o_scores is None:
        fallback = SummaryCandidate(CandidateKind.SUMMARY, summary_s, max(1, count_tokens(summary_s)), 0.0, 0.0)
        return SelectionResult(fallback, alpha, context_hash, degraded=True)
    if s_scores is None or o_scores is None:
        kind = CandidateKind.RAW if s_scores is None else CandidateKind.SUMMARY
        text = raw_o if s_scores is None else summary_s
        chosen = _candidate(kind, text, o_scores if s_scores is None else s_scores, alpha)
        return SelectionResult(chosen, alpha, context_hash, degraded=True)
    summary = _candidate(CandidateKind.SUMMARY, summary_s, s_scores, alpha)
    raw = _candidate(CandidateKind.RAW, raw_o, o_scores, alpha)
    chosen = raw if raw.normalized_score > summary.normalized_score else summary
    return SelectionResult(chosen, alpha, context_hash)


class PassSummarizer:
    """Environment handler for the summary state of a plan/act agent."""

    def __init__(
        self,
        registry: dict[str, ToolDescriptor],
        backend: Backend,
        cursor: PageCursor | None = None,
        alpha: float = 0.6,
        use_summarizer: bool = True,
        max_summary_tokens: int = 128,
        plan_state: str = "Plan",
        act_state: str = "Act",
        input_state: str = "Act-Inp",
        question_state: str = "Ques",
        max_workers: int | None = None,
    ):
        self.registry = registry
        self.backend = backend
        self.cursor = cursor if cursor is not None else PageCursor()
        self.alpha = alpha
        self.use_summarizer = use_summarizer
        self.max_summary_tokens = max_summary_tokens
        self.plan_state = plan_state
        self.act_state = act_state
        self.input_state = input_state
        self.question_state = question_state
        self.max_workers = max_workers
        self.last_selection: SelectionResult | None = None

    def __call__(self, spec: AgentSpec, transcript, entering_state: str) -> str:
        assert transcript.events and transcript.events[-1].state == entering_state, \
            "summarizer invoked before the summary state was entered"
        batch = collect_action_batch(
            transcript, spec, self.plan_state, self.act_state, self.input_state, self.question_state
        )
        results = execute_batch(batch, self.registry, self.cursor, self.max_workers)
        raw = numbered_list(results)
        if not self.use_summarizer:
            return raw
        prompt = build_summary_prompt(results, batch.question, batch.plan_text)
        completion = self.backend.complete(
            CompletionRequest(prompt=prompt, stop_sequences=("\n",), max_tokens=self.max_summary_tokens)
        )
        summary = completion.text.strip()
        if not summary:
            return raw
        context = transcript.preamble + transcript.text
        selection = select_summary_or_raw(context, summary, raw, self.backend, self.alpha)
        self.last_selection = selection
        return selection.chosen.text
