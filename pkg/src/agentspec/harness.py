"""Evaluation harness: built-in agents, env wiring, and QA protocols.

Ships the registry of built-in agent definitions, the default environment
handlers for their tool states, self-consistency sampling with the
non-agent-to-agent fallback, dataset evaluation with exact-match scoring,
few-shot prompt validation, and trace rendering.
"""
from __future__ import annotations

import json
import re
import string
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

from .backends import Backend, CompletionRequest
from .errors import AgentError, SpecError
from .monitor import Conforming, Violation, segment, validate_events
from .runtime import EnvHandler, RunConfig, Transcript, run_session
from .spec import AgentSpec, parse_spec
from .summarizer import PassSummarizer
from .toolbox import PageCursor, ToolDescriptor, run_tool

BUILTIN_AGENTS = ("react", "rewoo", "reflexion", "cot", "direct", "pass")


def builtin_spec_text(name: str) -> str:
    if name not in BUILTIN_AGENTS:
        raise SpecError(f"unknown built-in agent {name!r}; choose from {BUILTIN_AGENTS}")
    return resources.files("agentspec").joinpath(f"builtin/{name}.lisp").read_text(encoding="utf-8")


def load_builtin(name: str) -> AgentSpec:
    return parse_spec(builtin_spec_text(name))


def load_spec(name_or_path: str) -> AgentSpec:
    """A built-in name, or a path to a spec file."""
    if name_or_path in BUILTIN_AGENTS:
        return load_builtin(name_or_path)
    path = Path(name_or_path)
    if not path.exists():
        raise SpecError(f"{name_or_path!r} is neither a built-in agent nor an existing file")
    return parse_spec(path.read_text(encoding="utf-8"))


# --- answer normalization -------------------------------------------------

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT = str.maketrans("", "", string.punctuation)


def normalize_answer(text: str) -> str:
    """Open-domain QA convention: lowercase, drop articles and punctuation,
    collapse whitespace."""
    text = text.lower()
    text = _ARTICLES.sub(" ", text)
    text = text.translate(_PUNCT)
    return " ".join(text.split())


NORMALIZERS: dict[str, Callable[[str], str]] = {
    "qa": normalize_answer,
    "identity": lambda s: s.strip(),
}


# --- environment handlers -------------------------------------------------


class ToolObservationEnv:
    """Fills an observation state by running the tool named by the most
    recent action pair."""

    def __init__(self, registry: dict[str, ToolDescriptor], cursor: PageCursor | None = None,
                 act_state: str = "Act", input_state: str = "Act-Inp"):
        self.registry = registry
        self.cursor = cursor if cursor is not None else PageCursor()
        self.act_state = act_state
        self.input_state = input_state

    def __call__(self, spec: AgentSpec, transcript: Transcript, entering_state: str) -> str:
        tool = text = None
        for ev in transcript.events:
            if ev.state == self.act_state:
                tool = ev.content.strip()
            elif ev.state == self.input_state:
                text = ev.content.strip()
        if tool is None or text is None:
            return "No action to execute."
        return run_tool(self.registry, tool, text, self.cursor)


class ReWOOSolverEnv:
    """Executes the labeled plan, substituting earlier evidence labels into
    later inputs, then asks the backend to solve with the evidence."""

    def __init__(self, registry: dict[str, ToolDescriptor], backend: Backend,
                 cursor: PageCursor | None = None, max_answer_tokens: int = 64):
        self.registry = registry
        self.backend = backend
        self.cursor = cursor if cursor is not None else PageCursor()
        self.max_answer_tokens = max_answer_tokens

    def __call__(self, spec: AgentSpec, transcript: Transcript, entering_state: str) -> str:
        question = ""
        steps: list[dict] = []
        for ev in transcript.events:
            if ev.state == "Ques":
                question = ev.content
            elif ev.state == "Plan":
                steps.append({"plan": ev.content.strip()})
            elif ev.state == "Act-Lbl" and steps:
                steps[-1]["label"] = ev.content.strip()
            elif ev.state == "Act" and steps:
                steps[-1]["tool"] = ev.content.strip()
            elif ev.state == "Act-Inp" and steps:
                steps[-1]["input"] = ev.content.strip()
        evidence: dict[str, str] = {}
        lines = []
        for step in steps:
            text = step.get("input", "")
            for label, result in evidence.items():
                text = text.replace(label, result)
            result = run_tool(self.registry, step.get("tool", ""), text, self.cursor)
            label = step.get("label", f"#E{len(evidence) + 1}")
            evidence[label] = result
            lines.append(f"{label} = {step.get('tool', '')}[{text}]: {result}")
        prompt = (
            "Solve the question using the collected evidence.\n"
            f"Question: {question}\n"
            "Evidence:\n" + "\n".join(lines) + "\nAnswer:"
        )
        completion = self.backend.complete(CompletionRequest(
            prompt=prompt, stop_sequences=("\n",), max_tokens=self.max_answer_tokens))
        return completion.text.strip()


class ReflexionEvalEnv:
    """Evaluates a proposed answer: exact match against gold when known,
    otherwise a backend self-check that must say CORRECT or INCORRECT."""

    def __init__(self, backend: Backend | None = None, gold: str | None = None,
                 normalizer: Callable[[str], str] = normalize_answer):
        self.backend = backend
        self.gold = gold
        self.normalizer = normalizer

    def __call__(self, spec: AgentSpec, transcript: Transcript, entering_state: str) -> str:
        proposed = ""
        question = ""
        for ev in transcript.events:
            if ev.state == "Prop-Ans":
                proposed = ev.content.strip()
            elif ev.state == "Ques":
                question = ev.content
        if self.gold is not None:
            ok = self.normalizer(proposed) == self.normalizer(self.gold)
            return "CORRECT" if ok else "INCORRECT"
        if self.backend is None:
            return "INCORRECT"
        completion = self.backend.complete(CompletionRequest(
            prompt=(f"Question: {question}\nProposed answer: {proposed}\n"
                    "Is the proposed answer correct? Reply CORRECT or INCORRECT.\nVerdict:"),
            stop_sequences=("\n",), max_tokens=4))
        return "CORRECT" if "CORRECT" in completion.text.upper().replace("INCORRECT", "") else "INCORRECT"


class EnvRouter:
    """Dispatches env states to per-state handlers."""

    def __init__(self, handlers: dict[str, EnvHandler]):
        self.handlers = handlers

    def __call__(self, spec: AgentSpec, transcript: Transcript, entering_state: str) -> str:
        handler = self.handlers.get(entering_state)
        if handler is None:
            raise AgentError(f"no environment handler registered for state {entering_state!r}")
        return handler(spec, transcript, entering_state)


def make_default_env(
    spec: AgentSpec,
    registry: dict[str, ToolDescriptor],
    backend: Backend,
    alpha: float = 0.6,
    use_summarizer: bool = True,
    gold: str | None = None,
) -> EnvHandler:
    """Wire the conventional handlers for a spec's env states by state id:
    Obs -> tools, Sum -> parallel summarizer, Solver -> plan solver,
    Eval -> answer evaluation. Unknown env state ids fall back to the tool
    observation handler."""
    cursor = PageCursor()
    handlers: dict[str, EnvHandler] = {}
    for state in spec.env_states:
        if state == "Sum":
            handlers[state] = PassSummarizer(registry, backend, cursor=cursor, alpha=alpha,
                                             use_summarizer=use_summarizer)
        elif state == "Solver":
            handlers[state] = ReWOOSolverEnv(registry, backend, cursor=cursor)
        elif state == "Eval":
            handlers[state] = ReflexionEvalEnv(backend, gold=gold)
        else:
            handlers[state] = ToolObservationEnv(registry, cursor=cursor)
    return EnvRouter(handlers)


# --- self-consistency and the hybrid protocol ------------------------------


@dataclass(frozen=True)
class SelfConsistencyConfig:
    k: int = 5
    temperature: float = 0.7
    answer_normalizer: str = "qa"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


def _null_env(spec: AgentSpec, transcript: Transcript, entering_state: str) -> str:
    raise AgentError(f"non-agent spec unexpectedly entered env state {entering_state!r}")


def self_consistent_answer(
    spec: AgentSpec,
    backend: Backend,
    question: str,
    cfg: SelfConsistencyConfig | None = None,
    preamble: str = "",
    run_config: RunConfig | None = None,
) -> str | None:
    """Sample k answers; return the modal normalized answer only when it
    repeats (count >= 2). Failed sessions count as unique sentinel answers,
    so they can never form the mode."""
    cfg = cfg or SelfConsistencyConfig()
    base = run_config or RunConfig()
    normalize = NORMALIZERS[cfg.answer_normalizer]
    answers: list[str] = []
    for i in range(cfg.k):
        rc = RunConfig(
            chunk_size=base.chunk_size, max_steps=base.max_steps, max_retries=base.max_retries,
            temperature=cfg.temperature,
            seed=None if base.seed is None else base.seed + i,
            sanitize_marker=base.sanitize_marker,
        )
        try:
            transcript = run_session(spec, preamble, question, backend, _null_env, rc)
            answers.append(normalize(transcript.final_answer() or ""))
        except AgentError:
            answers.append(f"<failed sample {i}>")
    counts = Counter(answers)
    top = max(counts.values())
    if top < 2:
        return None
    # ties break toward the first-sampled modal answer
    return next(a for a in answers if counts[a] == top)


@dataclass
class HybridResult:
    answer: str | None
    provenance: str  # "non_agent" | "agent" | "failed"
    non_agent_answer: str | None = None
    transcript: Transcript | None = None
    failure: str | None = None


def hybrid_run(
    non_agent_spec: AgentSpec,
    agent_spec: AgentSpec,
    backend: Backend,
    env: EnvHandler,
    question: str,
    sc_config: SelfConsistencyConfig | None = None,
    run_config: RunConfig | None = None,
    preamble: str = "",
    agent_preamble: str | None = None,
) -> HybridResult:
    """Try self-consistency first; fall back to a full agent run when no
    answer repeats."""
    sc = self_consistent_answer(non_agent_spec, backend, question, sc_config, preamble, run_config)
    if sc is not None:
        return HybridResult(answer=sc, provenance="non_agent", non_agent_answer=sc)
    try:
        transcript = run_session(
            agent_spec,
            preamble if agent_preamble is None else agent_preamble,
            question, backend, env, run_config or RunConfig(),
        )
        return HybridResult(answer=transcript.final_answer(), provenance="agent", transcript=transcript)
    except AgentError as err:
        return HybridResult(answer=None, provenance="failed",
                            failure=f"self-consistency found no repeat; agent run failed: {err}")


# --- dataset evaluation -----------------------------------------------------


@dataclass(frozen=True)
class DatasetRecord:
    question: str
    answer: str
    id: str | None = None


def load_dataset(path: str | Path) -> tuple[list[DatasetRecord], list[str]]:
    """Line-delimited JSON records {question, answer, id?}; malformed lines
    are returned as warnings, not errors."""
    records: list[DatasetRecord] = []
    warnings: list[str] = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            question, answer = obj["question"], obj["answer"]
            if not question or not answer:
                raise ValueError("question and answer must be non-empty")
            records.append(DatasetRecord(question, answer, obj.get("id")))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
            warnings.append(f"line {n}: skipped malformed record: {err}")
    return records, warnings


@dataclass
class RunReport:
    records: list[dict] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)

    @property
    def accuracy(self) -> float:
        if not self.records:
            return 0.0
        return sum(1 for r in self.records if r["correct"]) / len(self.records)

    def to_table(self) -> str:
        lines = [f"{'ok':2}  {'provenance':10}  {'predicted':24}  {'gold':24}  question"]
        for r in self.records:
            ok = "y" if r["correct"] else "n"
            lines.append(f"{ok:2}  {r['agent_used']:10}  {str(r['predicted'])[:24]:24}  "
                         f"{str(r['gold'])[:24]:24}  {r['question'][:48]}")
        lines.append(f"exact match: {self.accuracy * 100:.1f}% ({len(self.records)} questions, "
                     f"{len(self.skipped)} skipped)")
        return "\n".join(lines)

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(r, sort_keys=True) for r in self.records)


def evaluate_dataset(
    path: str | Path,
    answer_fn: Callable[[DatasetRecord], dict],
    normalizer: str = "qa",
    workers: int = 1,
) -> RunReport:
    """Run ``answer_fn`` over every record and score exact match.

    ``answer_fn`` returns a dict with at least ``predicted`` and
    ``agent_used``; extra keys (corrections, env_calls, steps) are carried
    into the report. Raises on an empty dataset.
    """
    records, warnings = load_dataset(path)
    if not records:
        raise AgentError(f"dataset {path} contains no usable records")
    normalize = NORMALIZERS[normalizer]

    def score(rec: DatasetRecord) -> dict:
        out = answer_fn(rec)
        predicted = out.get("predicted")
        row = {
            "question": rec.question,
            "gold": rec.answer,
            "predicted": predicted,
            "correct": predicted is not None and normalize(predicted) == normalize(rec.answer),
            "agent_used": out.get("agent_used", "agent"),
            "corrections": out.get("corrections", 0),
            "env_calls": out.get("env_calls", 0),
            "steps": out.get("steps", 0),
        }
        if rec.id is not None:
            row["id"] = rec.id
        return row

    if workers <= 1:
        rows = [score(rec) for rec in records]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(score, records))
    return RunReport(records=rows, skipped=warnings)


# --- prompt validation ------------------------------------------------------


@dataclass(frozen=True)
class ExampleReport:
    index: int
    offset: int  # byte offset of the example within the validated text
    verdict: Conforming | Violation
    complete: bool  # ends in an accepting position

    @property
    def ok(self) -> bool:
        return isinstance(self.verdict, Conforming) and self.complete


def validate_prompt(spec: AgentSpec, example_text: str) -> list[ExampleReport]:
    """Validate each few-shot example embedded in a prompt preamble.

    Examples are delimited by occurrences of the initial state's prompt;
    text before the first one (instructions) is ignored. Every example must
    be a complete accepted behavior, not merely a valid prefix.
    """
    aut = spec.automaton
    events = segment(example_text, spec)
    starts = [i for i, ev in enumerate(events) if ev.state == spec.initial_state]
    reports: list[ExampleReport] = []
    if not starts:
        verdict = Violation((), None, 0, (spec.initial_state,))
        return [ExampleReport(0, 0, verdict, complete=False)]
    for n, at in enumerate(starts):
        stop = starts[n + 1] if n + 1 < len(starts) else len(events)
        chunk = events[at:stop]
        verdict = validate_events(chunk, aut, spec)
        complete = False
        if isinstance(verdict, Conforming):
            pos = aut.start_position()
            for ev in chunk:
                pos = aut.advance(pos, ev.state)
            complete = aut.is_accepting(pos)
            if not complete:
                verdict = Violation(tuple(chunk), None, chunk[-1].byte_span[1], aut.valid_next(pos))
        reports.append(ExampleReport(n, chunk[0].byte_span[0], verdict, complete))
    return reports


# --- trace rendering --------------------------------------------------------


def emit_trace(transcript_or_events, spec: AgentSpec | None = None, markdown: bool = False) -> str:
    """One "[State] content" line per event, in order.

    With ``markdown`` the prompts are bolded for human reading (the layout
    figures print). Events with empty content render as the bare prompt.
    ``spec`` may be omitted when passing a transcript, which knows its own.
    """
    events = getattr(transcript_or_events, "events", transcript_or_events)
    if spec is None:
        spec = getattr(transcript_or_events, "spec", None)
        if spec is None:
            raise ValueError("pass spec= when rendering a bare event list")
    prompts = spec.prompts
    lines = []
    for ev in events:
        if ev.state is None:
            lines.append(ev.content)
            continue
        prompt = f"**{prompts[ev.state]}**" if markdown else prompts[ev.state]
        lines.append(f"{prompt} {ev.content}" if ev.content else prompt)
    return "\n".join(lines)


def trace_records(transcript_or_events) -> list[dict]:
    """Structured form of the trace: one record per event."""
    events = getattr(transcript_or_events, "events", transcript_or_events)
    return [
        {
            "state": ev.state,
            "content": ev.content,
            "source": ev.source,
            "span": list(ev.byte_span),
        }
        for ev in events
    ]
