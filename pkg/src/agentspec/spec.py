"""Agent specification parsing and validation.

An agent spec is one ``(define <name> (:states ...) (:behavior ...))`` form.
Each state declares the prompt string that both prompts the model and marks
transitions in generated text. Optional per-state extensions:

* ``(:flags :env-input)`` — content comes from the environment, not the LLM
* ``(:max-tokens N)`` — cap on content length in whitespace tokens
* ``(:allowed "v1" "v2" ...)`` — content must equal one of the values

The behavior formula's top level must be ``next`` and every satisfying
sequence must begin with the same state; both are checked at parse time via
the compiled automaton.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from . import sexpr
from .automaton import Automaton, compile_behavior
from .errors import SpecError
from .formula import Atom, BehaviorFormula, Next, Or, Until, atoms, validate_formula
from .sexpr import Symbol


@dataclass(frozen=True)
class StateDef:
    id: str
    prompt_text: str
    env_input: bool = False
    max_tokens: int | None = None
    allowed_values: tuple[str, ...] | None = None


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    code: str
    message: str


@dataclass(frozen=True)
class AgentSpec:
    name: str
    states: tuple[StateDef, ...]
    behavior: BehaviorFormula
    initial_state: str
    final_states: frozenset[str]
    automaton: Automaton = field(compare=False, repr=False)

    def state(self, state_id: str) -> StateDef:
        for sd in self.states:
            if sd.id == state_id:
                return sd
        raise KeyError(state_id)

    @property
    def state_ids(self) -> tuple[str, ...]:
        return tuple(sd.id for sd in self.states)

    @property
    def prompts(self) -> dict[str, str]:
        """state id -> prompt text, in declaration order."""
        return {sd.id: sd.prompt_text for sd in self.states}

    @property
    def env_states(self) -> tuple[str, ...]:
        return tuple(sd.id for sd in self.states if sd.env_input)

    def prompt_of(self, state_id: str) -> str:
        return self.state(state_id).prompt_text


def _expect_list(expr, what: str) -> list:
    if not isinstance(expr, list):
        raise SpecError(f"expected a list for {what}")
    return expr


def _expect_symbol(expr, what: str) -> str:
    if not isinstance(expr, Symbol):
        raise SpecError(f"expected a symbol for {what}")
    return expr.name


def _parse_state(expr) -> StateDef:
    items = _expect_list(expr, "state definition")
    if not items:
        raise SpecError("empty state definition")
    state_id = _expect_symbol(items[0], "state id")
    prompt: str | None = None
    env_input = False
    max_tokens: int | None = None
    allowed: tuple[str, ...] | None = None
    for part in items[1:]:
        part = _expect_list(part, f"property of state {state_id!r}")
        if not part:
            raise SpecError(f"empty property list in state {state_id!r}")
        key = _expect_symbol(part[0], "state property keyword")
        if key == ":text":
            if len(part) != 2 or not isinstance(part[1], str):
                raise SpecError(f"state {state_id!r}: :text takes one string")
            prompt = part[1]
        elif key == ":flags":
            for flag in part[1:]:
                name = _expect_symbol(flag, "flag")
                if name != ":env-input":
                    raise SpecError(f"state {state_id!r}: unknown flag {name!r}")
                env_input = True
        elif key == ":max-tokens":
            if len(part) != 2 or not isinstance(part[1], Symbol) or not part[1].name.isdigit():
                raise SpecError(f"state {state_id!r}: :max-tokens takes one positive integer")
            max_tokens = int(part[1].name)
            if max_tokens < 1:
                raise SpecError(f"state {state_id!r}: :max-tokens must be positive")
        elif key == ":allowed":
            values = part[1:]
            if not values or not all(isinstance(v, str) for v in values):
                raise SpecError(f"state {state_id!r}: :allowed takes one or more strings")
            allowed = tuple(values)
        else:
            raise SpecError(f"state {state_id!r}: unknown keyword {key!r}")
    if prompt is None:
        raise SpecError(f"state {state_id!r} has no (:text ...) prompt")
    if not prompt:
        raise SpecError(f"state {state_id!r} has an empty prompt string")
    return StateDef(state_id, prompt, env_input, max_tokens, allowed)


def _parse_formula(expr) -> BehaviorFormula:
    if isinstance(expr, Symbol):
        return Atom(expr.name)
    if isinstance(expr, str):
        raise SpecError(f"strings are not allowed in :behavior (got {expr!r})")
    items = _expect_list(expr, "behavior formula")
    if not items:
        raise SpecError("empty behavior formula")
    op = _expect_symbol(items[0], "behavior operator")
    args = [_parse_formula(a) for a in items[1:]]
    if op == "or":
        if len(args) < 2:
            raise SpecError("'or' needs at least two arguments")
        return Or(tuple(args))
    if op == "next":
        if len(args) < 1:
            raise SpecError("'next' needs at least one argument")
        return Next(tuple(args))
    if op == "until":
        if len(args) != 2:
            raise SpecError("'until' takes exactly two arguments")
        return Until(args[0], args[1])
    raise SpecError(f"unknown behavior operator {op!r}")


def parse_spec(text: str) -> AgentSpec:
    """Parse one agent definition; raises :class:`SpecError` on any defect."""
    form = sexpr.parse(text)
    items = _expect_list(form, "agent definition")
    if len(items) < 2 or not isinstance(items[0], Symbol) or items[0].name != "define":
        raise SpecError("top-level form must be (define <name> ...)")
    name = _expect_symbol(items[1], "agent name")

    states: tuple[StateDef, ...] | None = None
    behavior: BehaviorFormula | None = None
    for section in items[2:]:
        parts = _expect_list(section, "definition section")
        if not parts:
            raise SpecError("empty section in definition")
        key = _expect_symbol(parts[0], "section keyword")
        if key == ":states":
            if states is not None:
                raise SpecError("duplicate :states section")
            states = tuple(_parse_state(s) for s in parts[1:])
        elif key == ":behavior":
            if behavior is not None:
                raise SpecError("duplicate :behavior section")
            if len(parts) != 2:
                raise SpecError(":behavior takes exactly one formula")
            behavior = _parse_formula(parts[1])
        else:
            raise SpecError(f"unknown keyword {key!r} in definition")
    if not states:
        raise SpecError("definition has no states")
    if behavior is None:
        raise SpecError("definition has no :behavior")
    if not isinstance(behavior, Next):
        raise SpecError("top-level behavior formula must be 'next'")

    seen_ids: set[str] = set()
    seen_prompts: set[str] = set()
    for sd in states:
        if sd.id in seen_ids:
            raise SpecError(f"duplicate state id {sd.id!r}")
        seen_ids.add(sd.id)
        if sd.prompt_text in seen_prompts:
            raise SpecError(f"duplicate prompt text {sd.prompt_text!r}")
        seen_prompts.add(sd.prompt_text)
    validate_formula(behavior, seen_ids)

    order = [sd.id for sd in states]
    aut = compile_behavior(behavior, state_order=order)
    first = aut.valid_next(aut.start_position())
    if len(first) != 1:
        raise SpecError(f"ambiguous initial state: satisfying sequences may begin with any of {list(first)}")
    final = frozenset(
        sym
        for row in aut.transitions
        for sym, target in row.items()
        if target in aut.accepting
    )
    return AgentSpec(
        name=name,
        states=states,
        behavior=behavior,
        initial_state=first[0],
        final_states=final,
        automaton=aut,
    )


def _formula_to_sexpr(f: BehaviorFormula):
    if isinstance(f, Atom):
        return Symbol(f.state)
    if isinstance(f, Or):
        return [Symbol("or"), *(_formula_to_sexpr(c) for c in f.children)]
    if isinstance(f, Next):
        return [Symbol("next"), *(_formula_to_sexpr(c) for c in f.children)]
    return [Symbol("until"), _formula_to_sexpr(f.body), _formula_to_sexpr(f.exit)]


def serialize_spec(spec: AgentSpec) -> str:
    """Render back to the s-expression format accepted by :func:`parse_spec`."""
    state_forms = []
    for sd in spec.states:
        form: list = [Symbol(sd.id), [Symbol(":text"), sd.prompt_text]]
        if sd.env_input:
            form.append([Symbol(":flags"), Symbol(":env-input")])
        if sd.max_tokens is not None:
            form.append([Symbol(":max-tokens"), Symbol(str(sd.max_tokens))])
        if sd.allowed_values is not None:
            form.append([Symbol(":allowed"), *sd.allowed_values])
        state_forms.append(form)
    lines = [f"(define {spec.name}", "  (:states"]
    lines.extend("    " + sexpr.dumps(f) for f in state_forms)
    lines[-1] += ")"
    lines.append("  (:behavior")
    lines.append("    " + sexpr.dumps(_formula_to_sexpr(spec.behavior)) + "))")
    return "\n".join(lines) + "\n"


def check_spec(spec: AgentSpec, tool_names: set[str] | frozenset[str] = frozenset(), corpus=None) -> list[Diagnostic]:
    """Lint a parsed spec. Returns diagnostics; never raises.

    With ``corpus`` given (any object with ``iter_sentences()``), also warns
    about corpus documents that contain a state prompt, since such text would
    fire transitions when surfaced by a tool.
    """
    out: list[Diagnostic] = []
    prompts = spec.prompts
    for a in spec.states:
        for b in spec.states:
            if a.id == b.id:
                continue
            if b.prompt_text.startswith(a.prompt_text):
                out.append(Diagnostic(
                    "warning", "prompt-prefix",
                    f"prompt {a.prompt_text!r} of state {a.id!r} is a prefix of state {b.id!r}'s prompt",
                ))
            elif a.prompt_text in b.prompt_text:
                out.append(Diagnostic(
                    "warning", "prompt-substring",
                    f"prompt {a.prompt_text!r} of state {a.id!r} occurs inside state {b.id!r}'s prompt",
                ))
    mentioned = set(atoms(spec.behavior))
    for sd in spec.states:
        if sd.id not in mentioned:
            out.append(Diagnostic("warning", "unreachable-state",
                                  f"state {sd.id!r} never appears in the behavior formula"))
        if sd.allowed_values is not None and sd.env_input:
            out.append(Diagnostic("warning", "allowed-on-env-state",
                                  f"state {sd.id!r} is environment-produced; :allowed will reject tool output"))
        if sd.allowed_values is not None and tool_names:
            unknown = [v for v in sd.allowed_values if v not in tool_names]
            if unknown:
                out.append(Diagnostic("warning", "unknown-tool",
                                      f"state {sd.id!r} allows {unknown} which are not registered tools"))
    if corpus is not None:
        for title, sentence in corpus.iter_sentences():
            hit = next((p for p in prompts.values() if p in sentence), None)
            if hit is not None:
                out.append(Diagnostic("warning", "prompt-in-corpus",
                                      f"corpus page {title!r} contains prompt string {hit!r}"))
    return out
