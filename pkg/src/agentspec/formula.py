"""Behavior formulas and their finite-trace semantics.

A formula is built from state atoms and three operators:

* ``Atom(s)`` holds on exactly the one-symbol sequence ``<s>``.
* ``Or(f1, .., fk)`` holds when any child holds on the whole sequence.
* ``Next(f1, .., fk)`` holds when the sequence splits into k consecutive
  non-empty segments, the i-th satisfying ``fi``.
* ``Until(body, exit)`` holds when the sequence is zero or more consecutive
  segments each satisfying ``body``, followed by one satisfying ``exit``.

Every formula's language contains only non-empty sequences, which makes the
``Next`` split points implicitly strict.

``satisfies`` is the direct recursive evaluator of these rules and
``enumerate_language`` a bounded enumerator; both are independent of the
automaton construction in :mod:`agentspec.automaton` and serve as oracles
for it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Union

from .errors import SpecError

BehaviorFormula = Union["Atom", "Or", "Next", "Until"]


@dataclass(frozen=True)
class Atom:
    state: str


@dataclass(frozen=True)
class Or:
    children: tuple[BehaviorFormula, ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise SpecError("'or' needs at least two arguments")


@dataclass(frozen=True)
class Next:
    children: tuple[BehaviorFormula, ...]

    def __post_init__(self):
        if len(self.children) < 1:
            raise SpecError("'next' needs at least one argument")


@dataclass(frozen=True)
class Until:
    body: BehaviorFormula
    exit: BehaviorFormula


def atoms(formula: BehaviorFormula) -> list[str]:
    """State ids referenced by ``formula``, first occurrence first."""
    seen: dict[str, None] = {}

    def walk(f: BehaviorFormula):
        if isinstance(f, Atom):
            seen.setdefault(f.state, None)
        elif isinstance(f, (Or, Next)):
            for child in f.children:
                walk(child)
        else:
            walk(f.body)
            walk(f.exit)

    walk(formula)
    return list(seen)


def validate_formula(formula: BehaviorFormula, declared: Iterable[str]) -> None:
    """Raise :class:`SpecError` when an atom names an undeclared state."""
    known = set(declared)
    for state in atoms(formula):
        if state not in known:
            raise SpecError(f"behavior references undeclared state {state!r}")


def satisfies(formula: BehaviorFormula, seq: Iterable[str]) -> bool:
    """Evaluate the satisfaction relation directly on ``seq``.

    Works by computing, for each subformula and start index, the set of end
    indices it can consume to; memoized per call.
    """
    symbols = tuple(seq)
    n = len(symbols)
    memo: dict[tuple[int, int], frozenset[int]] = {}

    def ends(f: BehaviorFormula, i: int) -> frozenset[int]:
        key = (id(f), i)
        hit = memo.get(key)
        if hit is not None:
            return hit
        if isinstance(f, Atom):
            out = frozenset((i + 1,)) if i < n and symbols[i] == f.state else frozenset()
        elif isinstance(f, Or):
            out = frozenset().union(*(ends(child, i) for child in f.children))
        elif isinstance(f, Next):
            cur = {i}
            for child in f.children:
                cur = {e for p in cur for e in ends(child, p)}
                if not cur:
                    break
            out = frozenset(cur)
        else:
            starts = {i}
            frontier = [i]
            while frontier:
                p = frontier.pop()
                for e in ends(f.body, p):
                    if e not in starts:
                        starts.add(e)
                        frontier.append(e)
            out = frozenset().union(*(ends(f.exit, s) for s in starts)) if starts else frozenset()
        memo[key] = out
        return out

    return n in ends(formula, 0)


def enumerate_language(formula: BehaviorFormula, max_len: int) -> set[tuple[str, ...]]:
    """All satisfying sequences of length at most ``max_len``.

    Brute-force by construction from the semantic rules; sizes stay small
    because agent behaviors are heavily constrained.
    """

    def lang(f: BehaviorFormula, budget: int) -> set[tuple[str, ...]]:
        if budget <= 0:
            return set()
        if isinstance(f, Atom):
            return {(f.state,)}
        if isinstance(f, Or):
            out: set[tuple[str, ...]] = set()
            for child in f.children:
                out |= lang(child, budget)
            return out
        if isinstance(f, Next):
            partial: set[tuple[str, ...]] = {()}
            for child in f.children:
                nxt: set[tuple[str, ...]] = set()
                for prefix in partial:
                    room = budget - len(prefix)
                    for piece in lang(child, room):
                        nxt.add(prefix + piece)
                partial = nxt
                if not partial:
                    break
            return partial
        # Until: grow body repetitions to a fixpoint, then append the exit.
        reps: set[tuple[str, ...]] = {()}
        frontier: set[tuple[str, ...]] = {()}
        while frontier:
            grown: set[tuple[str, ...]] = set()
            for prefix in frontier:
                for piece in lang(f.body, budget - len(prefix)):
                    cand = prefix + piece
                    if len(cand) < budget and cand not in reps:
                        grown.add(cand)
            reps |= grown
            frontier = grown
        out = set()
        for prefix in reps:
            for piece in lang(f.exit, budget - len(prefix)):
                out.add(prefix + piece)
        return out

    return {s for s in lang(formula, max_len) if len(s) <= max_len}
