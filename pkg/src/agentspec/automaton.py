"""Compile behavior formulas into deterministic automata.

Construction: a Thompson-style epsilon-NFA over state symbols, determinized
by subset construction, then trimmed so every remaining automaton state can
reach an accepting state. Trimming makes ``valid_next`` exact: a symbol is
offered only when some satisfying continuation exists.

Automaton states are dense integers, renumbered in breadth-first discovery
order from the start state, so equal formulas compile to equal automata.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import CompileError, TransitionError
from .formula import Atom, BehaviorFormula, Next, Or, Until, atoms


@dataclass(frozen=True)
class MonitorPosition:
    """Cursor into an automaton: current state plus symbols consumed."""

    current: int
    consumed: int = 0


@dataclass(frozen=True)
class Automaton:
    alphabet: tuple[str, ...]
    start: int
    accepting: frozenset[int]
    # transitions[q] maps symbol -> next state, keys in alphabet order
    transitions: tuple[dict[str, int], ...] = field(repr=False)

    @property
    def n_states(self) -> int:
        return len(self.transitions)

    def start_position(self) -> MonitorPosition:
        return MonitorPosition(self.start, 0)

    def valid_next(self, pos: MonitorPosition) -> tuple[str, ...]:
        """Symbols with a transition from ``pos``, in alphabet order."""
        return tuple(self.transitions[pos.current])

    def advance(self, pos: MonitorPosition, sym: str) -> MonitorPosition:
        target = self.transitions[pos.current].get(sym)
        if target is None:
            raise TransitionError(self.valid_next(pos), sym)
        return MonitorPosition(target, pos.consumed + 1)

    def is_accepting(self, pos: MonitorPosition) -> bool:
        return pos.current in self.accepting

    def accepts(self, seq: Iterable[str]) -> bool:
        """Fold ``advance`` over ``seq``; False when the fold gets stuck."""
        state = self.start
        for sym in seq:
            state = self.transitions[state].get(sym)
            if state is None:
                return False
        return state in self.accepting

    def to_adjacency(self) -> str:
        """Plain-text adjacency listing for debugging."""
        lines = [f"states: {self.n_states}  start: {self.start}  accepting: {sorted(self.accepting)}"]
        for q, row in enumerate(self.transitions):
            mark = " (accept)" if q in self.accepting else ""
            lines.append(f"{q}{mark}:")
            for sym, target in row.items():
                lines.append(f"  {sym} -> {target}")
        return "\n".join(lines)

    def to_dot(self, name: str = "behavior") -> str:
        """GraphViz DOT rendering."""
        lines = [f"digraph {name} {{", "  rankdir=LR;", '  hidden [shape=point, style=invis];']
        for q in range(self.n_states):
            shape = "doublecircle" if q in self.accepting else "circle"
            lines.append(f"  {q} [shape={shape}];")
        lines.append(f"  hidden -> {self.start};")
        for q, row in enumerate(self.transitions):
            for sym, target in row.items():
                lines.append(f'  {q} -> {target} [label="{sym}"];')
        lines.append("}")
        return "\n".join(lines)


class _Nfa:
    def __init__(self):
        self.eps: list[list[int]] = []
        self.edges: list[dict[str, list[int]]] = []

    def node(self) -> int:
        self.eps.append([])
        self.edges.append({})
        return len(self.eps) - 1

    def eps_edge(self, a: int, b: int):
        self.eps[a].append(b)

    def sym_edge(self, a: int, sym: str, b: int):
        self.edges[a].setdefault(sym, []).append(b)

    def build(self, f: BehaviorFormula) -> tuple[int, int]:
        """Return (entry, exit) nodes of the fragment for ``f``."""
        if isinstance(f, Atom):
            a, b = self.node(), self.node()
            self.sym_edge(a, f.state, b)
            return a, b
        if isinstance(f, Or):
            a, b = self.node(), self.node()
            for child in f.children:
                ca, cb = self.build(child)
                self.eps_edge(a, ca)
                self.eps_edge(cb, b)
            return a, b
        if isinstance(f, Next):
            frags = [self.build(child) for child in f.children]
            for (_, prev_out), (nxt_in, _) in zip(frags, frags[1:]):
                self.eps_edge(prev_out, nxt_in)
            return frags[0][0], frags[-1][1]
        # Until: loop the body through a hub, then fall through to the exit.
        hub = self.node()
        ba, bb = self.build(f.body)
        self.eps_edge(hub, ba)
        self.eps_edge(bb, hub)
        ea, eb = self.build(f.exit)
        self.eps_edge(hub, ea)
        return hub, eb

    def closure(self, nodes: Iterable[int]) -> frozenset[int]:
        seen = set(nodes)
        stack = list(seen)
        while stack:
            for nxt in self.eps[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return frozenset(seen)


def compile_behavior(formula: BehaviorFormula, state_order: Sequence[str] | None = None) -> Automaton:
    """Build the automaton whose accepted sequences satisfy ``formula``.

    ``state_order`` fixes the alphabet (and hence ``valid_next`` iteration
    order); it defaults to first occurrence within the formula. Raises
    :class:`CompileError` when the language is empty.
    """
    formula_atoms = atoms(formula)
    if state_order is None:
        alphabet = tuple(formula_atoms)
    else:
        alphabet = tuple(state_order)
        missing = [a for a in formula_atoms if a not in set(alphabet)]
        if missing:
            raise CompileError(f"state_order is missing formula atoms: {missing}")

    nfa = _Nfa()
    entry, exit_node = nfa.build(formula)

    # Subset construction.
    start_set = nfa.closure([entry])
    ids: dict[frozenset[int], int] = {start_set: 0}
    order = [start_set]
    raw_trans: list[dict[str, int]] = []
    queue = [start_set]
    while queue:
        current = queue.pop(0)
        row: dict[str, int] = {}
        for sym in alphabet:
            targets = [t for node in current for t in nfa.edges[node].get(sym, ())]
            if not targets:
                continue
            nxt = nfa.closure(targets)
            if nxt not in ids:
                ids[nxt] = len(order)
                order.append(nxt)
                queue.append(nxt)
            row[sym] = ids[nxt]
        raw_trans.append(row)
    raw_accepting = {ids[s] for s in order if exit_node in s}

    # Trim states that cannot reach acceptance.
    reverse: dict[int, set[int]] = {q: set() for q in range(len(order))}
    for q, row in enumerate(raw_trans):
        for target in row.values():
            reverse[target].add(q)
    live = set(raw_accepting)
    stack = list(live)
    while stack:
        for prev in reverse[stack.pop()]:
            if prev not in live:
                live.add(prev)
                stack.append(prev)
    if 0 not in live:
        raise CompileError("behavior formula is unsatisfiable (empty language)")

    # Renumber surviving states in BFS order from the start.
    renumber = {0: 0}
    bfs = [0]
    trans: list[dict[str, int]] = []
    while bfs:
        q = bfs.pop(0)
        row = {}
        for sym, target in raw_trans[q].items():
            if target not in live:
                continue
            if target not in renumber:
                renumber[target] = len(renumber)
                bfs.append(target)
            row[sym] = renumber[target]
        trans.append(row)
    accepting = frozenset(renumber[q] for q in raw_accepting if q in renumber)
    return Automaton(alphabet=alphabet, start=0, accepting=accepting, transitions=tuple(trans))
