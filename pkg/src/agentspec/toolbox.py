"""Desk-scale tools: Calculator, Search, and Lookup.

Search and Lookup run against a local corpus loaded from a line-delimited
JSON file of ``{"title": ..., "sentences": [...]}`` records; there is no
network retrieval. Tool failures are returned as readable strings, never
raised: agents must be able to observe and react to their own bad calls.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable

_OPS = "+-*/^"
_ASCII = {"×": "*", "÷": "/", "−": "-"}


class _CalcError(Exception):
    pass


class _CalcParser:
    """Recursive descent over + - * / ^ with parentheses and unary minus.

    Values are exact rationals; ``^`` requires an integer exponent and binds
    tighter than unary minus, so ``-3^2`` is ``-9``.
    """

    def __init__(self, expr: str):
        for uni, rep in _ASCII.items():
            expr = expr.replace(uni, rep)
        self.expr = expr
        self.pos = 0

    def error(self, message: str):
        raise _CalcError(f"{message} (at position {self.pos})")

    def skip(self):
        while self.pos < len(self.expr) and self.expr[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip()
        return self.expr[self.pos] if self.pos < len(self.expr) else ""

    def parse(self) -> Fraction:
        value = self.expr_sum()
        self.skip()
        if self.pos < len(self.expr):
            self.error(f"unexpected character {self.expr[self.pos]!r}")
        return value

    def expr_sum(self) -> Fraction:
        value = self.term()
        while self.peek() in ("+", "-"):
            op = self.expr[self.pos]
            self.pos += 1
            rhs = self.term()
            value = value + rhs if op == "+" else value - rhs
        return value

    def term(self) -> Fraction:
        value = self.unary()
        while self.peek() in ("*", "/"):
            op = self.expr[self.pos]
            self.pos += 1
            rhs = self.unary()
            if op == "*":
                value = value * rhs
            else:
                if rhs == 0:
                    raise _CalcError("division by zero")
                value = value / rhs
        return value

    def unary(self) -> Fraction:
        if self.peek() == "-":
            self.pos += 1
            return -self.unary()
        return self.power()

    def power(self) -> Fraction:
        base = self.atom()
        if self.peek() == "^":
            self.pos += 1
            # right-associative; exponent may itself be negated
            exp = self.unary()
            if exp.denominator != 1:
                raise _CalcError("exponent must be an integer")
            if base == 0 and exp < 0:
                raise _CalcError("division by zero")
            return base ** int(exp)
        return base

    def atom(self) -> Fraction:
        ch = self.peek()
        if ch == "(":
            self.pos += 1
            value = self.expr_sum()
            if self.peek() != ")":
                self.error("expected ')'")
            self.pos += 1
            return value
        start = self.pos
        while self.pos < len(self.expr) and (self.expr[self.pos].isdigit() or self.expr[self.pos] == "."):
            self.pos += 1
        if start == self.pos:
            self.error(f"expected a number, got {ch!r}" if ch else "unexpected end of expression")
        token = self.expr[start : self.pos]
        try:
            return Fraction(token)
        except ValueError:
            self.pos = start
            self.error(f"invalid number {token!r}")
            raise AssertionError  # unreachable


def _format_fraction(value: Fraction, digits: int = 10) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    sign = "-" if value < 0 else ""
    value = abs(value)
    whole, rem = divmod(value.numerator, value.denominator)
    frac = rem * 10**digits // value.denominator
    text = str(frac).rjust(digits, "0").rstrip("0")
    if not text:
        return f"{sign}{whole}"
    return f"{sign}{whole}.{text}"


def calculator_eval(expr: str) -> str:
    """Evaluate an arithmetic expression; errors come back as strings."""
    try:
        return _format_fraction(_CalcParser(expr).parse())
    except _CalcError as err:
        return f"Calculator error: {err}"


@dataclass
class Corpus:
    """Immutable after load: title -> ordered sentences."""

    pages: dict[str, tuple[str, tuple[str, ...]]] = field(default_factory=dict)
    # keyed by lowercase title; values are (display title, sentences)

    @classmethod
    def from_records(cls, records: list[dict]) -> "Corpus":
        pages: dict[str, tuple[str, tuple[str, ...]]] = {}
        for rec in records:
            title = rec["title"]
            sentences = tuple(s for s in rec["sentences"] if s)
            if not sentences:
                raise ValueError(f"page {title!r} has no sentences")
            key = title.lower()
            if key in pages:
                raise ValueError(f"duplicate title {title!r}")
            pages[key] = (title, sentences)
        return cls(pages)

    @classmethod
    def load(cls, path: str | Path) -> "Corpus":
        records = []
        for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as err:
                raise ValueError(f"{path}:{n}: bad corpus record: {err}") from err
        return cls.from_records(records)

    def titles(self) -> list[str]:
        return [title for title, _ in self.pages.values()]

    def get(self, title: str) -> tuple[str, tuple[str, ...]] | None:
        return self.pages.get(title.lower())

    def iter_sentences(self):
        for title, sentences in self.pages.values():
            for sentence in sentences:
                yield title, sentence


@dataclass
class PageCursor:
    """Per-session tool state: last page searched and lookup progress."""

    last_title: str | None = None
    indices: dict[str, int] = field(default_factory=dict)

    def copy(self) -> "PageCursor":
        return PageCursor(self.last_title, dict(self.indices))

    def assign(self, other: "PageCursor"):
        self.last_title = other.last_title
        self.indices = dict(other.indices)


def _edit_distance(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def similar_titles(corpus: Corpus, query: str, n: int = 5) -> list[str]:
    """Most similar page titles by normalized edit distance; ties sort
    lexicographically so the ranking is total and stable."""
    q = query.lower()
    scored = []
    for key, (title, _) in corpus.pages.items():
        dist = _edit_distance(q, key) / max(1, max(len(q), len(key)))
        scored.append((dist, key, title))
    scored.sort()
    return [title for _, _, title in scored[:n]]


def search(corpus: Corpus, cursor: PageCursor, query: str, first_sentences: int = 5) -> str:
    """Return the page lead for an exact (case-insensitive) title match, or
    list the most similar titles. The cursor moves only on a hit."""
    query = query.strip()
    hit = corpus.get(query)
    if hit is None:
        similar = ", ".join(similar_titles(corpus, query))
        return f"Could not find {query}. Similar: {similar}."
    title, sentences = hit
    cursor.last_title = title
    cursor.indices = {}
    return " ".join(sentences[:first_sentences])


def lookup(corpus: Corpus, cursor: PageCursor, term: str) -> str:
    """Next sentence containing ``term`` on the last page searched."""
    term = term.strip()
    if cursor.last_title is None:
        return "No page has been searched."
    page = corpus.get(cursor.last_title)
    if page is None:
        return "No page has been searched."
    _, sentences = page
    matches = [s for s in sentences if term.lower() in s.lower()]
    if not matches:
        return f"No sentence contains {term!r}."
    at = cursor.indices.get(term.lower(), 0)
    if at >= len(matches):
        return "No more results."
    cursor.indices[term.lower()] = at + 1
    return f"(Result {at + 1} / {len(matches)}) {matches[at]}"


@dataclass(frozen=True)
class ToolDescriptor:
    name: str
    invoke: Callable[[str, PageCursor], str]


def build_registry(corpus: Corpus | None = None, first_sentences: int = 5) -> dict[str, ToolDescriptor]:
    """Default registry. Search/Lookup appear only when a corpus is loaded."""
    tools = {"Calculator": ToolDescriptor("Calculator", lambda text, cursor: calculator_eval(text))}
    if corpus is not None:
        tools["Search"] = ToolDescriptor(
            "Search", lambda text, cursor: search(corpus, cursor, text, first_sentences)
        )
        tools["Lookup"] = ToolDescriptor("Lookup", lambda text, cursor: lookup(corpus, cursor, text))
    return tools


def run_tool(registry: dict[str, ToolDescriptor], name: str, text: str, cursor: PageCursor) -> str:
    """Dispatch one tool call; unknown names and crashes become strings."""
    tool = registry.get(name.strip())
    if tool is None:
        known = ", ".join(sorted(registry))
        return f"Unknown tool {name.strip()!r}. Available tools: {known}."
    try:
        return tool.invoke(text, cursor)
    except Exception as exc:  # tool bugs surface to the agent as text
        return f"Tool {tool.name} failed: {exc}"
