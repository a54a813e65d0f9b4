"""Minimal s-expression reader and writer.

Three node kinds: ``Symbol`` (bare token), ``str`` (double-quoted string,
backslash escapes), and ``list`` (parenthesized children). Comments run
from ``;`` to end of line. Quoted strings preserve every interior
character, including brackets and whitespace.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .errors import SExprError

SExpr = Union["Symbol", str, list]

_DELIMS = "()\";"


@dataclass(frozen=True)
class Symbol:
    name: str

    def __repr__(self) -> str:
        return f"Symbol({self.name!r})"


class _Reader:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.line = 1
        self.col = 1

    def error(self, message: str, line: int | None = None, col: int | None = None):
        raise SExprError(message, self.line if line is None else line, self.col if col is None else col)

    def _bump(self, ch: str):
        if ch == "\n":
            self.line += 1
            self.col = 1
        else:
            self.col += 1
        self.pos += 1

    def skip_blank(self):
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch == ";":
                while self.pos < len(self.text) and self.text[self.pos] != "\n":
                    self._bump(self.text[self.pos])
            elif ch.isspace():
                self._bump(ch)
            else:
                return

    def read(self) -> SExpr:
        self.skip_blank()
        if self.pos >= len(self.text):
            self.error("unexpected end of input")
        ch = self.text[self.pos]
        if ch == "(":
            return self._read_list()
        if ch == ")":
            self.error("unexpected ')'")
        if ch == '"':
            return self._read_string()
        return self._read_symbol()

    def _read_list(self) -> list:
        open_line, open_col = self.line, self.col
        self._bump("(")
        items: list[SExpr] = []
        while True:
            self.skip_blank()
            if self.pos >= len(self.text):
                self.error("unbalanced parentheses: '(' never closed", open_line, open_col)
            if self.text[self.pos] == ")":
                self._bump(")")
                return items
            items.append(self.read())

    def _read_string(self) -> str:
        open_line, open_col = self.line, self.col
        self._bump('"')
        out: list[str] = []
        while True:
            if self.pos >= len(self.text):
                self.error("unterminated string", open_line, open_col)
            ch = self.text[self.pos]
            if ch == '"':
                self._bump(ch)
                return "".join(out)
            if ch == "\\":
                self._bump(ch)
                if self.pos >= len(self.text):
                    self.error("unterminated string", open_line, open_col)
                esc = self.text[self.pos]
                self._bump(esc)
                out.append({"n": "\n", "t": "\t"}.get(esc, esc))
            else:
                self._bump(ch)
                out.append(ch)

    def _read_symbol(self) -> Symbol:
        start = self.pos
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch.isspace() or ch in _DELIMS:
                break
            self._bump(ch)
        return Symbol(self.text[start : self.pos])


def parse(text: str) -> SExpr:
    """Parse exactly one form; trailing non-comment text is an error."""
    reader = _Reader(text)
    expr = reader.read()
    reader.skip_blank()
    if reader.pos < len(text):
        reader.error("trailing text after form")
    return expr


def parse_all(text: str) -> list[SExpr]:
    """Parse zero or more forms."""
    reader = _Reader(text)
    forms = []
    while True:
        reader.skip_blank()
        if reader.pos >= len(text):
            return forms
        forms.append(reader.read())


def _quote(s: str) -> str:
    out = s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t")
    return f'"{out}"'


def dumps(expr: SExpr) -> str:
    """Render a form on one line. ``parse(dumps(x))`` is structurally ``x``."""
    if isinstance(expr, Symbol):
        return expr.name
    if isinstance(expr, str):
        return _quote(expr)
    return "(" + " ".join(dumps(item) for item in expr) + ")"
