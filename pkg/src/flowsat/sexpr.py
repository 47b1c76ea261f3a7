"""Tiny s-expression reader shared by the term, program, pattern, and trace parsers.

Forms are atoms or parenthesized lists; `;` starts a comment running to end
of line. Atoms and lists carry 1-based line/column for error reporting.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union


class ParseError(Exception):
    """Syntax or structural error, with source position."""

    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {msg}")
        self.msg = msg
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Atom:
    text: str
    line: int
    col: int


@dataclass(frozen=True)
class SList:
    items: tuple["SExpr", ...]
    line: int
    col: int


SExpr = Union[Atom, SList]


def _tokenize(text: str):
    line, col = 1, 0
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        col += 1
        if c == "\n":
            line += 1
            col = 0
            i += 1
            continue
        if c in " \t\r":
            i += 1
            continue
        if c == ";":
            while i < n and text[i] != "\n":
                i += 1
            col = 0
            continue
        if c in "()":
            yield (c, None, line, col)
            i += 1
            continue
        start = i
        start_col = col
        while i < n and text[i] not in " \t\r\n();":
            i += 1
        col += i - start - 1
        yield ("atom", text[start:i], line, start_col)


def read_forms(text: str) -> list[SExpr]:
    """Read all top-level forms in `text`."""
    stack: list[tuple[list[SExpr], int, int]] = []
    top: list[SExpr] = []
    for kind, val, line, col in _tokenize(text):
        if kind == "(":
            stack.append(([], line, col))
        elif kind == ")":
            if not stack:
                raise ParseError("unmatched ')'", line, col)
            items, oline, ocol = stack.pop()
            form = SList(tuple(items), oline, ocol)
            (stack[-1][0] if stack else top).append(form)
        else:
            form = Atom(val, line, col)
            (stack[-1][0] if stack else top).append(form)
    if stack:
        _, oline, ocol = stack[-1]
        raise ParseError("unclosed '('", oline, ocol)
    return top


def read_form(text: str) -> SExpr:
    """Read exactly one form; anything more or less is an error."""
    forms = read_forms(text)
    if not forms:
        raise ParseError("empty input", 1, 1)
    if len(forms) > 1:
        extra = forms[1]
        raise ParseError("trailing content after form", extra.line, extra.col)
    return forms[0]
