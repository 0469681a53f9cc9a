"""Tokenizer used by both the system DSL and the formula language."""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator

from .diagnostics import SpecError, error

_TOKEN_SPEC = [
    ("WS", r"[ \t\r\f]+"),
    ("NEWLINE", r"\n"),
    ("COMMENT", r"(?://|\#)[^\n]*"),
    ("ARROW_OPEN", r"-\["),
    ("ARROW_CLOSE", r"\]->"),
    ("IMPLIES", r"->"),
    ("COOP_OPEN", r"<<"),
    ("COOP_CLOSE", r">>"),
    ("RANGE", r"\.\."),
    ("OP", r"\+=|-=|<=|>=|==|!=|&&|\|\||[<>=!&|~]"),
    ("INT", r"\d+"),
    ("IDENT", r"[A-Za-z_][A-Za-z0-9_]*"),
    ("PUNCT", r"[{}();:,.@\-]"),
]
_MASTER = re.compile("|".join(f"(?P<{name}>{pat})" for name, pat in _TOKEN_SPEC))


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int

    @property
    def pos(self) -> tuple[int, int]:
        return (self.line, self.column)


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, line_start, i = 1, 0, 0
    while i < len(text):
        m = _MASTER.match(text, i)
        if m is None:
            raise SpecError([error(f"unexpected character {text[i]!r}", (line, i - line_start + 1))])
        kind = m.lastgroup
        if kind == "NEWLINE":
            line += 1
            line_start = m.end()
        elif kind not in ("WS", "COMMENT"):
            tokens.append(Token(kind, m.group(), line, i - line_start + 1))
        i = m.end()
    tokens.append(Token("EOF", "", line, i - line_start + 1))
    return tokens


class TokenStream:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.i]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.i + offset, len(self.tokens) - 1)]

    def at(self, *texts: str) -> bool:
        tok = self.current
        return tok.kind != "EOF" and tok.text in texts

    def at_kind(self, kind: str) -> bool:
        return self.current.kind == kind

    def advance(self) -> Token:
        tok = self.current
        if tok.kind != "EOF":
            self.i += 1
        return tok

    def accept(self, *texts: str) -> Token | None:
        if self.at(*texts):
            return self.advance()
        return None

    def accept_kind(self, kind: str) -> Token | None:
        if self.current.kind == kind:
            return self.advance()
        return None

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.error(f"expected {text!r}")
        return self.advance()

    def expect_kind(self, kind: str, what: str) -> Token:
        if self.current.kind != kind:
            raise self.error(f"expected {what}")
        return self.advance()

    def error(self, message: str, tok: Token | None = None) -> SpecError:
        tok = tok or self.current
        found = "end of input" if tok.kind == "EOF" else repr(tok.text)
        return SpecError([error(f"{message}, found {found}", tok.pos)])

    def __iter__(self) -> Iterator[Token]:
        return iter(self.tokens)
