"""Located diagnostics shared by the specification and formula front ends."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    message: str
    line: int = 1
    column: int = 1

    @property
    def is_error(self) -> bool:
        return self.severity == "error"

    def format(self, filename: str = "<input>") -> str:
        return f"{filename}:{self.line}:{self.column}: {self.severity}: {self.message}"

    def __str__(self) -> str:
        return self.format()


def error(message: str, pos: tuple[int, int] | None = None) -> Diagnostic:
    line, col = pos or (1, 1)
    return Diagnostic("error", message, line, col)


def warning(message: str, pos: tuple[int, int] | None = None) -> Diagnostic:
    line, col = pos or (1, 1)
    return Diagnostic("warning", message, line, col)


class SpecError(Exception):
    """Raised when parsing or validation produces at least one error diagnostic."""

    def __init__(self, diagnostics: Iterable[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics if d.is_error))

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.is_error]

    def messages(self) -> list[str]:
        return [d.message for d in self.diagnostics]
