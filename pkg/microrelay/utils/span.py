"""Source locations attached to parsed IR nodes."""

from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class SourceSpan:
    """A range of characters in a source file (1-based lines and columns)."""

    file: str
    start_line: int
    start_col: int
    end_line: int
    end_col: int

    def __post_init__(self) -> None:
        if (self.start_line, self.start_col) > (self.end_line, self.end_col):
            raise ValueError(f"span start after end: {self}")

    def merge(self, other: Optional["SourceSpan"]) -> "SourceSpan":
        """Get the smallest span covering both spans."""
        if other is None:
            return self
        start = min((self.start_line, self.start_col), (other.start_line, other.start_col))
        end = max((self.end_line, self.end_col), (other.end_line, other.end_col))
        return SourceSpan(self.file, start[0], start[1], end[0], end[1])

    def __str__(self) -> str:
        return f"{self.file}:{self.start_line}:{self.start_col}"
