"""Exception types shared across the package."""

from __future__ import annotations


class RewriteLabError(Exception):
    """Base class for all rewrite-lab errors."""


class EmptyUtterance(RewriteLabError):
    """Raised when a query or context turn is empty after trimming."""


class ParseError(RewriteLabError):
    """A corpus line is not valid JSON (or not an object)."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no


class SchemaError(RewriteLabError):
    """A corpus line parsed but does not match the expected schema."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no


class Unalignable(RewriteLabError):
    """No edit matrix over (context, query) can reproduce the rewrite."""

    def __init__(self, segment: list[str], reason: str = "segment not found contiguously in context"):
        super().__init__(f"{reason}: {segment!r}")
        self.segment = segment


class VocabError(RewriteLabError):
    """A token id is outside the vocabulary."""


class EmptyContext(RewriteLabError):
    """Edit-matrix prediction requested for an example with no context tokens."""


class MissingGold(RewriteLabError):
    """An operation that needs the gold rewrite got an example without one."""


class DegenerateVector(RewriteLabError):
    """A zero-norm vector reached a cosine-similarity computation."""


class ShapeError(RewriteLabError):
    """Mismatched shapes/supports between paired inputs."""


class CorruptMatrix(RewriteLabError):
    """An edit matrix references context spans outside the valid range."""


class VersionError(RewriteLabError):
    """Checkpoint format version or config/vocab payload mismatch."""


class TrainingDiverged(RewriteLabError):
    """Training hit a non-finite loss; a diagnostic batch dump was written."""

    def __init__(self, message: str, dump_path: str | None = None):
        super().__init__(message)
        self.dump_path = dump_path
