"""Derive edit-matrix and keyword-label supervision from dialogue triples.

No extra annotation is needed: the gold rewrite is aligned against the query
by LCS, unmatched rewrite segments are located in the flattened context, and
the located spans become Replace/Insert cells of an M x N grid (M context
tokens, N query tokens). Keyword labels mark the rows/columns those cells
touch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

from .corpus import DialogueExample
from .errors import MissingGold, Unalignable


class EditOp(IntEnum):
    NONE = 0
    REPLACE = 1
    INSERT = 2


@dataclass(frozen=True)
class EditMatrix:
    """M x N grid of edit operations over (context token, query token) pairs.

    ``insert_after_final`` distinguishes the one layout the grid cannot carry
    directly: a segment appended after the last query token is encoded as an
    Insert run in column N-1 with this flag set, keeping the grid strictly
    M x N. Decode resolves the flag.
    """

    ops: tuple[tuple[EditOp, ...], ...]
    insert_after_final: bool = False

    @property
    def m(self) -> int:
        return len(self.ops)

    @property
    def n(self) -> int:
        return len(self.ops[0]) if self.ops else 0

    def column(self, j: int) -> list[EditOp]:
        return [row[j] for row in self.ops]

    def is_identity(self) -> bool:
        return all(op is EditOp.NONE for row in self.ops for op in row)


@dataclass(frozen=True)
class KeywordLabels:
    """Binary keyword labels over the M+N real tokens, context first."""

    labels: tuple[int, ...]


def lcs_align(a: list[str], b: list[str]) -> list[tuple[int, int]]:
    """Longest common subsequence as matched (a-index, b-index) pairs.

    Strictly increasing in both coordinates; ties between equally long
    alignments are broken toward the earliest a-indices (leftmost alignment).
    """
    la, lb = len(a), len(b)
    # suffix[i][j] = LCS length of a[i:] vs b[j:]
    suffix = [[0] * (lb + 1) for _ in range(la + 1)]
    for i in range(la - 1, -1, -1):
        row, below = suffix[i], suffix[i + 1]
        for j in range(lb - 1, -1, -1):
            if a[i] == b[j]:
                row[j] = below[j + 1] + 1
            else:
                row[j] = below[j] if below[j] >= row[j + 1] else row[j + 1]
    pairs: list[tuple[int, int]] = []
    i = j = 0
    while i < la and j < lb:
        if a[i] == b[j] and suffix[i][j] == suffix[i + 1][j + 1] + 1:
            pairs.append((i, j))
            i += 1
            j += 1
        elif suffix[i + 1][j] > suffix[i][j + 1]:
            i += 1
        else:
            # On ties advance j: keeps a[i] available, preferring earlier a-indices.
            j += 1
    return pairs


def _find_subspan(haystack: tuple[str, ...], needle: list[str]) -> tuple[int, int] | None:
    """Leftmost contiguous occurrence of needle, as (start, end-exclusive)."""
    k = len(needle)
    for start in range(len(haystack) - k + 1):
        if list(haystack[start:start + k]) == needle:
            return start, start + k
    return None


def derive_edit_matrix(example: DialogueExample) -> EditMatrix:
    """Build the gold edit matrix whose application to the query reproduces
    the rewrite exactly.

    Raises:
        MissingGold: the example has no rewrite.
        Unalignable: a rewrite segment has no contiguous match in the context,
            a query segment is deleted outright, or the edits cannot be
            expressed within the one-run-per-column grid.
    """
    if example.rewrite is None:
        raise MissingGold("derive_edit_matrix needs a gold rewrite")
    query = list(example.query)
    rewrite = list(example.rewrite)
    context = example.flat_context
    m, n = len(context), len(query)
    ops = [[EditOp.NONE] * n for _ in range(m)]
    insert_after_final = False
    anchored_insert_columns: set[int] = set()

    pairs = lcs_align(query, rewrite)
    prev_q, prev_r = -1, -1
    for q_idx, r_idx in pairs + [(n, len(rewrite))]:
        q_gap = query[prev_q + 1:q_idx]
        r_seg = rewrite[prev_r + 1:r_idx]
        if r_seg:
            span = _find_subspan(context, r_seg)
            if span is None:
                raise Unalignable(r_seg)
            if q_gap:
                op = EditOp.REPLACE
                cols = range(prev_q + 1, q_idx)
            else:
                op = EditOp.INSERT
                anchor = q_idx if q_idx < n else n - 1
                if anchor in anchored_insert_columns:
                    raise Unalignable(r_seg, "two insert segments anchor the same query column")
                anchored_insert_columns.add(anchor)
                if q_idx >= n:
                    insert_after_final = True
                cols = range(anchor, anchor + 1)
            for i in range(span[0], span[1]):
                for j in cols:
                    if ops[i][j] is not EditOp.NONE:
                        raise Unalignable(r_seg, "conflicting edit operations at one cell")
                    ops[i][j] = op
        elif q_gap:
            # Query tokens vanish with no replacement; the 3-op grid has no Delete.
            raise Unalignable(q_gap, "query segment deleted in rewrite")
        prev_q, prev_r = q_idx, r_idx

    return EditMatrix(
        ops=tuple(tuple(row) for row in ops),
        insert_after_final=insert_after_final,
    )


def derive_keyword_labels(matrix: EditMatrix) -> KeywordLabels:
    """Context token i is a keyword iff row i has any edit; query token j iff
    column j has any edit."""
    context_labels = [int(any(op is not EditOp.NONE for op in row)) for row in matrix.ops]
    query_labels = [
        int(any(row[j] is not EditOp.NONE for row in matrix.ops))
        for j in range(matrix.n)
    ]
    return KeywordLabels(labels=tuple(context_labels + query_labels))


_CELL_CHARS = {EditOp.NONE: ".", EditOp.REPLACE: "R", EditOp.INSERT: "I"}


def render_matrix(
    matrix: EditMatrix,
    context_tokens: list[str],
    query_tokens: list[str],
) -> str:
    """Debug dump: rows = context tokens, columns = query tokens, cells {., R, I}."""
    width = max((len(t) for t in context_tokens), default=1)
    lines = [" " * (width + 1) + " ".join(query_tokens)]
    for tok, row in zip(context_tokens, matrix.ops):
        cells = " ".join(_CELL_CHARS[op] for op in row)
        lines.append(f"{tok:<{width}} {cells}")
    if matrix.insert_after_final:
        lines.append("(final-column inserts apply after the last query token)")
    return "\n".join(lines)
