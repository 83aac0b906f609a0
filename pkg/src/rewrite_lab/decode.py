"""Turn an edit matrix (gold or predicted) back into a rewritten utterance."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import CorruptMatrix
from .supervision import EditMatrix, EditOp

Span = tuple[int, int]  # context index range, end-exclusive


@dataclass(frozen=True)
class EditPlan:
    """Per-query-column spans extracted from a matrix.

    ``replacements[j]``/``insertions[j]`` hold the chosen context span for
    column j or None; ``insert_after_final`` holds the span appended after the
    last query token (populated from column N-1 when the matrix flag is set).
    """

    replacements: tuple[Span | None, ...]
    insertions: tuple[Span | None, ...]
    insert_after_final: Span | None = None


def _longest_run(column: list[EditOp], op: EditOp) -> Span | None:
    """Longest contiguous run of op in the column; leftmost on ties."""
    best: Span | None = None
    start = None
    for i, cell in enumerate(column + [EditOp.NONE]):
        if cell is op:
            if start is None:
                start = i
        elif start is not None:
            if best is None or (i - start) > (best[1] - best[0]):
                best = (start, i)
            start = None
    return best


def extract_plan(matrix: EditMatrix) -> EditPlan:
    """Pick one replacement run and one insertion run per column.

    Predicted matrices can violate the gold contiguity invariant; stray cells
    outside the longest run are ignored.
    """
    replacements: list[Span | None] = []
    insertions: list[Span | None] = []
    after: Span | None = None
    for j in range(matrix.n):
        col = matrix.column(j)
        replacements.append(_longest_run(col, EditOp.REPLACE))
        ins = _longest_run(col, EditOp.INSERT)
        if ins is not None and matrix.insert_after_final and j == matrix.n - 1:
            after = ins
            ins = None
        insertions.append(ins)
    return EditPlan(
        replacements=tuple(replacements),
        insertions=tuple(insertions),
        insert_after_final=after,
    )


def apply_edit_matrix(
    query: list[str],
    context: list[str],
    matrix: EditMatrix,
) -> list[str]:
    """Apply the matrix left-to-right: per column emit the insertion span (if
    any), then the replacement span or the original token. Adjacent columns
    sharing one replacement span are a single replaced region and emit the
    span once. Final-column after-flag insertions come last.

    Raises:
        CorruptMatrix: dimensions disagree with (context, query) or a span
            index falls outside the context.
    """
    if matrix.m != len(context) or matrix.n != len(query):
        raise CorruptMatrix(
            f"matrix is {matrix.m}x{matrix.n}, inputs are {len(context)}x{len(query)}"
        )

    def span_tokens(span: Span) -> list[str]:
        if not (0 <= span[0] < span[1] <= len(context)):
            raise CorruptMatrix(f"span {span} outside context of length {len(context)}")
        return list(context[span[0]:span[1]])

    plan = extract_plan(matrix)
    out: list[str] = []
    j = 0
    while j < matrix.n:
        if plan.insertions[j] is not None:
            out.extend(span_tokens(plan.insertions[j]))
        rep = plan.replacements[j]
        if rep is not None:
            out.extend(span_tokens(rep))
            j += 1
            while j < matrix.n and plan.replacements[j] == rep:
                j += 1
        else:
            out.append(query[j])
            j += 1
    if plan.insert_after_final is not None:
        out.extend(span_tokens(plan.insert_after_final))
    return out
