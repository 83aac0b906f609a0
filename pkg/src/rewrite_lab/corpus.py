"""Dialogue data model: tokenization, vocabulary, JSONL IO, synthetic corpus.

Tokenization is character-level for CJK (and any other non-ASCII text) and
word-level for runs of ASCII alphanumerics; whitespace only separates tokens.
The joint input layout is ``[CLS] turn1 [SEP] turn2 [SEP] ... query`` with one
``[SEP]`` closing each context turn, so an empty context degenerates to
``[CLS] query``.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EmptyUtterance, ParseError, SchemaError, VocabError

PAD, CLS, SEP, UNK = "[PAD]", "[CLS]", "[SEP]", "[UNK]"
RESERVED_TOKENS = (PAD, CLS, SEP, UNK)
PAD_ID, CLS_ID, SEP_ID, UNK_ID = 0, 1, 2, 3


def _is_word_char(ch: str) -> bool:
    return ch.isascii() and ch.isalnum()


def tokenize(text: str) -> list[str]:
    """Split text into tokens: one per CJK/symbol character, one per ASCII
    alphanumeric run.

    Raises:
        EmptyUtterance: if the text is empty or whitespace-only.
    """
    if not text.strip():
        raise EmptyUtterance("empty utterance")
    tokens: list[str] = []
    run: list[str] = []
    for ch in text:
        if ch.isspace():
            if run:
                tokens.append("".join(run))
                run = []
        elif _is_word_char(ch):
            run.append(ch)
        else:
            if run:
                tokens.append("".join(run))
                run = []
            tokens.append(ch)
    if run:
        tokens.append("".join(run))
    return tokens


def detokenize(tokens: list[str]) -> str:
    """Inverse of tokenize for token lists it produced: adjacent ASCII word
    tokens are space-separated, everything else concatenates directly."""
    parts: list[str] = []
    for i, tok in enumerate(tokens):
        if i > 0 and _is_word_char(tokens[i - 1][-1]) and _is_word_char(tok[0]):
            parts.append(" ")
        parts.append(tok)
    return "".join(parts)


@dataclass(frozen=True)
class DialogueExample:
    """One unit of data: context turns, current query, optional gold rewrite."""

    context_turns: tuple[tuple[str, ...], ...]
    query: tuple[str, ...]
    rewrite: tuple[str, ...] | None = None
    line_no: int | None = None

    def __post_init__(self):
        if not self.query:
            raise EmptyUtterance("query must be non-empty")
        for turn in self.context_turns:
            if not turn:
                raise EmptyUtterance("context turns must be non-empty")
        if self.rewrite is not None and not self.rewrite:
            raise EmptyUtterance("rewrite, when present, must be non-empty")

    @classmethod
    def from_strings(
        cls,
        context: list[str],
        query: str,
        rewrite: str | None = None,
        line_no: int | None = None,
    ) -> "DialogueExample":
        return cls(
            context_turns=tuple(tuple(tokenize(t)) for t in context),
            query=tuple(tokenize(query)),
            rewrite=tuple(tokenize(rewrite)) if rewrite is not None else None,
            line_no=line_no,
        )

    @property
    def flat_context(self) -> tuple[str, ...]:
        """Context turns flattened in order (no separators)."""
        return tuple(t for turn in self.context_turns for t in turn)

    def to_record(self) -> dict:
        rec = {
            "context": [detokenize(list(t)) for t in self.context_turns],
            "query": detokenize(list(self.query)),
        }
        if self.rewrite is not None:
            rec["rewrite"] = detokenize(list(self.rewrite))
        return rec


class Vocabulary:
    """Token ↔ id map with four fixed reserved ids.

    Reserved: ``[PAD]``=0, ``[CLS]``=1, ``[SEP]``=2, ``[UNK]``=3. Lookup of an
    unknown token yields the ``[UNK]`` id; inference never crashes on novel
    tokens.
    """

    def __init__(self, tokens: list[str] | None = None):
        self._id_to_token: list[str] = list(RESERVED_TOKENS)
        self._token_to_id: dict[str, int] = {t: i for i, t in enumerate(RESERVED_TOKENS)}
        for tok in tokens or []:
            self.add(tok)

    def add(self, token: str) -> int:
        if token in self._token_to_id:
            return self._token_to_id[token]
        idx = len(self._id_to_token)
        self._id_to_token.append(token)
        self._token_to_id[token] = idx
        return idx

    def id_of(self, token: str) -> int:
        return self._token_to_id.get(token, UNK_ID)

    def token_of(self, idx: int) -> str:
        if not 0 <= idx < len(self._id_to_token):
            raise VocabError(f"id {idx} outside vocabulary of size {len(self)}")
        return self._id_to_token[idx]

    def __len__(self) -> int:
        return len(self._id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    @property
    def tokens(self) -> list[str]:
        """Non-reserved tokens in id order."""
        return self._id_to_token[len(RESERVED_TOKENS):]

    @classmethod
    def build(cls, examples: list[DialogueExample]) -> "Vocabulary":
        """Collect tokens in first-seen order over context, query, rewrite."""
        vocab = cls()
        for ex in examples:
            for turn in ex.context_turns:
                for tok in turn:
                    vocab.add(tok)
            for tok in ex.query:
                vocab.add(tok)
            for tok in ex.rewrite or ():
                vocab.add(tok)
        return vocab

    def save(self, path: str | Path) -> None:
        # One token per line; line number = id - len(RESERVED_TOKENS).
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        text = Path(path).read_text(encoding="utf-8")
        return cls([line for line in text.split("\n") if line != ""])


@dataclass(frozen=True)
class JointInput:
    """``[CLS]``-prefixed concatenation of context turns and query with
    per-position role masks. Special tokens belong to neither mask, so the
    edit matrix is strictly M x N over real tokens."""

    token_ids: tuple[int, ...]
    surfaces: tuple[str, ...]
    context_mask: tuple[bool, ...]
    query_mask: tuple[bool, ...]
    cls_index: int = 0

    @property
    def m(self) -> int:
        return sum(self.context_mask)

    @property
    def n(self) -> int:
        return sum(self.query_mask)

    @property
    def context_positions(self) -> list[int]:
        return [i for i, b in enumerate(self.context_mask) if b]

    @property
    def query_positions(self) -> list[int]:
        return [i for i, b in enumerate(self.query_mask) if b]


def build_joint_input(example: DialogueExample, vocab: Vocabulary) -> JointInput:
    """Lay out ``[CLS] + (turn + [SEP]) * k + query`` and record role masks."""
    if not example.query:
        raise EmptyUtterance("query must be non-empty")
    surfaces: list[str] = [CLS]
    context_mask: list[bool] = [False]
    query_mask: list[bool] = [False]
    for turn in example.context_turns:
        for tok in turn:
            surfaces.append(tok)
            context_mask.append(True)
            query_mask.append(False)
        surfaces.append(SEP)
        context_mask.append(False)
        query_mask.append(False)
    for tok in example.query:
        surfaces.append(tok)
        context_mask.append(False)
        query_mask.append(True)
    ids = tuple(vocab.id_of(t) for t in surfaces)
    return JointInput(
        token_ids=ids,
        surfaces=tuple(surfaces),
        context_mask=tuple(context_mask),
        query_mask=tuple(query_mask),
    )


def load_jsonl(path: str | Path) -> list[DialogueExample]:
    """Read one example per line; blank lines are skipped.

    Raises:
        ParseError: line is not a JSON object (carries the 1-based line number).
        SchemaError: missing/invalid ``query``, ``context``, or ``rewrite``.
    """
    examples: list[DialogueExample] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise ParseError(line_no, "line is not a JSON object")
            if "query" not in obj:
                raise SchemaError(line_no, 'missing "query"')
            if not isinstance(obj["query"], str):
                raise SchemaError(line_no, '"query" must be a string')
            context = obj.get("context", [])
            if not isinstance(context, list) or not all(isinstance(t, str) for t in context):
                raise SchemaError(line_no, '"context" must be a list of strings')
            rewrite = obj.get("rewrite")
            if rewrite is not None and not isinstance(rewrite, str):
                raise SchemaError(line_no, '"rewrite" must be a string when present')
            try:
                examples.append(
                    DialogueExample.from_strings(context, obj["query"], rewrite, line_no=line_no)
                )
            except EmptyUtterance as exc:
                raise SchemaError(line_no, str(exc)) from exc
    return examples


def save_jsonl(examples: list[DialogueExample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_record(), ensure_ascii=False) + "\n")


def is_inference_corpus(examples: list[DialogueExample]) -> bool:
    """True iff no example carries a rewrite (inference-mode corpus)."""
    return all(ex.rewrite is None for ex in examples)


# --- synthetic corpus -------------------------------------------------------
#
# Two template families mirroring the coreference / omission phenomena. Frame
# characters are disjoint from entity characters so the rewrite segment always
# locates uniquely-shaped (contiguous) in the flattened context and label
# derivation never fails.

_ENTITIES = ["周杰伦", "刘德华", "上海", "北京", "长城", "故宫", "熊猫", "火锅", "西湖", "黄山"]

# (context turn templates, query template, rewrite template)
_COREF_FRAMES = [
    (["你喜欢{e}吗", "我喜欢{e}"], "你最喜欢他什么", "你最喜欢{e}什么"),
    (["{e}好看吗", "我觉得{e}好看"], "你为什么觉得它好看", "你为什么觉得{e}好看"),
    (["你认识{e}吗", "我认识{e}"], "他是谁", "{e}是谁"),
    (["你去过{e}吗"], "那里好玩吗", "{e}好玩吗"),
]
_OMISSION_FRAMES = [
    (["{e}今天下雨吗", "{e}今天下雨"], "为什么总是下雨", "为什么{e}总是下雨"),
    (["我想去{e}"], "什么时候去", "什么时候去{e}"),
    (["我买了{e}"], "好吃吗", "{e}好吃吗"),
]
_DISTRACTOR_TURNS = ["嗯嗯", "哈哈", "好的呀", "噢"]


def generate_synthetic(n: int, seed: int) -> list[DialogueExample]:
    """Deterministically generate n coreference/omission examples.

    Every rewrite token occurs in the context or the query, so the full
    supervision pipeline succeeds on each example.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = random.Random(seed)
    examples: list[DialogueExample] = []
    for _ in range(n):
        frames = _COREF_FRAMES if rng.random() < 0.5 else _OMISSION_FRAMES
        ctx_templates, q_template, r_template = rng.choice(frames)
        entity = rng.choice(_ENTITIES)
        turns = [t.format(e=entity) for t in ctx_templates]
        if rng.random() < 0.3:
            turns.insert(rng.randrange(len(turns) + 1), rng.choice(_DISTRACTOR_TURNS))
        examples.append(
            DialogueExample.from_strings(
                turns, q_template.format(e=entity), r_template.format(e=entity)
            )
        )
    return examples
