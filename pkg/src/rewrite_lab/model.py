"""Lightweight trainable encoder plus the three task heads.

One shared encoder (embedding + positional table + pre-norm self-attention
blocks) produces hidden states for the joint context-query input, for
``[CLS]+rewrite`` positives, and for corrupted-query negatives. Heads:

* edit-matrix head — bilinear-plus-linear scoring of every (context state,
  query state) pair into 3 logits,
* detection head — one linear layer to 2 logits per real token,
* intent — the [CLS] hidden state.

Dropout is driven by an explicit ``torch.Generator`` so that two passes over
the same input draw two independent mask realizations (the dropout twins) and
so that a forward pass can be replayed exactly by reseeding.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Sequence

import torch
from torch import nn

from .corpus import JointInput
from .errors import EmptyContext, VersionError, VocabError

CHECKPOINT_FORMAT_VERSION = 1
_INIT_SCALE = 0.08
_ATTN_DIM = 64


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    embed_dim: int = 200
    hidden_dim: int = 200
    dropout_rate: float = 0.1
    encoder_layers: int = 2
    seed: int = 0
    max_len: int = 128

    def __post_init__(self):
        if min(self.vocab_size, self.embed_dim, self.hidden_dim, self.encoder_layers, self.max_len) < 1:
            raise ValueError("all dimensions must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")


@dataclass(frozen=True)
class EncoderOutput:
    """Hidden states for one sequence plus the [CLS] intent vector."""

    hidden: torch.Tensor  # (T, H)
    cls: torch.Tensor  # (H,)
    dropout_mode: str  # "active" | "inactive"
    rng_draw_id: int | None  # identifies the dropout mask realization


def _dropout(x: torch.Tensor, p: float, gen: torch.Generator | None) -> torch.Tensor:
    if gen is None or p <= 0.0:
        return x
    keep = torch.rand(x.shape, generator=gen, device=x.device) >= p
    return x * keep.to(x.dtype) / (1.0 - p)


class _EncoderBlock(nn.Module):
    """Pre-norm single-head self-attention + position-wise feed-forward."""

    def __init__(self, hidden_dim: int, dropout_rate: float):
        super().__init__()
        self.ln1 = nn.LayerNorm(hidden_dim, elementwise_affine=False)
        self.ln2 = nn.LayerNorm(hidden_dim, elementwise_affine=False)
        self.q_proj = nn.Linear(hidden_dim, _ATTN_DIM)
        self.k_proj = nn.Linear(hidden_dim, _ATTN_DIM)
        self.v_proj = nn.Linear(hidden_dim, hidden_dim)
        self.out_proj = nn.Linear(hidden_dim, hidden_dim)
        self.ff1 = nn.Linear(hidden_dim, hidden_dim)
        self.ff2 = nn.Linear(hidden_dim, hidden_dim)
        self.p = dropout_rate

    def forward(
        self,
        x: torch.Tensor,
        attn_bias: torch.Tensor,
        gen: torch.Generator | None,
    ) -> torch.Tensor:
        h = self.ln1(x)
        q, k = self.q_proj(h), self.k_proj(h)
        scores = q @ k.transpose(-2, -1) / math.sqrt(_ATTN_DIM)
        attn = torch.softmax(scores + attn_bias, dim=-1)
        ctx = self.out_proj(attn @ self.v_proj(h))
        x = x + _dropout(ctx, self.p, gen)
        h = self.ln2(x)
        x = x + _dropout(self.ff2(torch.relu(self.ff1(h))), self.p, gen)
        return x


class RewriteModel(nn.Module):
    """Shared encoder and heads; parameters are deterministic given the seed."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        h = config.hidden_dim
        self.embedding = nn.Embedding(config.vocab_size, config.embed_dim, padding_idx=0)
        self.positional = nn.Embedding(config.max_len, config.embed_dim)
        self.input_proj = (
            nn.Linear(config.embed_dim, h) if config.embed_dim != h else nn.Identity()
        )
        self.blocks = nn.ModuleList(
            _EncoderBlock(h, config.dropout_rate) for _ in range(config.encoder_layers)
        )
        self.det_head = nn.Linear(h, 2)
        self.mat_bilinear = nn.Parameter(torch.empty(3, h, h))
        self.mat_ctx = nn.Linear(h, 3)
        self.mat_qry = nn.Linear(h, 3, bias=False)
        self._init_parameters(config.seed)

    def _init_parameters(self, seed: int) -> None:
        # Small uniform init keeps every loss surface well-conditioned for
        # finite-difference checks; layer norms carry no parameters.
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for _, param in self.named_parameters():
                param.uniform_(-_INIT_SCALE, _INIT_SCALE, generator=gen)
            self.embedding.weight[0].zero_()

    # --- encoding -----------------------------------------------------------

    def forward_hidden(
        self,
        ids: torch.Tensor,
        pad_mask: torch.Tensor,
        gen: torch.Generator | None,
    ) -> torch.Tensor:
        """Encode a padded id batch (B, T) -> hidden states (B, T, H).

        pad_mask is True at real positions. gen=None disables dropout.
        """
        if ids.numel() and int(ids.max()) >= self.config.vocab_size:
            raise VocabError(
                f"token id {int(ids.max())} outside vocabulary of size {self.config.vocab_size}"
            )
        t = ids.shape[1]
        if t > self.config.max_len:
            raise ValueError(f"sequence length {t} exceeds max_len {self.config.max_len}")
        positions = torch.arange(t, device=ids.device)
        x = self.embedding(ids) + self.positional(positions)
        x = self.input_proj(x)
        x = _dropout(x, self.config.dropout_rate, gen)
        dtype = x.dtype
        attn_bias = torch.where(
            pad_mask, torch.zeros((), dtype=dtype), torch.full((), -1e9, dtype=dtype)
        ).unsqueeze(1)
        for block in self.blocks:
            x = block(x, attn_bias, gen)
        return x

    def encode(
        self,
        tokens: JointInput | Sequence[int],
        *,
        dropout: bool = False,
        rng: torch.Generator | None = None,
    ) -> EncoderOutput:
        """Encode one sequence (a JointInput or a raw id sequence such as
        [CLS]+rewrite). With dropout active each call draws a fresh mask
        realization from rng."""
        ids = list(tokens.token_ids) if isinstance(tokens, JointInput) else list(tokens)
        gen = None
        draw_id = None
        if dropout:
            if rng is None:
                raise ValueError("dropout-active encoding needs an rng")
            gen = rng
            draw_id = zlib.crc32(gen.get_state().numpy().tobytes())
        device = self.embedding.weight.device
        id_tensor = torch.tensor([ids], dtype=torch.long, device=device)
        pad_mask = torch.ones_like(id_tensor, dtype=torch.bool)
        hidden = self.forward_hidden(id_tensor, pad_mask, gen)[0]
        cls_index = tokens.cls_index if isinstance(tokens, JointInput) else 0
        return EncoderOutput(
            hidden=hidden,
            cls=hidden[cls_index],
            dropout_mode="active" if dropout else "inactive",
            rng_draw_id=draw_id,
        )

    # --- heads --------------------------------------------------------------

    def matrix_logits(self, ctx_states: torch.Tensor, qry_states: torch.Tensor) -> torch.Tensor:
        """Score (context, query) state pairs: (B, M, H) x (B, N, H) -> (B, M, N, 3)."""
        bilinear = torch.einsum("bmh,khg,bng->bmnk", ctx_states, self.mat_bilinear, qry_states)
        return bilinear + self.mat_ctx(ctx_states).unsqueeze(2) + self.mat_qry(qry_states).unsqueeze(1)

    def detection_logits(self, states: torch.Tensor) -> torch.Tensor:
        return self.det_head(states)

    def predict_matrix(self, enc: EncoderOutput, joint: JointInput) -> torch.Tensor:
        """Per-cell class distributions (M, N, 3); rows sum to 1."""
        if joint.m == 0:
            raise EmptyContext("no context tokens; emit the query unchanged instead")
        ctx = enc.hidden[joint.context_positions]
        qry = enc.hidden[joint.query_positions]
        logits = self.matrix_logits(ctx.unsqueeze(0), qry.unsqueeze(0))[0]
        return torch.softmax(logits, dim=-1)

    def predict_detection(self, enc: EncoderOutput, joint: JointInput) -> torch.Tensor:
        """Binary keyword distributions over context-then-query tokens: (M+N, 2)."""
        positions = joint.context_positions + joint.query_positions
        logits = self.detection_logits(enc.hidden[positions])
        return torch.softmax(logits, dim=-1)


def intent_of(enc: EncoderOutput) -> torch.Tensor:
    """The [CLS] hidden state, representing the input's intent."""
    return enc.cls


# --- checkpointing ----------------------------------------------------------


def save_checkpoint(
    path: str | Path,
    model: RewriteModel,
    vocab_tokens: list[str],
    extra: dict | None = None,
) -> None:
    """Write a versioned checkpoint: header (format version, config), vocab,
    and the raw parameter payload."""
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": asdict(model.config),
        "vocab_tokens": list(vocab_tokens),
        "state_dict": model.state_dict(),
        "extra": extra or {},
    }
    torch.save(payload, str(path))


def load_checkpoint(path: str | Path) -> tuple[RewriteModel, list[str], dict]:
    """Load a checkpoint; fails loudly on any version or payload mismatch."""
    try:
        payload = torch.load(str(path), weights_only=True)
    except Exception as exc:
        raise VersionError(f"unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise VersionError(f"{path} is not a rewrite-lab checkpoint")
    version = payload["format_version"]
    if version != CHECKPOINT_FORMAT_VERSION:
        raise VersionError(
            f"checkpoint format {version} unsupported (expected {CHECKPOINT_FORMAT_VERSION})"
        )
    config = ModelConfig(**payload["config"])
    vocab_tokens = payload["vocab_tokens"]
    if config.vocab_size != len(vocab_tokens) + 4:
        raise VersionError(
            f"config/vocab mismatch: vocab_size {config.vocab_size} vs "
            f"{len(vocab_tokens)} stored tokens + 4 reserved"
        )
    model = RewriteModel(config)
    try:
        model.load_state_dict(payload["state_dict"])
    except RuntimeError as exc:
        raise VersionError(f"parameter payload mismatch: {exc}") from exc
    return model, vocab_tokens, payload["extra"]
