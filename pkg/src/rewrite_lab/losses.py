"""The four training objectives and their weighted combination.

Supervised terms: class-weighted cross-entropy over edit-matrix cells and
mean binary cross-entropy over detection rows. Contrastive terms: NT-Xent
over intent vectors (cosine similarity, temperature tau, in-batch easy
negatives) and bidirectional KL between the predicted distributions of two
dropout passes.

Every log/KL computation clamps probabilities at 1e-12, so losses are always
finite. Batched variants take validity masks over padded grids; the
single-example functions are the batch-of-one special case of the same code
path.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import DegenerateVector, ShapeError

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class LossWeights:
    """Coefficients of the combined objective plus shared hyperparameters.

    alpha scales detection, beta the intent-contrastive term, gamma the
    probability-consistency term; tau is the NT-Xent temperature and
    class_weights re-weights {None, Replace, Insert} cells.
    """

    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    tau: float = 0.5
    class_weights: tuple[float, float, float] = (1.0, 5.0, 5.0)

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("loss coefficients must be >= 0")
        if min(self.class_weights) <= 0:
            raise ValueError("class weights must be > 0")


@dataclass(frozen=True)
class LossBreakdown:
    """Per-step component record; l_final is the exact weighted sum of the
    other fields (checked to 1e-9 by the test suite)."""

    l_mat_cq1: float
    l_mat_cq2: float
    l_det_cq1: float
    l_det_cq2: float
    l_icon: float
    l_pcon: float
    l_final: float

    FIELDS = ("l_mat_cq1", "l_mat_cq2", "l_det_cq1", "l_det_cq2", "l_icon", "l_pcon", "l_final")

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in self.FIELDS}


def _safe_log(p: torch.Tensor) -> torch.Tensor:
    return p.clamp_min(PROB_FLOOR).log()


# --- edit-matrix loss -------------------------------------------------------


def loss_mat_batch(
    p_mat: torch.Tensor,
    y_mat: torch.Tensor,
    cell_mask: torch.Tensor,
    class_weights: tuple[float, float, float],
) -> torch.Tensor:
    """Weighted mean CE over valid cells, per example, averaged over the batch.

    p_mat: (B, M, N, 3) distributions; y_mat: (B, M, N) gold classes;
    cell_mask: (B, M, N) validity.
    """
    weights = torch.tensor(class_weights, dtype=p_mat.dtype, device=p_mat.device)
    w = weights[y_mat] * cell_mask.to(p_mat.dtype)
    nll = -_safe_log(p_mat.gather(-1, y_mat.unsqueeze(-1)).squeeze(-1))
    per_example = (w * nll).sum(dim=(1, 2)) / w.sum(dim=(1, 2))
    return per_example.mean()


def loss_mat(
    p_mat: torch.Tensor,
    y_mat: torch.Tensor,
    class_weights: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> torch.Tensor:
    """Class-weighted cross-entropy over the M x N cells of one example."""
    if p_mat.shape[:2] != y_mat.shape:
        raise ShapeError(f"p_mat {tuple(p_mat.shape)} vs y_mat {tuple(y_mat.shape)}")
    mask = torch.ones_like(y_mat, dtype=torch.bool)
    return loss_mat_batch(p_mat.unsqueeze(0), y_mat.unsqueeze(0), mask.unsqueeze(0), class_weights)


# --- detection loss ---------------------------------------------------------


def loss_det_batch(
    p_det: torch.Tensor,
    y_det: torch.Tensor,
    token_mask: torch.Tensor,
) -> torch.Tensor:
    """Mean binary CE over valid tokens, per example, averaged over the batch.

    p_det: (B, T, 2); y_det: (B, T); token_mask: (B, T).
    """
    m = token_mask.to(p_det.dtype)
    nll = -_safe_log(p_det.gather(-1, y_det.unsqueeze(-1)).squeeze(-1))
    per_example = (m * nll).sum(dim=1) / m.sum(dim=1)
    return per_example.mean()


def loss_det(p_det: torch.Tensor, y_det: torch.Tensor) -> torch.Tensor:
    """Mean binary cross-entropy over the M+N keyword labels of one example."""
    if p_det.shape[0] != y_det.shape[0]:
        raise ShapeError(f"p_det {tuple(p_det.shape)} vs y_det {tuple(y_det.shape)}")
    mask = torch.ones_like(y_det, dtype=torch.bool)
    return loss_det_batch(p_det.unsqueeze(0), y_det.unsqueeze(0), mask.unsqueeze(0))


# --- intent contrastive (NT-Xent) ------------------------------------------


def loss_icon(
    anchors: torch.Tensor,
    positives: torch.Tensor,
    hard_negatives: torch.Tensor,
    tau: float,
) -> torch.Tensor:
    """NT-Xent over (B, H) intent vectors with cosine similarity.

    For anchor i the positive is positives[i]; the 3B-2 in-batch negatives are
    the other anchors, the other positives, and every hard negative.
    """
    if not (anchors.shape == positives.shape == hard_negatives.shape):
        raise ShapeError("anchors, positives, hard_negatives must share one shape")
    if anchors.ndim != 2 or anchors.shape[0] == 0:
        raise ShapeError("expected non-empty (B, H) batches")
    b = anchors.shape[0]

    def unit(x: torch.Tensor) -> torch.Tensor:
        norms = x.norm(dim=1, keepdim=True)
        if bool((norms == 0).any()):
            raise DegenerateVector("zero-norm intent vector in contrastive batch")
        return x / norms

    a, p, n = unit(anchors), unit(positives), unit(hard_negatives)
    sim_aa = (a @ a.T) / tau
    sim_ap = (a @ p.T) / tau
    sim_an = (a @ n.T) / tau
    eye = torch.eye(b, dtype=torch.bool, device=a.device)
    neg_inf = torch.finfo(a.dtype).min
    sim_aa = sim_aa.masked_fill(eye, neg_inf)  # exclude self-similarity
    pooled = torch.cat([sim_ap, sim_aa, sim_an], dim=1)  # positive column included
    return (torch.logsumexp(pooled, dim=1) - sim_ap.diagonal()).mean()


# --- bidirectional KL -------------------------------------------------------


def _bi_kl_rows(p: torch.Tensor, q: torch.Tensor) -> torch.Tensor:
    lp, lq = _safe_log(p), _safe_log(q)
    return (p * (lp - lq)).sum(dim=-1) + (q * (lq - lp)).sum(dim=-1)


def bi_kl(p: torch.Tensor, q: torch.Tensor) -> torch.Tensor:
    """KL(p||q) + KL(q||p) for two same-support distributions."""
    if p.shape != q.shape:
        raise ShapeError(f"support mismatch: {tuple(p.shape)} vs {tuple(q.shape)}")
    return _bi_kl_rows(p, q)


# --- probability-consistency loss ------------------------------------------


def loss_pcon_batch(
    p_det1: torch.Tensor,
    p_det2: torch.Tensor,
    p_mat1: torch.Tensor,
    p_mat2: torch.Tensor,
    token_mask: torch.Tensor,
    cell_mask: torch.Tensor,
) -> torch.Tensor:
    """Half the sum of masked-mean Bi-KL over detection rows and matrix cells,
    per example, averaged over the batch."""
    tm = token_mask.to(p_det1.dtype)
    cm = cell_mask.to(p_mat1.dtype)
    kl_det = (_bi_kl_rows(p_det1, p_det2) * tm).sum(dim=1) / tm.sum(dim=1)
    kl_mat = (_bi_kl_rows(p_mat1, p_mat2) * cm).sum(dim=(1, 2)) / cm.sum(dim=(1, 2))
    return (0.5 * (kl_det + kl_mat)).mean()


def loss_pcon(
    p_det1: torch.Tensor,
    p_det2: torch.Tensor,
    p_mat1: torch.Tensor,
    p_mat2: torch.Tensor,
) -> torch.Tensor:
    """Consistency between the dropout twins of one example: half the sum of
    mean-over-tokens and mean-over-cells Bi-KL."""
    if p_det1.shape != p_det2.shape or p_mat1.shape != p_mat2.shape:
        raise ShapeError("dropout twins must have identical prediction shapes")
    token_mask = torch.ones(p_det1.shape[:1], dtype=torch.bool).unsqueeze(0)
    cell_mask = torch.ones(p_mat1.shape[:2], dtype=torch.bool).unsqueeze(0)
    return loss_pcon_batch(
        p_det1.unsqueeze(0), p_det2.unsqueeze(0),
        p_mat1.unsqueeze(0), p_mat2.unsqueeze(0),
        token_mask, cell_mask,
    )


# --- combination ------------------------------------------------------------


def loss_final(
    l_mat_cq1,
    l_mat_cq2,
    l_det_cq1,
    l_det_cq2,
    l_icon,
    l_pcon,
    weights: LossWeights,
) -> tuple[torch.Tensor | float, LossBreakdown]:
    """Weighted sum of all components.

    Returns the combined scalar (a float64 tensor when any input is a tensor,
    so it can drive backprop) together with a float LossBreakdown whose
    l_final field recombines the components in float64 exactly.
    """
    parts = [l_mat_cq1, l_mat_cq2, l_det_cq1, l_det_cq2, l_icon, l_pcon]
    any_tensor = any(torch.is_tensor(x) for x in parts)

    def lift(x):
        if torch.is_tensor(x):
            return x.double()
        return torch.tensor(float(x), dtype=torch.float64) if any_tensor else float(x)

    t1, t2, t3, t4, t5, t6 = (lift(x) for x in parts)
    total = t1 + t2 + weights.alpha * (t3 + t4) + weights.beta * t5 + weights.gamma * t6
    floats = [float(x) for x in parts]
    breakdown = LossBreakdown(
        *floats,
        l_final=floats[0] + floats[1] + weights.alpha * (floats[2] + floats[3])
        + weights.beta * floats[4] + weights.gamma * floats[5],
    )
    return total, breakdown
