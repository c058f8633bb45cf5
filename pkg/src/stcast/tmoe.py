"""Temporal Mixture-of-Experts: month-conditioned Top-K expert routing.

A learnable discrete Gaussian over the 12 months is rotated so its peak sits
at the input month, encoded to expert-logit space, and added to the gating
logits. Softmax over all experts precedes Top-K truncation; the kept weights
are renormalized so every token receives a convex combination of K experts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import Tensor, nn

from .errors import TmoeError

N_MONTHS = 12


def month_gaussian(mu: Tensor | float, sigma: Tensor | float,
                   dtype=None) -> Tensor:
    """Density exp(-(x-mu)^2 / 2 sigma^2) / (sigma sqrt(2 pi)) at x = 1..12."""
    if not torch.is_tensor(mu):
        mu = torch.tensor(float(mu), dtype=dtype or torch.get_default_dtype())
    if not torch.is_tensor(sigma):
        sigma = torch.tensor(float(sigma), dtype=mu.dtype)
    sigma_val = float(sigma.detach())
    if sigma_val <= 0.0:
        raise TmoeError("bad-sigma", f"sigma must be > 0, got {sigma_val}")
    x = torch.arange(1, N_MONTHS + 1, dtype=mu.dtype, device=mu.device)
    z = (x - mu) / sigma
    return torch.exp(-0.5 * z * z) / (sigma * math.sqrt(2.0 * math.pi))


def rotate_to_month(vector: Tensor, month: int, peak_index: int | None = None) -> Tensor:
    """Circular shift placing the peak entry at position ``month`` (1..12)."""
    if not 1 <= month <= N_MONTHS:
        raise TmoeError("bad-month", f"month must be in 1..12, got {month}")
    if vector.shape[-1] != N_MONTHS:
        raise TmoeError("bad-shape", "month series must have 12 entries")
    if peak_index is None:
        peak_index = int(torch.argmax(vector))
    shift = (month - 1) - peak_index
    return torch.roll(vector, shifts=shift, dims=-1)


def month_embedding(rotated: Tensor, encoder: nn.Module) -> Tensor:
    """Encode the aligned month series into a gate-bias vector of length E."""
    if rotated.shape[-1] != N_MONTHS:
        raise TmoeError("bad-shape", "month series must have 12 entries")
    return encoder(rotated)


@dataclass
class GateDecision:
    """Top-K routing: expert ids and renormalized weights per token."""

    indices: Tensor  # [..., K] long
    weights: Tensor  # [..., K], nonnegative, summing to 1 per token


def gate(tokens: Tensor, month_bias: Tensor, gate_proj: nn.Module,
         top_k: int) -> GateDecision:
    """Softmax over all experts, then keep and renormalize the K largest.

    ``month_bias`` broadcasts over tokens: pass [E] for a shared month or
    [B, 1, E] for per-sample months with tokens [B, T, E-width].
    """
    logits = gate_proj(tokens) + month_bias
    n_experts = logits.shape[-1]
    if not 1 <= top_k <= n_experts:
        raise TmoeError("bad-top-k", f"K={top_k} outside 1..{n_experts}")
    probs = torch.softmax(logits, dim=-1)
    vals, idx = torch.topk(probs, top_k, dim=-1)
    weights = vals / vals.sum(dim=-1, keepdim=True)
    return GateDecision(indices=idx, weights=weights)


class Expert(nn.Module):
    """Two affine maps with GELU between."""

    def __init__(self, width: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(width, hidden)
        self.fc2 = nn.Linear(hidden, width)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(torch.nn.functional.gelu(self.fc1(x)))


class TemporalMoE(nn.Module):
    """Expert bank + gate + month distribution, dispatched per token.

    ``use_month_embedding=False`` drops the month bias (the classical-MoE
    ablation arm) while keeping the rest of the routing identical.

    Args:
        width: token width shared by all experts
        n_experts: bank size E
        top_k: experts combined per token
        hidden: expert hidden width (defaults to ``width``)
    """

    def __init__(self, width: int, n_experts: int = 8, top_k: int = 2,
                 hidden: int | None = None, use_month_embedding: bool = True):
        super().__init__()
        if not 1 <= top_k <= n_experts:
            raise TmoeError("bad-top-k", f"K={top_k} outside 1..{n_experts}")
        hidden = hidden or width
        self.n_experts = n_experts
        self.top_k = top_k
        self.use_month_embedding = use_month_embedding
        self.experts = nn.ModuleList(Expert(width, hidden) for _ in range(n_experts))
        self.gate_proj = nn.Linear(width, n_experts)
        self.month_encoder = nn.Linear(N_MONTHS, n_experts)
        self.mu = nn.Parameter(torch.tensor(6.0))
        self.log_sigma = nn.Parameter(torch.tensor(math.log(2.0)))

    @property
    def sigma(self) -> Tensor:
        # clamp keeps sigma strictly positive and finite even if training
        # pushes log_sigma to extremes
        return torch.exp(self.log_sigma.clamp(min=-30.0, max=30.0))

    def density(self) -> Tensor:
        return month_gaussian(self.mu, self.sigma)

    def month_bias_table(self) -> Tensor:
        """Gate bias for every month, [12, E]; rows share one density."""
        dens = self.density()
        peak = int(torch.argmax(dens))
        rotated = torch.stack([rotate_to_month(dens, m, peak)
                               for m in range(1, N_MONTHS + 1)])
        return month_embedding(rotated, self.month_encoder)

    def month_bias(self, month: int) -> Tensor:
        if not 1 <= month <= N_MONTHS:
            raise TmoeError("bad-month", f"month must be in 1..12, got {month}")
        return self.month_bias_table()[month - 1]

    def _bias_for(self, tokens: Tensor, months) -> Tensor:
        if not self.use_month_embedding:
            return tokens.new_zeros(self.n_experts)
        if isinstance(months, int):
            return self.month_bias(months)
        months = torch.as_tensor(months, dtype=torch.long, device=tokens.device)
        table = self.month_bias_table()
        return table[months - 1].unsqueeze(1)  # [B, 1, E]

    def gate_decision(self, tokens: Tensor, months) -> GateDecision:
        return gate(tokens, self._bias_for(tokens, months), self.gate_proj,
                    self.top_k)

    def forward(self, tokens: Tensor, months) -> Tensor:
        """tokens [T, D] or [B, T, D]; months an int or per-sample sequence."""
        decision = self.gate_decision(tokens, months)
        flat = tokens.reshape(-1, tokens.shape[-1])
        idx = decision.indices.reshape(-1, self.top_k)
        w = decision.weights.reshape(-1, self.top_k)
        out = torch.zeros_like(flat)
        for e in range(self.n_experts):
            sel = idx == e  # [N, K]
            rows = sel.any(dim=-1).nonzero(as_tuple=True)[0]
            if rows.numel() == 0:
                continue
            we = (w * sel).sum(dim=-1)[rows]
            out = out.index_add(0, rows, we.unsqueeze(-1) * self.experts[e](flat[rows]))
        return out.view_as(tokens)


def tmoe_forward(tokens: Tensor, month: int, bank: TemporalMoE) -> Tensor:
    """Functional entry point used by tests and the spec examples."""
    return bank(tokens, month)


def routing_histogram(bank: TemporalMoE, tokens: Tensor) -> dict:
    """Expert-selection counts per month for a fixed token batch."""
    hist = {}
    with torch.no_grad():
        for m in range(1, N_MONTHS + 1):
            decision = bank.gate_decision(tokens, m)
            counts = torch.bincount(decision.indices.reshape(-1),
                                    minlength=bank.n_experts)
            hist[str(m)] = counts.tolist()
    return hist
