"""Spatial-Aligned Attention: prior-modulated linear cross-attention.

A learnable per-global-point prior, initialized by exponential distance decay
from the target region, multiplies the columns of a linear cross-attention
map whose queries are the regional tokens and whose keys/values are the
global tokens. Because the prior only scales columns, the modulated and
row-renormalized map never has to be materialized:

    out_r = phi(q_r) (phi(K) * f)^T V  /  phi(q_r) . sum_g phi(k_g) f_g

with the positive feature map phi(x) = relu(x) + 1.
"""

from __future__ import annotations

import math
from datetime import datetime

import numpy as np
import torch
from torch import Tensor, nn

from .errors import SaaError
from .fields import FieldTensor, GridSpec, RegionSpec

DENOM_FLOOR = 1e-12


def manhattan_region_distance(i: float, j: float, region: RegionSpec) -> float:
    """max(|i - C_x| - H/2, |j - C_y| - W/2); <= 0 inside the region band."""
    return max(abs(i - region.center_x) - region.height / 2.0,
               abs(j - region.center_y) - region.width / 2.0)


def distance_field(n_rows: int, n_cols: int, region: RegionSpec) -> np.ndarray:
    ii = np.arange(n_rows, dtype=np.float64)[:, None]
    jj = np.arange(n_cols, dtype=np.float64)[None, :]
    return np.maximum(np.abs(ii - region.center_x) - region.height / 2.0,
                      np.abs(jj - region.center_y) - region.width / 2.0)


def init_prior_values(n_rows: int, n_cols: int, region: RegionSpec,
                      alpha: float) -> np.ndarray:
    """Closed-form decay prior: 1 where d <= 0, exp(-alpha d^2) outside."""
    if alpha <= 0.0:
        raise SaaError("bad-alpha", f"decay factor must be > 0, got {alpha}")
    d = distance_field(n_rows, n_cols, region)
    with np.errstate(under="ignore"):
        outside = np.exp(-alpha * d ** 2)
    return np.where(d <= 0.0, 1.0, outside)


class PriorMatrix(nn.Module):
    """Trainable global-regional distribution, one scalar per global point."""

    def __init__(self, values: np.ndarray, region: RegionSpec, alpha: float):
        super().__init__()
        self.values = nn.Parameter(torch.as_tensor(values, dtype=torch.get_default_dtype()))
        self.region = region
        self.alpha = alpha

    @property
    def shape(self):
        return tuple(self.values.shape)

    def flat(self) -> Tensor:
        return self.values.reshape(-1)

    @classmethod
    def decay_init(cls, shape, region: RegionSpec, alpha: float) -> "PriorMatrix":
        n_rows, n_cols = _shape_of(shape)
        return cls(init_prior_values(n_rows, n_cols, region, alpha), region, alpha)

    @classmethod
    def random_init(cls, shape, region: RegionSpec, alpha: float,
                    std: float = 0.02) -> "PriorMatrix":
        """Truncated-normal prior (the 'no distance-decay init' ablation arm).

        Draws from the global torch RNG; seed it for reproducible arms.
        """
        n_rows, n_cols = _shape_of(shape)
        vals = torch.empty(n_rows, n_cols, dtype=torch.get_default_dtype())
        with torch.no_grad():
            nn.init.trunc_normal_(vals, mean=0.0, std=std, a=-2 * std, b=2 * std)
        return cls(vals.numpy(), region, alpha)

    def to_field(self, timestamp: datetime) -> FieldTensor:
        """Prior as a one-channel grid file payload for inspection."""
        n_rows, n_cols = self.shape
        grid = GridSpec.equiangular(n_rows, n_cols)
        return FieldTensor(grid, self.values.detach().cpu().numpy()[None],
                           ["prior"], timestamp)


def _shape_of(shape) -> tuple:
    if hasattr(shape, "n_lat"):
        return shape.n_lat, shape.n_lon
    n_rows, n_cols = shape
    return int(n_rows), int(n_cols)


def init_prior(shape, region: RegionSpec, alpha: float) -> PriorMatrix:
    """Build the trainable prior from grid geometry (shape may be a GridSpec)."""
    return PriorMatrix.decay_init(shape, region, alpha)


def _phi(x: Tensor) -> Tensor:
    return torch.relu(x) + 1.0


class SpatialAlignedAttention(nn.Module):
    """Linear cross-attention from regional queries onto global keys/values.

    ``role_order`` exists so the alternative assignment (global as query/key,
    regional as value) stays selectable in configs, but only the orientation
    that yields a [regional x global] map is implemented; the other cannot
    index a global-point prior.
    """

    def __init__(self, width: int, heads: int, role_order: str = "regional_query"):
        super().__init__()
        if role_order != "regional_query":
            raise SaaError(
                "role-order-unsupported",
                f"role_order {role_order!r}: a [regional x global] attention "
                "map compatible with a global-point prior requires regional "
                "queries and global keys/values")
        if width % heads != 0:
            raise SaaError("bad-width", f"width {width} not divisible by {heads} heads")
        self.width = width
        self.heads = heads
        self.q_proj = nn.Linear(width, width)
        self.k_proj = nn.Linear(width, width)
        self.v_proj = nn.Linear(width, width)
        self.out_proj = nn.Linear(width, width)
        # fusion starts as the identity: zero injection until trained
        nn.init.zeros_(self.out_proj.weight)
        nn.init.zeros_(self.out_proj.bias)

    def forward(self, regional: Tensor, global_tokens: Tensor,
                prior_flat: Tensor) -> Tensor:
        """regional [B, R, D], global [B, G, D], prior [G] -> [B, R, D]."""
        if regional.shape[-1] != self.width or global_tokens.shape[-1] != self.width:
            raise SaaError("dim-mismatch",
                           f"token width must be {self.width}, got "
                           f"{regional.shape[-1]} / {global_tokens.shape[-1]}")
        if prior_flat.numel() != global_tokens.shape[-2]:
            raise SaaError("dim-mismatch",
                           f"prior has {prior_flat.numel()} entries for "
                           f"{global_tokens.shape[-2]} global tokens")
        if torch.isnan(regional).any() or torch.isnan(global_tokens).any():
            raise SaaError("nan-input", "NaN in attention inputs")

        b, r, d = regional.shape
        g = global_tokens.shape[1]
        h, dh = self.heads, d // self.heads

        q = _phi(self.q_proj(regional)).view(b, r, h, dh).transpose(1, 2)
        k = _phi(self.k_proj(global_tokens)).view(b, g, h, dh).transpose(1, 2)
        v = self.v_proj(global_tokens).view(b, g, h, dh).transpose(1, 2)

        kf = k * prior_flat.view(1, 1, g, 1)
        num = q @ (kf.transpose(-2, -1) @ v)           # [b, h, r, dh]
        denom = q @ kf.sum(dim=2, keepdim=True).transpose(-2, -1)  # [b, h, r, 1]
        denom = torch.where(denom.abs() < DENOM_FLOOR,
                            torch.full_like(denom, DENOM_FLOOR), denom)
        fused = (num / denom).transpose(1, 2).reshape(b, r, d)
        return regional + self.out_proj(fused)


def saa_forward(global_tokens: Tensor, regional_tokens: Tensor,
                prior: PriorMatrix, params: SpatialAlignedAttention) -> Tensor:
    """Functional entry point; accepts unbatched [T x width] token matrices."""
    unbatched = regional_tokens.dim() == 2
    if unbatched:
        regional_tokens = regional_tokens.unsqueeze(0)
        global_tokens = global_tokens.unsqueeze(0)
    out = params(regional_tokens, global_tokens, prior.flat())
    return out.squeeze(0) if unbatched else out


def saa_gradients(loss: Tensor, params: SpatialAlignedAttention,
                  prior: PriorMatrix) -> dict:
    """Gradients of a scalar loss for every trainable tensor, by name."""
    named = list(params.named_parameters()) + [("prior.values", prior.values)]
    grads = torch.autograd.grad(loss, [p for _, p in named], allow_unused=True)
    out = {}
    for (name, p), grad in zip(named, grads):
        out[name] = torch.zeros_like(p) if grad is None else grad
    return out
