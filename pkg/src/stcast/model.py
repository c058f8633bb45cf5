"""Forecaster assembly: patch encoder, processor blocks, decoder, couplers.

The global forecaster advances a [C x H x W] state one step. Its processor
blocks each run one attention sub-layer (windowed on even blocks, global on
odd blocks) and one token-mixer sub-layer (TMoE by default), both in the
post-norm residual form

    A    = LN(Attention(X)) + X
    X'   = LN(Mixer(A)) + A

The regional forecaster reuses a trained global backbone (patch projection,
blocks, decoder) frozen, adds its own positional embedding, and fuses the
global encoder's tokens into the regional stream through one spatial-aligned
attention layer at the entry of every block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import Tensor, nn

from .errors import ModelError
from .fields import RegionSpec
from .saa import PriorMatrix, SpatialAlignedAttention
from .tmoe import TemporalMoE

MOE_MODES = ("tmoe", "moe", "ff")


@dataclass
class ModelConfig:
    """Architecture and optimization settings for one forecaster."""

    channels: int = 4
    grid_shape: tuple = (32, 64)
    patch: int = 2
    width: int = 128
    blocks: int = 4
    heads: int = 4
    window: int = 4
    n_experts: int = 8
    top_k: int = 2
    expert_hidden: int | None = None
    moe_mode: str = "tmoe"      # "moe" drops the month embedding, "ff" the MoE
    lambda_recon: float = 1.0
    pos_init_std: float = 0.02
    lr: float = 2e-4
    weight_decay: float = 0.01
    grad_clip: float = 1.0
    steps: int = 500
    batch_size: int = 8

    def __post_init__(self):
        h, w = self.grid_shape
        if h % self.patch or w % self.patch:
            raise ModelError("bad-geometry",
                             f"grid {h}x{w} not divisible by patch {self.patch}")
        if self.width % self.heads:
            raise ModelError("bad-geometry",
                             f"width {self.width} not divisible by {self.heads} heads")
        th, tw = self.token_grid
        if th % self.window or tw % self.window:
            raise ModelError("bad-geometry",
                             f"window {self.window} does not divide token grid "
                             f"{th}x{tw}")
        if self.moe_mode not in MOE_MODES:
            raise ModelError("bad-config", f"moe_mode must be one of {MOE_MODES}")
        if self.lambda_recon < 0:
            raise ModelError("bad-config", "lambda_recon must be >= 0")

    @property
    def token_grid(self) -> tuple:
        return (self.grid_shape[0] // self.patch, self.grid_shape[1] // self.patch)

    @property
    def n_tokens(self) -> int:
        th, tw = self.token_grid
        return th * tw


class MultiHeadSelfAttention(nn.Module):
    """Plain softmax self-attention (no fused kernels)."""

    def __init__(self, width: int, heads: int):
        super().__init__()
        self.heads = heads
        self.scale = (width // heads) ** -0.5
        self.qkv = nn.Linear(width, 3 * width)
        self.proj = nn.Linear(width, width)

    def forward(self, x: Tensor) -> Tensor:  # [B, T, D]
        b, t, d = x.shape
        h = self.heads
        q, k, v = self.qkv(x).view(b, t, 3, h, d // h).permute(2, 0, 3, 1, 4)
        attn = torch.softmax((q @ k.transpose(-2, -1)) * self.scale, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, t, d)
        return self.proj(out)


class TokenFeedForward(nn.Module):
    """Plain two-layer GELU block; the 'no MoE' ablation mixer."""

    def __init__(self, width: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(width, hidden)
        self.fc2 = nn.Linear(hidden, width)

    def forward(self, x: Tensor, months=None) -> Tensor:
        return self.fc2(torch.nn.functional.gelu(self.fc1(x)))


def window_partition(x: Tensor, token_grid: tuple, window: int) -> Tensor:
    b, t, d = x.shape
    th, tw = token_grid
    x = x.view(b, th // window, window, tw // window, window, d)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(-1, window * window, d)


def window_merge(x: Tensor, token_grid: tuple, window: int, batch: int) -> Tensor:
    th, tw = token_grid
    d = x.shape[-1]
    x = x.view(batch, th // window, tw // window, window, window, d)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(batch, th * tw, d)


class ProcessorBlock(nn.Module):
    """One attention + one mixer sub-layer, each LN-then-residual.

    Even-indexed blocks attend inside non-overlapping square windows, odd
    blocks attend globally.
    """

    def __init__(self, cfg: ModelConfig, index: int):
        super().__init__()
        self.token_grid = cfg.token_grid
        self.window = cfg.window
        self.windowed = index % 2 == 0
        self.attn = MultiHeadSelfAttention(cfg.width, cfg.heads)
        self.norm1 = nn.LayerNorm(cfg.width)
        hidden = cfg.expert_hidden or cfg.width
        if cfg.moe_mode == "ff":
            self.mixer = TokenFeedForward(cfg.width, hidden)
        else:
            self.mixer = TemporalMoE(cfg.width, cfg.n_experts, cfg.top_k,
                                     hidden=hidden,
                                     use_month_embedding=cfg.moe_mode == "tmoe")
        self.norm2 = nn.LayerNorm(cfg.width)

    def attend(self, x: Tensor) -> Tensor:
        if not self.windowed:
            return self.attn(x)
        b = x.shape[0]
        parts = window_partition(x, self.token_grid, self.window)
        return window_merge(self.attn(parts), self.token_grid, self.window, b)

    def forward(self, x: Tensor, months) -> Tensor:
        x = self.norm1(self.attend(x)) + x
        x = self.norm2(self.mixer(x, months)) + x
        return x


class PatchEncoder(nn.Module):
    """Stride-p patch projection plus a learnable positional embedding."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.token_grid = cfg.token_grid
        self.proj = nn.Conv2d(cfg.channels, cfg.width, kernel_size=cfg.patch,
                              stride=cfg.patch)
        pos = torch.empty(cfg.n_tokens, cfg.width)
        nn.init.trunc_normal_(pos, mean=0.0, std=cfg.pos_init_std,
                              a=-2 * cfg.pos_init_std, b=2 * cfg.pos_init_std)
        self.pos = nn.Parameter(pos)

    def forward(self, x: Tensor) -> Tensor:  # [B, C, H, W] -> [B, T, D]
        tokens = self.proj(x).flatten(2).transpose(1, 2)
        return tokens + self.pos


class PatchDecoder(nn.Module):
    """Linear(GELU(Linear(tokens))) followed by un-patching to the grid."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.fc1 = nn.Linear(cfg.width, cfg.width)
        self.fc2 = nn.Linear(cfg.width, cfg.patch * cfg.patch * cfg.channels)

    def forward(self, tokens: Tensor) -> Tensor:  # [B, T, D] -> [B, C, H, W]
        b = tokens.shape[0]
        th, tw = self.cfg.token_grid
        p, c = self.cfg.patch, self.cfg.channels
        out = self.fc2(torch.nn.functional.gelu(self.fc1(tokens)))
        out = out.view(b, th, tw, p, p, c)
        return out.permute(0, 5, 1, 3, 2, 4).reshape(b, c, th * p, tw * p)


class GlobalForecaster(nn.Module):
    """Encoder -> processor blocks -> decoder, with a reconstruction path
    that shares the encoder and decoder."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = PatchEncoder(cfg)
        self.blocks = nn.ModuleList(ProcessorBlock(cfg, i)
                                    for i in range(cfg.blocks))
        self.decoder = PatchDecoder(cfg)

    def encode(self, x: Tensor) -> Tensor:
        if x.shape[-2:] != tuple(self.cfg.grid_shape):
            raise ModelError("bad-geometry",
                             f"input grid {tuple(x.shape[-2:])} does not match "
                             f"model grid {self.cfg.grid_shape}")
        return self.encoder(x)

    def process(self, tokens: Tensor, months, saa_layers=None,
                global_tokens=None, prior=None) -> Tensor:
        for i, blk in enumerate(self.blocks):
            if saa_layers is not None:
                tokens = saa_layers[i](tokens, global_tokens, prior.flat())
            tokens = blk(tokens, months)
        return tokens

    def decode(self, tokens: Tensor) -> Tensor:
        return self.decoder(tokens)

    def forward(self, x: Tensor, months) -> Tensor:
        return self.decode(self.process(self.encode(x), months))

    def forward_with_reconstruction(self, x: Tensor, months):
        """(prediction of t+1, reconstruction of t), sharing encoder/decoder."""
        tokens = self.encode(x)
        recon = self.decode(tokens)
        pred = self.decode(self.process(tokens, months))
        return pred, recon


class RegionalForecaster(nn.Module):
    """Regional stream on a frozen global backbone, coupled through SAA.

    ``global_model`` supplies both the trained weights that the regional
    backbone reuses and, at run time, the global tokens that SAA fuses in.
    Only the SAA projections and the prior are left trainable.
    """

    def __init__(self, cfg: ModelConfig, global_model: GlobalForecaster,
                 region_tokens: RegionSpec, alpha: float = 0.1,
                 random_prior: bool = False, role_order: str = "regional_query"):
        super().__init__()
        if cfg.width != global_model.cfg.width or cfg.channels != global_model.cfg.channels \
                or cfg.patch != global_model.cfg.patch or cfg.blocks != global_model.cfg.blocks:
            raise ModelError("bad-geometry",
                             "regional config must share width/channels/patch/"
                             "blocks with the global backbone")
        self.cfg = cfg
        self.global_model = global_model
        self.backbone = GlobalForecaster(cfg)
        # reuse every trained tensor whose shape is grid-independent; the
        # positional embedding transfers only when the token grids agree,
        # otherwise it stays regional (fresh truncated-normal init, frozen)
        share_pos = cfg.token_grid == global_model.cfg.token_grid
        own_pos = self.backbone.encoder.pos.data.clone()
        state = {k: v for k, v in global_model.state_dict().items()
                 if share_pos or k != "encoder.pos"}
        self.backbone.load_state_dict(state, strict=False)
        if not share_pos:
            self.backbone.encoder.pos.data.copy_(own_pos)

        gshape = global_model.cfg.token_grid
        region_tokens.validate_inside(*gshape)
        if random_prior:
            self.prior = PriorMatrix.random_init(gshape, region_tokens, alpha)
        else:
            self.prior = PriorMatrix.decay_init(gshape, region_tokens, alpha)
        self.saa_layers = nn.ModuleList(
            SpatialAlignedAttention(cfg.width, cfg.heads, role_order=role_order)
            for _ in range(cfg.blocks))
        self.freeze_backbone()

    def freeze_backbone(self) -> None:
        for p in self.global_model.parameters():
            p.requires_grad_(False)
        for p in self.backbone.parameters():
            p.requires_grad_(False)

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.requires_grad]

    def forward(self, regional_x: Tensor, global_x: Tensor, months) -> Tensor:
        g_tokens = self.global_model.encode(global_x)
        tokens = self.backbone.encode(regional_x)
        tokens = self.backbone.process(tokens, months,
                                       saa_layers=self.saa_layers,
                                       global_tokens=g_tokens, prior=self.prior)
        return self.backbone.decode(tokens)


def loss_terms(pred: Tensor, recon: Tensor, target_next: Tensor,
               target_now: Tensor, lambda_recon: float):
    """(total, obj_pred, obj_recon) with mean-squared objectives."""
    if pred.shape != target_next.shape or recon.shape != target_now.shape:
        raise ModelError("shape-mismatch", "loss inputs must match targets")
    obj_pred = torch.mean((pred - target_next) ** 2)
    obj_recon = torch.mean((recon - target_now) ** 2)
    return obj_pred + lambda_recon * obj_recon, obj_pred, obj_recon


def loss(pred: Tensor, recon: Tensor, target_next: Tensor, target_now: Tensor,
         lambda_recon: float) -> Tensor:
    """Composite objective: prediction MSE plus weighted reconstruction MSE."""
    return loss_terms(pred, recon, target_next, target_now, lambda_recon)[0]
