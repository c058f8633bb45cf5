"""Training loops, autoregressive rollout, and the global-regional coupler.

Batches are drawn statelessly: the sample indices for step k come from a
generator seeded with (seed, k), so a run resumed from a checkpoint consumes
exactly the batches the uninterrupted run would have.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import timedelta
from pathlib import Path

import numpy as np
import torch

from .errors import ModelError
from .fields import FieldTensor
from .model import GlobalForecaster, ModelConfig, RegionalForecaster, loss_terms

STEP_HOURS = 6


@dataclass
class LossRow:
    step: int
    obj_pred: float
    obj_recon: float
    obj_final: float


def make_pairs(seq):
    """Consecutive (X_t, X_{t+1}) pairs from a field sequence."""
    return list(zip(seq[:-1], seq[1:]))


def fields_to_tensor(fields, dtype=torch.float32) -> torch.Tensor:
    return torch.stack([torch.tensor(f.values, dtype=dtype) for f in fields])


def months_of(fields) -> torch.Tensor:
    return torch.tensor([f.month for f in fields], dtype=torch.long)


def batch_indices(seed: int, step: int, n: int, batch_size: int) -> np.ndarray:
    rng = np.random.default_rng([seed, step])
    k = min(batch_size, n)
    return rng.choice(n, size=k, replace=False)


def build_optimizer(params, cfg: ModelConfig) -> torch.optim.AdamW:
    return torch.optim.AdamW(params, lr=cfg.lr, weight_decay=cfg.weight_decay)


def _check_finite(value: float, step: int):
    if not np.isfinite(value):
        raise ModelError("nan-loss",
                         f"training diverged: loss={value} at step {step}")


def train_global(model: GlobalForecaster, pairs, seed: int = 0,
                 optimizer: torch.optim.AdamW | None = None,
                 start_step: int = 0, steps: int | None = None) -> list:
    """Optimize the composite objective; returns one LossRow per step."""
    if not pairs:
        raise ModelError("empty-dataset", "no training pairs")
    cfg = model.cfg
    steps = cfg.steps if steps is None else steps
    if optimizer is None:
        optimizer = build_optimizer(model.parameters(), cfg)
    xs = fields_to_tensor([p[0] for p in pairs])
    ys = fields_to_tensor([p[1] for p in pairs])
    months = months_of([p[0] for p in pairs])
    n = len(pairs)
    rows = []
    for step in range(start_step, steps):
        idx = torch.as_tensor(batch_indices(seed, step, n, cfg.batch_size))
        pred, recon = model.forward_with_reconstruction(xs[idx], months[idx])
        total, obj_pred, obj_recon = loss_terms(pred, recon, ys[idx], xs[idx],
                                                cfg.lambda_recon)
        _check_finite(float(total.detach()), step)
        optimizer.zero_grad()
        total.backward()
        torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
        optimizer.step()
        rows.append(LossRow(step, float(obj_pred.detach()),
                            float(obj_recon.detach()), float(total.detach())))
    return rows


def train_regional(model: RegionalForecaster, regional_pairs, global_inputs,
                   seed: int = 0, optimizer: torch.optim.AdamW | None = None,
                   start_step: int = 0, steps: int | None = None) -> list:
    """Optimize SAA projections and the prior; the backbone stays frozen.

    ``global_inputs[t]`` is the global state aligned with the input side of
    ``regional_pairs[t]``. The reconstruction path is frozen here, so the
    objective is the prediction MSE alone.
    """
    if len(regional_pairs) != len(global_inputs):
        raise ModelError("bad-dataset",
                         "one global input per regional pair required")
    if not regional_pairs:
        raise ModelError("empty-dataset", "no training pairs")
    cfg = model.cfg
    steps = cfg.steps if steps is None else steps
    if optimizer is None:
        optimizer = build_optimizer(model.trainable_parameters(), cfg)
    rx = fields_to_tensor([p[0] for p in regional_pairs])
    ry = fields_to_tensor([p[1] for p in regional_pairs])
    gx = fields_to_tensor(global_inputs)
    months = months_of([p[0] for p in regional_pairs])
    n = len(regional_pairs)
    rows = []
    for step in range(start_step, steps):
        idx = torch.as_tensor(batch_indices(seed, step, n, cfg.batch_size))
        pred = model(rx[idx], gx[idx], months[idx])
        obj_pred = torch.mean((pred - ry[idx]) ** 2)
        _check_finite(float(obj_pred.detach()), step)
        optimizer.zero_grad()
        obj_pred.backward()
        torch.nn.utils.clip_grad_norm_(model.trainable_parameters(), cfg.grad_clip)
        optimizer.step()
        val = float(obj_pred.detach())
        rows.append(LossRow(step, val, 0.0, val))
    return rows


def evaluate_loss(model: GlobalForecaster, pairs) -> float:
    """Prediction MSE over a full pair set (no reconstruction term)."""
    xs = fields_to_tensor([p[0] for p in pairs])
    ys = fields_to_tensor([p[1] for p in pairs])
    months = months_of([p[0] for p in pairs])
    with torch.no_grad():
        pred = model(xs, months)
        return float(torch.mean((pred - ys) ** 2))


def evaluate_regional_loss(model: RegionalForecaster, regional_pairs,
                           global_inputs) -> float:
    rx = fields_to_tensor([p[0] for p in regional_pairs])
    ry = fields_to_tensor([p[1] for p in regional_pairs])
    gx = fields_to_tensor(global_inputs)
    months = months_of([p[0] for p in regional_pairs])
    with torch.no_grad():
        pred = model(rx, gx, months)
        return float(torch.mean((pred - ry) ** 2))


def rollout(initial: FieldTensor, steps: int, model: GlobalForecaster) -> list:
    """Autoregressive chain of ``steps`` one-step forecasts.

    The expert gate is conditioned on the month of each step's input state;
    timestamps advance by 6 hours per step.
    """
    if steps < 0:
        raise ModelError("bad-steps", "steps must be >= 0")
    out = []
    x = torch.tensor(initial.values, dtype=torch.float32).unsqueeze(0)
    ts = initial.timestamp
    with torch.no_grad():
        for _ in range(steps):
            y = model(x, ts.month)
            ts = ts + timedelta(hours=STEP_HOURS)
            out.append(FieldTensor(initial.grid, y[0].numpy().astype(np.float64),
                                   initial.variables, ts))
            x = y
    return out


def forecast_regional(regional: FieldTensor, global_field: FieldTensor,
                      model: RegionalForecaster) -> FieldTensor:
    """One coupled step: fuse the global state into the regional forecast."""
    rx = torch.tensor(regional.values, dtype=torch.float32).unsqueeze(0)
    gx = torch.tensor(global_field.values, dtype=torch.float32).unsqueeze(0)
    with torch.no_grad():
        pred = model(rx, gx, regional.month)
    ts = regional.timestamp + timedelta(hours=STEP_HOURS)
    return FieldTensor(regional.grid, pred[0].numpy().astype(np.float64),
                       regional.variables, ts)


def rollout_regional(regional: FieldTensor, global_field: FieldTensor,
                     steps: int, model: RegionalForecaster) -> list:
    """Coupled chain: the internal global model advances the global state."""
    out = []
    reg, glob = regional, global_field
    for _ in range(steps):
        nxt = forecast_regional(reg, glob, model)
        out.append(nxt)
        glob = rollout(glob, 1, model.global_model)[0]
        reg = nxt
    return out


def save_loss_curve(rows, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["step,obj_pred,obj_recon,obj_final"]
    lines += [f"{r.step},{r.obj_pred!r},{r.obj_recon!r},{r.obj_final!r}"
              for r in rows]
    path.write_text("\n".join(lines) + "\n")
