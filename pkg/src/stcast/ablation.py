"""Ablation arms for the regional coupling and the temporal expert routing.

Regional arms (identical step budgets, shared trained global backbone):
  * "saa"          -- decay-initialized prior, SAA trained, backbone frozen
  * "random_prior" -- same but the prior starts from a truncated normal
  * "no_saa"       -- a plain regional forecaster trained directly

Global arms:
  * "tmoe" -- month-conditioned expert routing
  * "moe"  -- same bank without the month embedding
  * "ff"   -- a single feed-forward block instead of the MoE

Each run returns per-seed validation scores so callers can test orderings.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
import torch

from .fields import compute_norm_stats, normalize
from .metrics import rmse_weighted
from .model import GlobalForecaster, ModelConfig, RegionalForecaster
from .synth import SynthConfig, synth_generate
from .training import evaluate_loss, make_pairs, train_global, train_regional

VAL_SEED_OFFSET = 10_000

REGIONAL_ARMS = ("saa", "random_prior", "no_saa")
GLOBAL_ARMS = ("tmoe", "moe", "ff")


def mean_weighted_rmse(pred_fields, truth_fields) -> float:
    """Channel-averaged latitude-weighted RMSE over aligned field lists."""
    vals = []
    for p, t in zip(pred_fields, truth_fields):
        for c in range(p.values.shape[0]):
            vals.append(rmse_weighted(p.values[c], t.values[c], p.grid))
    return float(np.mean(vals))


def regional_validation_rmse(model, val_regional, val_global=None) -> float:
    """One-step forecasts over a validation sequence, scored per channel."""
    preds, truths = [], []
    with torch.no_grad():
        for t in range(len(val_regional) - 1):
            x = torch.tensor(val_regional[t].values,
                             dtype=torch.float32).unsqueeze(0)
            if val_global is None:
                y = model(x, val_regional[t].month)
            else:
                gx = torch.tensor(val_global[t].values,
                                  dtype=torch.float32).unsqueeze(0)
                y = model(x, gx, val_regional[t].month)
            preds.append(val_regional[t].with_values(
                y[0].numpy().astype(np.float64)))
            truths.append(val_regional[t + 1])
    return mean_weighted_rmse(preds, truths)


def run_regional_ablation(synth_cfg: SynthConfig, global_cfg: ModelConfig,
                          regional_cfg: ModelConfig, seeds,
                          steps: int = 2000, global_steps: int | None = None,
                          alpha: float = 0.1, arms=REGIONAL_ARMS) -> dict:
    """Per-seed validation RMSE for each regional arm."""
    global_steps = global_steps or steps
    results = {arm: [] for arm in arms}
    for seed in seeds:
        g_train, r_train = synth_generate(synth_cfg, seed=seed)
        g_val, r_val = synth_generate(synth_cfg, seed=seed + VAL_SEED_OFFSET)
        g_stats = compute_norm_stats(g_train)
        r_stats = compute_norm_stats(r_train)
        g_train_n = [normalize(f, g_stats) for f in g_train]
        r_train_n = [normalize(f, r_stats) for f in r_train]
        g_val_n = [normalize(f, g_stats) for f in g_val]
        r_val_n = [normalize(f, r_stats) for f in r_val]

        # one trained backbone per seed, shared by the two SAA arms
        torch.manual_seed(seed)
        backbone = GlobalForecaster(global_cfg)
        train_global(backbone, make_pairs(g_train_n), seed=seed,
                     steps=global_steps)

        region_tokens = synth_cfg.region.scaled(global_cfg.patch)
        for arm in arms:
            torch.manual_seed(seed + 1)
            if arm == "no_saa":
                model = GlobalForecaster(regional_cfg)
                train_global(model, make_pairs(r_train_n), seed=seed,
                             steps=steps)
                score = regional_validation_rmse(model, r_val_n)
            else:
                model = RegionalForecaster(
                    regional_cfg, backbone, region_tokens, alpha=alpha,
                    random_prior=arm == "random_prior")
                pairs = make_pairs(r_train_n)
                train_regional(model, pairs, g_train_n[:len(pairs)],
                               seed=seed, steps=steps)
                score = regional_validation_rmse(model, r_val_n, g_val_n)
            results[arm].append(score)
    return results


def month_spread_dataset(synth_cfg: SynthConfig, seed: int):
    """Sequences started mid-month in every month, pooled into one list."""
    fields = []
    for m in range(1, 13):
        cfg = replace(synth_cfg,
                      start_time=synth_cfg.start_time.replace(month=m, day=15))
        g, _ = synth_generate(cfg, seed=seed * 100 + m)
        fields.append(g)
    return fields


def run_global_ablation(synth_cfg: SynthConfig, model_cfg: ModelConfig, seeds,
                        steps: int = 800, arms=GLOBAL_ARMS) -> dict:
    """Per-seed validation prediction MSE for each routing arm."""
    results = {arm: [] for arm in arms}
    for seed in seeds:
        train_seqs = month_spread_dataset(synth_cfg, seed)
        val_seqs = month_spread_dataset(synth_cfg, seed + VAL_SEED_OFFSET)
        stats = compute_norm_stats([f for s in train_seqs for f in s])
        train_pairs = []
        for s in train_seqs:
            train_pairs += make_pairs([normalize(f, stats) for f in s])
        val_pairs = []
        for s in val_seqs:
            val_pairs += make_pairs([normalize(f, stats) for f in s])

        for arm in arms:
            torch.manual_seed(seed)
            cfg = replace(model_cfg, moe_mode=arm)
            model = GlobalForecaster(cfg)
            train_global(model, train_pairs, seed=seed, steps=steps)
            results[arm].append(evaluate_loss(model, val_pairs))
    return results
