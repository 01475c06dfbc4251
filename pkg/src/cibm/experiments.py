"""Synthetic experiments shared by the scripts and the acceptance suite.

Each function trains from scratch with the given config, evaluates on the
held-out split and returns plain numbers; nothing is written to disk.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .config import TrainConfig
from .datagen import corrupt_concepts, make_synthetic, split
from .metrics import (accuracy, auc_tti, concept_accuracy, intervention_curve, nauc_tti, nis, ois, probe_accuracy,
                      spearman)
from .model import forward, intervene, intervention_inputs, predict
from .train import build_and_fit


@dataclass
class VariantSummary:
    variant: str
    class_acc: list[float]
    concept_acc: list[float]
    ois: list[float]
    nis: list[float]

    def mean(self, name: str) -> float:
        return float(np.mean(getattr(self, name)))


def leakage_comparison(cfg: TrainConfig, variants=("vanilla", "ib_b", "ib_e")) -> dict[str, VariantSummary]:
    """Class accuracy, concept accuracy, OIS and NIS per variant, one entry per seed."""
    train, val, test = split(make_synthetic(cfg.synth_spec), cfg.fractions, seed=cfg.data_seed)
    grid = np.linspace(0, 1, cfg.nis_points)
    out = {}
    for variant in variants:
        vcfg = dataclasses.replace(cfg, variant=variant).validate()
        s = VariantSummary(variant, [], [], [], [])
        for seed in vcfg.seed_list:
            model = build_and_fit(train, val, vcfg, seed).model
            probs, pred = predict(model, test.X)
            s.class_acc.append(accuracy(pred, test.Y))
            s.concept_acc.append(concept_accuracy(probs, test.C))
            s.ois.append(ois(probs, test.C))
            s.nis.append(nis(probs, test.C, grid, seed=seed, probe_epochs=cfg.probe_epochs, probe_lr=cfg.probe_lr))
        out[variant] = s
    return out


@dataclass
class InterventionSummary:
    variant: str
    curve: np.ndarray  # pooled over seeds x repeats
    curve_std: np.ndarray
    spearman: float
    auc_tti: float
    nauc_tti: float
    full_accuracy: list[float]  # per seed, every group intervened
    probe_accuracy: float


def intervention_behaviour(cfg: TrainConfig, variants=("ib_b", "ib_e")) -> dict[str, InterventionSummary]:
    """Group-intervention curves and the fully intervened accuracy against a probe on true concepts."""
    train, val, test = split(make_synthetic(cfg.synth_spec), cfg.fractions, seed=cfg.data_seed)
    oracle = probe_accuracy(train.C, train.Y, test.C, test.Y, train.n_classes)
    all_groups = list(range(test.n_groups))
    out = {}
    for variant in variants:
        vcfg = dataclasses.replace(cfg, variant=variant).validate()
        curves, full = [], []
        for seed in vcfg.seed_list:
            model = build_and_fit(train, val, vcfg, seed).model
            curves.append(intervention_curve(model, test, vcfg.repeats, seed).per_repeat)
            done = intervene(forward(model, test.X), test.C, all_groups, model)
            full.append(accuracy(done.y_logits.value.argmax(axis=1), test.Y))
        pooled = np.vstack(curves)
        curve = pooled.mean(axis=0)
        out[variant] = InterventionSummary(variant, curve, pooled.std(axis=0), spearman(curve, np.arange(len(curve))),
                                           auc_tti(curve), nauc_tti(curve), full, oracle)
    return out


def corruption_sweep(cfg: TrainConfig, levels, variants=("vanilla", "ib_b", "ib_e")) -> dict[str, list[dict]]:
    """AUC_TTI / NAUC_TTI per corruption level, retraining at every level."""
    ds = make_synthetic(cfg.synth_spec)
    out = {}
    for variant in variants:
        vcfg = dataclasses.replace(cfg, variant=variant).validate()
        rows = []
        for k in levels:
            train, val, test = split(corrupt_concepts(ds, k, cfg.data_seed), cfg.fractions, seed=cfg.data_seed)
            curves = []
            for seed in vcfg.seed_list:
                model = build_and_fit(train, val, vcfg, seed).model
                curves.append(intervention_curve(model, test, vcfg.repeats, seed).per_repeat)
            curve = np.vstack(curves).mean(axis=0)
            rows.append({"k": k, "auc_tti": auc_tti(curve), "nauc_tti": nauc_tti(curve),
                         "leakage_flag": nauc_tti(curve) < 0})
        out[variant] = rows
    return out


def label_information_trend(cfg: TrainConfig) -> dict[int, tuple[float, float]]:
    """(first, last) I(C;Y) snapshot per seed."""
    train, val, _ = split(make_synthetic(cfg.synth_spec), cfg.fractions, seed=cfg.data_seed)
    out = {}
    for seed in cfg.seed_list:
        pts = build_and_fit(train, val, dataclasses.replace(cfg, infoplane=True), seed).infoplane
        out[seed] = (pts[0].I_cy, pts[-1].I_cy)
    return out


def head_on_true_concepts(model, C) -> np.ndarray:
    """Label logits when every concept is replaced by its ground-truth value."""
    return model.label_head(dc.constant(intervention_inputs(model, C))).value


__all__ = ["VariantSummary", "InterventionSummary", "leakage_comparison", "intervention_behaviour",
           "corruption_sweep", "label_information_trend", "head_on_true_concepts"]
