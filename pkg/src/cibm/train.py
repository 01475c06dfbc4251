"""Fitting CBMs under the joint / independent / sequential regimes."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import diffcore as dc
from .config import TrainConfig
from .datagen import Dataset, rng_for
from .errors import DomainError, TrainingError
from .info import InfoPlanePoint, discrete_mi, entropy_c, mi_plane
from .losses import compute_loss, is_stochastic, label_only_loss
from .metrics import accuracy, concept_accuracy
from .model import (CbmModel, calibrate_intervention_percentiles, forward, init_model,
                    intervention_inputs)

log = logging.getLogger(__name__)


@dataclass
class EpochLog:
    phase: int
    epoch: int
    train_loss: float
    val_loss: float
    val_concept_bce: float
    val_label_ce: float
    concept_acc: float
    class_acc: float
    entropy: float


@dataclass
class FitResult:
    model: CbmModel
    logs: list[EpochLog] = field(default_factory=list)
    infoplane: list[InfoPlanePoint] = field(default_factory=list)


def infoplane_stride(epochs: int) -> int:
    return max(1, epochs // 50)


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _check_finite(value: float, epoch: int) -> None:
    if not np.isfinite(value):
        raise TrainingError("loss became non-finite", epoch)


def _evaluate(model: CbmModel, ds: Dataset, cfg: TrainConfig, use_label: bool) -> tuple:
    """Eval-mode (eps = 0) loss pieces and accuracies on a held-out split."""
    if ds.n == 0:
        return (np.nan,) * 6
    out = forward(model, ds.X)
    marginal = forward(model, ds.X[:cfg.mi_samples]) if cfg.variant == "ib_e" else None
    parts = compute_loss(cfg.loss_config, out, ds.C, ds.Y, marginal, use_label=use_label)
    c_acc = concept_accuracy(dc._sigmoid(out.mu.value), ds.C)
    y_acc = accuracy(out.y_logits.value.argmax(axis=1), ds.Y)
    h = float(entropy_c(out.sigma).value)
    return float(parts.total.value), parts.concept_bce, parts.label_ce, c_acc, y_acc, h


def infoplane_point(model: CbmModel, ds: Dataset, epoch: int) -> InfoPlanePoint:
    out = forward(model, ds.X)
    z, c = out.z.value, out.mu.value
    pred = out.y_logits.value.argmax(axis=1)
    return InfoPlanePoint(epoch=epoch, I_xz=mi_plane(ds.X, z), I_zc=mi_plane(z, c),
                          I_xc=mi_plane(ds.X, c), I_cy=discrete_mi(pred, ds.Y))


def _run_phase(model: CbmModel, params: list[dc.Node], step, train: Dataset, val: Dataset,
               cfg: TrainConfig, seed: int, phase: int, eval_fn, result: FitResult,
               snapshot_rows: Dataset | None = None) -> None:
    state = dc.AdamState(lr=cfg.lr, wd=cfg.wd, clip_norm=cfg.clip_norm or None)
    batch_rng = rng_for(seed, f"batches{phase}")
    stride = infoplane_stride(cfg.epochs)
    for epoch in range(cfg.epochs):
        if snapshot_rows is not None and epoch % stride == 0:
            result.infoplane.append(infoplane_point(model, snapshot_rows, epoch))
        total, count = 0.0, 0
        # overflow surfaces as a TrainingError below rather than numpy warnings
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                for idx in _batches(train.n, cfg.batch_size, batch_rng):
                    loss = step(idx)
                    value = float(loss.value)
                    _check_finite(value, epoch)
                    grads = dc.backward(loss)
                    dc.adam_step(params, [grads.get(p) for p in params], state)
                    total += value * len(idx)
                    count += len(idx)
                if not all(np.all(np.isfinite(p.value)) for p in params):
                    raise TrainingError("parameters became non-finite", epoch)
                vl, vb, vc, ca, ya, h = eval_fn()
        except DomainError as exc:
            raise TrainingError(str(exc), epoch) from None
        result.logs.append(EpochLog(phase, epoch, total / max(count, 1), vl, vb, vc, ca, ya, h))
        if not np.isfinite(vl) and val.n:
            raise TrainingError("validation loss became non-finite", epoch)


def fit(model: CbmModel, train: Dataset, val: Dataset, cfg: TrainConfig, seed: int = 0,
        infoplane: bool | None = None) -> FitResult:
    """Train ``model`` in place under ``cfg.regime`` and return per-epoch logs.

    The model is calibrated for interventions (training-set percentiles) on exit.
    """
    cfg.validate()
    loss_cfg = cfg.loss_config
    loss_cfg.validate()
    stochastic = is_stochastic(cfg.variant)
    eps_rng = rng_for(seed, "eps")
    marg_rng = rng_for(seed, "marginal")
    result = FitResult(model)
    want_plane = cfg.infoplane if infoplane is None else infoplane
    plane_rows = None
    if want_plane:
        rows = rng_for(seed, "infoplane").permutation(train.n)[:cfg.infoplane_rows]
        plane_rows = train.take(np.sort(rows))
    k = model.n_concepts

    def concept_step(use_label: bool):
        def step(idx):
            eps = eps_rng.standard_normal((len(idx), k)) if stochastic else None
            out = forward(model, train.X[idx], eps)
            marginal = None
            if cfg.variant == "ib_e":
                m_idx = marg_rng.choice(train.n, size=min(cfg.mi_samples, train.n), replace=False)
                marginal = forward(model, train.X[m_idx])
            return compute_loss(loss_cfg, out, train.C[idx], train.Y[idx], marginal, use_label).total
        return step

    if cfg.regime == "joint":
        _run_phase(model, model.parameters(), concept_step(True), train, val, cfg, seed, 1,
                   lambda: _evaluate(model, val, cfg, True), result, plane_rows)
        return _finish(model, train, result)

    # two-phase regimes: concepts first, then the label head on fixed inputs
    _run_phase(model, model.encoder_params() + model.concept_params(), concept_step(False),
               train, val, cfg, seed, 1, lambda: _evaluate(model, val, cfg, False), result, plane_rows)
    calibrate_intervention_percentiles(model, train.X)
    enc_snapshot = [p.value.copy() for p in model.encoder_params() + model.concept_params()]

    if cfg.regime == "independent":
        head_in = intervention_inputs(model, train.C)
        val_in = intervention_inputs(model, val.C) if val.n else None
    else:
        # sequential: frozen predicted concepts, sampled the same way as in phase 1
        eps = eps_rng.standard_normal((train.n, k)) if stochastic else None
        head_in = forward(model, train.X, eps).c_down.value
        val_in = forward(model, val.X).c_down.value if val.n else None

    def label_step(idx):
        y_logits = model.label_head(dc.constant(head_in[idx]))
        return dc.softmax_cross_entropy(y_logits, train.Y[idx])

    def label_eval():
        if val.n == 0:
            return (np.nan,) * 6
        out = forward(model, val.X)
        y_logits = model.label_head(dc.constant(val_in))
        ce = float(label_only_loss(_as_out(out, y_logits), val.Y).total.value)
        c_acc = concept_accuracy(dc._sigmoid(out.mu.value), val.C)
        y_acc = accuracy(out.y_logits.value.argmax(axis=1), val.Y)
        return ce, np.nan, ce, c_acc, y_acc, float(entropy_c(out.sigma).value)

    _run_phase(model, model.label_params(), label_step, train, val, cfg, seed, 2, label_eval, result)
    for p, before in zip(model.encoder_params() + model.concept_params(), enc_snapshot):
        assert np.array_equal(p.value, before), "phase 2 must not touch concept parameters"
    return _finish(model, train, result)


def _as_out(out, y_logits):
    return replace(out, y_logits=y_logits)


def _finish(model: CbmModel, train: Dataset, result: FitResult) -> FitResult:
    calibrate_intervention_percentiles(model, train.X)
    return result


def build_and_fit(train: Dataset, val: Dataset, cfg: TrainConfig, seed: int) -> FitResult:
    model = init_model(train.X.shape[1], train.n_concepts, train.n_classes, cfg.hidden_sizes,
                       cfg.mode, train.groups, seed=seed)
    return fit(model, train, val, cfg, seed)
