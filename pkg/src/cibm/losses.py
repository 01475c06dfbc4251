"""Training objectives: vanilla CBM, entropy-surrogate IB (ib_b), estimator IB (ib_e)."""

from __future__ import annotations

from dataclasses import dataclass

from . import diffcore as dc
from .errors import ConfigError
from .info import GaussBatch, entropy_c, mi_xc
from .model import ForwardOut

VARIANTS = ("vanilla", "ib_b", "ib_e")


@dataclass
class LossConfig:
    variant: str = "vanilla"
    beta: float = 0.5
    lambda_concept: float = 1.0
    # entropy weight for ib_b; None means (1 - beta)
    w_h: float | None = None
    mi_samples: int = 64
    # ib_b ablation: let the entropy gradient reach the encoder
    entropy_to_encoder: bool = False

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"must be one of {VARIANTS}", key="variant")
        if not 0.0 <= self.beta < 1.0:
            raise ConfigError("must lie in [0, 1)", key="beta")
        if self.lambda_concept < 0:
            raise ConfigError("must be non-negative", key="lambda_concept")
        if self.w_h is not None and self.w_h < 0:
            raise ConfigError("must be non-negative", key="w_h")
        if self.mi_samples < 2:
            raise ConfigError("must be at least 2", key="mi_samples")

    @property
    def entropy_weight(self) -> float:
        return 1.0 - self.beta if self.w_h is None else self.w_h


@dataclass
class LossParts:
    """The scalar loss plus its pieces, as floats, for logging."""

    total: dc.Node
    label_ce: float = 0.0
    concept_bce: float = 0.0
    entropy: float = 0.0
    mi: float = 0.0


def _label_term(out: ForwardOut, y, use_label: bool):
    return dc.softmax_cross_entropy(out.y_logits, y) if use_label else None


def _combine(terms) -> dc.Node:
    terms = [t for t in terms if t is not None]
    acc = terms[0]
    for t in terms[1:]:
        acc = dc.add(acc, t)
    return acc


def loss_vanilla(out: ForwardOut, c_true, y, lambda_concept: float = 1.0,
                 use_label: bool = True) -> LossParts:
    """CE(y) + lambda * BCE(c)."""
    ce = _label_term(out, y, use_label)
    bce = dc.bce_with_logits(out.c_logits, c_true)
    total = _combine([ce, dc.scale(bce, lambda_concept)])
    return LossParts(total, float(ce.value) if ce is not None else 0.0, float(bce.value))


def loss_ib_b(out: ForwardOut, c_true, y, beta: float = 0.5, w_h: float | None = None,
              use_label: bool = True, entropy_to_encoder: bool = False) -> LossParts:
    """CE(y) + (1 - beta) BCE(c) - w_H * H(C) / K.

    H(C) is the batch mean of sum_k log sigma_k. It is divided by K so that it
    sits on the same per-concept scale as the element-averaged BCE; without
    that, sigma grows without bound. By default H(C) is computed from the sigma
    head applied to stop_gradient(z), so the entropy term never reaches the
    encoder.
    """
    if not 0.0 <= beta < 1.0:
        raise ConfigError("must lie in [0, 1)", key="beta")
    w_h = 1.0 - beta if w_h is None else w_h
    ce = _label_term(out, y, use_label)
    bce = dc.bce_with_logits(out.c_logits, c_true)
    h = entropy_c(out.sigma if entropy_to_encoder else out.sigma_sg)
    k = out.sigma.shape[1]
    total = _combine([ce, dc.scale(bce, 1.0 - beta), dc.scale(h, -w_h / k)])
    return LossParts(total, float(ce.value) if ce is not None else 0.0, float(bce.value), float(h.value))


def loss_ib_e(out: ForwardOut, c_true, y, beta: float, marginal_out: ForwardOut,
              use_label: bool = True) -> LossParts:
    """CE(y) + BCE(c) + beta * I(X;C) / K; the additive constant rho is dropped.

    I(X;C) is estimated for the whole concept vector, so like the entropy term
    of :func:`loss_ib_b` it is divided by K to match the element-averaged BCE.
    Without that, the penalty dominates whenever the label loss does not push
    back (hard concepts, phase 1 of two-phase training) and concepts collapse.
    """
    if not 0.0 <= beta < 1.0:
        raise ConfigError("must lie in [0, 1)", key="beta")
    if marginal_out.mu.shape[0] < 2:
        raise ConfigError("marginal batch needs at least 2 rows", key="mi_samples")
    ce = _label_term(out, y, use_label)
    bce = dc.bce_with_logits(out.c_logits, c_true)
    mi = mi_xc(GaussBatch(out.mu, out.sigma, out.c_logits),
               GaussBatch(marginal_out.mu, marginal_out.sigma))
    total = _combine([ce, bce, dc.scale(mi, beta / out.mu.shape[1])])
    return LossParts(total, float(ce.value) if ce is not None else 0.0, float(bce.value), 0.0, float(mi.value))


def compute_loss(cfg: LossConfig, out: ForwardOut, c_true, y, marginal_out: ForwardOut | None = None,
                 use_label: bool = True) -> LossParts:
    if cfg.variant == "vanilla":
        return loss_vanilla(out, c_true, y, cfg.lambda_concept, use_label)
    if cfg.variant == "ib_b":
        return loss_ib_b(out, c_true, y, cfg.beta, cfg.entropy_weight, use_label, cfg.entropy_to_encoder)
    if cfg.variant == "ib_e":
        if marginal_out is None:
            raise ConfigError("ib_e needs a marginal batch", key="mi_samples")
        return loss_ib_e(out, c_true, y, cfg.beta, marginal_out, use_label)
    raise ConfigError(f"must be one of {VARIANTS}", key="variant")


def label_only_loss(out: ForwardOut, y) -> LossParts:
    ce = dc.softmax_cross_entropy(out.y_logits, y)
    return LossParts(ce, float(ce.value))


def is_stochastic(variant: str) -> bool:
    """Vanilla CBMs use deterministic concept logits; the IB variants sample them."""
    return variant != "vanilla"


__all__ = ["LossConfig", "LossParts", "VARIANTS", "compute_loss", "loss_ib_b", "loss_ib_e",
           "loss_vanilla", "label_only_loss", "is_stochastic"]
