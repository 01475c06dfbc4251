"""CBM pipeline x -> z -> c -> y with a Gaussian concept head."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import diffcore as dc
from .datagen import rng_for
from .errors import ContractError, DimensionError, ValidationError

CONCEPT_MODES = ("soft", "hard")


@dataclass
class Layer:
    W: dc.Node
    b: dc.Node

    def __call__(self, x: dc.Node) -> dc.Node:
        return dc.dense(self.W, self.b, x)

    @property
    def params(self) -> list[dc.Node]:
        return [self.W, self.b]


@dataclass
class CbmModel:
    encoder: list[Layer]
    mu_head: Layer
    sigma_head: Layer
    label_head: Layer
    concept_mode: str = "soft"
    groups: list[list[int]] = field(default_factory=list)
    # [K×2] (low, high) concept logits used when intervening in soft mode
    intervention_percentiles: np.ndarray | None = None

    def __post_init__(self):
        k = self.n_concepts
        if self.sigma_head.W.shape[0] != k or self.label_head.W.shape[1] != k:
            raise DimensionError("concept heads and label head disagree on K")
        if self.concept_mode not in CONCEPT_MODES:
            raise ValidationError(f"concept_mode must be one of {CONCEPT_MODES}")
        if not self.groups:
            self.groups = [[i] for i in range(k)]

    @property
    def n_concepts(self) -> int:
        return self.mu_head.W.shape[0]

    @property
    def n_classes(self) -> int:
        return self.label_head.W.shape[0]

    @property
    def d_in(self) -> int:
        return (self.encoder[0].W if self.encoder else self.mu_head.W).shape[1]

    @property
    def hidden(self) -> list[int]:
        return [layer.W.shape[0] for layer in self.encoder]

    def encoder_params(self) -> list[dc.Node]:
        return [p for layer in self.encoder for p in layer.params]

    def concept_params(self) -> list[dc.Node]:
        return self.mu_head.params + self.sigma_head.params

    def label_params(self) -> list[dc.Node]:
        return self.label_head.params

    def parameters(self) -> list[dc.Node]:
        return self.encoder_params() + self.concept_params() + self.label_params()

    def param_arrays(self) -> dict[str, np.ndarray]:
        named = {}
        for i, layer in enumerate(self.encoder):
            named[f"encoder{i}.W"], named[f"encoder{i}.b"] = layer.W.value, layer.b.value
        for name in ("mu_head", "sigma_head", "label_head"):
            layer = getattr(self, name)
            named[f"{name}.W"], named[f"{name}.b"] = layer.W.value, layer.b.value
        return named


@dataclass
class ForwardOut:
    z: dc.Node
    mu: dc.Node
    log_sigma: dc.Node
    sigma: dc.Node
    # sigma recomputed from stop_gradient(z): the entropy term trains the head only
    sigma_sg: dc.Node
    c_logits: dc.Node
    c_down: dc.Node
    y_logits: dc.Node


def _uniform_layer(rng: np.random.Generator, fan_out: int, fan_in: int, bound: float) -> Layer:
    W = rng.uniform(-bound, bound, size=(fan_out, fan_in))
    b = rng.uniform(-bound, bound, size=fan_out)
    return Layer(dc.parameter(W), dc.parameter(b))


def init_model(d_in: int, n_concepts: int, n_classes: int, hidden=(64, 64),
               concept_mode: str = "soft", groups=None, seed: int = 0) -> CbmModel:
    """Kaiming-uniform encoder, 1/sqrt(fan_in) heads; sigma head starts near sigma = 1."""
    if min(d_in, n_concepts, n_classes) <= 0 or any(h <= 0 for h in hidden):
        raise ValidationError("all layer sizes must be positive")
    rng = rng_for(seed, "init")
    encoder = []
    fan_in = d_in
    for width in hidden:
        encoder.append(_uniform_layer(rng, width, fan_in, np.sqrt(6.0 / fan_in)))
        encoder[-1].b = dc.parameter(np.zeros(width))
        fan_in = width
    mu_head = _uniform_layer(rng, n_concepts, fan_in, 1.0 / np.sqrt(fan_in))
    sigma_head = _uniform_layer(rng, n_concepts, fan_in, 0.1 / np.sqrt(fan_in))
    sigma_head.b = dc.parameter(np.zeros(n_concepts))
    label_head = _uniform_layer(rng, n_classes, n_concepts, 1.0 / np.sqrt(n_concepts))
    return CbmModel(encoder, mu_head, sigma_head, label_head, concept_mode,
                    [list(g) for g in groups] if groups else [])


def forward(model: CbmModel, X, eps=None, mode: str | None = None) -> ForwardOut:
    """Run the pipeline on a batch.

    ``eps`` is the standard-normal noise for the reparameterised concept
    logits; ``None`` means eps = 0 (evaluation). ``mode`` overrides the
    model's soft/hard concept mode.
    """
    mode = mode or model.concept_mode
    x = dc.constant(X)
    if x.value.ndim != 2 or x.shape[1] != model.d_in:
        raise DimensionError(f"expected X [B×{model.d_in}], got {x.shape}")
    h = x
    for layer in model.encoder:
        h = dc.relu(layer(h))
    z = h
    mu = model.mu_head(z)
    log_sigma = model.sigma_head(z)
    sigma = dc.exp(log_sigma)
    sigma_sg = dc.exp(model.sigma_head(dc.stop_gradient(z)))
    if eps is None:
        c_logits = mu
    else:
        eps = np.asarray(eps, dtype=np.float64)
        if eps.shape != mu.shape:
            raise DimensionError(f"eps shape {eps.shape} != {mu.shape}")
        c_logits = dc.reparam_sample(mu, log_sigma, eps)
    if mode == "soft":
        c_down = c_logits
    elif mode == "hard":
        c_down = dc.binarize(mu, 0.0)  # sigmoid(mu) > 0.5
    else:
        raise ValidationError(f"unknown concept mode {mode!r}")
    y_logits = model.label_head(c_down)
    return ForwardOut(z, mu, log_sigma, sigma, sigma_sg, c_logits, c_down, y_logits)


def predict(model: CbmModel, X, batch_size: int = 4096) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode concept probabilities and class predictions."""
    probs, preds = [], []
    for start in range(0, len(X), batch_size):
        out = forward(model, X[start:start + batch_size])
        probs.append(dc._sigmoid(out.mu.value))
        preds.append(out.y_logits.value.argmax(axis=1))
    if not probs:
        return np.zeros((0, model.n_concepts)), np.zeros(0, dtype=np.int64)
    return np.vstack(probs), np.concatenate(preds)


def calibrate_intervention_percentiles(model: CbmModel, X, low: float = 5.0, high: float = 95.0) -> CbmModel:
    """Store per-concept (5th, 95th) percentiles of the predicted mean logits."""
    mu = forward(model, X).mu.value
    model.intervention_percentiles = np.stack(
        [np.percentile(mu, low, axis=0), np.percentile(mu, high, axis=0)], axis=1)
    return model


def intervention_inputs(model: CbmModel, c_true) -> np.ndarray:
    """What the label head sees when every concept is set to its ground truth."""
    c_true = np.asarray(c_true, dtype=np.float64)
    if model.concept_mode == "hard":
        return c_true.copy()
    if model.intervention_percentiles is None:
        raise ContractError("model has no intervention percentiles; calibrate it first")
    lo, hi = model.intervention_percentiles[:, 0], model.intervention_percentiles[:, 1]
    return np.where(c_true > 0.5, hi[None, :], lo[None, :])


def intervene(out: ForwardOut, c_true, group_ids, model: CbmModel) -> ForwardOut:
    """Overwrite the concepts of the selected groups with ground truth and recompute y."""
    c_true = np.asarray(c_true, dtype=np.float64)
    if c_true.shape != out.c_down.shape:
        raise DimensionError("c_true must match the concept batch shape")
    if not np.all((c_true == 0) | (c_true == 1)):
        raise ValidationError("c_true must be binary")
    cols = []
    for g in group_ids:
        if not isinstance(g, (int, np.integer)) or not 0 <= g < len(model.groups):
            raise ValidationError(f"unknown group id {g!r}")
        cols.extend(model.groups[g])
    if not cols:
        return out
    cols = np.asarray(sorted(set(cols)))
    c_down = out.c_down.value.copy()
    c_down[:, cols] = intervention_inputs(model, c_true)[:, cols]
    c_node = dc.constant(c_down)
    return replace(out, c_down=c_node, y_logits=model.label_head(c_node))


# ---------------------------------------------------------------------------
# checkpoints: a single .npz holding arrays plus a JSON header


def save_checkpoint(model: CbmModel, path, config_echo: dict | None = None) -> None:
    header = {
        "d_in": model.d_in, "n_concepts": model.n_concepts, "n_classes": model.n_classes,
        "hidden": model.hidden, "concept_mode": model.concept_mode, "groups": model.groups,
        "config": config_echo or {},
    }
    arrays = dict(model.param_arrays())
    if model.intervention_percentiles is not None:
        arrays["intervention_percentiles"] = model.intervention_percentiles
    arrays["__header__"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    with open(Path(path), "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path, require_groups: bool = False) -> tuple[CbmModel, dict]:
    """Rebuild a model from :func:`save_checkpoint` output; returns (model, config echo)."""
    with np.load(Path(path)) as data:
        if "__header__" not in data.files:
            raise ContractError(f"{path} is not a checkpoint (no header)")
        header = json.loads(bytes(data["__header__"]).decode())
        arrays = {k: data[k].copy() for k in data.files if k != "__header__"}
    if require_groups and not header.get("groups"):
        raise ContractError(f"{path} carries no concept-group metadata")

    def layer(name):
        return Layer(dc.parameter(arrays[f"{name}.W"]), dc.parameter(arrays[f"{name}.b"]))

    model = CbmModel(
        encoder=[layer(f"encoder{i}") for i in range(len(header["hidden"]))],
        mu_head=layer("mu_head"), sigma_head=layer("sigma_head"), label_head=layer("label_head"),
        concept_mode=header["concept_mode"], groups=header.get("groups") or [],
        intervention_percentiles=arrays.get("intervention_percentiles"),
    )
    return model, header["config"]
