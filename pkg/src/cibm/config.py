"""TrainConfig and its flat ``key = value`` text format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .datagen import SynthSpec
from .errors import ConfigError
from .losses import VARIANTS, LossConfig

REGIMES = ("joint", "independent", "sequential")
PAPER_CORRUPTION_LEVELS = (0, 4, 8, 16, 32, 64)


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.replace(" ", "").split(",") if t]


@dataclass
class TrainConfig:
    # data: "synthetic" or a path to a concept CSV
    source: str = "synthetic"
    n: int = 4096
    d: int = 32
    k: int = 16
    g: int = 4
    kc: int = 8
    p_flip: float = 0.05
    leak: float = 1.0
    sigma_x: float = 0.1
    data_seed: int = 7
    train_frac: float = 0.7
    val_frac: float = 0.15
    # model / regime
    regime: str = "joint"
    mode: str = "soft"
    variant: str = "vanilla"
    hidden: str = "64,64"
    # objective
    beta: float = 0.5
    lambda_concept: float = 1.0
    w_h: float = -1.0  # negative means "use 1 - beta"
    entropy_to_encoder: bool = False
    # optimisation
    epochs: int = 100
    batch_size: int = 128
    mi_samples: int = 64
    lr: float = 0.003
    wd: float = 0.001
    clip_norm: float = 0.0  # 0 disables clipping
    seeds: str = "0,1,2,3,4"
    # evaluation
    repeats: int = 5
    infoplane: bool = False
    infoplane_rows: int = 512
    dropout_subsample: int = 2048
    nis_points: int = 21
    probe_epochs: int = 200
    probe_lr: float = 0.05
    k_list: str = "auto"
    reuse_model: bool = False
    checkpoint: str = ""
    out_dir: str = "runs"
    data_out: str = ""  # gen-data target; empty means <out_dir>/synthetic.csv

    # -- derived views -----------------------------------------------------

    @property
    def seed_list(self) -> list[int]:
        return _ints(self.seeds)

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return tuple(_ints(self.hidden))

    @property
    def synth_spec(self) -> SynthSpec:
        return SynthSpec(n=self.n, d=self.d, k=self.k, g=self.g, kc=self.kc, p_flip=self.p_flip,
                         leak=self.leak, sigma_x=self.sigma_x, seed=self.data_seed)

    @property
    def loss_config(self) -> LossConfig:
        return LossConfig(variant=self.variant, beta=self.beta, lambda_concept=self.lambda_concept,
                          w_h=None if self.w_h < 0 else self.w_h, mi_samples=self.mi_samples,
                          entropy_to_encoder=self.entropy_to_encoder)

    @property
    def fractions(self) -> tuple[float, float, float]:
        return (self.train_frac, self.val_frac, 1.0 - self.train_frac - self.val_frac)

    def corruption_levels(self, n_concepts: int) -> list[int]:
        if self.k_list == "auto":
            return [k for k in PAPER_CORRUPTION_LEVELS if k <= n_concepts]
        levels = _ints(self.k_list)
        bad = [k for k in levels if not 0 <= k <= n_concepts]
        if bad:
            raise ConfigError(f"levels {bad} outside [0, {n_concepts}]", key="k_list")
        return levels

    def validate(self) -> "TrainConfig":
        positive = ("n", "d", "k", "g", "kc", "epochs", "batch_size", "repeats", "infoplane_rows",
                    "dropout_subsample", "probe_epochs")
        for key in positive:
            if getattr(self, key) <= 0:
                raise ConfigError("must be positive", key=key)
        if self.regime not in REGIMES:
            raise ConfigError(f"must be one of {REGIMES}", key="regime")
        if self.mode not in ("soft", "hard"):
            raise ConfigError("must be 'soft' or 'hard'", key="mode")
        if self.variant not in VARIANTS:
            raise ConfigError(f"must be one of {VARIANTS}", key="variant")
        if not 0.0 <= self.beta < 1.0:
            raise ConfigError("must lie in [0, 1)", key="beta")
        if not 0.0 <= self.p_flip < 0.5:
            raise ConfigError("must lie in [0, 0.5)", key="p_flip")
        if self.leak < 0:
            raise ConfigError("must be non-negative", key="leak")
        if self.sigma_x <= 0:
            raise ConfigError("must be positive", key="sigma_x")
        if self.lr <= 0:
            raise ConfigError("must be positive", key="lr")
        if self.wd < 0 or self.clip_norm < 0 or self.lambda_concept < 0:
            raise ConfigError("must be non-negative", key="wd/clip_norm/lambda_concept")
        if self.mi_samples < 2:
            raise ConfigError("must be at least 2", key="mi_samples")
        if not (0 < self.train_frac <= 1 and 0 <= self.val_frac and self.train_frac + self.val_frac <= 1):
            raise ConfigError("train_frac + val_frac must lie in (0, 1]", key="train_frac")
        if self.nis_points < 2:
            raise ConfigError("must be at least 2", key="nis_points")
        try:
            seeds = self.seed_list
            hidden = self.hidden_sizes
        except ValueError as exc:
            raise ConfigError(str(exc), key="seeds/hidden") from None
        if not seeds:
            raise ConfigError("needs at least one seed", key="seeds")
        if not hidden or any(h <= 0 for h in hidden):
            raise ConfigError("needs positive layer widths", key="hidden")
        if self.k_list != "auto":
            try:
                _ints(self.k_list)
            except ValueError:
                raise ConfigError("must be 'auto' or a comma list of ints", key="k_list") from None
        return self

    # -- text format -------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind in ("bool", bool):
            low = raw.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind in ("int", int):
            return int(raw)
        if kind in ("float", float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"type mismatch ({exc})", key=key) from None
    return raw


def parse_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError("unknown key", key=key)
        values[key] = _coerce(key, raw)
    return values


def parse_config(path=None, overrides: dict | None = None) -> TrainConfig:
    """Load a config file (optional) and apply overrides; overrides win."""
    values = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} does not exist")
        values.update(parse_text(p.read_text(encoding="utf-8")))
    for key, raw in (overrides or {}).items():
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ConfigError("unknown key", key=key)
        values[key] = _coerce(key, raw) if isinstance(raw, str) else raw
    return TrainConfig(**values).validate()


__all__ = ["TrainConfig", "parse_config", "parse_text", "REGIMES", "PAPER_CORRUPTION_LEVELS"]
