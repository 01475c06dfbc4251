"""Experiment commands: train, eval, intervene, leakage, corrupt-sweep, infoplane, gen-data.

Every command takes a validated TrainConfig, writes CSVs (UTF-8, LF, repr
floats) into the output directory and returns the rows it wrote, so scripts
and tests can use the numbers without re-reading files.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import plots
from .config import TrainConfig, parse_config
from .datagen import (Dataset, corrupt_concepts, group_columns, load_concept_csv, make_synthetic,
                      random_keep, selective_keep, split, write_csv)
from .errors import ContractError
from .info import InfoPlanePoint
from .metrics import (accuracy, auc_tti, concept_accuracy, intervention_curve, nauc_tti, nis, ois,
                      write_metrics_report)
from .model import CbmModel, load_checkpoint, predict, save_checkpoint
from .train import EpochLog, build_and_fit

log = logging.getLogger(__name__)


@dataclass
class RunRecord:
    config: dict
    logs: dict[int, list[EpochLog]] = field(default_factory=dict)
    final: dict[str, list[float]] = field(default_factory=dict)
    infoplane: dict[int, list[InfoPlanePoint]] = field(default_factory=dict)
    wall_clock: float = 0.0

    def config_roundtrip(self) -> TrainConfig:
        return parse_config(overrides=self.config)


# ---------------------------------------------------------------------------
# plumbing


def out_dir(cfg: TrainConfig) -> Path:
    path = Path(os.environ.get("CIBM_OUT") or cfg.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _print_report(rows: list[dict]) -> None:
    for r in rows:
        print(f"{r['name']}: {r['value']:.4f} ± {r['std']:.4f} (n={r['n_seeds']})")


def load_data(cfg: TrainConfig) -> tuple[Dataset, Dataset, Dataset]:
    ds = make_synthetic(cfg.synth_spec) if cfg.source == "synthetic" else load_concept_csv(cfg.source)
    return split(ds, cfg.fractions, seed=cfg.data_seed)


def checkpoint_path(cfg: TrainConfig, seed: int) -> Path:
    path = out_dir(cfg) / "checkpoints"
    path.mkdir(exist_ok=True)
    return path / f"seed{seed}.npz"


def _config_echo(cfg: TrainConfig) -> dict:
    return dataclasses.asdict(cfg)


def train_models(cfg: TrainConfig, train: Dataset, val: Dataset, record: RunRecord | None = None,
                 save: bool = True) -> dict[int, CbmModel]:
    models = {}
    for seed in cfg.seed_list:
        result = build_and_fit(train, val, cfg, seed)
        models[seed] = result.model
        if record is not None:
            record.logs[seed] = result.logs
            record.infoplane[seed] = result.infoplane
        if save:
            save_checkpoint(result.model, checkpoint_path(cfg, seed), _config_echo(cfg))
        log.info("seed %d trained (%d epoch logs)", seed, len(result.logs))
    return models


def models_for(cfg: TrainConfig, train: Dataset, val: Dataset, require_groups: bool = False) -> dict[int, CbmModel]:
    """The explicit checkpoint, else per-seed checkpoints from a previous train, else fresh training."""
    if cfg.checkpoint:
        model, _ = load_checkpoint(cfg.checkpoint, require_groups=require_groups)
        return {cfg.seed_list[0]: model}
    models = {}
    for seed in cfg.seed_list:
        path = checkpoint_path(cfg, seed)
        if path.exists():
            models[seed], _ = load_checkpoint(path, require_groups=require_groups)
        else:
            one = dataclasses.replace(cfg, seeds=str(seed))
            models.update(train_models(one, train, val))
    return models


# ---------------------------------------------------------------------------
# commands


def cmd_train(cfg: TrainConfig) -> RunRecord:
    start = time.perf_counter()
    train, val, test = load_data(cfg)
    record = RunRecord(config=_config_echo(cfg))
    models = train_models(cfg, train, val, record)
    for seed, model in models.items():
        probs, pred = predict(model, test.X)
        record.final.setdefault("class_acc", []).append(accuracy(pred, test.Y))
        record.final.setdefault("concept_acc", []).append(concept_accuracy(probs, test.C))
    record.wall_clock = time.perf_counter() - start
    out = out_dir(cfg)
    rows = [[seed, e.phase, e.epoch, e.train_loss, e.val_loss, e.val_concept_bce, e.val_label_ce,
             e.concept_acc, e.class_acc, e.entropy]
            for seed, logs in record.logs.items() for e in logs]
    write_rows(out / "train_log.csv", ["seed", "phase", "epoch", "train_loss", "val_loss", "val_concept_bce",
                                       "val_label_ce", "concept_acc", "class_acc", "entropy"], rows)
    rows = write_metrics_report(record.final, out / "summary.csv", out / "summary.json")
    (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8", newline="\n")
    (out / "run.json").write_text(json.dumps({"config": record.config, "wall_clock": record.wall_clock},
                                             indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")
    first = cfg.seed_list[0]
    val_curve = [e.val_loss for e in record.logs[first]]
    if val_curve and np.all(np.isfinite(val_curve)):
        plots.line_plot(out / "val_loss.svg", np.arange(len(val_curve)), val_curve,
                        title=f"validation loss (seed {first})", xlabel="epoch", ylabel="loss")
    _print_report(rows)
    return record


def cmd_eval(cfg: TrainConfig) -> dict[str, list[float]]:
    train, val, test = load_data(cfg)
    models = models_for(cfg, train, val)
    values: dict[str, list[float]] = {}
    for seed, model in models.items():
        probs, pred = predict(model, test.X)
        values.setdefault("class_acc", []).append(accuracy(pred, test.Y))
        values.setdefault("concept_acc", []).append(concept_accuracy(probs, test.C))
        values.setdefault("ois", []).append(ois(probs, test.C))
        values.setdefault("nis", []).append(nis(probs, test.C, np.linspace(0, 1, cfg.nis_points), seed=seed,
                                                probe_epochs=cfg.probe_epochs, probe_lr=cfg.probe_lr))
    out = out_dir(cfg)
    _print_report(write_metrics_report(values, out / "metrics.csv", out / "metrics.json"))
    return values


def _pooled_curve(models: dict[int, CbmModel], test: Dataset, cfg: TrainConfig):
    """Intervention accuracies pooled over seeds x repeats: (mean, std, per-seed curves)."""
    per_seed = {seed: intervention_curve(model, test, cfg.repeats, seed) for seed, model in models.items()}
    stacked = np.vstack([c.per_repeat for c in per_seed.values()])
    return stacked.mean(axis=0), stacked.std(axis=0), per_seed


def cmd_intervene(cfg: TrainConfig) -> dict:
    train, val, test = load_data(cfg)
    models = models_for(cfg, train, val, require_groups=True)
    for model in models.values():
        if len(model.groups) != test.n_groups:
            raise ContractError("checkpoint groups do not match the dataset's groups")
    mean, std, _ = _pooled_curve(models, test, cfg)
    out = out_dir(cfg)
    t = np.arange(len(mean))
    write_rows(out / "interventions.csv", ["t", "x", "x_std"], [[int(i), m, s] for i, m, s in zip(t, mean, std)])
    plots.line_plot(out / "interventions.svg", t, mean, std, title="accuracy after group interventions",
                    xlabel="intervened groups", ylabel="class accuracy")
    result = {"curve": mean, "std": std, "auc_tti": auc_tti(mean), "nauc_tti": nauc_tti(mean)}
    print(f"AUC_TTI: {result['auc_tti']!r}")
    print(f"NAUC_TTI: {result['nauc_tti']!r}")
    return result


def cmd_leakage(cfg: TrainConfig) -> dict[str, dict[str, list[float]]]:
    """OIS / NIS on the complete concept set, after selective and after random group dropout.

    Dropout removes concept columns from an already-trained model's
    predictions; selective dropout ranks groups by label information on the
    training split. The table is written x100 and the selective column has no
    std because its configuration is unique.
    """
    train, val, test = load_data(cfg)
    models = models_for(cfg, train, val)
    grid = np.linspace(0, 1, cfg.nis_points)
    settings = {"complete": [list(range(test.n_groups))],
                "selective": [selective_keep(train, cfg.dropout_subsample)],
                "random": [random_keep(test.n_groups, r) for r in range(cfg.repeats)]}
    table: dict[str, dict[str, list[float]]] = {"OIS": {}, "NIS": {}}
    for seed, model in models.items():
        probs, _ = predict(model, test.X)
        for name, keeps in settings.items():
            for keep in keeps:
                cols = group_columns(test.groups, keep)
                p, c = probs[:, cols], test.C[:, cols]
                table["OIS"].setdefault(name, []).append(ois(p, c))
                table["NIS"].setdefault(name, []).append(
                    nis(p, c, grid, seed=seed, probe_epochs=cfg.probe_epochs, probe_lr=cfg.probe_lr))
    rows = []
    for metric, cols in table.items():
        v = {name: 100.0 * np.asarray(vals) for name, vals in cols.items()}
        rows.append([metric, np.mean(v["complete"]), np.std(v["complete"]), np.mean(v["selective"]),
                     np.mean(v["random"]), np.std(v["random"])])
    header = ["metric", "complete", "complete_std", "selective", "random", "random_std"]
    write_rows(out_dir(cfg) / "leakage.csv", header, rows)
    for r in rows:
        print(f"{r[0]} (x100): complete {r[1]:.2f} ± {r[2]:.2f} | selective {r[3]:.2f} | random {r[4]:.2f} ± {r[5]:.2f}")
    return table


def cmd_corrupt_sweep(cfg: TrainConfig) -> list[dict]:
    """AUC_TTI / NAUC_TTI as k concept columns are replaced by noise."""
    ds = make_synthetic(cfg.synth_spec) if cfg.source == "synthetic" else load_concept_csv(cfg.source)
    clean = split(ds, cfg.fractions, seed=cfg.data_seed)
    base_models = models_for(cfg, clean[0], clean[1]) if cfg.reuse_model else None
    results = []
    for k in cfg.corruption_levels(ds.n_concepts):
        train, val, test = split(corrupt_concepts(ds, k, cfg.data_seed), cfg.fractions, seed=cfg.data_seed)
        if base_models is not None:
            models = base_models
        elif k == 0:
            models = models_for(cfg, train, val)
        else:
            models = train_models(cfg, train, val, save=False)
        mean, _, per_seed = _pooled_curve(models, test, cfg)
        aucs = [auc_tti(c.per_repeat.mean(axis=0)) for c in per_seed.values()]
        naucs = [nauc_tti(c.per_repeat.mean(axis=0)) for c in per_seed.values()]
        row = {"k": k, "auc_tti": auc_tti(mean), "auc_tti_std": float(np.std(aucs)),
               "nauc_tti": nauc_tti(mean), "nauc_tti_std": float(np.std(naucs))}
        row["leakage_flag"] = row["nauc_tti"] < 0
        results.append(row)
        log.info("k=%d AUC_TTI=%.4f NAUC_TTI=%.4f", k, row["auc_tti"], row["nauc_tti"])
    header = ["k", "auc_tti", "auc_tti_std", "nauc_tti", "nauc_tti_std", "leakage_flag"]
    write_rows(out_dir(cfg) / "corruption.csv", header, [[r[h] for h in header] for r in results])
    for r in results:
        flag = "  (negative NAUC: possible leakage)" if r["leakage_flag"] else ""
        print(f"k={r['k']}: AUC_TTI {r['auc_tti']:.4f} ± {r['auc_tti_std']:.4f}, "
              f"NAUC_TTI {r['nauc_tti']:.4f} ± {r['nauc_tti_std']:.4f}{flag}")
    return results


def cmd_infoplane(cfg: TrainConfig) -> dict[int, list[InfoPlanePoint]]:
    train, val, _ = load_data(cfg)
    cfg = dataclasses.replace(cfg, infoplane=True)
    record = RunRecord(config=_config_echo(cfg))
    train_models(cfg, train, val, record, save=False)
    out = out_dir(cfg)
    rows = [[seed, p.epoch, p.I_xz, p.I_zc, p.I_xc, p.I_cy] for seed, pts in record.infoplane.items() for p in pts]
    write_rows(out / "infoplane.csv", ["seed", "epoch", "I_xz", "I_zc", "I_xc", "I_cy"], rows)
    for seed, pts in record.infoplane.items():
        t = [p.epoch for p in pts]
        xc = [[p.epoch, p.I_xc, p.I_cy] for p in pts]
        xz = [[p.epoch, p.I_xz, p.I_zc] for p in pts]
        write_rows(out / f"infoplane_xc_cy_seed{seed}.csv", ["t", "x", "y"], xc)
        write_rows(out / f"infoplane_xz_zc_seed{seed}.csv", ["t", "x", "y"], xz)
        plots.scatter_plot(out / f"infoplane_xc_cy_seed{seed}.svg", [r[1] for r in xc], [r[2] for r in xc], t,
                           title="I(X;C) vs I(C;Y)", xlabel="I(X;C) [nats]", ylabel="I(C;Y) [nats]")
        plots.scatter_plot(out / f"infoplane_xz_zc_seed{seed}.svg", [r[1] for r in xz], [r[2] for r in xz], t,
                           title="I(X;Z) vs I(Z;C)", xlabel="I(X;Z) [nats]", ylabel="I(Z;C) [nats]")
        print(f"seed {seed}: I(C;Y) {pts[0].I_cy:.4f} -> {pts[-1].I_cy:.4f} over {len(pts)} snapshots")
    return record.infoplane


def cmd_gendata(cfg: TrainConfig) -> Path:
    path = Path(cfg.data_out) if cfg.data_out else out_dir(cfg) / "synthetic.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    ds = make_synthetic(cfg.synth_spec)
    write_csv(ds, path)
    print(f"wrote {ds.n} rows to {path}")
    return path


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "intervene": cmd_intervene,
    "leakage": cmd_leakage,
    "corrupt-sweep": cmd_corrupt_sweep,
    "infoplane": cmd_infoplane,
    "gen-data": cmd_gendata,
}
