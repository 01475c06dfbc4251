"""Group-intervention curves for IB models in soft and hard mode; one t,x,x_std CSV per model."""

import dataclasses

import numpy as np

from cibm import plots
from cibm.experiments import intervention_behaviour
from cibm.runner import write_rows

from _common import config_from, parser


def main():
    p = parser(__doc__)
    p.add_argument("--settings", default="soft-joint,hard-joint,hard-independent")
    args = p.parse_args()
    cfg, out = config_from(args, sigma_x=2.0, seeds="0,1,2")
    summary = []
    for setting in args.settings.split(","):
        mode, regime = setting.split("-")
        res = intervention_behaviour(dataclasses.replace(cfg, mode=mode, regime=regime).validate(),
                                     variants=("vanilla", "ib_b", "ib_e"))
        for name, s in res.items():
            t = np.arange(len(s.curve))
            stem = f"interventions_{setting}_{name}"
            write_rows(out / f"{stem}.csv", ["t", "x", "x_std"],
                       [[int(i), v, sd] for i, v, sd in zip(t, s.curve, s.curve_std)])
            plots.line_plot(out / f"{stem}.svg", t, s.curve, s.curve_std, title=f"{name} ({setting})",
                            xlabel="intervened groups", ylabel="class accuracy")
            summary.append([setting, name, s.auc_tti, s.nauc_tti, s.spearman, float(np.mean(s.full_accuracy)),
                            s.probe_accuracy])
            print(f"{setting:17s} {name:8s} AUC {s.auc_tti:.4f} NAUC {s.nauc_tti:.4f} rho {s.spearman:.2f} "
                  f"full {np.mean(s.full_accuracy):.4f} probe {s.probe_accuracy:.4f}")
    write_rows(out / "interventions_summary.csv",
               ["setting", "variant", "auc_tti", "nauc_tti", "spearman", "full_accuracy", "probe_accuracy"], summary)


if __name__ == "__main__":
    main()
