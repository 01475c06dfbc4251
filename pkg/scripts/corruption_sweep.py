"""AUC_TTI / NAUC_TTI as k concepts are replaced by noise, for all three loss variants."""

from cibm.experiments import corruption_sweep
from cibm.runner import write_rows

from _common import config_from, parser


def main():
    args = parser(__doc__).parse_args()
    cfg, out = config_from(args, seeds="0,1,2")
    levels = cfg.corruption_levels(cfg.k)
    rows = []
    for name, sweep in corruption_sweep(cfg, levels).items():
        for r in sweep:
            rows.append([name, r["k"], r["auc_tti"], r["nauc_tti"], r["leakage_flag"]])
            flag = "  negative NAUC" if r["leakage_flag"] else ""
            print(f"{name:8s} k={r['k']:2d} AUC {r['auc_tti']:.4f} NAUC {r['nauc_tti']:+.4f}{flag}")
    write_rows(out / "corruption_sweep.csv", ["variant", "k", "auc_tti", "nauc_tti", "leakage_flag"], rows)


if __name__ == "__main__":
    main()
