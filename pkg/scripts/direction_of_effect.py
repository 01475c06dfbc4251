"""Vanilla vs IB-regularised joint-soft CBMs: accuracy, concept accuracy, OIS, NIS (x100)."""

import numpy as np

from cibm.experiments import leakage_comparison
from cibm.runner import write_rows

from _common import config_from, parser


def main():
    args = parser(__doc__).parse_args()
    cfg, out = config_from(args)
    rows = []
    for name, s in leakage_comparison(cfg).items():
        row = [name]
        for metric in ("class_acc", "concept_acc", "ois", "nis"):
            vals = 100 * np.asarray(getattr(s, metric))
            row += [vals.mean(), vals.std()]
        rows.append(row)
        print(f"{name:8s} acc {row[1]:6.2f}  concept {row[3]:6.2f}  OIS {row[5]:6.2f} ± {row[6]:.2f}"
              f"  NIS {row[7]:6.2f} ± {row[8]:.2f}")
    write_rows(out / "direction_of_effect.csv",
               ["variant", "class_acc", "class_acc_std", "concept_acc", "concept_acc_std",
                "ois", "ois_std", "nis", "nis_std"], rows)


if __name__ == "__main__":
    main()
