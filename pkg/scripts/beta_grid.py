"""Sweep beta for both IB variants and report accuracy, OIS and NIS per value."""

import dataclasses

import numpy as np

from cibm.experiments import leakage_comparison
from cibm.runner import write_rows

from _common import config_from, parser

GRID = (0.1, 0.2, 0.25, 0.5, 0.75, 0.9)


def main():
    p = parser(__doc__)
    p.add_argument("--betas", default=",".join(map(str, GRID)))
    args = p.parse_args()
    cfg, out = config_from(args, seeds="0,1")
    rows = []
    for beta in (float(b) for b in args.betas.split(",")):
        res = leakage_comparison(dataclasses.replace(cfg, beta=beta).validate(), variants=("ib_b", "ib_e"))
        for name, s in res.items():
            row = [name, beta, s.mean("class_acc"), s.mean("concept_acc"), s.mean("ois"), s.mean("nis"),
                   float(np.std(s.ois))]
            rows.append(row)
            print(f"beta {beta:4.2f} {name}: acc {row[2]:.4f} concept {row[3]:.4f} OIS {row[4]:.4f} NIS {row[5]:.4f}")
    write_rows(out / "beta_grid.csv", ["variant", "beta", "class_acc", "concept_acc", "ois", "nis", "ois_std"], rows)


if __name__ == "__main__":
    main()
