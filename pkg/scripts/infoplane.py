"""Information-plane trajectories for each loss variant (CSV + scatter SVG per seed)."""

import dataclasses

from cibm.runner import cmd_infoplane

from _common import config_from, parser


def main():
    args = parser(__doc__).parse_args()
    cfg, out = config_from(args, seeds="0")
    for variant in ("vanilla", "ib_b", "ib_e"):
        print(f"== {variant}")
        cmd_infoplane(dataclasses.replace(cfg, variant=variant, out_dir=str(out / variant)).validate())


if __name__ == "__main__":
    main()
