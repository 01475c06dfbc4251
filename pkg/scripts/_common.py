"""Argument handling shared by the experiment scripts."""

import argparse
from pathlib import Path

from cibm.config import parse_config


def parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--config", default=None, help="flat 'key = value' config file")
    p.add_argument("--set", nargs="*", default=[], metavar="KEY=VALUE", help="config overrides")
    p.add_argument("--out", default="results", help="directory for the result CSV")
    return p


def config_from(args, **defaults):
    overrides = {k: str(v) for k, v in defaults.items()}
    overrides.update(dict(item.split("=", 1) for item in args.set))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return parse_config(args.config, overrides), out
