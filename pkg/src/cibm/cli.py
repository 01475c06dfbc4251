"""``cibm <command> [--config FILE] [--key value ...]``"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import parse_config
from .errors import CibmError, ConfigError, TrainingError
from .runner import COMMANDS


def parse_overrides(tokens: list[str]) -> dict[str, str]:
    """``--key value`` / ``--key=value`` pairs; a bare ``--flag`` means true."""
    overrides: dict[str, str] = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or len(tok) == 2:
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        elif i + 1 < len(tokens) and not tokens[i + 1].startswith("--"):
            value = tokens[i + 1]
            i += 2
        else:
            value = "true"
            i += 1
        overrides[key.replace("-", "_")] = value
    return overrides


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="cibm", description=__doc__)
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", default=None, help="flat 'key = value' config file")
    parser.add_argument("-v", "--verbose", action="store_true")
    args, rest = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config, parse_overrides(rest))
        COMMANDS[args.command](cfg)
    except TrainingError as exc:
        print(f"error: training diverged at {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except (CibmError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
