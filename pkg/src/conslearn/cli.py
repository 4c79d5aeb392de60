"""Command line entry point: ``conslearn {run,sweep,table}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from .errors import ConsensusLearningError
from .harness import ExperimentConfig, SWEEPS, run, sweep, table, write_csv

# flag -> config field
OVERRIDES = {
    "nodes": ("num_nodes", int),
    "epochs": ("epochs", int),
    "mi": ("m_sends", int),
    "ni": ("n_local", int),
    "gamma": ("gamma", float),
    "mix_rate": ("mix_rate", int),
    "drop_deltas": ("drop_deltas", float),
    "drop_weights": ("drop_weights", float),
    "seed": ("seed", int),
    "dataset": ("dataset", str),
    "batch_size": ("batch_size", int),
    "lr": ("learning_rate", float),
    "delivery": ("delivery", str),
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML file of config keys")
    for flag, (_, kind) in OVERRIDES.items():
        p.add_argument("--" + flag.replace("_", "-"), dest=flag, type=kind, default=None)
    p.add_argument("--out", type=Path, required=True,
                   help="CSV file (run) or output directory (sweep, table)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="conslearn", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="one consensus or monolithic run")
    p.add_argument("--mode", choices=["consensus", "monolithic"], default=None)
    _add_common(p)
    p = sub.add_parser("sweep", help="one run per value of a parameter")
    p.add_argument("--param", required=True,
                   help=f"one of {', '.join(SWEEPS)} (aliases: mi, mix-rate, drop-deltas)")
    p.add_argument("--values", required=True, help="comma separated, e.g. 0,1,2,5")
    _add_common(p)
    p = sub.add_parser("table", help="monolithic baseline plus all three sweeps")
    _add_common(p)
    return ap


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    values = {}
    if args.config is not None:
        with open(args.config) as f:
            loaded = yaml.safe_load(f) or {}
        if not isinstance(loaded, dict):
            raise ConsensusLearningError(f"{args.config}: expected a mapping of config keys")
        values.update(loaded)
    for flag, (key, _) in OVERRIDES.items():
        if getattr(args, flag) is not None:
            values[key] = getattr(args, flag)
    if getattr(args, "mix_rate", None) is not None:
        values.setdefault("split", "biased")
    if getattr(args, "mode", None) is not None:
        values["mode"] = args.mode
    return ExperimentConfig.from_mapping(values)


def _parse_values(text: str) -> list:
    out = []
    for item in text.split(","):
        item = item.strip()
        out.append(float(item) if any(c in item for c in ".eE") else int(item))
    return out


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args)
        if args.command == "run":
            result = run(config)
            write_csv(result.records, args.out)
            final = result.final()
            print(f"{config.mode}: test loss {final.loss:.4f} accuracy {final.accuracy:.4f}")
        elif args.command == "sweep":
            _, rows = sweep(config, args.param, _parse_values(args.values), args.out)
            _print_rows(rows)
        else:
            _print_rows(table(config, args.out))
    except (ConsensusLearningError, OSError, ValueError) as exc:
        print(f"conslearn: error: {exc}", file=sys.stderr)
        return 2
    return 0


def _print_rows(rows) -> None:
    for r in rows:
        print(f"{r.experiment:<12} {r.parameter:>4} {r.value:>5}  loss {r.loss:.4f}  acc {r.accuracy:.4f}")


if __name__ == "__main__":
    sys.exit(main())
