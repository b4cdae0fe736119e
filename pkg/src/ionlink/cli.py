"""Command-line entry point: ``ionlink <subcommand> [options]``.

Exit status is 0 on success, 2 for configuration errors and 3 when a
numerical procedure fails to converge.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .errors import ConfigError, DomainError, NumericError
from .experiments import COMMANDS, load_config

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

# --mode means a different thing per subcommand
_MODE_FIELD = {
    "tof-dist": ("window_policy", ("sigma", "quantile")),
    "rate-sweep": ("window_policy", ("sigma", "quantile")),
    "wien": ("wien_mode", ("post-acceleration", "paper-literal", "both")),
    "link-sim": ("sim_mode", ("unfiltered", "wien-filtered")),
}

_HELP = {
    "tof-dist": "arrival-time distributions over species, V2 and L",
    "rate-sweep": "OOK rate against V2, L and for the zero-field source",
    "wien": "velocity-selector sweep over aperture size",
    "link-sim": "Monte-Carlo link run checked against the closed form",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ionlink", description="Ion drift-tube communication experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in _HELP.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="INI file with [run] [source] [spread] [wien] [sim] [quadrature] sections")
        p.add_argument("--out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, help="root random seed (default: 42)")
        p.add_argument("--quadrature-order", type=int, help="largest Gauss-Hermite order (default: 64)")
        p.add_argument("--mode", choices=_MODE_FIELD[name][1],
                       help="window policy (tof-dist, rate-sweep), pass-probability mode (wien) or link mode (link-sim)")
        p.add_argument("--species", help="comma-separated species list")
        p.add_argument("--workers", type=int, help="worker threads for independent points")
        p.add_argument("--plot", action="store_true", default=None, help="also render PNG figures")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "link-sim":
            p.add_argument("--n-bits", type=int, help="number of slots to simulate")
            p.add_argument("--transcript", action="store_true", default=None, help="write per-slot transcript CSVs")
    return parser


def _overrides(args) -> dict:
    over = {
        "out": args.out,
        "seed": args.seed,
        "quadrature_order": args.quadrature_order,
        "workers": args.workers,
        "plot": args.plot,
    }
    if args.mode is not None:
        over[_MODE_FIELD[args.command][0]] = args.mode
    if args.species:
        names = tuple(s.strip().lower() for s in args.species.split(",") if s.strip())
        over["sim_species" if args.command == "link-sim" else "species"] = names
    if args.command == "link-sim":
        over["sim_n_bits"] = args.n_bits
        over["sim_transcript"] = args.transcript
    return over


def _summary(command, rows):
    if command == "tof-dist":
        for r in rows:
            print(f"{r[0]:>9} V2={r[1]:>7g} V L={r[2]:<6g} m  mean={r[3]:.6e} s  std={r[4]:.4e} s  R={r[9]:.4e} bit/s")
    elif command == "rate-sweep":
        print(f"{len(rows)} sweep points")
    elif command == "wien":
        ok = [r for r in rows if r[-1] == "ok"]
        print(f"{len(ok)} selector rows, {len(rows) - len(ok)} skipped")
    elif command == "link-sim":
        for r in rows:
            print(f"{r[0]:>9} {r[1]}: missed {r[9]:.5f} +- {r[10]:.5f} vs predicted {r[11]:.5f} -> {r[12]}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        run = load_config(args.config, _overrides(args))
        path, rows = COMMANDS[args.command](run)
    except (ConfigError, DomainError) as exc:
        print(f"ionlink: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"ionlink: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    _summary(args.command, rows)
    print(f"wrote {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
