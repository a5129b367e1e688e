"""Command-line front end: scenario runner, cycle lister, Allan-table tool.

Exit codes: 0 success, 2 configuration error, 3 simulation error,
4 data error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigError, DataError, SimulationError
from .interrogation import read_series_csv
from .scenario import load_scenario, resolve_data_path, run_scenario
from .spectra import enumerate_closures, load_level_table, transition_frequency, vacuum_wavelength
from .stats import allan_deviation

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIMULATION = 3
EXIT_DATA = 4


def _cmd_run(args) -> int:
    config_path = resolve_data_path(args.config)
    config = load_scenario(config_path)
    out_dir = Path(args.out) if args.out else Path(config.out_dir)
    report = run_scenario(config, out_dir=out_dir, seed=args.seed)
    est = report.closure
    print(f"scenario {config.name!r} ({config.mode} mode), cycle {est.cycle.name}")
    for lo, up, sign, f, s in est.inputs:
        print(f"  {'+' if sign > 0 else '-'}{lo}->{up}: f = {f:.6g} Hz, sigma = {s:.6g} Hz")
    print(f"closure delta = {est.delta_hz:.6g} Hz, sigma = {est.sigma_hz:.6g} Hz")
    print(f"bound |delta| <= {est.bound_hz:.6g} Hz (k = {est.k:g})")
    print(f"wrote {out_dir / 'report.json'}")
    return EXIT_OK


def _cmd_closures(args) -> int:
    table = load_level_table(resolve_data_path(args.levels))
    cycles = enumerate_closures(table, max_length=args.max_cycle)
    if not cycles:
        print(f"no closures found in {table.system} (max cycle length {args.max_cycle})")
        return EXIT_OK
    print(f"{len(cycles)} closure cycle(s) in {table.system} (max cycle length {args.max_cycle}):")
    for i, cycle in enumerate(cycles, start=1):
        print(f"  [{i}] {cycle.name} ({len(cycle)} transitions)")
        for tr, sign in cycle.steps:
            f = transition_frequency(table, tr.lower, tr.upper)
            mark = "+" if sign > 0 else "-"
            print(
                f"      {mark}{tr.name:<16s} {tr.kind.value:<18s} "
                f"{mark}{vacuum_wavelength(f):.3f} nm  {mark}{f:.6e} Hz"
            )
    return EXIT_OK


def _cmd_allan(args) -> int:
    series_by_name = read_series_csv(resolve_data_path(args.series))
    if args.transition is not None:
        if args.transition not in series_by_name:
            raise DataError(
                f"transition {args.transition!r} not in series file (found: {', '.join(sorted(series_by_name))})"
            )
        series = series_by_name[args.transition]
    elif len(series_by_name) == 1:
        series = next(iter(series_by_name.values()))
    else:
        raise DataError(
            f"series file holds several transitions ({', '.join(sorted(series_by_name))}); pick one with --transition"
        )
    try:
        taus = [float(x) for x in args.taus.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"--taus: expected a comma-separated list of seconds, got {args.taus!r}") from None
    if not taus:
        raise ConfigError("--taus: at least one averaging time is required")

    lines = ["tau_s,sigma_y,n"]
    failures = []
    for tau in taus:
        try:
            point = allan_deviation(series, [tau])[0]
        except DataError as exc:
            failures.append((tau, str(exc)))
            lines.append(f"# tau {tau!r}: {exc}")
            continue
        lines.append(f"{point.tau_s!r},{point.sigma_y!r},{point.n_samples}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    for tau, message in failures:
        print(f"allan: tau {tau!r}: {message}", file=sys.stderr)
    return EXIT_DATA if failures else EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clockclosure",
        description="Closure tests on connected clock transitions: scenario runs, cycle enumeration, Allan tables.",
    )
    parser.add_argument("--version", action="version", version=f"clockclosure {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario config and write its report")
    run.add_argument("--config", required=True, help="TOML scenario (bundled name or path)")
    run.add_argument("--out", default=None, help="output directory (default: from the config)")
    run.add_argument("--seed", type=int, default=None, help="override the configured seed")
    run.set_defaults(func=_cmd_run)

    closures = sub.add_parser("closures", help="enumerate closure cycles of a level table")
    closures.add_argument("--levels", required=True, help="level-table CSV (bundled name or path)")
    closures.add_argument("--max-cycle", type=int, default=4, help="maximum cycle length (default 4)")
    closures.set_defaults(func=_cmd_closures)

    allan = sub.add_parser("allan", help="Allan-deviation table of an exported frequency series")
    allan.add_argument("--series", required=True, help="series CSV exported by a scenario run")
    allan.add_argument("--taus", required=True, help="averaging times in seconds, comma separated")
    allan.add_argument("--transition", default=None, help="transition name if the file holds several")
    allan.add_argument("--out", default=None, help="write the table here instead of stdout")
    allan.set_defaults(func=_cmd_allan)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
