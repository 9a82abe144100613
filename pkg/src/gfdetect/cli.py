"""Command-line front end.

Subcommands:

* ``run <config.json> [--threads N]`` executes one experiment or a sweep
  described by a JSON config and writes a CSV of metric rows (and
  optionally an SVG plot for numeric sweeps).
* ``plot <results.csv> --x <column> --out <file.svg>`` renders a CSV
  produced by ``run``.
* ``selftest`` runs the built-in invariant battery.

Exit codes: 0 success, 2 configuration error, 3 experiment error.  The
``GF_THREADS`` environment variable overrides ``--threads``.  All
randomness derives from the config's ``seed``; nothing reads the clock.

Config schema (unknown keys are rejected)::

    {
      "system":   {"n_devices": int, "n_subcarriers": int, "n_antennas": int,
                   "n_taps": int, "noise_var": float, "gains": [float, ...]?},
      "prior":    {"kind": "iid", "q": float}
                | {"kind": "group", "q": float, "k_groups": int, "epsilon": float}
                | {"kind": "mvb", "coeffs": [{"omega": [int, ...], "c": float}, ...]},
      "detector": {"kind": str, "rho": float?, "max_sweeps": int?, "tol": float?},
      "trials":    int,
      "seed":      int,
      "threshold": "calibrate" | float,
      "sweep":     {"parameter": "P"|"L"|"M"|"q"|"group_size"|"detector",
                    "values": [...]}?,
      "output":    {"csv": path, "svg": path?}
    }

Defaults for the optional detector fields: rho 1.0, max_sweeps 50,
tol 1e-6.  MVB ``omega`` entries use 1-based device indices.

Pilots live in a binary-free text format (see ``gfdetect.save_pilots``):
one line per entry, ``n l re im``, with 1-based device index n and
subcarrier index l.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from .bench import SWEEP_PARAMETERS, ExperimentError, ExperimentSpec, run_experiment, sweep
from .detect import DETECTOR_KINDS, DetectorConfig
from .plot import render_error_rate_svg
from .priors import GroupPrior, IidPrior, MvbPrior
from .signal_model import SystemConfig

CSV_HEADER = ("detector,N,L,M,P,q,trials,seed,threshold,error_rate,"
              "miss_rate,false_alarm_rate,avg_sweeps,avg_runtime_ms")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EXPERIMENT = 3


class ConfigError(Exception):
    """Invalid configuration; the message is line-anchored when possible."""


def _key_line(text: str, key: str) -> int | None:
    needle = f'"{key}"'
    for lineno, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return lineno
    return None


class _Section:
    """One config object with strict key checking and typed accessors."""

    def __init__(self, data: dict, path: str, raw_text: str, name: str):
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: section {name!r} must be an object")
        self.data = data
        self.path = path
        self.raw = raw_text
        self.name = name

    def _err(self, key: str, message: str) -> ConfigError:
        line = _key_line(self.raw, key)
        anchor = f"{self.path}:{line}" if line else self.path
        return ConfigError(f"{anchor}: {message}")

    def reject_unknown(self, allowed):
        for key in self.data:
            if key not in allowed:
                raise self._err(key, f'unknown key "{key}" in section {self.name!r}')

    def require(self, key: str):
        if key not in self.data:
            raise self._err(self.name, f'missing required key "{key}" in section {self.name!r}')
        return self.data[key]

    def get_number(self, key: str, default=None, required=False, integer=False):
        if key not in self.data:
            if required:
                self.require(key)
            return default
        value = self.data[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self._err(key, f'key "{key}" must be a number')
        if integer and int(value) != value:
            raise self._err(key, f'key "{key}" must be an integer')
        return int(value) if integer else float(value)


def _parse_prior(section: _Section, n_devices: int):
    kind = section.require("kind")
    if kind == "iid":
        section.reject_unknown({"kind", "q"})
        return IidPrior(q=section.get_number("q", required=True))
    if kind == "group":
        section.reject_unknown({"kind", "q", "k_groups", "epsilon"})
        k = section.get_number("k_groups", required=True, integer=True)
        if not 1 <= k <= n_devices:
            raise section._err("k_groups", f'"k_groups" must be in [1, {n_devices}]')
        base, extra = divmod(n_devices, k)
        groups, start = [], 0
        for g in range(k):
            size = base + (1 if g < extra else 0)
            groups.append(tuple(range(start, start + size)))
            start += size
        return GroupPrior(groups=tuple(groups), q=section.get_number("q", required=True),
                          epsilon_leak=section.get_number("epsilon", required=True))
    if kind == "mvb":
        section.reject_unknown({"kind", "coeffs"})
        entries = section.require("coeffs")
        if not isinstance(entries, list):
            raise section._err("coeffs", '"coeffs" must be a list')
        coeffs = []
        for entry in entries:
            sub = _Section(entry, section.path, section.raw, "coeffs[]")
            sub.reject_unknown({"omega", "c"})
            omega = sub.require("omega")
            if not isinstance(omega, list) or not omega:
                raise sub._err("omega", '"omega" must be a nonempty list of device indices')
            coeffs.append((tuple(int(i) - 1 for i in omega), sub.get_number("c", required=True)))
        return MvbPrior(n_devices=n_devices, coeffs=tuple(coeffs))
    raise section._err("kind", f'unknown prior kind "{kind}"')


def load_config(path: str) -> tuple[ExperimentSpec, dict | None, dict]:
    """Parse and validate a run config.

    Returns (spec, sweep description or None, output paths).
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc

    top = _Section(data, path, raw, "top level")
    top.reject_unknown({"system", "prior", "detector", "trials", "seed",
                        "threshold", "sweep", "output"})

    sys_sec = _Section(top.require("system"), path, raw, "system")
    sys_sec.reject_unknown({"n_devices", "n_subcarriers", "n_antennas",
                            "n_taps", "noise_var", "gains"})
    gains = sys_sec.data.get("gains")
    try:
        system = SystemConfig(
            n_devices=sys_sec.get_number("n_devices", required=True, integer=True),
            n_subcarriers=sys_sec.get_number("n_subcarriers", required=True, integer=True),
            n_antennas=sys_sec.get_number("n_antennas", required=True, integer=True),
            n_taps=sys_sec.get_number("n_taps", required=True, integer=True),
            noise_var=sys_sec.get_number("noise_var", required=True),
            gains=gains,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: invalid system section: {exc}") from exc

    try:
        prior = _parse_prior(_Section(top.require("prior"), path, raw, "prior"),
                             system.n_devices)
    except ValueError as exc:
        raise ConfigError(f"{path}: invalid prior section: {exc}") from exc

    det_sec = _Section(top.require("detector"), path, raw, "detector")
    det_sec.reject_unknown({"kind", "rho", "max_sweeps", "tol"})
    kind = det_sec.require("kind")
    if kind not in DETECTOR_KINDS:
        raise det_sec._err("kind", f'unknown detector kind "{kind}"')
    try:
        detector = DetectorConfig(
            kind=kind,
            rho=det_sec.get_number("rho", default=1.0),
            max_sweeps=det_sec.get_number("max_sweeps", default=50, integer=True),
            tol=det_sec.get_number("tol", default=1e-6),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: invalid detector section: {exc}") from exc

    threshold = top.require("threshold")
    if isinstance(threshold, str):
        if threshold != "calibrate":
            raise top._err("threshold", '"threshold" must be a number or "calibrate"')
    elif isinstance(threshold, bool) or not isinstance(threshold, (int, float)):
        raise top._err("threshold", '"threshold" must be a number or "calibrate"')
    else:
        threshold = float(threshold)

    sweep_desc = None
    if "sweep" in top.data:
        sw = _Section(top.data["sweep"], path, raw, "sweep")
        sw.reject_unknown({"parameter", "values"})
        parameter = sw.require("parameter")
        if parameter not in SWEEP_PARAMETERS:
            raise sw._err("parameter", f'sweep parameter must be one of {SWEEP_PARAMETERS}')
        values = sw.require("values")
        if not isinstance(values, list) or not values:
            raise sw._err("values", '"values" must be a nonempty list')
        sweep_desc = {"parameter": parameter, "values": values}

    out_sec = _Section(top.require("output"), path, raw, "output")
    out_sec.reject_unknown({"csv", "svg"})
    output = {"csv": out_sec.require("csv")}
    if "svg" in out_sec.data:
        if sweep_desc is None or sweep_desc["parameter"] not in ("P", "L", "M", "q"):
            raise out_sec._err("svg", '"svg" output needs a sweep over P, L, M, or q')
        output["svg"] = out_sec.data["svg"]

    try:
        spec = ExperimentSpec(
            system=system, prior=prior, detector=detector,
            trials=top.get_number("trials", required=True, integer=True),
            seed=top.get_number("seed", required=True, integer=True),
            threshold=threshold,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return spec, sweep_desc, output


def _row_fields(row) -> list[str]:
    def num(x) -> str:
        return f"{x:.17g}"

    return [
        row.detector, str(row.n_devices), str(row.n_subcarriers), str(row.n_antennas),
        str(row.n_taps), num(row.q), str(row.trials), str(row.seed), num(row.threshold),
        num(row.error_rate), num(row.miss_rate), num(row.false_alarm_rate),
        num(row.avg_sweeps), num(row.avg_runtime_ms),
    ]


def write_csv(path: str, rows) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(",".join(_row_fields(row)) + "\n")


def read_csv(path: str) -> list[dict]:
    try:
        with open(path, "r", encoding="ascii", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or ",".join(header) != CSV_HEADER:
                raise ConfigError(f"{path}: missing or unexpected CSV header")
            rows = []
            for record in reader:
                if len(record) != len(header):
                    raise ConfigError(f"{path}: malformed CSV record {record!r}")
                rows.append(dict(zip(header, record)))
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    return rows


def _resolve_threads(args) -> int:
    env = os.environ.get("GF_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"GF_THREADS must be an integer, got {env!r}") from exc
    return max(1, args.threads)


def cmd_run(args) -> int:
    try:
        spec, sweep_desc, output = load_config(args.config)
        threads = _resolve_threads(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if sweep_desc is None:
            rows = [run_experiment(spec, n_workers=threads)]
            print(f"{spec.detector.kind}: error_rate={rows[0].error_rate:.6g} "
                  f"threshold={rows[0].threshold:g}")
        else:
            def progress(parameter, value, row):
                print(f"{parameter}={value} {row.detector}: "
                      f"error_rate={row.error_rate:.6g} threshold={row.threshold:g}")

            rows = sweep(spec, sweep_desc["parameter"], sweep_desc["values"],
                         n_workers=threads, progress=progress)
    except ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXPERIMENT
    write_csv(output["csv"], rows)
    print(f"wrote {output['csv']}")
    if "svg" in output:
        x_col = {"P": "P", "L": "L", "M": "M", "q": "q"}[sweep_desc["parameter"]]
        svg = render_error_rate_svg(read_csv(output["csv"]), x_col)
        with open(output["svg"], "w", encoding="utf-8") as fh:
            fh.write(svg)
        print(f"wrote {output['svg']}")
    return EXIT_OK


def cmd_plot(args) -> int:
    try:
        rows = read_csv(args.csv)
        if args.x not in ("N", "L", "M", "P", "q", "trials", "threshold"):
            raise ConfigError(f"cannot use column {args.x!r} as the x axis")
        svg = render_error_rate_svg(rows, args.x)
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(svg)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_selftest(_args) -> int:
    from .selftest import run_selftest

    return run_selftest()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gfdetect",
        description="Device-activity detection benchmarks for OFDM grant-free access",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment or sweep from a JSON config")
    p_run.add_argument("config", help="path to the JSON config")
    p_run.add_argument("--threads", type=int, default=1,
                       help="worker processes (GF_THREADS overrides)")
    p_run.set_defaults(func=cmd_run)

    p_plot = sub.add_parser("plot", help="render a results CSV as an SVG line plot")
    p_plot.add_argument("csv", help="CSV file produced by the run subcommand")
    p_plot.add_argument("--x", required=True, help="column for the x axis (e.g. L, M, P, q)")
    p_plot.add_argument("--out", required=True, help="output SVG path")
    p_plot.set_defaults(func=cmd_plot)

    p_self = sub.add_parser("selftest", help="run the built-in invariant checks")
    p_self.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
