"""Command-line entry point.

    causalcr simulate --config fig4.cfg --snr=-20:15:1 --out fig4.csv

The config file is flat ``key = value`` text (``#`` comments allowed):

    a01, a10      switching probabilities of the PU chain
    K             samples per slot
    sigma0_sq     noise variance
    snr           SNR grid in dB, ``start:stop:step`` (inclusive) or ``v1,v2,...``
    rho_max       IR cap
    n_train       training slots per SNR point
    n_eval        evaluation slots per SNR point
    seed          master seed
    methods       comma list from baseline, known, estimated, unconditional
    model         ``true`` or ``baum-welch`` (estimate A and variances on the training trace)
    workers       worker processes
    out           output path; ``.json`` selects the JSON summary

Command-line flags override the file.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from pathlib import Path

import numpy as np

from causalcr.results import emit_results
from causalcr.sweep import ConfigError, ExperimentConfig, run_sweep

_SECTION = "experiment"
_CASTS = {
    "a01": float, "a10": float, "K": int, "sigma0_sq": float, "rho_max": float,
    "n_train": int, "n_eval": int, "seed": int, "workers": int, "model": str,
}


def parse_snr_grid(text: str):
    text = text.strip()
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
            raise ConfigError(f"bad SNR range {text!r}; expected start:stop:step")
        start, stop, step = parts
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + i * step, 9) for i in range(n))
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"bad SNR list {text!r}") from exc


def _parse_methods(text: str):
    return tuple(m.strip() for m in text.split(",") if m.strip())


def load_config_file(path) -> dict:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(f"[{_SECTION}]\n" + Path(path).read_text())
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return dict(parser[_SECTION])


def build_config(raw: dict) -> tuple:
    """Turn string settings into an :class:`ExperimentConfig` plus output options."""
    raw = dict(raw)
    out = raw.pop("out", None)
    fmt = raw.pop("format", None)
    kwargs = {}
    for key, value in raw.items():
        if key == "snr":
            kwargs["snr_db"] = parse_snr_grid(value)
        elif key == "methods":
            kwargs["methods"] = _parse_methods(value)
        elif key in _CASTS:
            try:
                kwargs[key] = _CASTS[key](value)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {value!r}") from exc
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return ExperimentConfig(**kwargs), out, fmt


class _Parser(argparse.ArgumentParser):
    """Usage errors go out as the same JSON error line as every other failure."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.exit(_fail("usage", message, 2))


def _parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="causalcr", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sim = sub.add_parser("simulate", help="run an SNR sweep and write the result table")
    sim.add_argument("--config", help="key = value experiment file")
    sim.add_argument("--seed")
    sim.add_argument("--snr", help="start:stop:step or comma list, in dB (write --snr=-20:15:1)")
    sim.add_argument("--rho-max", dest="rho_max")
    sim.add_argument("--out")
    sim.add_argument("--format", choices=("csv", "json"))
    sim.add_argument("--methods")
    sim.add_argument("--n-train", dest="n_train")
    sim.add_argument("--n-eval", dest="n_eval")
    sim.add_argument("--workers")
    sim.add_argument("-v", "--verbose", action="store_true")
    return ap


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        raw = load_config_file(args.config) if args.config else {}
        for key in ("seed", "snr", "rho_max", "out", "format", "methods",
                    "n_train", "n_eval", "workers"):
            value = getattr(args, key)
            if value is not None:
                raw[key] = value
        cfg, out, fmt = build_config(raw)
        if out is None:
            raise ConfigError("an output path is required (--out or 'out' in the config)")
        fmt = fmt or ("json" if str(out).endswith(".json") else "csv")
        records = run_sweep(cfg)
        emit_results(records, out, fmt, cfg)
    except ConfigError as exc:
        return _fail("config", str(exc), 2)
    except OSError as exc:
        return _fail("io", str(exc), 1)
    failed = sum(not r.ok for r in records)
    logging.getLogger(__name__).info("wrote %d records (%d method failures) to %s",
                                     len(records), failed, out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
