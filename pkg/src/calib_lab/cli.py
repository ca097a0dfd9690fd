"""``calib-lab``: run a vignette and write its report.

Exit codes: 0 success, 2 bad configuration, 3 too many failed replicates
(the report is still written, with the affected rows marked incomplete).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from calib_lab.calib import SimulationFailure
from calib_lab.core.types import AbcExhausted
from calib_lab.report import emit_report
from calib_lab.vignettes import VIGNETTES, VignetteConfig, is_incomplete, run_vignette

EXIT_OK, EXIT_CONFIG, EXIT_FAILURE = 0, 2, 3

log = logging.getLogger("calib_lab")


def parse_range(text: str, kind=float) -> tuple:
    """``a:b[:step]`` (inclusive, step 1 by default) or a comma list ``a,b,c``."""
    text = text.strip()
    if not text:
        raise ValueError("empty range")
    if ":" in text:
        parts = text.split(":")
        if len(parts) not in (2, 3):
            raise ValueError(f"range {text!r} must look like a:b or a:b:step")
        lo, hi = float(parts[0]), float(parts[1])
        step = float(parts[2]) if len(parts) == 3 else 1.0
        if step <= 0 or hi < lo:
            raise ValueError(f"range {text!r} must have lo <= hi and a positive step")
        k = int(np.floor((hi - lo) / step + 1e-9))
        # rounding keeps 0.05-style grids free of binary noise in the report
        values = [round(lo + i * step, 12) for i in range(k + 1)]
    else:
        values = [float(v) for v in text.split(",") if v.strip()]
    if kind is int:
        if any(v != int(v) for v in values):
            raise ValueError(f"range {text!r} must contain integers")
        return tuple(int(v) for v in values)
    return tuple(float(v) for v in values)


def _range(kind):
    def conv(text):
        try:
            return parse_range(text, kind)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return conv


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="calib-lab", description="Calibration-testing vignettes.")
    p.add_argument("--vignette", required=True, choices=VIGNETTES)
    p.add_argument("--n", type=int, default=None, help="replicates (realisations for gp-split)")
    p.add_argument("--n-strong", type=int, default=None, help="replicates of the ABC rank test")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="report path; histograms go to <out>.hist.csv")
    p.add_argument("--format", choices=("csv", "json"), default=None,
                   help="defaults to json for a .json path, csv otherwise")
    p.add_argument("--threads", type=int, default=None, help="worker threads (env CALIB_LAB_THREADS)")
    p.add_argument("--nu-range", type=_range(float), default=None)
    p.add_argument("--n-obs-range", type=_range(int), default=None)
    p.add_argument("--eps-range", type=_range(float), default=None)
    p.add_argument("--t-set", type=_range(float), default=None)
    p.add_argument("--contam-range", type=_range(float), default=None)
    p.add_argument("--s-range", type=_range(int), default=None)
    p.add_argument("--max-proposals", type=int, default=None, help="ABC proposal budget per replicate")
    p.add_argument("--max-failure-rate", type=float, default=None,
                   help="fraction of replicates allowed to fail before a row is marked incomplete")
    p.add_argument("--paper-scale", action="store_true", help="use the published sample sizes")
    p.add_argument("--timing", action="store_true", help="record wall-clock ms (breaks byte-identity)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args) -> VignetteConfig:
    threads = args.threads
    if threads is None:
        env = os.environ.get("CALIB_LAB_THREADS", "").strip()
        threads = int(env) if env else 1
    kw = {}
    for name in ("nu_range", "n_obs_range", "eps_range", "t_set", "contam_range", "s_range",
                 "max_proposals", "max_failure_rate", "n_strong"):
        value = getattr(args, name)
        if value is not None:
            kw[name] = value
    return VignetteConfig(args.vignette, n=args.n, seed=args.seed, threads=threads,
                          paper_scale=args.paper_scale, timing=args.timing, **kw)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
    except ValueError as exc:
        print(f"calib-lab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    fmt = args.format or ("json" if args.out.endswith(".json") else "csv")
    try:
        rows = run_vignette(cfg)
    except (SimulationFailure, AbcExhausted) as exc:
        print(f"calib-lab: simulation failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except ValueError as exc:
        print(f"calib-lab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        emit_report(rows, args.out, fmt)
    except OSError as exc:
        print(f"calib-lab: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    bad = [r for r in rows if is_incomplete(r)]
    for r in bad:
        print(f"calib-lab: incomplete row {r.mode} {r.param_name}={r.param_value:g}: {r.extra.get('reason')}",
              file=sys.stderr)
    log.info("wrote %d rows to %s", len(rows), args.out)
    return EXIT_FAILURE if bad else EXIT_OK


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
