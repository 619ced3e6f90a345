"""Command-line interface.

Subcommands::

    fit        --config CFG [--seed N --chains N --burnin N --iter N --thin N
                             --workers N --strict --out-dir DIR]
    summarize  RUN_DIR
    diagnose   RUN_DIR [--strict]
    derive     RUN_DIR [--request FILE] [--out-dir DIR]
    simulate   --family F [--n N --seed N] --out-dir DIR

Precedence for chain settings: command-line flag, then the config's
``chains`` section, then the ChainConfig defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import io
from .diagnostics import summarize
from .models import FAMILIES
from .simulate import default_scenario, simulate

log = logging.getLogger("bayesurv")

EXIT_PSRF = 3


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bayesurv", description="Bayesian survival models via adaptive MCMC")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a model described by a JSON config")
    fit.add_argument("--config", required=True)
    fit.add_argument("--seed", type=int)
    fit.add_argument("--chains", type=int)
    fit.add_argument("--burnin", type=int)
    fit.add_argument("--iter", type=int)
    fit.add_argument("--thin", type=int)
    fit.add_argument("--workers", type=int)
    fit.add_argument("--strict", action="store_true", help="exit nonzero when any PSRF exceeds --psrf-max")
    fit.add_argument("--psrf-max", type=float, default=io.DEFAULT_PSRF_THRESHOLD)
    fit.add_argument("--out-dir", default="fit_output")

    sm = sub.add_parser("summarize", help="posterior summary table of a fit directory")
    sm.add_argument("run_dir")
    sm.add_argument("--out-dir")

    dg = sub.add_parser("diagnose", help="PSRF per parameter of a fit directory")
    dg.add_argument("run_dir")
    dg.add_argument("--strict", action="store_true")
    dg.add_argument("--psrf-max", type=float, default=io.DEFAULT_PSRF_THRESHOLD)

    dv = sub.add_parser("derive", help="derived quantities from a fit directory")
    dv.add_argument("run_dir")
    dv.add_argument("--request", help="JSON file with one request or a list of requests")
    dv.add_argument("--out-dir")

    sim = sub.add_parser("simulate", help="write a synthetic dataset and a matching config")
    sim.add_argument("--family", required=True, choices=FAMILIES)
    sim.add_argument("--n", type=int, default=500)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out-dir", required=True)
    return ap


def _print_frame(df):
    with pd.option_context("display.max_rows", None, "display.width", 160):
        print(df.to_string(float_format=lambda v: f"{v:.4f}"))


def _check_psrf(diag, limit, strict):
    bad = diag[diag["psrf"] > limit]
    if len(bad):
        log.warning("PSRF above %.3g for %s", limit, ", ".join(bad["parameter"]))
        if strict:
            return EXIT_PSRF
    return 0


def cmd_fit(args):
    config = io.FitConfig.load(args.config).with_overrides(
        seed=args.seed, n_chains=args.chains, burn_in=args.burnin, n_iter=args.iter,
        thin=args.thin, n_workers=args.workers)
    res = io.run_fit(config, args.out_dir)
    _print_frame(res["summary"])
    print(f"wrote {', '.join(str(p) for p in res['paths'].values())}")
    return _check_psrf(res["diagnostics"], args.psrf_max, args.strict)


def cmd_summarize(args):
    _, samples = io.read_run(args.run_dir)
    table = summarize(samples)
    _print_frame(table)
    if args.out_dir:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        io.write_table(table, Path(args.out_dir) / io.SUMMARY_FILE)
    return 0


def cmd_diagnose(args):
    _, samples = io.read_run(args.run_dir)
    diag = io.diagnostics_frame(samples)
    _print_frame(diag.set_index("parameter"))
    return _check_psrf(diag, args.psrf_max, args.strict)


def cmd_derive(args):
    requests = None
    if args.request:
        requests = json.loads(Path(args.request).read_text())
        if isinstance(requests, dict):
            requests = [requests]
    derived, curves = io.derive(args.run_dir, requests, args.out_dir or args.run_dir)
    if derived is not None:
        _print_frame(derived.set_index("name"))
    if curves is not None:
        print(f"{len(curves)} curve rows written")
    return 0


def cmd_simulate(args):
    sc = default_scenario(args.family, args.n, args.seed)
    data = simulate(sc)
    files = dataset_to_frames(args.family, data)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, frame in files.items():
        frame.to_csv(out / name, index=False, float_format=io.FLOAT_FORMAT)
    cfg = simulated_config(args.family, data, sc)
    (out / "config.json").write_text(json.dumps(cfg, indent=2))
    (out / "truth.json").write_text(json.dumps(sc.params, indent=2))
    print(f"wrote {', '.join(sorted(files))}, config.json and truth.json to {out}")
    return 0


def _covariate_frame(names, values):
    return {n: values[:, j] for j, n in enumerate(names) if n != "(Intercept)"}


def dataset_to_frames(family, data) -> dict:
    """CSV tables (file name -> frame) in the schema read back by :func:`simulated_config`."""
    cols = _covariate_frame(data.design.column_names, data.X)
    if family == "illness_death":
        ex = data.extras
        main = {"times1": ex["t1"], "delta": ex["events"][:, 0].astype(int),
                "times2": ex["sojourn"], "status": (ex["events"][:, 1] + ex["events"][:, 2]).astype(int)}
        return {"data.csv": pd.DataFrame({**main, **cols})}
    main = {"id": np.arange(1, len(data) + 1), "time": data.lower}
    if family == "competing_risks":
        main["cause"] = data.event_labels
    else:
        main["status"] = data.delta.astype(int)
    if family == "frailty":
        main["group"] = data.extras["group"] + 1
    if family == "cure":
        for j, n in enumerate(data.extras["XU_names"]):
            cols[f"u_{n}"] = data.extras["XU"][:, j]
    files = {"data.csv": pd.DataFrame({**main, **cols})}
    if family == "joint":
        ex = data.extras
        long = {"id": ex["long_subject"] + 1, "time": ex["long_time"], "y": ex["long_y"]}
        for j, n in enumerate(ex["XL_names"]):
            if n not in ("(Intercept)", "time"):
                long[n] = ex["XL"][:, j]
        files["long.csv"] = pd.DataFrame(long)
    return files


def simulated_config(family, data, sc) -> dict:
    names = [n for n in data.design.column_names if n != "(Intercept)"]
    intercept = "(Intercept)" in data.design.column_names
    b = {"covariates": names, "intercept": intercept}
    if family == "illness_death":
        b["illness_death"] = {"t1": "times1", "sojourn": "times2", "delta": "delta", "status": "status"}
    elif family == "competing_risks":
        b.update(time="time", cause="cause")
    else:
        b.update(time="time", status="status")
    structure = {}
    if family == "frailty":
        b["group"] = "group"
    if family == "cure":
        b["latency"] = {"covariates": [f"u_{n}" for n in data.extras["XU_names"]]}
    if family == "joint":
        xl = [n for n in data.extras["XL_names"] if n not in ("(Intercept)", "time")]
        b.update(subject="id", longitudinal={"path": "long.csv", "subject": "id", "time": "time",
                                              "y": "y", "covariates": xl})
    if family == "ph":
        structure["partition"] = {"knots": list(map(float, sc.options["knots"]))}
    if family == "illness_death":
        structure["exposure"] = "state1"
    return {"family": family, "data": "data.csv", "bindings": b, "structure": structure,
            "chains": {"seed": int(sc.seed)}}


COMMANDS = {"fit": cmd_fit, "summarize": cmd_summarize, "diagnose": cmd_diagnose,
            "derive": cmd_derive, "simulate": cmd_simulate}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (io.ConfigError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"bayesurv {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
