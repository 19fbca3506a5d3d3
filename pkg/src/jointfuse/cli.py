"""Command-line entry point: ``jointfuse simulate | fit | diagnose``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 R-hat above
the threshold (outputs are still written), 5 sampler failure.
"""

import argparse
import glob
import json
import logging
import os
import re
import sys
import time
import warnings

import numpy as np

from . import __version__
from .config import RHAT_THRESHOLD, load_config, mcmc_from_dict, model_from_dict, scenario_from_config
from .dataio import read_dataset, read_draws, sha256_file, write_dataset, write_draws, write_rows
from .diagnostics import export_plot_data, summarize
from .errors import ConfigError, DataError, JointFuseError, SamplerError
from .model import flatten_state, parameter_names, validate_spec
from .sampler import run
from .simulate import simulate_dataset

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RHAT, EXIT_SAMPLER = 0, 2, 3, 4, 5

log = logging.getLogger("jointfuse")


def _err(msg):
    print(f"jointfuse: error: {msg}", file=sys.stderr)


def _warn(msg):
    print(f"jointfuse: warning: {msg}", file=sys.stderr)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return x


def _write_manifest(out_dir, command, config_path, data_files, seed, settings, started, outputs):
    man = {
        "tool": "jointfuse",
        "version": __version__,
        "command": command,
        "config": {"path": os.path.abspath(config_path) if config_path else None,
                   "sha256": sha256_file(config_path) if config_path else None},
        "data": {os.path.basename(p): sha256_file(p) for p in data_files},
        "seed": seed,
        "settings": _jsonable(settings),
        "timing": {"started": started, "elapsed_seconds": time.time() - started},
        "outputs": {os.path.basename(p): sha256_file(p) for p in outputs},
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(man, fh, indent=2)
        fh.write("\n")
    return path


# ---------------------------------------------------------------- simulate


def cmd_simulate(config_path, out_dir, seed=None):
    started = time.time()
    try:
        cfg = load_config(config_path)
        scenario = scenario_from_config(cfg, seed=seed)
    except ConfigError as e:
        _err(e)
        return EXIT_CONFIG
    try:
        data = simulate_dataset(scenario)
    except JointFuseError as e:
        _err(f"generation failed: {e}")
        return EXIT_DATA
    os.makedirs(out_dir, exist_ok=True)
    outputs = list(write_dataset(data, out_dir))
    spec, truth = scenario.spec, scenario.truth
    names = parameter_names(spec)
    truth_path = os.path.join(out_dir, "truth.json")
    with open(truth_path, "w") as fh:
        json.dump({"parameters": dict(zip(names, map(float, flatten_state(spec, truth)))),
                   "state": truth.to_dict()}, fh, indent=2)
        fh.write("\n")
    outputs.append(truth_path)
    _write_manifest(out_dir, "simulate", config_path, [], scenario.seed,
                    {"n": scenario.n, "grid": scenario.grid,
                     "censoring_rate": scenario.censoring_rate,
                     "admin_cutoff": scenario.admin_cutoff}, started, outputs)
    print(f"simulated {data.n} subjects, {int(np.sum(data.status > 0))} events -> {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------- summaries


def _summaries(draws, names, out_dir, rhat_threshold, split):
    """Write summary and plot files; return (exit code, summary, paths)."""
    multi = len(draws) >= 2
    s = summarize(draws, names, rhat=multi, split=split)
    paths = []
    p = os.path.join(out_dir, "summary.json")
    with open(p, "w") as fh:
        fh.write(s.to_json())
    paths.append(p)
    p = os.path.join(out_dir, "summary.txt")
    with open(p, "w") as fh:
        fh.write(s.to_table())
    paths.append(p)
    for kind in ("trace", "density", "caterpillar"):
        header, rows = export_plot_data(draws, names, kind)
        p = os.path.join(out_dir, f"plot_{kind}.csv")
        write_rows(p, header, rows)
        paths.append(p)
    code = EXIT_OK
    if s.rhat is not None:
        bad = [nm for nm, r in zip(s.names, s.rhat) if not r <= rhat_threshold]
        if bad:
            _warn(f"R-hat above {rhat_threshold} for {', '.join(bad)}")
            code = EXIT_RHAT
    return code, s, paths


# ---------------------------------------------------------------- fit


def cmd_fit(config_path, data_dir, out_dir, overrides=None, rhat_threshold=None):
    """Fit a model; ``overrides`` maps McmcConfig fields to CLI values."""
    started = time.time()
    try:
        cfg = load_config(config_path)
        if "model" not in cfg:
            raise ConfigError("model: section missing")
        spec = model_from_dict(cfg["model"])
        mcmc, extra = mcmc_from_dict(cfg.get("mcmc"), overrides)
    except ConfigError as e:
        _err(e)
        return EXIT_CONFIG
    if rhat_threshold is not None:
        extra["rhat_threshold"] = float(rhat_threshold)
    try:
        data = read_dataset(data_dir, [m.name for m in spec.markers])
        report = validate_spec(spec, data)
    except JointFuseError as e:
        _err(e)
        return EXIT_DATA
    if not report.ok:
        for v in report.violations:
            _err(v)
        return EXIT_CONFIG if isinstance(report.violations[0], ConfigError) else EXIT_DATA
    if mcmc.n_chains < 2:
        _warn("R-hat needs at least 2 chains; the R-hat column is omitted")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            chains = run(spec, data, mcmc)
    except (SamplerError, JointFuseError, np.linalg.LinAlgError, FloatingPointError) as e:
        _err(f"sampler failed: {e}")
        return EXIT_SAMPLER
    os.makedirs(out_dir, exist_ok=True)
    names = chains[0].names
    outputs = []
    for c in chains:
        p = os.path.join(out_dir, f"draws_chain{c.chain_id + 1}.csv")
        write_draws(p, names, c.draws)
        outputs.append(p)
    draws = [c.draws for c in chains]
    code, s, paths = _summaries(draws, names, out_dir, extra["rhat_threshold"], extra["split_rhat"])
    outputs += paths
    settings = {"mcmc": {k: getattr(mcmc, k) for k in ("n_chains", "n_iter", "n_burnin",
                                                       "n_thin", "seed")},
                "rhat_threshold": extra["rhat_threshold"], "split_rhat": extra["split_rhat"],
                "parameters": names,
                "acceptance": [c.acceptance for c in chains],
                "dropped_rows": data.dropped_rows}
    _write_manifest(out_dir, "fit", config_path,
                    [os.path.join(data_dir, "long.csv"), os.path.join(data_dir, "surv.csv")],
                    mcmc.seed, settings, started, outputs)
    sys.stdout.write(s.to_table())
    return code


# ---------------------------------------------------------------- diagnose


def _chain_index(path):
    m = re.search(r"draws_chain(\d+)\.csv$", path)
    return int(m.group(1)) if m else -1


def cmd_diagnose(draws_dir, out_dir=None, rhat_threshold=None, split=None):
    """Recompute summaries and plot data from stored draw files."""
    out_dir = out_dir or draws_dir
    files = sorted(glob.glob(os.path.join(draws_dir, "draws_chain*.csv")), key=_chain_index)
    if not files:
        _err(f"no draws_chain*.csv files in {draws_dir}")
        return EXIT_DATA
    settings = {}
    man_path = os.path.join(draws_dir, "manifest.json")
    if os.path.exists(man_path):
        try:
            with open(man_path) as fh:
                settings = json.load(fh).get("settings", {})
        except (OSError, ValueError):
            settings = {}
    threshold = rhat_threshold if rhat_threshold is not None else settings.get(
        "rhat_threshold", RHAT_THRESHOLD)
    split = bool(settings.get("split_rhat", False)) if split is None else split
    required = settings.get("parameters")
    try:
        names, first = read_draws(files[0], required)
        draws = [first]
        for f in files[1:]:
            nm, x = read_draws(f, names)
            if nm != names:
                x = x[:, [nm.index(c) for c in names]]
            if x.shape[0] != first.shape[0]:
                raise DataError(f"{os.path.basename(f)}: expected {first.shape[0]} draws")
            draws.append(x)
    except DataError as e:
        _err(e)
        return EXIT_DATA
    os.makedirs(out_dir, exist_ok=True)
    if len(draws) < 2:
        _warn("R-hat needs at least 2 chains; the R-hat column is omitted")
    code, s, _ = _summaries(draws, names, out_dir, float(threshold), split)
    sys.stdout.write(s.to_table())
    return code


# ---------------------------------------------------------------- main


def build_parser():
    p = argparse.ArgumentParser(prog="jointfuse", description="Bayesian joint models of "
                                "longitudinal markers and event times.")
    p.add_argument("--version", action="version", version=f"jointfuse {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate long.csv, surv.csv and truth.json")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)

    f = sub.add_parser("fit", help="run the sampler and write draws and summaries")
    f.add_argument("--config", required=True)
    f.add_argument("--data-dir", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--seed", type=int)
    f.add_argument("--chains", type=int)
    f.add_argument("--iters", type=int)
    f.add_argument("--burnin", type=int)
    f.add_argument("--thin", type=int)
    f.add_argument("--rhat-threshold", type=float)

    d = sub.add_parser("diagnose", help="recompute summaries from stored draws")
    d.add_argument("--data-dir", "--draws", dest="draws_dir", required=True,
                   help="directory holding draws_chain*.csv")
    d.add_argument("--out")
    d.add_argument("--rhat-threshold", type=float)
    d.add_argument("--split", action="store_true", default=None, help="use split R-hat")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="jointfuse: %(message)s", stream=sys.stderr)
    if args.command == "simulate":
        return cmd_simulate(args.config, args.out, seed=args.seed)
    if args.command == "fit":
        overrides = {"seed": args.seed, "n_chains": args.chains, "n_iter": args.iters,
                     "n_burnin": args.burnin, "n_thin": args.thin}
        if args.iters is not None and args.burnin is None:
            overrides["n_burnin"] = args.iters // 2
        return cmd_fit(args.config, args.data_dir, args.out, overrides, args.rhat_threshold)
    return cmd_diagnose(args.draws_dir, args.out, args.rhat_threshold, args.split)


if __name__ == "__main__":
    sys.exit(main())
