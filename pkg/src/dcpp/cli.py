"""Command-line front end: ``dcpp <subcommand> --config cfg.json --out path``.

Subcommands: ``pmf``, ``sample``, ``bounds``, ``verify``, ``regress``,
``experiment``. Every run writes its output file plus ``<out>.config.json``
echoing the resolved configuration, so a run is reproduced by feeding that
file back through ``--config``.

Exit status: 0 on success, 1 on invalid input, 2 when a ``verify`` or
``experiment`` verdict fails.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Any

import numpy as np

from . import concentration as conc
from .core import DcpParams, NbParams, nb_to_dcp, pmf_partition, pmf_vector, PartitionBudgetError
from .regression import (
    ExperimentConfig,
    NbRegressionProblem,
    SolverConfig,
    data_driven_weights,
    fit_weighted_lasso,
    kkt_probability_experiment,
    nb_cell_weights,
    nb_embedding,
)
from .rng import RngStream
from .sampler import Region, sample_dcp_rv, sample_dcpp, sample_nb_direct

log = logging.getLogger("dcpp")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INVALID, EXIT_VERDICT = 0, 1, 2
SUBCOMMANDS = ("pmf", "sample", "bounds", "verify", "regress", "experiment")

_COMMON = {"schema_version", "seed", "workers"}
_LAW = {"lam", "alphas", "truncated", "nb"}
ALLOWED_KEYS = {
    "pmf": _COMMON | _LAW | {"mass", "k_max"},
    "sample": _COMMON | _LAW | {"mode", "n", "region", "embedding"},
    "bounds": _COMMON | {"kind", "laws", "region", "alphas", "f", "processes", "grid", "allow_truncated"},
    "verify": _COMMON | {"trials", "fixtures", "masses", "levels", "n_processes"},
    "regress": _COMMON | {"data", "theta", "gamma", "C1", "C2", "weights", "tol", "max_iter", "replicates"},
    "experiment": _COMMON | {
        "n", "p", "d_star", "beta_star", "theta", "gamma", "C1", "C2",
        "tol", "max_iter", "replicates", "fit",
    },
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config helpers
# ---------------------------------------------------------------------------

def load_config(path: str | None, subcommand: str) -> dict:
    if path is None:
        cfg: dict = {}
    else:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        with open(p) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    # an echoed config wraps the parameters; accept it as input too
    if "params" in cfg and "subcommand" in cfg and "workers" in cfg:
        if cfg["subcommand"] != subcommand:
            raise ConfigError(f"config was written for {cfg['subcommand']!r}, not {subcommand!r}")
        cfg = {**cfg["params"], "seed": cfg.get("seed"), "workers": cfg.get("workers"),
               "schema_version": cfg.get("schema_version")}
        cfg = {k: v for k, v in cfg.items() if v is not None}
    unknown = sorted(set(cfg) - ALLOWED_KEYS[subcommand])
    if unknown:
        raise ConfigError(f"unknown config keys for {subcommand}: {', '.join(unknown)}")
    if cfg.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {cfg['schema_version']}")
    return cfg


def _law(cfg: dict) -> DcpParams:
    if "nb" in cfg:
        nb = cfg["nb"]
        bad = set(nb) - {"r", "q", "tol"}
        if bad:
            raise ConfigError(f"unknown nb keys: {', '.join(sorted(bad))}")
        return nb_to_dcp(NbParams(nb["r"], nb["q"]), nb.get("tol", 1e-10))
    if "lam" not in cfg or "alphas" not in cfg:
        raise ConfigError("a law needs either 'nb' or both 'lam' and 'alphas'")
    return DcpParams(cfg["lam"], cfg["alphas"], truncated=bool(cfg.get("truncated", False)))


def _csv(rows, header, comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# subcommands: each returns (text, resolved params, verdict ok)
# ---------------------------------------------------------------------------

def cmd_pmf(cfg: dict, seed: int, workers: int):
    params = _law(cfg)
    mass = float(cfg.get("mass", params.lam))
    k_max = int(cfg.get("k_max", 10))
    by_matrix = pmf_vector(params, mass, k_max)
    rows = []
    for k in range(k_max + 1):
        try:
            part = pmf_partition(params, mass, k)
        except PartitionBudgetError:
            part = float("nan")
        rows.append((k, part, by_matrix[k], abs(part - by_matrix[k])))
    resolved = {"lam": params.lam, "alphas": list(params.alphas), "truncated": params.truncated,
                "tail_mass": params.tail_mass, "mass": mass, "k_max": k_max}
    return _csv(rows, ("k", "pmf_partition", "pmf_matrix", "abs_diff"), f"schema_version: {SCHEMA_VERSION}"), resolved, True


def cmd_sample(cfg: dict, seed: int, workers: int):
    mode = cfg.get("mode", "rv")
    rng = RngStream(seed)
    if mode == "rv":
        params = _law(cfg)
        n = int(cfg.get("n", 1000))
        draws = sample_dcp_rv(params, n, rng)
        resolved = {"mode": mode, "lam": params.lam, "alphas": list(params.alphas), "n": n}
        text = _csv(((int(v),) for v in draws), ("value",), f"schema_version: {SCHEMA_VERSION}")
    elif mode == "nb":
        nb = cfg.get("nb")
        if not nb:
            raise ConfigError("mode 'nb' needs an 'nb' object with r and q")
        n = int(cfg.get("n", 1000))
        draws = sample_nb_direct(NbParams(nb["r"], nb["q"]), n, rng)
        resolved = {"mode": mode, "nb": {"r": nb["r"], "q": nb["q"]}, "n": n}
        text = _csv(((int(v),) for v in draws), ("value",), f"schema_version: {SCHEMA_VERSION}")
    elif mode == "pattern":
        if "embedding" in cfg:
            emb = cfg["embedding"]
            region = nb_embedding(emb["h"], dim=int(emb.get("dim", 1)))
            alphas = nb_cell_weights(emb["h"], float(emb["theta"]))
            resolved = {"mode": mode, "embedding": emb}
        else:
            if "region" not in cfg:
                raise ConfigError("mode 'pattern' needs 'region' or 'embedding'")
            region = Region.from_dict(cfg["region"])
            alphas = list(_law(cfg).weights()) if "nb" in cfg else cfg["alphas"]
            resolved = {"mode": mode, "region": region.to_dict(), "alphas": list(alphas)}
        text = f"# schema_version: {SCHEMA_VERSION}\n" + sample_dcpp(region, alphas, rng).to_csv()
    else:
        raise ConfigError(f"unknown sample mode {mode!r} (rv, nb, pattern)")
    return text, resolved, True


def cmd_bounds(cfg: dict, seed: int, workers: int):
    kind = cfg.get("kind", "thm31")
    grid = [float(v) for v in cfg.get("grid", [1.0])]
    specs = []
    if kind == "thm31":
        laws = [_law(l) for l in cfg.get("laws", [])]
        if not laws:
            raise ConfigError("kind thm31 needs a non-empty 'laws' list")
        for x in grid:
            specs.extend(conc.bound_thm31(laws, x, bool(cfg.get("allow_truncated", False))))
    elif kind in ("thm32", "remark"):
        if kind == "remark":
            law = _law(cfg["laws"][0]) if cfg.get("laws") else None
            if law is None:
                raise ConfigError("kind remark needs 'laws' with one law")
            specs = [conc.bound_remark(law, y) for y in grid]
        else:
            region = Region.from_dict(cfg["region"])
            specs = [conc.bound_thm32(region, cfg["alphas"], cfg["f"], y) for y in grid]
    elif kind == "corollary31":
        procs = cfg.get("processes", [])
        if not procs:
            raise ConfigError("kind corollary31 needs a non-empty 'processes' list")
        regions = [Region.from_dict(p["region"]) for p in procs]
        for y in grid:
            specs.append(conc.bound_corollary31(regions, [p["alphas"] for p in procs], [p["f"] for p in procs], y))
    else:
        raise ConfigError(f"unknown bound kind {kind!r} (thm31, thm32, corollary31, remark)")
    rows = [(s.kind, s.threshold, s.bound, json.dumps(s.inputs_digest, sort_keys=True, separators=(",", ":")))
            for s in specs]
    resolved = {k: v for k, v in cfg.items() if k not in _COMMON}
    resolved.update(kind=kind, grid=grid)
    return _csv(rows, ("kind", "threshold", "bound", "inputs_digest"), f"schema_version: {SCHEMA_VERSION}"), resolved, True


def cmd_verify(cfg: dict, seed: int, workers: int):
    grid = {
        "fixtures": tuple(cfg.get("fixtures", conc.FIXTURES)),
        "masses": tuple(float(v) for v in cfg.get("masses", conc.GRID_MASSES)),
        "levels": tuple(float(v) for v in cfg.get("levels", conc.GRID_LEVELS)),
        "n_processes": int(cfg.get("n_processes", 3)),
    }
    trials = int(cfg.get("trials", 100_000))
    reports = conc.dominance_suite(trials, RngStream(seed), workers, **grid)
    ok = all(r.passed for r in reports)
    n_fail = sum(not r.passed for r in reports)
    log.info("verify: %d reports, %d failed", len(reports), n_fail)
    resolved = {**{k: list(v) if isinstance(v, tuple) else v for k, v in grid.items()}, "trials": trials}
    return f"# schema_version: {SCHEMA_VERSION}\n" + conc.reports_to_csv(reports), resolved, ok


def cmd_regress(cfg: dict, seed: int, workers: int):
    if "data" not in cfg:
        raise ConfigError("regress needs 'data' (CSV with columns y,x1..xp)")
    data = Path(cfg["data"])
    if not data.is_file():
        raise ConfigError(f"data file not found: {data}")
    theta = float(cfg.get("theta", 1.0))
    problem = NbRegressionProblem.from_csv(data, theta)
    extra: dict[str, Any] = {}
    if "weights" in cfg:
        w = np.asarray(cfg["weights"], dtype=float)
    else:
        w, extra = data_driven_weights(problem, float(cfg.get("gamma", 1.0)), cfg.get("C1"), cfg.get("C2"))
    problem = problem.with_weights(w)
    solver = SolverConfig(tol=float(cfg.get("tol", 1e-6)), max_iter=int(cfg.get("max_iter", 20_000)))
    fit = fit_weighted_lasso(problem, solver)
    out = {"schema_version": SCHEMA_VERSION, "fit": fit.to_dict(), "weights": problem.weights.tolist(), **extra}
    resolved = {k: v for k, v in cfg.items() if k not in _COMMON}
    resolved.update(theta=theta, tol=solver.tol, max_iter=solver.max_iter)
    return _dumps(out), resolved, True


def cmd_experiment(cfg: dict, seed: int, workers: int):
    fields = {k: cfg[k] for k in cfg if k not in _COMMON}
    if "beta_star" in fields and fields["beta_star"] is not None:
        fields["beta_star"] = tuple(float(v) for v in fields["beta_star"])
    config = ExperimentConfig(seed=seed, **fields)
    report = kkt_probability_experiment(config, RngStream(seed), workers)
    resolved = {k: getattr(config, k) for k in ALLOWED_KEYS["experiment"] - _COMMON}
    resolved["beta_star"] = config.true_model().beta_star.tolist()
    resolved["summary"] = report.summary()
    return f"# schema_version: {SCHEMA_VERSION}\n" + report.to_csv(), resolved, report.passed


COMMANDS = {
    "pmf": cmd_pmf,
    "sample": cmd_sample,
    "bounds": cmd_bounds,
    "verify": cmd_verify,
    "regress": cmd_regress,
    "experiment": cmd_experiment,
}


def run(subcommand: str, config_path: str | None, seed: int | None, out: str, workers: int | None = None) -> int:
    """Execute one subcommand and write ``out`` plus ``out.config.json``; returns the exit status.

    ``seed`` and ``workers`` override the config values; absent both, they default to 0 and 1.
    """
    try:
        cfg = load_config(config_path, subcommand)
        workers = int(cfg.get("workers", 1)) if workers is None else int(workers)
        if workers < 1:
            raise ConfigError("workers must be >= 1")
        seed = int(cfg.get("seed", 0)) if seed is None else int(seed)
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        text, resolved, ok = COMMANDS[subcommand](cfg, seed, workers)
    except (ValueError, KeyError, TypeError, OSError) as exc:
        msg = f"missing config key {exc}" if isinstance(exc, KeyError) else str(exc)
        print(f"dcpp {subcommand}: error: {msg}", file=sys.stderr)
        return EXIT_INVALID
    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(text)
    allowed = ALLOWED_KEYS[subcommand]
    echo = {"schema_version": SCHEMA_VERSION, "subcommand": subcommand, "seed": seed, "workers": workers,
            "params": {k: v for k, v in resolved.items() if k in allowed},
            # computed quantities; ignored when the echo is fed back as a config
            "derived": {k: v for k, v in resolved.items() if k not in allowed}}
    Path(str(out_path) + ".config.json").write_text(_dumps(echo))
    if not ok:
        print(f"dcpp {subcommand}: verdict failed, see {out_path}", file=sys.stderr)
        return EXIT_VERDICT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcpp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int, help="overrides the config seed")
        sp.add_argument("--out", required=True, help="output file")
        sp.add_argument("--workers", type=int, help="thread count (default: config value, else 1)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return run(args.subcommand, args.config, args.seed, args.out, args.workers)


if __name__ == "__main__":
    sys.exit(main())
