"""Command-line experiment runner.

    opbw <experiment> --p P --n N --replicates R --seed S [options] --out results.csv
    opbw sweep --config grid.json --out results.csv

Each run writes a CSV of result rows and a JSON sidecar (config, versions,
commit, wall-clock) next to it.  Exit status: 0 success, 2 a statistical
check failed, 1 error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import itertools
import json
import logging
import math
import platform
import subprocess
import sys
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import brownian, scaling, statistics
from .lattice import SUPERCRITICAL_WARNING_P, derive_seed

log = logging.getLogger("opbw")

EXPERIMENTS = ("density", "right-edge-density", "negcor", "disjoint", "clt",
               "eta-hat-bw", "coalescence-tail", "drift")

COLUMNS = ("experiment", "p", "n", "horizon", "replicates", "param", "statistic",
           "estimate", "se", "reference", "passed", "seed", "status")

EXIT_OK, EXIT_ERROR, EXIT_STAT_FAIL = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    p: float = 0.8
    n: int = 256
    replicates: int = 1000
    seed: int = 0
    horizon: Optional[int] = None
    window: Optional[int] = None
    se_mult: float = 3.0
    pairs: int = 1
    gap: int = 2
    i: Optional[int] = None
    k: int = 1
    a: float = 0.0
    b: float = 1.0
    t: float = 1.0
    steps: int = 100
    tol: float = 0.15
    drift_horizon: int = 2048
    drift_replicates: int = 2000

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if not 0.0 < self.p <= 1.0:
            raise ConfigError("p must lie in (0, 1]")
        for name in ("n", "replicates", "pairs", "gap", "steps", "drift_horizon",
                     "drift_replicates"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.horizon is not None and self.horizon < 1:
            raise ConfigError("horizon must be positive")
        if self.window is not None and self.window < 1:
            raise ConfigError("window must be positive")
        if not 0 <= self.seed < 1 << 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if not self.se_mult > 0 or not self.tol > 0:
            raise ConfigError("se_mult and tol must be positive")
        if self.k < 0:
            raise ConfigError("k must be non-negative")
        if not self.t > 0 or not self.a < self.b:
            raise ConfigError("need t > 0 and a < b")
        return self

    def to_dict(self) -> Dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - names
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)


# --- experiments -----------------------------------------------------------


def _row(cfg: ExperimentConfig, statistic: str, estimate, se=None, reference=None,
         passed: Optional[bool] = None, param: str = "", horizon=None, status: str = "ok") -> Dict:
    return {
        "experiment": cfg.experiment, "p": cfg.p, "n": cfg.n,
        "horizon": cfg.horizon if horizon is None else horizon,
        "replicates": cfg.replicates, "param": param, "statistic": statistic,
        "estimate": estimate, "se": se, "reference": reference,
        "passed": passed, "seed": cfg.seed, "status": status,
    }


def _drift(cfg: ExperimentConfig, seed_index: int) -> scaling.DriftEstimate:
    seed = int(derive_seed(np.uint64(cfg.seed), seed_index))
    return scaling.estimate_alpha_sigma(cfg.p, cfg.drift_horizon, cfg.drift_replicates, seed)


def _normalized_rows(cfg, est, drift, statistic="normalized"):
    if drift.sigma <= 0:
        return [_row(cfg, statistic, None, status="undefined: sigma_hat = 0")]
    c = drift.sigma * math.sqrt(math.pi * cfg.n) / 2
    val = c * est.p_hat
    rel = math.hypot(est.se / est.p_hat if est.p_hat else 0.0, drift.sigma_se / drift.sigma)
    return [_row(cfg, statistic, val, val * rel, 1.0, abs(val - 1.0) <= cfg.tol,
                 param=f"tol={cfg.tol!r}")]


def exp_density(cfg):
    seed = int(derive_seed(np.uint64(cfg.seed), 0))
    est = statistics.density_gamma(cfg.p, cfg.n, cfg.replicates, seed, cfg.horizon,
                                   cfg.window, cfg.pairs)
    H = statistics.default_horizon(cfg.n) if cfg.horizon is None else cfg.horizon
    param = f"pairs={cfg.pairs}"
    rows = [_row(cfg, "p_hat", est.p_hat, est.se, param=param, horizon=H),
            _row(cfg, "failures", est.failures, param=param, horizon=H)]
    if cfg.p < 1.0:
        drift = _drift(cfg, 1)
        rows.append(_row(cfg, "sigma_hat", drift.sigma, drift.sigma_se,
                         param=f"drift_horizon={cfg.drift_horizon}"))
        rows += _normalized_rows(cfg, est, drift)
    return rows


def exp_right_edge_density(cfg):
    seed = int(derive_seed(np.uint64(cfg.seed), 0))
    est = statistics.density_right_edge(cfg.p, cfg.n, cfg.replicates, seed, cfg.window, cfg.pairs)
    param = f"pairs={cfg.pairs}"
    s = math.sqrt(cfg.n)
    return [_row(cfg, "p_hat", est.p_hat, est.se, param=param),
            _row(cfg, "sqrt_n_p_hat", s * est.p_hat, s * est.se, param=param),
            _row(cfg, "failures", est.failures, param=param)]


def exp_negcor(cfg):
    i = cfg.n % 2 if cfg.i is None else cfg.i
    j = i + cfg.gap
    res = statistics.negcor_check(cfg.p, cfg.n, i, j, cfg.replicates, cfg.seed,
                                  cfg.window, cfg.se_mult)
    param = f"i={i};j={j}"
    return [_row(cfg, "lhs", res.lhs, res.se, res.rhs, res.passed, param=param),
            _row(cfg, "rhs", res.rhs, param=param)]


def exp_disjoint(cfg):
    res = statistics.disjoint_occurrence_check(cfg.p, cfg.n, cfg.k, cfg.replicates, cfg.seed,
                                               cfg.window, cfg.se_mult)
    param = f"k={cfg.k}"
    return [_row(cfg, "lhs", res.lhs, res.se, res.rhs, res.passed, param=param),
            _row(cfg, "rhs", res.rhs, param=param)]


def exp_clt(cfg):
    drift = _drift(cfg, 1)
    x = scaling.terminal_positions(cfg.p, cfg.n, cfg.replicates,
                                   int(derive_seed(np.uint64(cfg.seed), 0)))
    z = scaling.standardized_displacements(x, cfg.n, drift, spread_seed=cfg.seed)
    d, crit = scaling.ks_normal(z)
    return [_row(cfg, "alpha_hat", drift.alpha, drift.alpha_se),
            _row(cfg, "sigma_hat", drift.sigma, drift.sigma_se),
            _row(cfg, "ks_normal", d, None, crit, d < crit, param="level=0.01")]


def exp_eta_hat_bw(cfg):
    ref = brownian.bw_eta_hat_expectation(cfg.t, cfg.a, cfg.b)
    param = f"a={cfg.a!r};b={cfg.b!r};t={cfg.t!r}"
    coarse = brownian.eta_hat_bw_samples(cfg.t, cfg.a, cfg.b, cfg.replicates, cfg.seed,
                                         steps=cfg.steps)
    fine = brownian.eta_hat_bw_samples(cfg.t, cfg.a, cfg.b, cfg.replicates, cfg.seed,
                                       steps=cfg.steps, halved=True)
    rows = []
    for tag, x in (("eta_hat", coarse), ("eta_hat_half_dt", fine)):
        m, se = float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))
        rows.append(_row(cfg, tag, m, se, ref, abs(m - ref) <= cfg.se_mult * se,
                         param=f"{param};steps={cfg.steps if tag == 'eta_hat' else 2 * cfg.steps}"))
    shift = abs(float(fine.mean() - coarse.mean()))
    se = rows[0]["se"]
    rows.append(_row(cfg, "dt_halving_shift", shift, None, se, shift < se, param=param))
    return rows


def exp_coalescence_tail(cfg):
    a = scaling.pair_coalescence_times(cfg.p, cfg.n, cfg.replicates,
                                       int(derive_seed(np.uint64(cfg.seed), 0)),
                                       window=cfg.window or 64)
    b = scaling.pair_coalescence_times(cfg.p, 4 * cfg.n, cfg.replicates,
                                       int(derive_seed(np.uint64(cfg.seed), 1)),
                                       window=cfg.window or 64)
    d, pval = scaling.ks_two_sample(a, b)
    return [_row(cfg, "ks_n_vs_4n", d, None, None, pval >= 0.01, param="level=0.01"),
            _row(cfg, "ks_pvalue", pval),
            _row(cfg, "censored_fraction_n", float(np.isinf(a).mean())),
            _row(cfg, "censored_fraction_4n", float(np.isinf(b).mean()))]


def exp_drift(cfg):
    H = cfg.horizon or cfg.n
    est = scaling.estimate_alpha_sigma(cfg.p, H, cfg.replicates, cfg.seed)
    return [_row(cfg, "alpha_hat", est.alpha, est.alpha_se, horizon=H),
            _row(cfg, "sigma_hat", est.sigma, est.sigma_se, horizon=H),
            _row(cfg, "breakpoints", est.breakpoints, horizon=H)]


RUNNERS = {
    "density": exp_density,
    "right-edge-density": exp_right_edge_density,
    "negcor": exp_negcor,
    "disjoint": exp_disjoint,
    "clt": exp_clt,
    "eta-hat-bw": exp_eta_hat_bw,
    "coalescence-tail": exp_coalescence_tail,
    "drift": exp_drift,
}


def run_rows(cfg: ExperimentConfig) -> List[Dict]:
    cfg.validate()
    if cfg.experiment != "eta-hat-bw" and cfg.p <= SUPERCRITICAL_WARNING_P:
        warnings.warn(f"p = {cfg.p} is at or below the supercritical range; "
                      "searches may fail", RuntimeWarning, stacklevel=2)
    log.info("running %s p=%s n=%s replicates=%s", cfg.experiment, cfg.p, cfg.n, cfg.replicates)
    return RUNNERS[cfg.experiment](cfg)


def exit_code(rows: Sequence[Dict]) -> int:
    if any(r["status"].startswith("error") for r in rows):
        return EXIT_ERROR
    if any(r["passed"] is False for r in rows):
        return EXIT_STAT_FAIL
    return EXIT_OK


# --- persistence -----------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def rows_to_csv(rows: Sequence[Dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in COLUMNS])
    return buf.getvalue()


def _git_commit() -> Optional[str]:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).resolve().parent, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return None
    if out.returncode != 0:
        return None
    return out.stdout.strip() or None


def _versions() -> Dict[str, str]:
    from importlib import metadata

    vers = {"python": platform.python_version()}
    for pkg in ("artifact", "numpy", "numba", "scipy"):
        try:
            vers[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            vers[pkg] = "unknown"
    return vers


def write_outputs(out: str, rows: Sequence[Dict], config: Dict, wall: float, code: int) -> None:
    text = rows_to_csv(rows)
    if out == "-":
        sys.stdout.write(text)
        return
    path = Path(out)
    path.write_text(text)
    meta = {"config": config, "versions": _versions(), "commit": _git_commit(),
            "wall_clock_seconds": wall, "exit_code": code}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def run(cfg: ExperimentConfig, out: str) -> int:
    """Run one experiment, write its CSV and sidecar, and return the exit code."""
    start = time.perf_counter()
    rows = run_rows(cfg)
    code = exit_code(rows)
    write_outputs(out, rows, cfg.to_dict(), time.perf_counter() - start, code)
    return code


def cell_seed(master: int, params: Dict) -> int:
    """Seed for a sweep cell, derived from its parameter values rather than its index."""
    canon = json.dumps(params, sort_keys=True, separators=(",", ":"))
    digest = int.from_bytes(hashlib.sha256(canon.encode()).digest()[:8], "little")
    return int(derive_seed(np.uint64(master), np.uint64(digest)))


def sweep_cells(spec: Dict) -> List[ExperimentConfig]:
    template = dict(spec.get("template", {}))
    grid = spec.get("grid", {})
    master = int(spec.get("seed", template.pop("seed", 0)))
    keys = sorted(grid)
    cells = []
    for values in itertools.product(*(grid[k] for k in keys)):
        params = dict(zip(keys, values))
        d = {**template, **params}
        d["seed"] = cell_seed(master, {k: d[k] for k in sorted(d)})
        cells.append(ExperimentConfig.from_dict(d))
    return cells


def sweep(spec: Dict, out: str) -> int:
    start = time.perf_counter()
    rows: List[Dict] = []
    for cfg in sweep_cells(spec):
        try:
            rows += run_rows(cfg)
        except Exception as exc:  # recorded per cell, the sweep goes on
            log.error("cell %s failed: %s", cfg.to_dict(), exc)
            rows.append(_row(cfg, "cell", None, status=f"error: {type(exc).__name__}: {exc}"))
    code = exit_code(rows)
    write_outputs(out, rows, spec, time.perf_counter() - start, code)
    return code


# --- argument parsing ------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="opbw", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--p", type=float, required=name != "eta-hat-bw", default=0.8)
        sp.add_argument("--n", type=int, required=name != "eta-hat-bw", default=256)
        sp.add_argument("--replicates", type=int, required=True)
        sp.add_argument("--seed", type=int, required=True)
        sp.add_argument("--horizon", type=int)
        sp.add_argument("--window", type=int)
        sp.add_argument("--se-mult", type=float, default=3.0)
        sp.add_argument("--pairs", type=int, default=1)
        sp.add_argument("--gap", type=int, default=2)
        sp.add_argument("--i", type=int)
        sp.add_argument("--k", type=int, default=1)
        sp.add_argument("--a", type=float, default=0.0)
        sp.add_argument("--b", type=float, default=1.0)
        sp.add_argument("--t", type=float, default=1.0)
        sp.add_argument("--steps", type=int, default=100)
        sp.add_argument("--tol", type=float, default=0.15)
        sp.add_argument("--drift-horizon", type=int, default=2048)
        sp.add_argument("--drift-replicates", type=int, default=2000)
        sp.add_argument("--out", required=True)
    sw = sub.add_parser("sweep")
    sw.add_argument("--config", required=True)
    sw.add_argument("--out", required=True)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(message)s")
    try:
        if args.command == "sweep":
            spec = json.loads(Path(args.config).read_text())
            return sweep(spec, args.out)
        opts = vars(args).copy()
        for drop in ("command", "out", "verbose"):
            opts.pop(drop)
        cfg = ExperimentConfig(experiment=args.command, **opts)
        return run(cfg, args.out)
    except Exception as exc:
        print(f"opbw: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
