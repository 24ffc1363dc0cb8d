"""Monte Carlo experiment harness.

A study is a grid of (epsilon, eta) pairs times observation counts n; each
cell simulates `replications` independent trajectories of a named model on a
fine grid, subsamples them to n observations, runs the configured estimators
on every replication, and reports empirical means and standard deviations
next to the theoretical standard deviations implied by the CLTs.

Seeding is injective: replication r of cell c uses
SeedSequence(master_seed, spawn_key=(c, r)), so cells and replications are
independent and any subset can be reproduced in isolation.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import yaml

from ._optim import OptimizerConfig
from .drift import estimate_mce, estimate_tfe, mce_variance, tfe_variance_limit
from .fbm import theoretical_sd_h1, theoretical_sd_h2
from .hurst import estimate_h1, estimate_h2
from .models import MODEL_NAMES, get_averaged, get_model
from .simulate import ObservationSeries, SimConfig, _simulate_batch

__all__ = [
    "ExperimentConfig",
    "CellResult",
    "ExperimentResult",
    "load_config",
    "validate_config",
    "run_experiment",
    "summarize",
    "theoretical_sds",
    "emit",
]

ESTIMATOR_NAMES = ("h1", "h2", "tfe", "mce")

# Option schemas: name -> (allowed keys with defaults)
_ESTIMATOR_OPTIONS = {
    "h1": {},
    "h2": {},
    "tfe": {"ode_steps": None, "starts": 8, "lam": 0.0},
    "mce": {"hurst_param": None, "cells": 256, "ode_steps": None, "starts": 8, "lam": 0.0},
}

_TOP_LEVEL_KEYS = {
    "model",
    "theta0",
    "hurst0",
    "pairs",
    "ns",
    "replications",
    "fine_steps",
    "estimators",
    "seed",
    "T",
    "output",
}

# Fraction of failed replications beyond which a cell's summary is refused.
_CELL_FAILURE_LIMIT = 0.10


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    theta0: np.ndarray
    hurst0: float
    pairs: tuple[tuple[float, float], ...]
    ns: tuple[int, ...]
    replications: int
    fine_steps: int
    estimators: dict[str, dict]
    seed: int
    T: float = 1.0
    output: str = "out"


def validate_config(raw: dict) -> ExperimentConfig:
    """Validate a raw mapping; unknown keys anywhere are an error."""
    if not isinstance(raw, dict):
        raise ValueError("config must be a mapping")
    unknown = set(raw) - _TOP_LEVEL_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    missing = {"model", "theta0", "hurst0", "pairs", "ns", "estimators", "seed"} - set(raw)
    if missing:
        raise ValueError(f"missing config keys: {sorted(missing)}")

    model_name = raw["model"]
    if model_name not in MODEL_NAMES:
        raise ValueError(f"unknown model {model_name!r}; choose from {MODEL_NAMES}")
    model = get_model(model_name)

    theta0 = np.atleast_1d(np.asarray(raw["theta0"], dtype=float))
    if theta0.shape != (model.n_params,):
        raise ValueError(f"theta0 must have {model.n_params} entries")
    box = model.theta_box
    if np.any(theta0 < box[:, 0]) or np.any(theta0 > box[:, 1]):
        raise ValueError(f"theta0 {theta0.tolist()} outside the model box {box.tolist()}")

    hurst0 = float(raw["hurst0"])
    if not 0.0 < hurst0 < 1.0:
        raise ValueError("hurst0 must lie in (0, 1)")

    pairs = []
    for item in raw["pairs"]:
        eps, eta = float(item[0]), float(item[1])
        if eps <= 0 or eta <= 0:
            raise ValueError("epsilon and eta must be positive")
        pairs.append((eps, eta))
    if not pairs:
        raise ValueError("pairs must be nonempty")

    ns = tuple(int(v) for v in raw["ns"])
    if not ns or any(n < 4 for n in ns):
        raise ValueError("ns must be nonempty with each n >= 4")

    replications = int(raw.get("replications", 500))
    if replications < 1:
        raise ValueError("replications must be >= 1")
    fine_steps = int(raw.get("fine_steps", 100_000))
    for n in ns:
        if fine_steps % n:
            raise ValueError(f"fine_steps={fine_steps} is not divisible by n={n}")

    t_horizon = float(raw.get("T", 1.0))
    if t_horizon <= 0:
        raise ValueError("T must be positive")

    estimators_raw = raw["estimators"]
    if not isinstance(estimators_raw, dict) or not estimators_raw:
        raise ValueError("estimators must be a nonempty mapping")
    estimators: dict[str, dict] = {}
    for name, opts in estimators_raw.items():
        if name not in ESTIMATOR_NAMES:
            raise ValueError(f"unknown estimator {name!r}; choose from {ESTIMATOR_NAMES}")
        opts = {} if opts is None else dict(opts)
        allowed = _ESTIMATOR_OPTIONS[name]
        bad = set(opts) - set(allowed)
        if bad:
            raise ValueError(f"unknown options for estimator {name!r}: {sorted(bad)}")
        merged = {**allowed, **opts}
        if name == "mce" and merged["hurst_param"] is None:
            merged["hurst_param"] = hurst0
        estimators[name] = merged

    if "h2" in estimators and any(n % 2 for n in ns):
        raise ValueError("estimator h2 needs every n to be even")
    if ("tfe" in estimators or "mce" in estimators) and not 0.5 < hurst0 < 1.0:
        raise ValueError("drift estimators need hurst0 in (1/2, 1)")

    return ExperimentConfig(
        model=model_name,
        theta0=theta0,
        hurst0=hurst0,
        pairs=tuple(pairs),
        ns=ns,
        replications=replications,
        fine_steps=fine_steps,
        estimators=estimators,
        seed=int(raw["seed"]),
        T=t_horizon,
        output=str(raw.get("output", "out")),
    )


def load_config(path, paper_scale: bool = False) -> ExperimentConfig:
    """Read a YAML config file; --paper-scale overrides replication count and
    fine resolution to the heavy published-table settings (10^4 and 10^6)."""
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if paper_scale:
        raw = dict(raw)
        raw["replications"] = 10_000
        raw["fine_steps"] = 1_000_000
    return validate_config(raw)


@dataclass(frozen=True)
class CellResult:
    index: int
    epsilon: float
    eta: float
    n: int
    estimates: dict[str, np.ndarray] = field(repr=False)  # column -> (R,) with NaN for failures
    sim_failed_mask: np.ndarray = field(repr=False, default=None)  # (R,) bool
    failure_counts: dict[str, int] = field(default_factory=dict)

    @property
    def sim_failures(self) -> int:
        return int(np.sum(self.sim_failed_mask))

    def failed(self, column: str, replications: int) -> bool:
        return self.failure_counts.get(column, 0) > _CELL_FAILURE_LIMIT * replications


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    cells: tuple[CellResult, ...]
    columns: tuple[str, ...]


def _estimator_columns(cfg: ExperimentConfig) -> list[str]:
    model = get_model(cfg.model)
    cols = []
    for name in cfg.estimators:
        if name in ("h1", "h2") or model.n_params == 1:
            cols.append(name)
        else:
            cols.extend(f"{name}_{i + 1}" for i in range(model.n_params))
    return cols


def run_experiment(cfg: ExperimentConfig, threads: int = 1, progress=None) -> ExperimentResult:
    """Run the full grid. `threads` parallelizes drift fits inside each cell;
    results are bit-identical for any thread count. `progress` is an optional
    callable receiving one line per finished cell."""
    model = get_model(cfg.model)
    sigma_bar = get_averaged(cfg.model).sigma_bar
    averaged = {
        name: get_averaged(cfg.model, opts.get("lam", 0.0))
        for name, opts in cfg.estimators.items()
        if name in ("tfe", "mce")
    }
    p = model.n_params
    r_total = cfg.replications
    columns = _estimator_columns(cfg)

    cells = []
    for pair_idx, (eps, eta) in enumerate(cfg.pairs):
        for n_idx, n in enumerate(cfg.ns):
            cell_index = pair_idx * len(cfg.ns) + n_idx
            sim_cfg = SimConfig(epsilon=eps, eta=eta, T=cfg.T, fine_steps=cfg.fine_steps)
            seqs = [
                np.random.SeedSequence(entropy=cfg.seed, spawn_key=(cell_index, r))
                for r in range(r_total)
            ]
            slow, _, fail = _simulate_batch(
                model,
                cfg.theta0,
                cfg.hurst0,
                sim_cfg,
                seqs,
                record_every=cfg.fine_steps // n,
            )
            sim_ok = fail < 0

            estimates = {col: np.full(r_total, np.nan) for col in columns}
            failure_counts = {col: int(np.sum(~sim_ok)) for col in columns}

            def observation(r: int) -> ObservationSeries:
                return ObservationSeries(T=cfg.T, n=n, values=slow[r])

            for est_name, opts in cfg.estimators.items():
                if est_name == "h1":
                    runner = lambda obs: estimate_h1(obs, eps, sigma_bar).point
                elif est_name == "h2":
                    runner = lambda obs: estimate_h2(obs).point
                elif est_name == "tfe":
                    opt_cfg = OptimizerConfig(n_starts=opts["starts"])
                    runner = lambda obs, _avg=averaged["tfe"], _o=opt_cfg, _s=opts[
                        "ode_steps"
                    ]: estimate_tfe(
                        _avg, obs, model.theta_box, T=cfg.T, ode_steps=_s, optimizer=_o
                    ).theta
                else:  # mce
                    # tolerances matched to estimate_mce's quantized-Xi default
                    opt_cfg = OptimizerConfig(n_starts=opts["starts"], grad_tol=1e-7, f_tol=1e-10)
                    shared_cache: dict = {}
                    runner = lambda obs, _avg=averaged["mce"], _o=opt_cfg, _opts=opts, _c=shared_cache: estimate_mce(
                        _avg,
                        obs,
                        _opts["hurst_param"],
                        model.theta_box,
                        T=cfg.T,
                        cells=_opts["cells"],
                        ode_steps=_opts["ode_steps"],
                        optimizer=_o,
                        xi_cache=_c,
                    ).theta

                cols = (
                    [est_name]
                    if est_name in ("h1", "h2") or p == 1
                    else [f"{est_name}_{i + 1}" for i in range(p)]
                )

                def fit_one(r: int):
                    if not sim_ok[r]:
                        return None
                    try:
                        return np.atleast_1d(np.asarray(runner(observation(r)), dtype=float))
                    except Exception:
                        return None

                if est_name in ("h1", "h2") or threads <= 1:
                    results = [fit_one(r) for r in range(r_total)]
                else:
                    with ThreadPoolExecutor(max_workers=threads) as pool:
                        results = list(pool.map(fit_one, range(r_total)))

                for r, value in enumerate(results):
                    if value is None:
                        if sim_ok[r]:
                            for col in cols:
                                failure_counts[col] += 1
                        continue
                    for i, col in enumerate(cols):
                        estimates[col][r] = value[i] if len(cols) > 1 else value[0]

            cell = CellResult(
                index=cell_index,
                epsilon=eps,
                eta=eta,
                n=n,
                estimates=estimates,
                sim_failed_mask=~sim_ok,
                failure_counts=failure_counts,
            )
            cells.append(cell)
            if progress is not None:
                progress(
                    f"cell {cell_index}: eps={eps:g} eta={eta:g} n={n} "
                    f"({cell.sim_failures} sim failures)"
                )
    return ExperimentResult(config=cfg, cells=tuple(cells), columns=tuple(columns))


def _mean_sd(values: np.ndarray) -> tuple[float, float, int]:
    """Order-independent mean and sample sd over the non-NaN entries."""
    finite = values[np.isfinite(values)]
    count = finite.size
    if count == 0:
        return math.nan, math.nan, 0
    mean = math.fsum(finite) / count
    if count == 1:
        return mean, math.nan, 1
    var = math.fsum((v - mean) ** 2 for v in finite) / (count - 1)
    return mean, math.sqrt(var), count


def summarize(result: ExperimentResult) -> dict:
    """Nested mapping column -> (epsilon, eta, n) -> statistics dict.

    Cells whose failure fraction exceeds the limit are marked failed and get
    no statistics.
    """
    out: dict = {}
    r_total = result.config.replications
    for col in result.columns:
        per_cell = {}
        for cell in result.cells:
            key = (cell.epsilon, cell.eta, cell.n)
            if cell.failed(col, r_total):
                per_cell[key] = {
                    "failed": True,
                    "failures": cell.failure_counts.get(col, 0),
                }
                continue
            mean, sd, count = _mean_sd(cell.estimates[col])
            per_cell[key] = {
                "failed": False,
                "mean": mean,
                "sd": sd,
                "mcse": sd / math.sqrt(count) if count > 1 else math.nan,
                "count": count,
                "failures": cell.failure_counts.get(col, 0),
            }
        out[col] = per_cell
    return out


def theoretical_sds(result: ExperimentResult) -> dict:
    """CLT plug-in standard deviations per column and cell, at the true
    (theta0, hurst0) of the study."""
    cfg = result.config
    sigma_bar = get_averaged(cfg.model).sigma_bar
    out: dict = {}
    limit_cache: dict = {}
    mce_cache: dict = {}
    for col in result.columns:
        base = col.split("_")[0] if col.split("_")[0] in ESTIMATOR_NAMES else col
        comp = int(col.split("_")[1]) - 1 if "_" in col and base in ("tfe", "mce") else 0
        per_cell = {}
        for cell in result.cells:
            key = (cell.epsilon, cell.eta, cell.n)
            if base == "h1":
                val = theoretical_sd_h1(cell.n, cfg.T, cfg.hurst0, sigma_bar)
            elif base == "h2":
                val = theoretical_sd_h2(cell.n, cfg.hurst0, sigma_bar)
            elif base == "tfe":
                opts = cfg.estimators["tfe"]
                lk = (opts["lam"],)
                if lk not in limit_cache:
                    avg = get_averaged(cfg.model, opts["lam"])
                    limit_cache[lk] = tfe_variance_limit(avg, cfg.theta0, cfg.hurst0, cfg.T)
                val = math.sqrt(cell.epsilon * limit_cache[lk][comp, comp])
            else:  # mce
                opts = cfg.estimators["mce"]
                mk = (opts["lam"], opts["hurst_param"], cell.n)
                if mk not in mce_cache:
                    avg = get_averaged(cfg.model, opts["lam"])
                    mce_cache[mk] = mce_variance(
                        avg,
                        cfg.theta0,
                        cfg.hurst0,
                        opts["hurst_param"],
                        cell.n,
                        cfg.T,
                        cells=max(opts["cells"], 256),
                    )
                val = math.sqrt(cell.epsilon * mce_cache[mk][comp, comp])
            per_cell[key] = val
        out[col] = per_cell
    return out


# ---------------------------------------------------------------------------
# Output.
# ---------------------------------------------------------------------------


def _cell_dir_name(cell: CellResult) -> str:
    return f"eps{cell.epsilon:g}_eta{cell.eta:g}_n{cell.n}"


def _write_raw(result: ExperimentResult, out_dir: str) -> None:
    for cell in result.cells:
        cell_dir = os.path.join(out_dir, _cell_dir_name(cell))
        os.makedirs(cell_dir, exist_ok=True)
        with open(os.path.join(cell_dir, "raw.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["rep", "sim_failed"] + list(result.columns))
            for r in range(result.config.replications):
                row = [str(r), "1" if cell.sim_failed_mask[r] else "0"]
                row.extend(f"{cell.estimates[col][r]:.17g}" for col in result.columns)
                writer.writerow(row)


def _summary_tables(result: ExperimentResult) -> dict[str, list[list[str]]]:
    cfg = result.config
    stats = summarize(result)
    theory = theoretical_sds(result)
    header = ["estimator", "epsilon", "eta"] + [f"n={n}" for n in cfg.ns]
    tables = {"summary_mean": [header], "summary_sd": [header], "theoretical_sd": [header]}
    for col in result.columns:
        for eps, eta in cfg.pairs:
            mean_row = [col, f"{eps:.17g}", f"{eta:.17g}"]
            sd_row = list(mean_row)
            th_row = list(mean_row)
            for n in cfg.ns:
                key = (eps, eta, n)
                entry = stats[col][key]
                if entry["failed"]:
                    label = f"FAIL({entry['failures']}/{cfg.replications})"
                    mean_row.append(label)
                    sd_row.append(label)
                else:
                    mean_row.append(f"{entry['mean']:.17g}")
                    sd_row.append(f"{entry['sd']:.17g}")
                th_row.append(f"{theory[col][key]:.17g}")
            tables["summary_mean"].append(mean_row)
            tables["summary_sd"].append(sd_row)
            tables["theoretical_sd"].append(th_row)
    return tables


def emit(result: ExperimentResult, out_dir: str | None = None, fmt: str = "csv"):
    """Write per-cell raw estimates and the three summary tables as CSV under
    out_dir, or return a human-readable text rendering when fmt == 'text'."""
    if fmt == "csv":
        if out_dir is None:
            out_dir = result.config.output
        os.makedirs(out_dir, exist_ok=True)
        _write_raw(result, out_dir)
        for name, rows in _summary_tables(result).items():
            with open(os.path.join(out_dir, f"{name}.csv"), "w", newline="") as fh:
                csv.writer(fh).writerows(rows)
        return None
    if fmt == "text":
        lines = []
        for name, rows in _summary_tables(result).items():
            lines.append(name)
            widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
            for r in rows:
                lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)))
            lines.append("")
        return "\n".join(lines)
    raise ValueError("fmt must be 'csv' or 'text'")
