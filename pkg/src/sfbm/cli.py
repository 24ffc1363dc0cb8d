"""Command line interface.

Subcommands: simulate, estimate-hurst, estimate-drift, variance, experiment.
Estimation commands read observation CSVs as written by `simulate` (columns
t, component_1, ...); results are printed as JSON on stdout.
"""

from __future__ import annotations

import csv
import io
import json

import click
import numpy as np

from ._optim import OptimizerConfig
from .drift import (
    estimate_mce,
    estimate_tfe,
    tfe_variance_limit,
    variance_comparison,
)
from .experiment import emit, load_config, run_experiment, summarize
from .hurst import estimate_h1, estimate_h2
from .models import MODEL_NAMES, get_averaged, get_model
from .simulate import (
    ObservationSeries,
    SimConfig,
    euler_maruyama,
    read_observations,
    write_observations,
)


@click.group()
def main():
    """Simulation and inference for small-noise slow-fast systems driven by
    fractional Brownian motion."""


def _fail(exc: Exception):
    raise click.ClickException(str(exc))


def _echo_json(payload: dict):
    click.echo(json.dumps(payload, indent=2, allow_nan=True))


def _echo_csv_record(record: dict):
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(record.keys())
    writer.writerow("" if v is None else v for v in record.values())
    click.echo(buf.getvalue().rstrip("\r\n"))


def _echo_matrices_csv(matrices: dict[str, np.ndarray], out: str | None):
    rows = [("matrix", "row", "col", "value")]
    for name, mat in matrices.items():
        mat = np.atleast_2d(np.asarray(mat, dtype=float))
        for i in range(mat.shape[0]):
            for j in range(mat.shape[1]):
                rows.append((name, str(i), str(j), f"{mat[i, j]:.17g}"))
    if out is None:
        buf = io.StringIO()
        csv.writer(buf).writerows(rows)
        click.echo(buf.getvalue().rstrip("\r\n"))
    else:
        with open(out, "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
        click.echo(f"wrote {out}")


@main.command()
@click.option("--model", "model_name", type=click.Choice(MODEL_NAMES), required=True)
@click.option("--theta", type=float, multiple=True, required=True, help="drift parameter (repeat per component)")
@click.option("--hurst", type=float, required=True)
@click.option("--epsilon", type=float, required=True)
@click.option("--eta", type=float, required=True)
@click.option("--T", "--t-horizon", "t_horizon", type=float, default=1.0, show_default=True)
@click.option("--fine-steps", type=int, default=100_000, show_default=True)
@click.option("--n", "n_obs", type=int, default=None, help="observations to record (default: every fine step)")
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="slow-component CSV path")
@click.option("--fast-out", type=click.Path(dir_okay=False), default=None, help="optional fast-component CSV path")
def simulate(model_name, theta, hurst, epsilon, eta, t_horizon, fine_steps, n_obs, seed, out, fast_out):
    """Simulate one trajectory and write the observed slow component."""
    try:
        model = get_model(model_name)
        model.validate(np.asarray(theta))
        n_obs = fine_steps if n_obs is None else n_obs
        if n_obs < 1 or fine_steps % n_obs:
            raise ValueError(f"--n must divide --fine-steps; got {n_obs} and {fine_steps}")
        cfg = SimConfig(epsilon=epsilon, eta=eta, T=t_horizon, fine_steps=fine_steps, seed=seed)
        slow, fast = euler_maruyama(
            model, np.asarray(theta), hurst, cfg, record_every=fine_steps // n_obs
        )
        write_observations(out, slow)
        if fast_out:
            write_observations(fast_out, fast)
    except Exception as exc:  # surface a clean message and exit code 1
        _fail(exc)
    click.echo(f"wrote {out} ({n_obs} observations)")


@main.command("estimate-hurst")
@click.argument("data", type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(["h1", "h2"]), required=True)
@click.option("--epsilon", type=float, default=None, help="noise scale (required for h1)")
@click.option("--sigma-bar", type=float, default=1.0, show_default=True, help="effective amplitude (h1 only)")
@click.option("--T", "t_horizon", type=float, default=None, help="override the time horizon read from the file")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)
def estimate_hurst(data, method, epsilon, sigma_bar, t_horizon, fmt):
    """Estimate the Hurst exponent from an observation CSV."""
    try:
        obs = read_observations(data)
        if t_horizon is not None:
            obs = ObservationSeries(T=t_horizon, n=obs.n, values=obs.values)
        if method == "h1":
            if epsilon is None:
                raise ValueError("--epsilon is required for method h1")
            est = estimate_h1(obs, epsilon, sigma_bar)
        else:
            est = estimate_h2(obs)
        record = {
            "method": est.method,
            "point": est.point,
            "theoretical_sd": est.theoretical_sd,
            "n": est.n,
            "statistic": est.statistic,
            "clamped": est.clamped,
            "in_range": est.in_range,
        }
        if fmt == "csv":
            _echo_csv_record(record)
        else:
            _echo_json(record)
    except Exception as exc:
        _fail(exc)


@main.command("estimate-drift")
@click.argument("data", type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(["tfe", "mce"]), required=True)
@click.option("--model", "model_name", type=click.Choice(MODEL_NAMES), required=True)
@click.option(
    "--hurst",
    "--hurst-param",
    "hurst",
    type=float,
    default=None,
    help="Hurst value used by the estimator: the contrast's postulated value "
    "for mce (required there), the variance plug-in for tfe",
)
@click.option("--hurst-true", type=float, default=None, help="true Hurst value when it differs from --hurst (mce variance)")
@click.option("--epsilon", type=float, default=None, help="noise scale, enables the covariance epsilon*M")
@click.option("--lambda", "--lam", "lam", type=float, default=0.0, show_default=True, help="fast-fluctuation amplitude")
@click.option("--theta-box", type=str, default=None, help="low,high[;low,high...] (default: model box)")
@click.option("--ode-steps", type=int, default=None)
@click.option("--xi-cells", "--cells", "cells", type=int, default=None, help="quadrature cells (default 512 tfe / 256 mce)")
@click.option("--starts", type=int, default=8, show_default=True)
def estimate_drift(data, method, model_name, hurst, hurst_true, epsilon, lam, theta_box, ode_steps, cells, starts):
    """Estimate the drift parameter from an observation CSV."""
    try:
        obs = read_observations(data)
        model = get_model(model_name)
        avg = get_averaged(model_name, lam)
        box = model.theta_box
        if theta_box is not None:
            box = np.array(
                [[float(v) for v in part.split(",")] for part in theta_box.split(";")]
            )
        optimizer = OptimizerConfig(n_starts=starts)
        if method == "tfe":
            est = estimate_tfe(
                avg,
                obs,
                box,
                T=obs.T,
                ode_steps=ode_steps,
                optimizer=optimizer,
                hurst=hurst,
                epsilon=epsilon,
                cells=cells if cells is not None else 512,
            )
        else:
            if hurst is None:
                raise ValueError("--hurst (the postulated value) is required for method mce")
            est = estimate_mce(
                avg,
                obs,
                hurst,
                box,
                T=obs.T,
                cells=cells if cells is not None else 256,
                ode_steps=ode_steps,
                optimizer=optimizer,
                epsilon=epsilon,
                hurst_true=hurst_true,
            )
        payload = {
            "method": est.method,
            "theta": est.theta.tolist(),
            "contrast": est.contrast,
            "boundary_hit": est.boundary_hit,
            "multiple_minima": est.multiple_minima,
        }
        if est.m_matrix is not None:
            payload["m_matrix"] = est.m_matrix.tolist()
        if est.covariance is not None:
            payload["covariance"] = est.covariance.tolist()
        _echo_json(payload)
    except Exception as exc:
        _fail(exc)


@main.command()
@click.option("--model", "model_name", type=click.Choice(MODEL_NAMES), required=True)
@click.option("--theta", type=float, multiple=True, required=True)
@click.option("--hurst", type=float, required=True, help="true Hurst value")
@click.option("--hurst-param", type=float, default=None, help="postulated value for the minimum-contrast side (default: --hurst)")
@click.option("--n", "n_obs", type=int, required=True)
@click.option("--T", "--t-horizon", "t_horizon", type=float, default=1.0, show_default=True)
@click.option("--lambda", "--lam", "lam", type=float, default=0.0, show_default=True)
@click.option("--xi-cells", "--cells", "cells", type=int, default=512, show_default=True)
@click.option("--ode-steps", type=int, default=None)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="write the CSV here instead of stdout")
def variance(model_name, theta, hurst, hurst_param, n_obs, t_horizon, lam, cells, ode_steps, fmt, out):
    """Asymptotic variance matrices of both drift estimators.

    CSV rows are (matrix, row, col, value) for m_tfe (finite-n sandwich),
    m_tfe_limit (its n-free limit), and m_mce; JSON adds the eigenvalue
    diagnostics of the positive-semidefinite comparison.
    """
    try:
        avg = get_averaged(model_name, lam)
        theta = np.asarray(theta)
        comp = variance_comparison(
            avg, theta, hurst, n_obs, t_horizon, hurst_param=hurst_param, cells=cells, ode_steps=ode_steps
        )
        limit = tfe_variance_limit(avg, theta, hurst, t_horizon, resolution=cells)
        if fmt == "csv":
            _echo_matrices_csv(
                {"m_tfe": comp.m_tfe, "m_tfe_limit": limit, "m_mce": comp.m_mce}, out
            )
        else:
            _echo_json(
                {
                    "m_tfe": comp.m_tfe.tolist(),
                    "m_tfe_limit": limit.tolist(),
                    "m_mce": comp.m_mce.tolist(),
                    "difference_min_eigenvalue": comp.min_eigenvalue,
                    "mce_no_worse": comp.mce_no_worse,
                }
            )
    except Exception as exc:
        _fail(exc)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(file_okay=False), default=None, help="output directory (default: from config)")
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--paper-scale", is_flag=True, help="published-table scale: 10000 replications on 10^6 fine steps")
@click.option("--format", "fmt", type=click.Choice(["csv", "text"]), default="csv", show_default=True)
def experiment(config_path, out, threads, paper_scale, fmt):
    """Run a Monte Carlo study from a YAML config."""
    try:
        cfg = load_config(config_path, paper_scale=paper_scale)
        result = run_experiment(cfg, threads=threads, progress=click.echo)
        if fmt == "text":
            click.echo(emit(result, fmt="text"))
        else:
            out_dir = out if out is not None else cfg.output
            emit(result, out_dir, fmt="csv")
            click.echo(f"wrote results under {out_dir}")
        # nonzero exit when any cell breached the failure-rate policy
        breached = [
            f"{col}@eps{key[0]:g}_eta{key[1]:g}_n{key[2]}"
            for col, per_cell in summarize(result).items()
            for key, entry in per_cell.items()
            if entry["failed"]
        ]
        if breached:
            raise ValueError("cells over the failure limit: " + ", ".join(breached))
    except Exception as exc:
        _fail(exc)


if __name__ == "__main__":
    main()
