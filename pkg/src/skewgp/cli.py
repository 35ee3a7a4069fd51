"""Command-line interface: ingestion, forecasting jobs, metrics, artifacts.

Subcommands: ``fit`` (train + evaluate a forecasting job), ``predict``,
``sample`` (prior draws from a saved model), ``spectrum`` (periodogram plus
fitted-mixture overlay), ``evaluate`` (score a predictions file).

Exit codes: 0 ok, 2 usage error, 3 data error, 4 numerical failure.

Time-series splits are always chronological; the train fraction applies to
the row count, floor-rounded.  95% bands are mean +/- 1.96 sqrt(var) in
whichever variance mode (latent or observation) the job selected.
"""

from __future__ import annotations

import csv
import functools
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import click
import numpy as np

from .errors import DataError, NumericalError, SkewGPError
from . import gp, kernels, metrics, pruning, rbcm, spectral
from .gp import Dataset
from .optimize import OptConfig

KERNEL_CHOICES = kernels.KERNEL_TYPES


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IngestInfo:
    """Sampling metadata recorded while reading a CSV."""

    p: int
    uniform: bool
    delta_t: float
    t: np.ndarray | None      # time column for univariate series


def _parse_rows(path: str | Path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for r, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if row[0].lstrip().startswith("#"):
                continue
            rows.append((r, [cell.strip() for cell in row]))
    if not rows:
        raise DataError(f"empty file: {path}")
    # header auto-detection: first row whose cells do not all parse as numbers
    first = rows[0][1]
    try:
        [float(c) for c in first]
        header = None
    except ValueError:
        header = first
        rows = rows[1:]
        if not rows:
            raise DataError(f"file has a header but no data rows: {path}")
    width = len(rows[0][1])
    data = np.empty((len(rows), width))
    for i, (rno, row) in enumerate(rows):
        if len(row) != width:
            raise DataError(f"ragged row {rno}: expected {width} cells, got {len(row)}")
        for j, cell in enumerate(row):
            try:
                data[i, j] = float(cell)
            except ValueError:
                raise DataError(f"non-numeric cell at row {rno}, column {j + 1}: {cell!r}")
    if not np.all(np.isfinite(data)):
        bad = np.argwhere(~np.isfinite(data))[0]
        raise DataError(f"non-finite value at row {bad[0] + 1}, column {bad[1] + 1}")
    return data, header


def _uniformity(t: np.ndarray) -> tuple[bool, float]:
    if t.size < 2:
        return True, 1.0
    gaps = np.diff(t)
    med = float(np.median(gaps))
    if med <= 0.0:
        return False, 1.0
    uniform = float(np.max(gaps) - np.min(gaps)) <= 1e-6 * abs(med)
    return uniform, med


def ingest_csv(path) -> tuple[Dataset, IngestInfo]:
    """Read a CSV as (y), (t, y), or (x1..xP, y); header rows are skipped."""
    data, header = _parse_rows(path)
    names = tuple(header) if header else None
    cols = data.shape[1]
    if cols == 1:
        t = np.arange(data.shape[0], dtype=float)
        return Dataset(t[:, None], data[:, 0], names), IngestInfo(1, True, 1.0, t)
    if cols == 2:
        t = data[:, 0]
        uniform, dt = _uniformity(t)
        return Dataset(t[:, None], data[:, 1], names), IngestInfo(1, uniform, dt, t)
    X = data[:, :-1]
    return Dataset(X, data[:, -1], names), IngestInfo(cols - 1, False, 1.0, None)


# ---------------------------------------------------------------------------
# forecasting jobs
# ---------------------------------------------------------------------------


@dataclass
class ForecastJob:
    input_path: str
    out_dir: str
    kernel: str = "slsm"
    q: int = 10
    train_frac: float = 0.6
    seed: int = 0
    runs: int = 1
    prune: bool = False
    prune_threshold: float = 1.0
    rounds: int = 2
    rbcm_m: int = 0
    observation_noise: bool = False
    max_iters: int = 100
    restarts: int = 1

    def __post_init__(self):
        if not (0.0 < self.train_frac < 1.0):
            raise DataError(f"train fraction must be in (0, 1), got {self.train_frac}")
        if self.q < 1:
            raise DataError("Q must be >= 1")
        if self.kernel not in KERNEL_CHOICES:
            raise DataError(f"unknown kernel {self.kernel!r}")


def chronological_split(data: Dataset, train_frac: float) -> tuple[Dataset, Dataset]:
    n_train = int(math.floor(data.n * train_frac))
    if n_train < 1 or n_train >= data.n:
        raise DataError(f"train fraction {train_frac} leaves an empty split for n={data.n}")
    return (
        Dataset(data.X[:n_train], data.y[:n_train], data.names),
        Dataset(data.X[n_train:], data.y[n_train:], data.names),
    )


def build_init(train: Dataset, info: IngestInfo, kernel: str, q: int, seed: int):
    """Initial parameters: spectral for uniform univariate series, random or
    standard-baseline otherwise."""
    y_var = float(np.var(train.y))
    if y_var <= 0.0:
        y_var = 1.0
    if kernel in kernels.BASELINE_KERNELS:
        span = float(np.max(train.X) - np.min(train.X)) or 1.0
        return kernels.BaselineKernelParams(
            kernel, theta_f=y_var, ell=span / 10.0, rq_alpha=1.0,
            noise_var=0.1 * y_var,
        ), None
    if info.p == 1 and info.uniform:
        spec = spectral.periodogram(train.y, info.delta_t)
        kind = "gaussian" if kernel == "sm" else "laplace"
        fit_mix = spectral.em_mixture(spec, q, kind=kind, seed=seed)
        return spectral.init_params(fit_mix, kernel, y_var, seed=seed), (spec, fit_mix)
    if info.p == 1:
        freq_max = spectral.nyquist_freq_max(info.delta_t)
    else:
        freq_max = spectral.median_distance_freq_max(train.X)
    return spectral.random_init(q, kernel, y_var, freq_max, seed=seed, p=info.p), None


def _train(job: ForecastJob, train: Dataset, init, seed: int):
    cfg = OptConfig(max_iters=job.max_iters, restarts=job.restarts, seed=seed)
    if job.rbcm_m > 0:
        ens = rbcm.rbcm_fit(train, job.rbcm_m, job.kernel, init, cfg)
        return ens, None
    if job.prune:
        pcfg = pruning.PruneConfig(threshold=job.prune_threshold, rounds=job.rounds,
                                   opt=cfg)
        model, report = pruning.lth_fit(train, init, job.kernel, pcfg)
        return model, report
    return gp.fit(train, init, job.kernel, cfg), None


def _model_nlml(model) -> tuple[float, float]:
    """(nlml_with_constant, nlml_without_constant) on the training data."""
    if isinstance(model, rbcm.ExpertEnsemble):
        total = rbcm.rbcm_joint_nlml(model)
        n = sum(e.data.n for e in model.experts)
    else:
        total = model.nlml_internal
        n = model.data.n
    const = 0.5 * n * math.log(2.0 * math.pi)
    return total, total - const


def _write_predictions(path: Path, t_or_x: np.ndarray, pred: gp.Prediction):
    mode = "observation" if pred.observation_noise else "latent"
    sd = np.sqrt(pred.var)
    with open(path, "w", newline="") as fh:
        fh.write(f"# variance_mode: {mode}\n")
        fh.write("t,mean,var,lower95,upper95\n")
        for t, m, v, s in zip(t_or_x, pred.mean, pred.var, sd):
            # plain-float repr: shortest round-trip form, no numpy scalar wrapper
            fh.write(f"{float(t)!r},{float(m)!r},{float(v)!r},"
                     f"{float(m - 1.96 * s)!r},{float(m + 1.96 * s)!r}\n")


def read_predictions_csv(path) -> dict:
    data, _ = _parse_rows(path)
    if data.shape[1] != 5:
        raise DataError(f"predictions file must have 5 columns, got {data.shape[1]}")
    return {"t": data[:, 0], "mean": data[:, 1], "var": data[:, 2],
            "lower95": data[:, 3], "upper95": data[:, 4]}


def _write_spectrum(out_dir: Path, prefix: str, spec, fit_mix):
    with open(out_dir / f"{prefix}spectrum.csv", "w", newline="") as fh:
        fh.write("freq_rad,freq_cycles,power\n")
        for f, p in zip(spec.freqs, spec.powers):
            fh.write(f"{float(f)!r},{float(f) / (2 * math.pi)!r},{float(p)!r}\n")
    grid = np.linspace(spec.freqs[0], spec.freqs[-1], 512)
    dens = np.zeros_like(grid)
    for wk, loc, scale in zip(fit_mix.weights, fit_mix.locations, fit_mix.scales):
        dens += wk * np.exp(spectral._log_pdf(grid, loc, scale, fit_mix.kind))
    with open(out_dir / f"{prefix}mixture_fit.csv", "w", newline="") as fh:
        fh.write("freq_rad,density\n")
        for f, d in zip(grid, dens):
            fh.write(f"{float(f)!r},{float(d)!r}\n")


def _single_run(job: ForecastJob, data: Dataset, info: IngestInfo, seed: int,
                prefix: str) -> dict:
    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train, test = chronological_split(data, job.train_frac)
    init, spec_pair = build_init(train, info, job.kernel, job.q, seed)

    t0 = time.perf_counter()
    model, prune_report = _train(job, train, init, seed)
    runtime_ms = 1000.0 * (time.perf_counter() - t0)

    pred = model.predict(test.X, observation_noise=job.observation_noise)
    nlml_total, nlml_no_const = _model_nlml(model)
    result = {
        "mse": metrics.metric_mse(test.y, pred.mean),
        "mae": metrics.metric_mae(test.y, pred.mean),
        "smse": metrics.metric_smse(test.y, pred.mean),
        "nlml": nlml_total,
        "nlml_no_const": nlml_no_const,
        "pruned_q": prune_report.final_q if prune_report else None,
        "runtime_ms": runtime_ms,
        "seed": seed,
    }

    if isinstance(model, rbcm.ExpertEnsemble):
        model_doc = rbcm.ensemble_to_dict(model)
    else:
        model_doc = gp.model_to_dict(model)
    (out_dir / f"{prefix}model.json").write_text(json.dumps(model_doc, indent=2))
    _write_predictions(out_dir / f"{prefix}predictions.csv", test.X[:, 0], pred)
    if spec_pair is not None:
        _write_spectrum(out_dir, prefix, *spec_pair)
    return result


def run_job(job: ForecastJob) -> dict:
    """Execute a forecasting job; returns the merged metrics report."""
    data, info = ingest_csv(job.input_path)
    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    seeds = [job.seed + i for i in range(job.runs)]
    prefixes = ["" if job.runs == 1 else f"run{i}_" for i in range(job.runs)]
    if job.runs == 1:
        results = [_single_run(job, data, info, seeds[0], prefixes[0])]
    else:
        with ThreadPoolExecutor(max_workers=min(job.runs, 4)) as pool:
            results = list(pool.map(
                lambda sp: _single_run(job, data, info, sp[0], sp[1]),
                zip(seeds, prefixes),
            ))

    report = {
        "n_train": int(math.floor(data.n * job.train_frac)),
        "n_test": data.n - int(math.floor(data.n * job.train_frac)),
        "kernel": job.kernel,
        "runs": job.runs,
    }
    for key in ("mse", "mae", "smse", "nlml", "nlml_no_const"):
        vals = np.array([r[key] for r in results])
        report[key] = {"mean": float(np.mean(vals)), "std": float(np.std(vals))}
    if job.prune:
        report["pruned_q"] = {
            "mean": float(np.mean([r["pruned_q"] for r in results])),
            "values": [r["pruned_q"] for r in results],
        }
    report["runtime_ms"] = float(np.sum([r["runtime_ms"] for r in results]))
    (out_dir / "metrics.json").write_text(json.dumps(report, indent=2))
    return report


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _exit_codes(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except NumericalError as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            sys.exit(4)
        except (DataError, SkewGPError) as exc:
            click.echo(f"data error: {exc}", err=True)
            sys.exit(3)
    return wrapper


@click.group()
def main():
    """Gaussian-process long-horizon forecasting with spectral mixture kernels."""


@main.command("fit")
@click.argument("input_path", type=click.Path())
@click.option("--kernel", type=click.Choice(KERNEL_CHOICES), default="slsm")
@click.option("--q", type=int, default=10, help="Number of mixture components.")
@click.option("--train-frac", type=float, default=0.6)
@click.option("--prune", is_flag=True, help="Lottery-ticket component pruning.")
@click.option("--prune-threshold", type=float, default=1.0)
@click.option("--rounds", type=int, default=2)
@click.option("--rbcm", "rbcm_m", type=int, default=0,
              help="Train M partitioned experts instead of one full GP.")
@click.option("--runs", type=int, default=1)
@click.option("--seed", type=int, default=0)
@click.option("--max-iters", type=int, default=100)
@click.option("--restarts", type=int, default=1)
@click.option("--observation-noise", is_flag=True)
@click.option("--out", "out_dir", type=click.Path(), default="out")
@_exit_codes
def fit_cmd(input_path, kernel, q, train_frac, prune, prune_threshold, rounds,
            rbcm_m, runs, seed, max_iters, restarts, observation_noise, out_dir):
    """Train on the first part of a series and score the held-out remainder."""
    job = ForecastJob(
        input_path=input_path, out_dir=out_dir, kernel=kernel, q=q,
        train_frac=train_frac, seed=seed, runs=runs, prune=prune,
        prune_threshold=prune_threshold, rounds=rounds, rbcm_m=rbcm_m,
        observation_noise=observation_noise, max_iters=max_iters,
        restarts=restarts,
    )
    report = run_job(job)
    click.echo(json.dumps(report, indent=2))


@main.command("predict")
@click.option("--model", "model_path", type=click.Path(), required=True)
@click.option("--train-data", type=click.Path(), required=True,
              help="CSV the model was trained on (checked by fingerprint).")
@click.option("--train-frac", type=float, default=0.6,
              help="Fraction of the file used at fit time (1.0 = whole file).")
@click.option("--at", "at_path", type=click.Path(), required=True,
              help="CSV of query inputs (same column layout, target ignored if absent).")
@click.option("--observation-noise", is_flag=True)
@click.option("--out", "out_path", type=click.Path(), default="predictions.csv")
@_exit_codes
def predict_cmd(model_path, train_data, train_frac, at_path, observation_noise,
                out_path):
    """Predict at new inputs from a saved model."""
    doc = json.loads(Path(model_path).read_text())
    data, info = ingest_csv(train_data)
    if train_frac < 1.0:
        data, _ = chronological_split(data, train_frac)
    if "experts" in doc:
        model = rbcm.ensemble_from_dict(doc, data)
    else:
        model = gp.model_from_dict(doc, data)
    qdata, _ = _parse_rows(at_path)
    Xs = qdata[:, : data.p] if qdata.shape[1] >= data.p else qdata
    pred = model.predict(Xs, observation_noise=observation_noise)
    _write_predictions(Path(out_path), Xs[:, 0], pred)
    click.echo(f"wrote {out_path}")


@main.command("sample")
@click.option("--model", "model_path", type=click.Path(), required=True)
@click.option("--n-points", type=int, default=200)
@click.option("--t-max", type=float, default=None,
              help="Grid end (default: n-points input units).")
@click.option("--n-paths", type=int, default=5)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_path", type=click.Path(), default="samples.csv")
@_exit_codes
def sample_cmd(model_path, n_points, t_max, n_paths, seed, out_path):
    """Draw prior sample paths from a saved model's kernel."""
    doc = json.loads(Path(model_path).read_text())
    kind = doc["kernel_type"]
    params = gp.params_from_dict(doc, kind)
    nz = doc["normalization"]
    grid = np.linspace(0.0, t_max if t_max is not None else float(n_points), n_points)
    paths = gp.sample_prior(kind, params, grid, n_paths, seed)
    paths = nz["y_mean"] + nz["y_std"] * paths
    with open(out_path, "w", newline="") as fh:
        fh.write("t," + ",".join(f"path{i}" for i in range(n_paths)) + "\n")
        for j, t in enumerate(grid):
            fh.write(f"{float(t)!r},"
                     + ",".join(repr(float(paths[i, j])) for i in range(n_paths)) + "\n")
    click.echo(f"wrote {out_path}")


@main.command("spectrum")
@click.argument("input_path", type=click.Path())
@click.option("--q", type=int, default=10)
@click.option("--kind", type=click.Choice(["laplace", "gaussian"]), default="laplace")
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_dir", type=click.Path(), default="out")
@_exit_codes
def spectrum_cmd(input_path, q, kind, seed, out_dir):
    """Emit periodogram and fitted-mixture overlay CSVs for a series."""
    data, info = ingest_csv(input_path)
    if info.p != 1 or not info.uniform:
        raise DataError("spectrum requires a uniformly sampled univariate series")
    spec = spectral.periodogram(data.y, info.delta_t)
    fit_mix = spectral.em_mixture(spec, q, kind=kind, seed=seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_spectrum(out, "", spec, fit_mix)
    click.echo(f"wrote {out / 'spectrum.csv'} and {out / 'mixture_fit.csv'}")


@main.command("evaluate")
@click.option("--truth", type=click.Path(), required=True,
              help="CSV with the true targets (same layout as fit input).")
@click.option("--predictions", type=click.Path(), required=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@_exit_codes
def evaluate_cmd(truth, predictions, out_path):
    """Score a predictions CSV against held-out truth."""
    data, _ = ingest_csv(truth)
    pred = read_predictions_csv(predictions)
    if pred["mean"].size != data.n:
        raise DataError(
            f"predictions cover {pred['mean'].size} points but truth has {data.n}"
        )
    report = {
        "mse": metrics.metric_mse(data.y, pred["mean"]),
        "mae": metrics.metric_mae(data.y, pred["mean"]),
        "smse": metrics.metric_smse(data.y, pred["mean"]),
    }
    text = json.dumps(report, indent=2)
    if out_path:
        Path(out_path).write_text(text)
    click.echo(text)


if __name__ == "__main__":
    main()
