"""Robust Bayesian committee machine: partitioned training and
product-of-experts prediction.

Training minimizes the sum of per-expert NLMLs under one shared
hyper-parameter vector; prediction recombines per-expert Gaussians with
entropy-difference weights (uniform 1/M weights are available as a mode) and
a prior-precision correction:

    prec_* = sum_i beta_i / var_i + (1 - sum_i beta_i) / prior_var
    mean_* = (sum_i beta_i mean_i / var_i) / prec_*

Experts train and predict concurrently; the aggregation is a deterministic,
order-invariant reduction.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DataError, NumericalError
from . import kernels as kn
from .gp import (
    Dataset,
    Normalization,
    Prediction,
    TransformedParams,
    _internal_init,
    _solve_chol,
    chol_with_jitter,
    nlml_value_and_grad,
    params_from_dict,
    params_to_dict,
)
from .gp import SCHEMA_VERSION
from .optimize import OptConfig, minimize, transform, untransform

BETA_MODES = ("entropy", "uniform")


def partition(n: int, m: int, strategy: str = "contiguous", seed: int = 0):
    """Split indices 0..n-1 into M disjoint covering subsets (sizes differ <= 1).

    ``contiguous`` keeps time order (the default for series); ``random``
    shuffles with the given seed.
    """
    if m > n:
        raise DataError(f"cannot split n={n} points into M={m} subsets")
    if m < 1:
        raise DataError("M must be >= 1")
    if strategy == "contiguous":
        idx = np.arange(n)
    elif strategy == "random":
        idx = np.random.default_rng(seed).permutation(n)
    else:
        raise DataError(f"unknown partition strategy {strategy!r}")
    return [np.sort(part) for part in np.array_split(idx, m)]


@dataclass
class _Expert:
    indices: np.ndarray
    data: Dataset            # normalized subset
    chol_L: np.ndarray | None = None
    alpha: np.ndarray | None = None
    jitter_used: float = 0.0


@dataclass
class ExpertEnsemble:
    """Per-expert factors over disjoint subsets, one shared parameter vector."""

    kind: str
    params: object                     # shared, normalized-target space
    normalization: Normalization
    experts: list[_Expert]
    beta_mode: str = "entropy"
    train_fingerprint: str = ""
    opt_trace: list = field(default_factory=list)

    @property
    def m(self) -> int:
        return len(self.experts)

    def predict(self, Xstar, observation_noise: bool = False) -> Prediction:
        return rbcm_predict(self, Xstar, observation_noise=observation_noise)


def _expert_factors(kind, params, expert: _Expert):
    K = kn.gram(expert.data.X, expert.data.X, kind, params)
    L, jit = chol_with_jitter(K, params.noise_var)
    expert.chol_L = L
    expert.alpha = _solve_chol(L, expert.data.y)
    expert.jitter_used = jit


def rbcm_fit(data: Dataset, m: int, kind: str, init_params,
             cfg: OptConfig | None = None, strategy: str = "contiguous",
             beta_mode: str = "entropy", normalize: bool = True,
             parallel: bool = True, subsets=None) -> ExpertEnsemble:
    """Fit M local experts with a shared hyper-parameter vector.

    ``subsets`` overrides the partition (used by the shared-full-data
    validation mode, where every expert may hold all indices).
    """
    if beta_mode not in BETA_MODES:
        raise DataError(f"beta_mode must be one of {BETA_MODES}, got {beta_mode!r}")
    cfg = cfg or OptConfig()
    norm = Normalization.from_data(data) if normalize else Normalization.identity(data.p)
    data_n = norm.apply(data)
    if subsets is None:
        subsets = partition(data.n, m, strategy=strategy, seed=cfg.seed)
    experts = [
        _Expert(indices=np.asarray(idx), data=Dataset(data_n.X[idx], data_n.y[idx]))
        for idx in subsets
    ]
    tp0 = transform(_internal_init(init_params, norm), kind)
    pool = ThreadPoolExecutor(max_workers=min(len(experts), 8)) if parallel else None

    def one(expert, x):
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                return nlml_value_and_grad(expert.data, TransformedParams(x, tp0.layout))
        except (NumericalError, DataError):
            return np.inf, np.zeros_like(x)

    def objective(x):
        if pool is not None:
            results = list(pool.map(lambda e: one(e, x), experts))
        else:
            results = [one(e, x) for e in experts]
        f = sum(r[0] for r in results)
        g = np.sum([r[1] for r in results], axis=0)
        if not np.isfinite(f):
            return np.inf, np.zeros_like(x)
        return f, g

    try:
        res = minimize(objective, tp0.x, cfg, gamma_mask=np.array(tp0.layout.gamma_mask))
    finally:
        if pool is not None:
            pool.shutdown()
    params = untransform(TransformedParams(res.x, tp0.layout))
    ens = ExpertEnsemble(
        kind=kind,
        params=params,
        normalization=norm,
        experts=experts,
        beta_mode=beta_mode,
        train_fingerprint=data.fingerprint(),
        opt_trace=res.trace,
    )
    for e in experts:
        _expert_factors(kind, params, e)
    return ens


def rbcm_joint_nlml(ens: ExpertEnsemble) -> float:
    """Sum of per-expert NLMLs at the shared parameters (normalized space)."""
    from .gp import nlml

    return sum(nlml(e.data, ens.params, ens.kind) for e in ens.experts)


def rbcm_predict(ens: ExpertEnsemble, Xstar, observation_noise: bool = False) -> Prediction:
    """Weighted product-of-experts prediction at the query points."""
    Xs = np.asarray(Xstar, dtype=float)
    if Xs.ndim == 1:
        Xs = Xs[:, None]
    Xs_n = ens.normalization.apply_x(Xs)
    params = ens.params
    noise = params.noise_var
    prior_var = kn.prior_variance(ens.kind, params) + noise
    log_prior = np.log(prior_var)

    means = []
    log_vars = []
    for e in ens.experts:
        ks = kn.gram(Xs_n, e.data.X, ens.kind, params)
        mu = ks @ e.alpha
        v = solve_triangular(e.chol_L, ks.T, lower=True)
        var = kn.prior_variance(ens.kind, params) - np.sum(v * v, axis=0) + noise
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(var))):
            raise NumericalError("expert produced a non-finite prediction")
        var = np.clip(var, 1e-300, None)
        means.append(mu)
        log_vars.append(np.log(var))
    means = np.stack(means)          # (M, m)
    log_vars = np.stack(log_vars)

    if ens.beta_mode == "uniform":
        betas = np.full_like(log_vars, 1.0 / ens.m)
    else:
        betas = np.maximum(0.5 * (log_prior - log_vars), 0.0)
    beta_sum = np.sum(betas, axis=0)
    prec = np.sum(betas * np.exp(-log_vars), axis=0) + (1.0 - beta_sum) * np.exp(-log_prior)
    var = 1.0 / prec
    mean = var * np.sum(betas * np.exp(-log_vars) * means, axis=0)

    clamped = 0
    if not observation_noise:
        var = var - noise
        clamped = int(np.sum(var < 0.0))
        var = np.maximum(var, 0.0)
    s = ens.normalization
    return Prediction(
        mean=s.y_mean + s.y_std * mean,
        var=s.y_std**2 * var,
        clamped=clamped,
        observation_noise=observation_noise,
    )


# ---------------------------------------------------------------------------
# serialization (extends the model schema)
# ---------------------------------------------------------------------------


def ensemble_to_dict(ens: ExpertEnsemble) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kernel_type": ens.kind,
        **params_to_dict(ens.params, ens.kind),
        "normalization": {
            "y_mean": ens.normalization.y_mean,
            "y_std": ens.normalization.y_std,
            "x_means": list(ens.normalization.x_means),
            "x_stds": list(ens.normalization.x_stds),
        },
        "train_fingerprint": ens.train_fingerprint,
        "rbcm": {"beta_mode": ens.beta_mode, "m": ens.m},
        "experts": [
            {"indices": [int(i) for i in e.indices], "jitter_used": e.jitter_used}
            for e in ens.experts
        ],
    }


def ensemble_from_dict(d: dict, data: Dataset) -> ExpertEnsemble:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"unsupported model schema version {d.get('schema_version')!r}")
    if d["train_fingerprint"] != data.fingerprint():
        raise DataError("training data does not match the ensemble's fingerprint")
    kind = d["kernel_type"]
    params = params_from_dict(d, kind)
    nz = d["normalization"]
    norm = Normalization(nz["y_mean"], nz["y_std"], tuple(nz["x_means"]), tuple(nz["x_stds"]))
    data_n = norm.apply(data)
    experts = []
    for rec in d["experts"]:
        idx = np.asarray(rec["indices"], dtype=int)
        experts.append(_Expert(indices=idx, data=Dataset(data_n.X[idx], data_n.y[idx])))
    ens = ExpertEnsemble(
        kind=kind,
        params=params,
        normalization=norm,
        experts=experts,
        beta_mode=d["rbcm"]["beta_mode"],
        train_fingerprint=d["train_fingerprint"],
    )
    for e in experts:
        _expert_factors(kind, params, e)
    return ens
