"""Exact Gaussian-process regression on top of the spectral kernels.

Training minimizes the negative log marginal likelihood (NLML)

    0.5 y^T (K + s2 I)^-1 y  +  0.5 log|K + s2 I|  +  (n/2) log 2 pi

with the full constant included.  Targets are centered and scaled to unit
variance before training; weights and the noise variance are reported back in
the original units.  Cholesky failures walk a jitter ladder eps * (tr/n) with
eps in {1e-10, 1e-8, 1e-6, 1e-4, 1e-2} and the jitter actually used is part of
the model record, never silent.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .errors import DataError, DimensionMismatchError, NumericalError
from . import kernels as kn
from .kernels import (
    BaselineKernelParams,
    MultiSlsmComponent,
    MultiSlsmParams,
    SlsmComponent,
    SlsmParams,
)
from .optimize import (
    OptConfig,
    OptResult,
    TransformedParams,
    minimize,
    transform,
    untransform,
)

JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2)
SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# data containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """Observed inputs X (n x P) and targets y (n,)."""

    X: np.ndarray
    y: np.ndarray
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise DataError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if X.shape[0] < 1:
            raise DataError("dataset is empty")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("dataset contains non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.X.tobytes())
        h.update(self.y.tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class Normalization:
    """Center/scale stats applied to y (and to X columns when P > 1)."""

    y_mean: float
    y_std: float
    x_means: tuple[float, ...]
    x_stds: tuple[float, ...]

    @classmethod
    def from_data(cls, data: Dataset, normalize_x: bool | None = None) -> "Normalization":
        y_std = float(np.std(data.y))
        if y_std <= 0.0:
            y_std = 1.0
        if normalize_x is None:
            normalize_x = data.p > 1
        if normalize_x:
            xm = tuple(float(v) for v in np.mean(data.X, axis=0))
            xs = tuple(float(v) if v > 0 else 1.0 for v in np.std(data.X, axis=0))
        else:
            xm = (0.0,) * data.p
            xs = (1.0,) * data.p
        return cls(float(np.mean(data.y)), y_std, xm, xs)

    @classmethod
    def identity(cls, p: int = 1) -> "Normalization":
        return cls(0.0, 1.0, (0.0,) * p, (1.0,) * p)

    def apply(self, data: Dataset) -> Dataset:
        xn = (data.X - np.array(self.x_means)) / np.array(self.x_stds)
        yn = (data.y - self.y_mean) / self.y_std
        return Dataset(xn, yn, data.names)

    def apply_x(self, X: np.ndarray) -> np.ndarray:
        return (X - np.array(self.x_means)) / np.array(self.x_stds)


@dataclass
class Prediction:
    """Predictive mean and (nonnegative) variance at the query points."""

    mean: np.ndarray
    var: np.ndarray
    clamped: int = 0
    observation_noise: bool = False


# ---------------------------------------------------------------------------
# linear algebra with the jitter ladder
# ---------------------------------------------------------------------------


def chol_with_jitter(K: np.ndarray, noise_var: float):
    """Lower Cholesky of K + noise I, escalating jitter on failure.

    Returns ``(L, jitter_used)``; raises :class:`NumericalError` naming the
    final jitter tried when the whole ladder fails.
    """
    n = K.shape[0]
    if not (np.all(np.isfinite(K)) and np.isfinite(noise_var)):
        raise NumericalError("covariance matrix contains non-finite values")
    kt = K + noise_var * np.eye(n)
    scale = float(np.trace(kt)) / n
    if scale <= 0.0:
        scale = 1.0
    last = 0.0
    for eps in JITTER_LADDER:
        last = eps * scale
        try:
            L = cholesky(kt + last * np.eye(n), lower=True)
            return L, last
        except np.linalg.LinAlgError:
            continue
    raise NumericalError(
        f"Cholesky factorization failed after jitter escalation up to {last:.3e}"
    )


def _solve_chol(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    return cho_solve((L, True), b)


# ---------------------------------------------------------------------------
# NLML and its gradient
# ---------------------------------------------------------------------------


def nlml_terms(data: Dataset, params, kind: str):
    """(model_fit, complexity, constant) pieces of the NLML."""
    K = kn.gram(data.X, data.X, kind, params)
    L, jit = chol_with_jitter(K, params.noise_var)
    alpha = _solve_chol(L, data.y)
    fit = 0.5 * float(data.y @ alpha)
    complexity = float(np.sum(np.log(np.diag(L))))
    const = 0.5 * data.n * math.log(2.0 * math.pi)
    return fit, complexity, const


def nlml(data: Dataset, params, kind: str) -> float:
    """Full negative log marginal likelihood (constant included)."""
    fit, complexity, const = nlml_terms(data, params, kind)
    return fit + complexity + const


def _iter_natural_partials(tau, params, kind: str):
    """Yield natural-coordinate dK/dtheta matrices in transform slot order
    (noise excluded).  ``tau`` is the lag matrix (n, n) or (n, n, P)."""
    if isinstance(params, BaselineKernelParams):
        parts = kn.baseline_partials(tau if tau.ndim == 2 else np.sqrt(np.sum(tau * tau, -1)), params)
        for m in parts[1:]:
            yield m
        return
    if isinstance(params, MultiSlsmParams):
        for c in params.components:
            val, d_mu, d_s2, d_ga = kn.multi_component_partials(tau, c, kind=kind)
            yield val
            for d in range(c.p):
                yield c.w * d_mu[..., d]
            for d in range(c.p):
                yield c.w * d_s2[..., d]
            if kind == "slsm" and d_ga is not None:
                for d in range(c.p):
                    yield c.w * d_ga[..., d]
        return
    for c in params.components:
        if kind == "sm":
            val, d_mu, d_sigma = kn.sm_component_partials(tau, c)
            d_gamma = None
        elif kind == "lkp":
            val, d_mu, d_sigma, _ = kn.slsm_component_partials(tau, replace(c, gamma=0.0))
            d_gamma = None
        else:
            val, d_mu, d_sigma, d_gamma = kn.slsm_component_partials(tau, c)
        yield val
        yield c.w * d_mu
        yield c.w * d_sigma
        if kind == "slsm" and d_gamma is not None:
            yield c.w * d_gamma


def _lag_tensor(X: np.ndarray, params) -> np.ndarray:
    if X.shape[1] == 1 and not isinstance(params, MultiSlsmParams):
        return X[:, 0][:, None] - X[:, 0][None, :]
    return X[:, None, :] - X[None, :, :]


def nlml_value_and_grad(data: Dataset, tp: TransformedParams):
    """NLML and its gradient in the transformed coordinates of ``tp``."""
    params = untransform(tp)
    kind = tp.layout.kind
    K = kn.gram(data.X, data.X, kind, params)
    L, _ = chol_with_jitter(K, params.noise_var)
    alpha = _solve_chol(L, data.y)
    f = (
        0.5 * float(data.y @ alpha)
        + float(np.sum(np.log(np.diag(L))))
        + 0.5 * data.n * math.log(2.0 * math.pi)
    )
    # M = K~^-1 - alpha alpha^T ; dNLML/dtheta = 0.5 tr(M dK/dtheta)
    kinv = _solve_chol(L, np.eye(data.n))
    M = kinv - np.outer(alpha, alpha)
    tau = _lag_tensor(data.X, params)
    grad_nat = np.empty(tp.layout.size)
    for j, dK in enumerate(_iter_natural_partials(tau, params, kind)):
        grad_nat[j] = 0.5 * float(np.sum(M * dK))
    grad_nat[-1] = 0.5 * float(np.trace(M))  # noise slot: dK/ds2 = I
    scale = np.where(tp.layout.log_mask, np.exp(tp.x), 1.0)
    return f, grad_nat * scale


def nlml_grad(data: Dataset, params, kind: str) -> np.ndarray:
    """Gradient of the NLML over the transformed hyper-parameter vector."""
    tp = transform(params, kind)
    _, g = nlml_value_and_grad(data, tp)
    return g


# ---------------------------------------------------------------------------
# trained model
# ---------------------------------------------------------------------------


@dataclass
class TrainedModel:
    """Kernel spec + optimized parameters + cached factors for prediction.

    ``params`` lives in the internal (normalized-target) space; use
    :meth:`denormalized_params` for user-facing values.  Immutable after fit.
    """

    kind: str
    params: object
    data: Dataset                  # normalized training data
    normalization: Normalization
    chol_L: np.ndarray
    alpha: np.ndarray
    jitter_used: float
    train_fingerprint: str
    opt_result: OptResult | None = None
    prune_report: dict | None = None

    @property
    def nlml_internal(self) -> float:
        """NLML of the normalized training data at the fitted parameters."""
        return nlml(self.data, self.params, self.kind)

    def denormalized_params(self):
        """Parameters with weights / noise rescaled to original target units."""
        s2 = self.normalization.y_std**2
        p = self.params
        if isinstance(p, BaselineKernelParams):
            return replace(p, theta_f=p.theta_f * s2, noise_var=p.noise_var * s2)
        comps = tuple(replace(c, w=c.w * s2) for c in p.components)
        return p.__class__(comps, noise_var=p.noise_var * s2)

    def predict(self, Xstar, observation_noise: bool = False) -> Prediction:
        Xs = np.asarray(Xstar, dtype=float)
        if Xs.ndim == 1:
            Xs = Xs[:, None]
        if Xs.shape[1] != self.data.p:
            raise DimensionMismatchError(self.data.p, Xs.shape[1])
        if not np.all(np.isfinite(Xs)):
            raise DataError("prediction inputs contain non-finite values")
        Xs_n = self.normalization.apply_x(Xs)
        ks = kn.gram(Xs_n, self.data.X, self.kind, self.params)
        mean_n = ks @ self.alpha
        v = solve_triangular(self.chol_L, ks.T, lower=True)
        var_n = kn.prior_variance(self.kind, self.params) - np.sum(v * v, axis=0)
        if observation_noise:
            var_n = var_n + self.params.noise_var
        clamped = int(np.sum(var_n < 0.0))
        var_n = np.maximum(var_n, 0.0)
        s = self.normalization
        return Prediction(
            mean=s.y_mean + s.y_std * mean_n,
            var=s.y_std**2 * var_n,
            clamped=clamped,
            observation_noise=observation_noise,
        )


def _internal_init(init_params, normalization: Normalization):
    """Convert raw-unit initial parameters into the normalized target space."""
    s2 = normalization.y_std**2
    p = init_params
    if isinstance(p, BaselineKernelParams):
        return replace(p, theta_f=p.theta_f / s2, noise_var=p.noise_var / s2)
    comps = tuple(replace(c, w=c.w / s2) for c in p.components)
    return p.__class__(comps, noise_var=p.noise_var / s2)


def _model_from_params(kind, params, data_n, normalization, fingerprint,
                       opt_result=None, prune_report=None) -> TrainedModel:
    K = kn.gram(data_n.X, data_n.X, kind, params)
    L, jit = chol_with_jitter(K, params.noise_var)
    alpha = _solve_chol(L, data_n.y)
    return TrainedModel(
        kind=kind,
        params=params,
        data=data_n,
        normalization=normalization,
        chol_L=L,
        alpha=alpha,
        jitter_used=jit,
        train_fingerprint=fingerprint,
        opt_result=opt_result,
        prune_report=prune_report,
    )


def fit(data: Dataset, init_params, kind: str, cfg: OptConfig | None = None,
        normalize: bool = True) -> TrainedModel:
    """Optimize the NLML from ``init_params`` (given in raw target units)."""
    cfg = cfg or OptConfig()
    norm = Normalization.from_data(data) if normalize else Normalization.identity(data.p)
    data_n = norm.apply(data)
    tp0 = transform(_internal_init(init_params, norm), kind)

    def objective(x):
        # DataError covers log-slot underflow to 0 during extreme line-search
        # steps; overflow to inf is caught by the non-finite covariance guard
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                return nlml_value_and_grad(data_n, TransformedParams(x, tp0.layout))
        except (NumericalError, DataError):
            return np.inf, np.zeros_like(x)

    res = minimize(objective, tp0.x, cfg, gamma_mask=np.array(tp0.layout.gamma_mask))
    params = untransform(TransformedParams(res.x, tp0.layout))
    return _model_from_params(kind, params, data_n, norm, data.fingerprint(),
                              opt_result=res)


# ---------------------------------------------------------------------------
# prior sampling
# ---------------------------------------------------------------------------


def sample_prior(kind: str, params, X, n_paths: int, seed: int) -> np.ndarray:
    """Draw ``n_paths`` zero-mean functions from the kernel prior at X."""
    Xp = np.asarray(X, dtype=float)
    if Xp.ndim == 1:
        Xp = Xp[:, None]
    K = kn.gram(Xp, Xp, kind, params)
    L, _ = chol_with_jitter(K, 0.0)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_paths, Xp.shape[0]))
    return z @ L.T


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def params_to_dict(params, kind: str) -> dict:
    if isinstance(params, BaselineKernelParams):
        return {
            "baseline": {
                "variant": params.variant,
                "theta_f": params.theta_f,
                "ell": params.ell,
                "rq_alpha": params.rq_alpha,
            },
            "components": [],
            "noise_var": params.noise_var,
        }
    comps = []
    for c in params.components:
        if isinstance(c, MultiSlsmComponent):
            comps.append({
                "w": c.w,
                "mu": list(c.mu_vec),
                "sigma2": list(c.sigma2_vec),
                "gamma": list(c.gamma_vec),
            })
        else:
            comps.append({"w": c.w, "mu": c.mu, "sigma": c.sigma, "gamma": c.gamma})
    return {"components": comps, "noise_var": params.noise_var}


def params_from_dict(d: dict, kind: str):
    if kind in kn.BASELINE_KERNELS:
        b = d["baseline"]
        return BaselineKernelParams(b["variant"], b["theta_f"], b["ell"],
                                    b["rq_alpha"], noise_var=d["noise_var"])
    comps = []
    multi = False
    for c in d["components"]:
        if isinstance(c.get("mu"), list):
            multi = True
            comps.append(MultiSlsmComponent(c["w"], tuple(c["mu"]),
                                            tuple(c["sigma2"]), tuple(c["gamma"])))
        else:
            comps.append(SlsmComponent(c["w"], c["mu"], c["sigma"], c.get("gamma", 0.0)))
    cls = MultiSlsmParams if multi else SlsmParams
    return cls(tuple(comps), noise_var=d["noise_var"])


def model_to_dict(model: TrainedModel) -> dict:
    d = {
        "schema_version": SCHEMA_VERSION,
        "kernel_type": model.kind,
        **params_to_dict(model.params, model.kind),
        "normalization": {
            "y_mean": model.normalization.y_mean,
            "y_std": model.normalization.y_std,
            "x_means": list(model.normalization.x_means),
            "x_stds": list(model.normalization.x_stds),
        },
        "jitter_used": model.jitter_used,
        "train_fingerprint": model.train_fingerprint,
    }
    if model.prune_report is not None:
        d["prune_report"] = model.prune_report
    return d


def model_to_json(model: TrainedModel) -> str:
    return json.dumps(model_to_dict(model), indent=2)


def model_from_dict(d: dict, data: Dataset) -> TrainedModel:
    """Rebuild a trained model from its JSON record plus the training data."""
    if d.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"unsupported model schema version {d.get('schema_version')!r}")
    if d["train_fingerprint"] != data.fingerprint():
        raise DataError("training data does not match the model's fingerprint")
    kind = d["kernel_type"]
    params = params_from_dict(d, kind)
    nz = d["normalization"]
    norm = Normalization(nz["y_mean"], nz["y_std"], tuple(nz["x_means"]), tuple(nz["x_stds"]))
    data_n = norm.apply(data)
    model = _model_from_params(kind, params, data_n, norm, d["train_fingerprint"],
                               prune_report=d.get("prune_report"))
    return model


def model_from_json(text: str, data: Dataset) -> TrainedModel:
    return model_from_dict(json.loads(text), data)
