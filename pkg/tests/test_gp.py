"""Marginal likelihood, gradients, prediction, sampling, serialization."""

import json
import math

import numpy as np
import pytest

import skewgp.gp as gp
import skewgp.kernels as kn
from skewgp.errors import DataError, DimensionMismatchError
from skewgp.gp import Dataset, Normalization, fit, nlml, nlml_grad, sample_prior
from skewgp.kernels import SlsmComponent, SlsmParams
from skewgp.optimize import OptConfig, transform

from conftest import dense_nlml, dense_predict, random_params


UNIT = SlsmParams((SlsmComponent(1.0, 0.0, 1.0, 0.0),), noise_var=0.0)


class TestDataset:
    def test_shape_checks(self):
        with pytest.raises(DataError):
            Dataset(np.zeros((3, 1)), np.zeros(2))
        with pytest.raises(DataError):
            Dataset(np.array([[np.nan]]), np.array([0.0]))

    def test_fingerprint_tracks_content(self):
        a = Dataset(np.arange(4.0), np.arange(4.0))
        b = Dataset(np.arange(4.0), np.arange(4.0))
        c = Dataset(np.arange(4.0), np.arange(4.0) + 1)
        assert a.fingerprint() == b.fingerprint()
        assert a.fingerprint() != c.fingerprint()


class TestNlml:
    def test_single_zero_observation(self):
        data = Dataset(np.array([0.0]), np.array([0.0]))
        assert nlml(data, UNIT, "slsm") == pytest.approx(0.5 * math.log(2 * math.pi),
                                                         abs=1e-12)

    def test_single_unit_observation(self):
        data = Dataset(np.array([0.0]), np.array([1.0]))
        assert nlml(data, UNIT, "slsm") == pytest.approx(
            0.5 + 0.5 * math.log(2 * math.pi), abs=1e-12)

    def test_matches_dense_oracle(self, rng):
        X = np.sort(rng.uniform(0, 20, 50))
        y = rng.standard_normal(50)
        data = Dataset(X, y)
        for kind in ("slsm", "sm", "lkp"):
            p = random_params(rng, q=3, noise=0.3)
            assert nlml(data, p, kind) == pytest.approx(dense_nlml(data, p, kind),
                                                        abs=1e-8)

    def test_terms_sum_to_total(self, rng):
        data = Dataset(np.arange(20.0), rng.standard_normal(20))
        p = random_params(rng, q=2, noise=0.2)
        fit_t, complexity, const = gp.nlml_terms(data, p, "slsm")
        assert fit_t + complexity + const == nlml(data, p, "slsm")
        assert const == pytest.approx(10.0 * math.log(2 * math.pi))


class TestNlmlGrad:
    def test_matches_finite_differences(self, rng):
        for _ in range(20):
            X = np.sort(rng.uniform(0, 15, 30))
            p = random_params(rng, q=3, noise=0.3)
            y = np.sin(0.7 * X) + 0.3 * rng.standard_normal(30)
            data = Dataset(X, y)
            kind = ("slsm", "sm", "lkp")[int(rng.integers(3))]
            tp = transform(p, kind)
            g = nlml_grad(data, p, kind)
            fd = np.empty_like(g)
            for j in range(tp.x.size):
                h = 1e-6 * max(1.0, abs(tp.x[j]))
                xp, xm = tp.x.copy(), tp.x.copy()
                xp[j] += h
                xm[j] -= h
                fp, _ = gp.nlml_value_and_grad(data, gp.TransformedParams(xp, tp.layout))
                fm, _ = gp.nlml_value_and_grad(data, gp.TransformedParams(xm, tp.layout))
                fd[j] = (fp - fm) / (2.0 * h)
            assert np.all(np.abs(g - fd) <= 1e-5 * np.maximum(1.0, np.abs(fd)))

    def test_noise_gradient_small_at_optimum(self, rng):
        y = rng.standard_normal(60)
        data = Dataset(np.arange(60.0), y)
        init = SlsmParams((SlsmComponent(0.1, 1.0, 1.0, 0.0),), noise_var=1.0)
        model = fit(data, init, "slsm", OptConfig(max_iters=200))
        g = nlml_grad(model.data, model.params, "slsm")
        assert abs(g[-1]) < 1e-3    # noise slot is last

    def test_duplicate_components_get_identical_blocks(self, rng):
        c = SlsmComponent(1.2, 0.8, 0.6, 0.4)
        p = SlsmParams((c, c), noise_var=0.1)
        data = Dataset(np.arange(25.0), np.sin(0.8 * np.arange(25.0)))
        g = nlml_grad(data, p, "slsm")
        np.testing.assert_allclose(g[:4], g[4:8], rtol=1e-12)


class TestPredict:
    def _model(self, data, params, kind="slsm"):
        return gp._model_from_params(kind, params, data,
                                     Normalization.identity(data.p),
                                     data.fingerprint())

    def test_interpolates_noise_free_data(self, rng):
        X = np.arange(10.0)
        p = SlsmParams((SlsmComponent(1.0, 0.5, 0.4, 0.2),), noise_var=0.0)
        y = sample_prior("slsm", p, X, 1, seed=3)[0]
        model = self._model(Dataset(X, y), p)
        assert model.jitter_used <= 1e-8
        pred = model.predict(X)
        np.testing.assert_allclose(pred.mean, y, atol=1e-6)
        assert np.all(pred.var <= 1e-6)

    def test_reverts_to_prior_far_away(self, rng):
        p = SlsmParams((SlsmComponent(2.0, 0.5, 0.6, 0.1),), noise_var=0.01)
        X = np.arange(20.0)
        model = self._model(Dataset(X, np.sin(X)), p)
        pred = model.predict(np.array([1e5]))
        assert pred.var[0] == pytest.approx(2.0, abs=1e-3)
        assert pred.mean[0] == pytest.approx(0.0, abs=1e-3)

    def test_matches_dense_oracle(self, rng):
        X = np.sort(rng.uniform(0, 15, 40))
        y = rng.standard_normal(40)
        data = Dataset(X, y)
        p = random_params(rng, q=2, noise=0.4)
        model = self._model(data, p)
        Xs = rng.uniform(0, 15, 7)
        pred = model.predict(Xs)
        mean_o, var_o = dense_predict(data, p, "slsm", Xs)
        np.testing.assert_allclose(pred.mean, mean_o, atol=1e-8)
        np.testing.assert_allclose(pred.var, var_o, atol=1e-8)

    def test_observation_noise_flag_adds_noise(self, rng):
        data = Dataset(np.arange(10.0), rng.standard_normal(10))
        p = random_params(rng, q=2, noise=0.25)
        model = self._model(data, p)
        latent = model.predict(np.array([3.5]))
        noisy = model.predict(np.array([3.5]), observation_noise=True)
        assert noisy.var[0] == pytest.approx(latent.var[0] + 0.25, abs=1e-12)

    def test_variance_bounded_by_prior(self, rng):
        data = Dataset(np.arange(30.0), rng.standard_normal(30))
        p = random_params(rng, q=3, noise=0.1)
        model = self._model(data, p)
        pred = model.predict(rng.uniform(-50, 80, 100))
        prior = kn.prior_variance("slsm", p)
        assert np.all(pred.var <= prior + 1e-8)

    def test_dimension_mismatch(self, rng):
        data = Dataset(np.arange(10.0), rng.standard_normal(10))
        model = self._model(data, random_params(rng, q=1))
        with pytest.raises(DimensionMismatchError):
            model.predict(np.zeros((3, 2)))


class TestFit:
    def test_reduces_nlml_and_records_jitter(self, rng):
        X = np.arange(40.0)
        y = np.sin(0.6 * X) + 0.1 * rng.standard_normal(40)
        data = Dataset(X, y)
        init = SlsmParams((SlsmComponent(1.0, 0.5, 0.3, 0.1),), noise_var=0.5)
        model = fit(data, init, "slsm", OptConfig(max_iters=50))
        tp0 = transform(gp._internal_init(init, model.normalization), "slsm")
        f0, _ = gp.nlml_value_and_grad(model.data, tp0)
        assert model.nlml_internal <= f0
        assert model.jitter_used >= 0.0

    def test_cholesky_consistency_invariants(self, rng):
        X = np.arange(30.0)
        data = Dataset(X, rng.standard_normal(30))
        p = random_params(rng, q=2, noise=0.2)
        model = gp._model_from_params("slsm", p, data, Normalization.identity(1),
                                      data.fingerprint())
        kt = (kn.gram(X, X, "slsm", p) + (p.noise_var + model.jitter_used) * np.eye(30))
        recon = model.chol_L @ model.chol_L.T
        assert np.max(np.abs(recon - kt)) <= 1e-8 * np.trace(kt)
        resid = kt @ model.alpha - data.y
        assert np.linalg.norm(resid) <= 1e-6 * np.linalg.norm(data.y)

    def test_normalization_round_trip(self, rng):
        X = np.arange(25.0)
        y = 100.0 + 13.0 * np.sin(0.5 * X)
        data = Dataset(X, y)
        norm = Normalization.from_data(data)
        p_norm = random_params(rng, q=2, noise=0.1)
        model_n = gp._model_from_params("slsm", p_norm, norm.apply(data), norm,
                                        data.fingerprint())
        # equivalent raw-scale model: weights and noise scaled by y_std^2
        s2 = norm.y_std**2
        p_raw = p_norm.with_components(
            SlsmComponent(c.w * s2, c.mu, c.sigma, c.gamma) for c in p_norm.components)
        p_raw = SlsmParams(p_raw.components, noise_var=p_norm.noise_var * s2)
        shifted = Dataset(X, y - norm.y_mean)
        model_r = gp._model_from_params("slsm", p_raw, shifted,
                                        Normalization.identity(1),
                                        shifted.fingerprint())
        Xs = rng.uniform(0, 25, 11)
        np.testing.assert_allclose(model_n.predict(Xs).mean,
                                   model_r.predict(Xs).mean + norm.y_mean,
                                   atol=1e-10)

    def test_denormalized_params_scale_back(self, rng):
        X = np.arange(30.0)
        y = 50.0 + 10.0 * np.sin(0.7 * X) + rng.standard_normal(30)
        init = SlsmParams((SlsmComponent(np.var(y), 0.7, 0.3, 0.0),),
                          noise_var=0.1 * np.var(y))
        model = fit(Dataset(X, y), init, "slsm", OptConfig(max_iters=30))
        s2 = model.normalization.y_std**2
        den = model.denormalized_params()
        assert den.noise_var == pytest.approx(model.params.noise_var * s2)
        for ci, cd in zip(model.params.components, den.components):
            assert cd.w == pytest.approx(ci.w * s2)
            assert cd.mu == ci.mu and cd.sigma == ci.sigma and cd.gamma == ci.gamma


class TestSamplePrior:
    def test_empirical_covariance_converges(self, rng):
        p = SlsmParams((SlsmComponent(1.5, 0.8, 0.5, 0.3),), noise_var=0.0)
        X = np.array([0.0, 1.0, 2.5])
        K = kn.gram(X, X, "slsm", p)
        draws = sample_prior("slsm", p, X, 10_000, seed=7)
        emp = draws.T @ draws / draws.shape[0]
        bound = 5.0 * np.max(K) / math.sqrt(10_000)
        assert np.max(np.abs(emp - K)) < bound

    def test_seed_determinism(self, rng):
        p = random_params(rng, q=2, noise=0.0)
        X = np.linspace(0, 5, 20)
        a = sample_prior("slsm", p, X, 5, seed=11)
        b = sample_prior("slsm", p, X, 5, seed=11)
        np.testing.assert_array_equal(a, b)
        c = sample_prior("slsm", p, X, 5, seed=12)
        assert np.any(a != c)

    def test_zero_weight_kernel_samples_near_zero(self):
        p = SlsmParams((SlsmComponent(0.0, 1.0, 1.0, 0.0),), noise_var=0.0)
        draws = sample_prior("slsm", p, np.arange(5.0), 100, seed=0)
        assert np.max(np.abs(draws)) < 1e-4    # only ladder jitter remains


class TestSerialization:
    def test_round_trip_bit_exact(self, rng):
        X = np.arange(20.0)
        y = np.sin(0.4 * X) + 0.2 * rng.standard_normal(20)
        data = Dataset(X, y)
        init = SlsmParams((SlsmComponent(1.0, 0.4, 0.3, 0.1),
                           SlsmComponent(0.5, 1.1, 0.2, -0.2)),
                          noise_var=0.2)
        model = fit(data, init, "slsm", OptConfig(max_iters=20))
        text = gp.model_to_json(model)
        clone = gp.model_from_json(text, data)
        assert clone.kind == model.kind
        for a, b in zip(clone.params.components, model.params.components):
            assert (a.w, a.mu, a.sigma, a.gamma) == (b.w, b.mu, b.sigma, b.gamma)
        assert clone.params.noise_var == model.params.noise_var
        assert gp.model_to_json(clone) == text

    def test_fingerprint_mismatch_rejected(self, rng):
        data = Dataset(np.arange(10.0), rng.standard_normal(10))
        other = Dataset(np.arange(10.0), rng.standard_normal(10))
        model = gp._model_from_params("slsm", random_params(rng, q=1, noise=0.1),
                                      data, Normalization.identity(1),
                                      data.fingerprint())
        with pytest.raises(DataError):
            gp.model_from_json(gp.model_to_json(model), other)

    def test_schema_version_checked(self, rng):
        data = Dataset(np.arange(5.0), rng.standard_normal(5))
        model = gp._model_from_params("slsm", random_params(rng, q=1, noise=0.1),
                                      data, Normalization.identity(1),
                                      data.fingerprint())
        doc = gp.model_to_dict(model)
        doc["schema_version"] = 99
        with pytest.raises(DataError):
            gp.model_from_dict(doc, data)
