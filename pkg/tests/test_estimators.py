"""Estimator-object interface: parameters, fitting, scoring, selection."""

import numpy as np
import pytest
from sklearn.base import clone

from cmgl.estimators import EbicSelector, OlsCovariance, QmleCovariance
from cmgl.exceptions import InputError
from cmgl.links import Spectral

from conftest import sparse_bernoulli


def make_data(seed=1, p=30, k=2, n=25, link="exponential"):
    rng = np.random.default_rng(seed)
    ws = sparse_bernoulli(p, k, rng)
    if link == "identity":
        beta = np.array([10.0, 1.0, -0.8][: k + 1])
    else:
        beta = np.array([0.3, 0.15, -0.15][: k + 1])
    st = Spectral.from_b(link, ws.combine(beta))
    x = rng.standard_normal((n, p)) @ st.sqrt()
    return ws, beta, x


class TestQmleCovariance:
    def test_fit_attributes(self):
        ws, beta, x = make_data()
        est = QmleCovariance(ws, link="exponential").fit(x)
        assert est.converged_
        assert est.coef_.shape == (3,)
        assert est.covariance_.shape == (30, 30)
        assert est.sd_.shape == (3,)
        assert est.n_features_in_ == 30
        assert np.max(np.abs(est.coef_ - beta)) < 0.15
        eigs = np.linalg.eigvalsh(est.covariance_)
        assert eigs[0] > 0

    def test_score_is_average_loglik(self):
        ws, _, x = make_data()
        est = QmleCovariance(ws, link="exponential").fit(x)
        s = est.score(x)
        assert np.isfinite(s)
        assert s == pytest.approx(est.loglik_ / x.shape[0], rel=1e-10)

    def test_score_prefers_true_model_data(self):
        ws, _, x = make_data()
        est = QmleCovariance(ws, link="exponential").fit(x)
        rng = np.random.default_rng(9)
        other = rng.standard_normal(x.shape) * 5.0
        assert est.score(x) > est.score(other)

    def test_centering_default_vs_assume_centered(self):
        ws, _, x = make_data()
        shifted = x + 3.0
        centered = QmleCovariance(ws, link="exponential").fit(shifted)
        assert np.allclose(centered.location_, shifted.mean(axis=0))
        raw = QmleCovariance(ws, link="exponential", assume_centered=True).fit(x)
        assert np.allclose(raw.location_, 0.0)
        # removing the shift recovers (nearly) the uncentered fit of x
        assert np.max(np.abs(centered.coef_ - raw.coef_)) < 0.2

    def test_vcov_optional(self):
        ws, _, x = make_data()
        est = QmleCovariance(ws, compute_vcov=False).fit(x)
        assert est.sd_ is None and est.vcov_ is None

    def test_get_params_round_trip_and_clone(self):
        ws, _, _ = make_data()
        est = QmleCovariance(ws, link="square", gtol=1e-8, max_iter=50)
        params = est.get_params()
        assert params["link"] == "square"
        assert params["gtol"] == 1e-8
        dup = clone(est)
        assert dup.get_params()["max_iter"] == 50
        est.set_params(link="identity")
        assert est.link == "identity"


class TestOlsCovariance:
    def test_fit_matches_functional_layer(self):
        from cmgl.estimate import fit_ols

        ws, _, x = make_data(link="identity")
        est = OlsCovariance(ws, assume_centered=True).fit(x)
        res = fit_ols(x, ws)
        assert np.allclose(est.coef_, res.beta, atol=1e-14)
        assert np.allclose(est.covariance_, ws.combine(res.beta), atol=1e-14)
        assert est.converged_

    def test_score_runs_when_pd(self):
        ws, _, x = make_data(p=30, k=2, n=40, link="identity")
        est = OlsCovariance(ws).fit(x)
        assert np.isfinite(est.score(x))


class TestEbicSelector:
    def test_backward_selection_attributes(self):
        rng = np.random.default_rng(1)
        ws = sparse_bernoulli(40, 3, rng)
        beta = np.array([10.0, 1.0, -0.8, 0.0])
        st = Spectral.from_b("identity", ws.combine(beta))
        x = rng.standard_normal((20, 40)) @ st.sqrt()
        sel = EbicSelector(ws, link="identity", estimator="qmle").fit(x)
        assert sel.support_ == (0, 1, 2)
        assert sel.converged_
        assert np.all(sel.coef_[3:] == 0.0)
        assert sel.covariance_.shape == (40, 40)
        assert len(sel.trace_) >= 4
        assert sel.get_support() == (0, 1, 2)
        mask = sel.get_support(indices=False)
        assert mask.tolist() == [True, True, True, False]

    def test_exhaustive_method(self):
        rng = np.random.default_rng(2)
        ws = sparse_bernoulli(30, 2, rng)
        beta = np.array([10.0, 1.0, 0.0])
        st = Spectral.from_b("identity", ws.combine(beta))
        x = rng.standard_normal((25, 30)) @ st.sqrt()
        sel = EbicSelector(ws, estimator="ols", method="exhaustive").fit(x)
        assert sel.support_ == (0, 1)
        assert len(sel.trace_) == 4

    def test_bad_method_rejected(self):
        ws, _, x = make_data(link="identity")
        with pytest.raises(InputError):
            EbicSelector(ws, method="forward").fit(x)

    def test_clone_compatible(self):
        ws, _, _ = make_data()
        sel = EbicSelector(ws, gamma=1.0, method="exhaustive")
        dup = clone(sel)
        assert dup.get_params()["gamma"] == 1.0
        assert dup.get_params()["method"] == "exhaustive"
