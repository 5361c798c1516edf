"""Simulation lab: truths, scenario weights, samples, measures, runners."""

import numpy as np
import pytest

from cmgl.exceptions import InputError, NotPositiveDefiniteError
from cmgl.simlab import (
    SimConfig,
    fit_measures,
    gen_sample,
    gen_truth,
    gen_weights_scenario,
    run_part1,
    run_part2,
    selection_measures,
)
from cmgl.weights import density


class TestGenTruth:
    def test_identity_pattern(self):
        beta = gen_truth("identity", 10)
        assert np.allclose(
            beta, [10, 1, -1, 1, 0, 0, 0, 0, 0, 0, 0], atol=1e-15
        )

    def test_exponential_pattern(self):
        beta = gen_truth("exponential", 15)
        expected = np.zeros(16)
        expected[:4] = [0.3, 0.15, -0.15, -0.15]
        assert np.allclose(beta, expected, atol=1e-15)

    def test_longer_active_sets_cycle(self):
        beta = gen_truth("identity", 6, k0=5)
        assert np.allclose(beta[1:6], [1, -1, 1, -1, 1])
        beta = gen_truth("exponential", 6, k0=5)
        assert np.allclose(beta[1:6], [0.15, -0.15, -0.15, 0.15, -0.15])

    def test_zero_active(self):
        beta = gen_truth("exponential", 4, k0=0)
        assert beta[0] == 0.3 and np.all(beta[1:] == 0.0)

    def test_unsupported_links(self):
        for link in ("square", "inverse", "sar"):
            with pytest.raises(InputError):
                gen_truth(link, 5)

    def test_k0_bounds(self):
        with pytest.raises(InputError):
            gen_truth("identity", 2, k0=3)
        with pytest.raises(InputError):
            gen_truth("identity", 2, k0=-1)


class TestScenarioWeights:
    def test_scenario_a_density_and_form(self):
        p, k = 60, 3
        ws = gen_weights_scenario("a", p, k, seed=11)
        assert ws.k == k and ws.p == p
        for i in range(1, k + 1):
            w = ws.matrix(i)
            assert np.array_equal(w, w.T)
            assert np.all(np.diag(w) == 0.0)
            assert set(np.unique(w)) <= {0.0, 1.0}
            assert abs(density(w) - 5.0 / p) < 0.4 * 5.0 / p

    def test_scenario_b_kernel_slots(self):
        p = 40
        ws = gen_weights_scenario("b", p, 5, seed=3)
        for i in (2, 5):
            w = ws.matrix(i)
            vals = w[w > 0]
            assert vals.size > 0
            assert np.any((vals > 0) & (vals < 1))  # kernel values, not 0/1
            assert abs(density(w) - 5.0 / p) <= 1.0 / (p * (p - 1))
        for i in (1, 3, 4):
            assert set(np.unique(ws.matrix(i))) <= {0.0, 1.0}

    def test_scenario_b_small_k_has_single_kernel(self):
        ws = gen_weights_scenario("b", 30, 2, seed=5)
        assert np.any((ws.matrix(2) > 0) & (ws.matrix(2) < 1))
        assert set(np.unique(ws.matrix(1))) <= {0.0, 1.0}

    def test_same_seed_reproduces(self):
        a = gen_weights_scenario("a", 25, 4, seed=9)
        b = gen_weights_scenario("a", 25, 4, seed=9)
        assert np.array_equal(a.stack, b.stack)
        c = gen_weights_scenario("a", 25, 4, seed=10)
        assert not np.array_equal(a.stack, c.stack)

    def test_validation(self):
        with pytest.raises(InputError):
            gen_weights_scenario("a", 9, 2, seed=0)
        with pytest.raises(InputError):
            gen_weights_scenario("c", 20, 2, seed=0)
        with pytest.raises(InputError):
            gen_weights_scenario("a", 20, -1, seed=0)


class TestGenSample:
    def test_unit_variance_all_distributions(self):
        for dist in ("normal", "mixture", "exp_std"):
            y = gen_sample(np.eye(500), dist, 200, seed=1)
            flat = y.ravel()
            assert abs(float(np.mean(flat))) < 0.02, dist
            assert abs(float(np.var(flat)) - 1.0) < 0.03, dist

    def test_exp_std_is_skewed(self):
        y = gen_sample(np.eye(500), "exp_std", 200, seed=2).ravel()
        skew = float(np.mean(y**3) / np.mean(y**2) ** 1.5)
        assert abs(skew - 2.0) < 0.2

    def test_mixture_has_heavy_tails(self):
        y = gen_sample(np.eye(500), "mixture", 200, seed=3).ravel()
        # kurtosis of the two-component scale mixture: E z^4 = 3 (0.1 * 25
        # + 0.9 * 25/81) = 8.333
        mu4 = float(np.mean(y**4))
        assert abs(mu4 - 8.333) < 0.5

    def test_covariance_is_sigma0(self):
        rng = np.random.default_rng(4)
        a = rng.standard_normal((10, 10))
        sigma0 = a @ a.T / 10 + np.eye(10)
        y = gen_sample(sigma0, "normal", 20000, seed=5)
        s = y.T @ y / 20000
        rel = np.linalg.norm(s - sigma0) / np.linalg.norm(sigma0)
        assert rel < 0.05

    def test_rejects_bad_inputs(self):
        with pytest.raises(NotPositiveDefiniteError):
            gen_sample(np.diag([1.0, -1.0]), "normal", 5, seed=0)
        with pytest.raises(InputError):
            gen_sample(np.eye(3), "normal", 0, seed=0)
        with pytest.raises(InputError):
            gen_sample(np.eye(3), "cauchy", 5, seed=0)


class TestMeasures:
    def test_exact_zero_at_truth(self):
        sigma0 = np.diag([2.0, 3.0])
        beta = np.array([1.0, 0.5])
        m = fit_measures(sigma0, beta, beta, sigma0)
        assert m == {"ee": 0.0, "se": 0.0, "fe": 0.0}

    def test_coefficient_error_is_squared_norm(self):
        sigma0 = np.eye(2)
        m = fit_measures(sigma0, [1.0, 2.0], [1.0, 1.0], sigma0)
        assert m["ee"] == pytest.approx(1.0)
        m = fit_measures(sigma0, [2.0, 3.0], [1.0, 1.0], sigma0)
        assert m["ee"] == pytest.approx(5.0)

    def test_covariance_errors_closed_form(self):
        sigma0 = np.eye(2)
        sigma_hat = np.diag([1.5, 0.7])
        m = fit_measures(sigma_hat, [0.0], [0.0], sigma0)
        assert m["se"] == pytest.approx(0.5)
        assert m["fe"] == pytest.approx((0.25 + 0.09) / 2.0)

    def test_spectral_error_matches_operator_norm(self):
        rng = np.random.default_rng(6)
        a = rng.standard_normal((8, 8))
        sigma0 = a @ a.T + 8 * np.eye(8)
        b = rng.standard_normal((8, 8))
        sigma_hat = sigma0 + (b + b.T) / 4.0
        m = fit_measures(sigma_hat, [0.0], [0.0], sigma0)
        assert m["se"] == pytest.approx(
            float(np.linalg.norm(sigma_hat - sigma0, 2)), rel=1e-10
        )

    def test_selection_measures_cases(self):
        assert selection_measures((0, 1, 2, 3), 3) == {
            "tpr": 1.0, "fdr": 0.0, "ct": 1.0,
        }
        m = selection_measures((0, 1, 2), 3)
        assert m["tpr"] == pytest.approx(2.0 / 3.0)
        assert m["fdr"] == 0.0 and m["ct"] == 0.0
        m = selection_measures((0, 1, 2, 4), 3)
        assert m["tpr"] == pytest.approx(2.0 / 3.0)
        assert m["fdr"] == pytest.approx(1.0 / 3.0)
        assert m["ct"] == 0.0

    def test_selection_measures_conventions(self):
        # Nothing to find: TPR 1; nothing selected: FDR 0.
        assert selection_measures((0,), 0) == {"tpr": 1.0, "fdr": 0.0, "ct": 1.0}
        m = selection_measures((0, 1), 0)
        assert m["tpr"] == 1.0 and m["fdr"] == 1.0 and m["ct"] == 0.0
        assert selection_measures((0,), 3)["fdr"] == 0.0

    def test_intercept_index_ignored(self):
        assert selection_measures((1, 2, 3), 3) == selection_measures(
            (0, 1, 2, 3), 3
        )


class TestSimConfig:
    def test_defaults_and_round_trip(self):
        cfg = SimConfig(p=100, k=10)
        d = cfg.to_dict()
        assert d["link"] == "exponential" and d["n"] == 1
        assert d["gamma"] == 0.5 and d["estimator"] == "qmle"
        assert SimConfig.from_dict(d) == cfg

    def test_unknown_field_rejected(self):
        with pytest.raises(InputError):
            SimConfig.from_dict({"p": 100, "k": 10, "mode": "fast"})

    def test_validation(self):
        with pytest.raises(InputError):
            SimConfig(p=9, k=2)
        with pytest.raises(InputError):
            SimConfig(p=20, k=2, k0=3)
        with pytest.raises(InputError):
            SimConfig(p=20, k=2, dist="cauchy")
        with pytest.raises(InputError):
            SimConfig(p=20, k=2, n=0)
        with pytest.raises(InputError):
            SimConfig(p=20, k=2, gamma=-0.5)
        with pytest.raises(InputError):
            SimConfig(p=20, k=2, estimator="mle")
        with pytest.raises(InputError):
            SimConfig(p=20, k=2, alpha=0.0)
        with pytest.raises(InputError):
            SimConfig(p=20, k=2, seed=-1)
        with pytest.raises(InputError):
            SimConfig(p=20, k=2, seed=True)
        with pytest.raises(InputError):
            SimConfig(p=20, k=2, link="ols", estimator="ols")


PART1_CFG = dict(
    p=30, k=3, k0=2, link="exponential", scenario="a", dist="normal",
    n=1, reps=5, seed=7, select=True, estimator="qmle",
)


class TestRunPart1:
    def test_report_shape_and_raw_consistency(self):
        report, raw = run_part1(SimConfig(**PART1_CFG))
        assert report["part"] == 1
        assert report["config"]["p"] == 30
        assert report["reps_used"] + report["n_failed"] == 5
        assert len(raw) == 5
        assert len(report["sd_mean"]) == 4  # min(5, k + 1)
        ok = [row for row in raw if row["ok"]]
        assert len(ok) == report["reps_used"]
        conv = [row for row in ok if row["converged"]]
        assert len(conv) == report["reps_converged"]
        betas = np.array([[row[f"beta_{k}"] for k in range(4)] for row in conv])
        esd = np.std(betas, axis=0, ddof=0)
        assert np.allclose(report["esd"], esd[:4], atol=1e-12)
        ee = [row["ee"] for row in ok]
        assert report["measures"]["ee"]["mean"] == pytest.approx(
            float(np.mean(ee)), rel=1e-12
        )
        assert 0.0 <= report["selection"]["ct"] <= 1.0
        for row in ok:
            assert row["support"].startswith("0")

    def test_ols_estimator_path(self):
        cfg = SimConfig(
            p=30, k=2, k0=2, link="identity", estimator="ols",
            n=1, reps=3, seed=11, select=False,
        )
        report, raw = run_part1(cfg)
        assert report["reps_used"] == 3
        assert report["selection"] is None
        assert all(row["converged"] == 1 for row in raw)

    def test_ols_requires_identity(self):
        cfg = SimConfig(p=30, k=2, k0=2, estimator="ols", link="exponential", reps=2)
        with pytest.raises(InputError):
            run_part1(cfg)

    def test_jobs_do_not_change_results(self):
        cfg = SimConfig(**PART1_CFG)
        r1, raw1 = run_part1(cfg, jobs=1)
        r2, raw2 = run_part1(cfg, jobs=2)
        assert r1 == r2
        assert raw1 == raw2


class TestRunPart2:
    def test_report_shape(self):
        cfg = SimConfig(
            p=30, k=2, k0=2, link="exponential", n=10, reps=3, seed=13,
        )
        report, raw = run_part2(cfg)
        assert report["part"] == 2
        comps = report["comparisons"]
        assert set(comps) == {
            "identity_vs_exponential",
            "square_vs_exponential",
            "inverse_vs_exponential",
        }
        for entry in comps.values():
            total = (
                entry["prefer_link1"] + entry["equivalent"] + entry["prefer_link2"]
            )
            assert total == pytest.approx(1.0)
            assert entry["rejection"] == entry["prefer_link2"]
            assert entry["rejection"] + entry["non_rejection"] == pytest.approx(1.0)
        assert len(raw) == 3
        for row in raw:
            if row["ok"]:
                assert isinstance(row["z_identity"], float)
                assert row["decision_square"] in (
                    "prefer_link1", "equivalent", "prefer_link2",
                )

    def test_requires_replication_and_exponential_truth(self):
        with pytest.raises(InputError, match="n >= 2"):
            run_part2(SimConfig(p=30, k=2, k0=2, link="exponential", n=1, reps=2))
        with pytest.raises(InputError, match="exponential"):
            run_part2(SimConfig(p=30, k=2, k0=2, link="identity", n=10, reps=2))

    def test_jobs_do_not_change_results(self):
        cfg = SimConfig(p=30, k=2, k0=2, link="exponential", n=8, reps=3, seed=17)
        r1, raw1 = run_part2(cfg, jobs=1)
        r2, raw2 = run_part2(cfg, jobs=2)
        assert r1 == r2
        assert raw1 == raw2
