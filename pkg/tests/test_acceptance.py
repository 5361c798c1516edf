"""Acceptance suite: one test per published guarantee.

Every test here checks an end-to-end contract: analytic gradients
against finite differences, closed-form and iterative estimators
against independent oracles, Monte Carlo calibration and selection
rates at the reference design (p = 400, K = 10, 100 replications),
link-test power, portfolio optimality, and byte-level determinism.

Statistical rates are asserted at fixed seeds with margins wide enough
that the checks are reproducible; the replication counts match the
stated guarantees. The full module takes roughly an hour on one core,
dominated by the two large simulation studies.
"""

import json
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.optimize import minimize

from conftest import feasible_beta, make_weights

from cmgl.estimate import fit_ols, fit_qmle, init_beta, loglik, score
from cmgl.exceptions import CmglError
from cmgl.links import LINKS, Spectral, get_link
from cmgl.lrtest import lr_test
from cmgl.portfolio import (
    CovariatePanel,
    ReturnsPanel,
    backtest,
    build_month_weights,
    minvar_weights,
)
from cmgl.select import backward_select, exhaustive_select
from cmgl.simlab import (
    SimConfig,
    gen_sample,
    gen_truth,
    gen_weights_scenario,
    run_part1,
)

SEED = 20260815


def exp_sigma(ws, beta):
    return Spectral.from_b(get_link("exponential"), ws.combine(beta)).sigma()


@pytest.fixture(scope="module")
def part1_big():
    """Reference study shared by the calibration and selection tests.

    Exponential link, p = 400, K = 10, K0 = 3, scenario (a), normal
    errors, n = 1, 100 replications, EBIC selection at gamma = 0.5.
    """
    cfg = SimConfig.from_dict(
        dict(
            p=400, k=10, k0=3, link="exponential", scenario="a",
            dist="normal", n=1, reps=100, seed=SEED, select=True,
            gamma=0.5, estimator="qmle",
        )
    )
    report, raw = run_part1(cfg, jobs=1)
    assert report["n_failed"] == 0
    return report, raw


def test_01_gradient_matches_finite_differences(rng):
    start = time.time()
    worst = 0.0
    for link in LINKS:
        for i in range(50):
            p = (5, 10, 20)[i % 3]
            k = (1, 2, 3)[(i // 3) % 3]
            ws = make_weights(p, k, rng)
            beta = feasible_beta(link, k, rng)
            y = rng.standard_normal((2, p)) @ Spectral.from_b(
                get_link(link), ws.combine(feasible_beta(link, k, rng))
            ).sqrt()
            analytic = score(beta, y, ws, link)
            fd = np.empty_like(analytic)
            for j in range(k + 1):
                h = 1e-6 * (1.0 + abs(beta[j]))
                up, dn = beta.copy(), beta.copy()
                up[j] += h
                dn[j] -= h
                fd[j] = (loglik(up, y, ws, link) - loglik(dn, y, ws, link)) / (2 * h)
            rel = np.max(np.abs(analytic - fd) / (1.0 + np.abs(analytic)))
            worst = max(worst, rel)
    elapsed = time.time() - start
    assert worst < 1e-5
    assert elapsed < 60.0
    print(f"PASS gradient check: worst rel err {worst:.2e} in {elapsed:.1f}s")


def test_02_ols_matches_dense_least_squares(rng):
    start = time.time()
    worst = 0.0
    for _ in range(50):
        p = int(rng.integers(10, 51))
        k = int(rng.integers(1, 4))
        n = int(rng.integers(1, 4))
        ws = make_weights(p, k, rng)
        y = 2.0 * rng.standard_normal((n, p))
        beta = fit_ols(y, ws, vcov=False).beta
        s = y.T @ y / n
        design = np.column_stack(
            [np.eye(p).ravel()] + [ws.matrix(j).ravel() for j in range(1, k + 1)]
        )
        oracle, *_ = np.linalg.lstsq(design, s.ravel(), rcond=None)
        worst = max(worst, float(np.max(np.abs(beta - oracle))))
    elapsed = time.time() - start
    assert worst < 1e-8
    assert elapsed < 60.0
    print(f"PASS OLS oracle: worst coefficient gap {worst:.2e} in {elapsed:.1f}s")


def test_03_qmle_matches_derivative_free_optimizer():
    start = time.time()
    p, k, n = 50, 3, 150
    worst = 0.0
    for inst in range(20):
        ws = gen_weights_scenario("a", p, k, (300, inst))
        sigma0 = ws.combine(gen_truth("identity", k, 3))
        y = gen_sample(sigma0, "normal", n, (301, inst))
        fit = fit_qmle(y, ws, "identity", vcov=False)
        assert fit.converged

        def neg(b):
            try:
                return -loglik(b, y, ws, "identity")
            except CmglError:
                return 1e12

        res = minimize(
            neg, init_beta(y, ws, "identity"), method="Nelder-Mead",
            options=dict(xatol=1e-9, fatol=1e-9, maxiter=20000, maxfev=20000),
        )
        worst = max(worst, float(np.linalg.norm(fit.beta - res.x)))
    elapsed = time.time() - start
    assert worst < 1e-4
    assert elapsed < 300.0
    print(f"PASS QMLE oracle: worst |dbeta| {worst:.2e} in {elapsed:.1f}s")


def test_04_sd_esd_calibration(part1_big):
    report, _ = part1_big
    sd_mean, esd = report["sd_mean"], report["esd"]
    assert 0.055 <= sd_mean[0] <= 0.090
    gaps = [abs(sd_mean[i] - esd[i]) / esd[i] for i in range(5)]
    assert max(gaps) < 0.30
    print(
        f"PASS calibration: mean SD(b0) {sd_mean[0]:.4f}, "
        f"worst |SD-ESD|/ESD {max(gaps):.3f}"
    )


def test_05_error_shrinks_with_dimension():
    def median_ee(p, link):
        cfg = SimConfig.from_dict(
            dict(
                p=p, k=10, k0=3, link=link, scenario="a", dist="normal",
                n=1, reps=50, seed=SEED, select=False, estimator="qmle",
            )
        )
        _, raw = run_part1(cfg, jobs=1)
        vals = [row["ee"] for row in raw if row["ok"]]
        assert len(vals) >= 48
        return float(np.median(vals))

    for link in ("exponential", "identity"):
        ee400 = median_ee(400, link)
        ee600 = median_ee(600, link)
        assert ee600 < ee400
        print(f"PASS consistency ({link}): median EE {ee400:.4f} -> {ee600:.4f}")


def test_06_ebic_selection_rates(part1_big):
    report, _ = part1_big
    sel = report["selection"]
    ct, tpr, fdr = sel["ct"], sel["tpr"]["mean"], sel["fdr"]["mean"]
    assert ct >= 0.80
    assert tpr >= 0.95
    assert fdr <= 0.05
    print(f"PASS selection: CT {ct:.3f}, TPR {tpr:.3f}, FDR {fdr:.3f}")


def test_07_backward_equals_exhaustive():
    p, k = 200, 6
    agree = 0
    for seed in range(50):
        ws = gen_weights_scenario("a", p, k, (700, seed))
        y = gen_sample(exp_sigma(ws, gen_truth("exponential", k, 3)), "normal", 1, (701, seed))
        greedy = backward_select(y, ws, link="exponential", estimator="qmle", gamma=0.5)
        full = exhaustive_select(y, ws, link="exponential", estimator="qmle", gamma=0.5)
        agree += greedy.support == full.support
    assert agree >= 45
    print(f"PASS backward elimination: matches exhaustive on {agree}/50 seeds")


def test_08_link_test_power():
    def prefer_exponential_rate(n, p, reps=100):
        hits = 0
        for rep in range(reps):
            ws = gen_weights_scenario("a", p, 3, (800, n, rep))
            y = gen_sample(exp_sigma(ws, gen_truth("exponential", 3, 3)), "normal", n, (801, n, rep))
            res = lr_test(y, ws, "identity", "exponential")
            rev = lr_test(y, ws, "exponential", "identity", fit1=res.fit2, fit2=res.fit1)
            assert rev.t_lr == -res.t_lr
            assert rev.z == -res.z
            hits += res.decision == "prefer_link2"
        return hits / reps

    strong = prefer_exponential_rate(75, 300)
    weak = prefer_exponential_rate(25, 100)
    assert strong >= 0.95
    assert 0.60 <= weak <= 0.95
    print(f"PASS link test power: {strong:.0%} at (75,300), {weak:.0%} at (25,100)")


def test_09_portfolio_optimality_and_backtest(rng):
    for _ in range(100):
        p = int(rng.integers(2, 21))
        a = rng.standard_normal((p, p + 3))
        sigma = a @ a.T / (p + 3) + 0.1 * np.eye(p)
        w = minvar_weights(sigma)
        base = w @ sigma @ w
        for _ in range(100):
            z = rng.standard_normal(p)
            v = w + (z - z.mean())
            assert v @ sigma @ v >= base * (1.0 - 1e-12)
        for c in (1e-2, 1.0, 100.0):
            assert np.allclose(minvar_weights(c * sigma), w, atol=1e-10)

    p, t = 100, 30
    panel_rng = np.random.default_rng(24)
    x = panel_rng.standard_normal((p, 2))
    ws = build_month_weights(x, scale=10.0, target_density=0.02)
    sigma0 = ws.combine([10.0, 0.5, -0.3])
    lam, u = np.linalg.eigh(sigma0)
    assert lam[0] > 0.5
    returns = panel_rng.standard_normal((t, p)) @ ((u * np.sqrt(lam)) @ u.T)
    res = backtest(
        ReturnsPanel(returns),
        CovariatePanel(np.repeat(x[None], t - 1, axis=0)),
        link="identity", estimator="ols", target_density=0.02, demean=False,
    )
    oracle = 1.0 / np.sum(np.linalg.inv(sigma0))
    ratio = res.sd**2 / oracle
    assert abs(ratio - 1.0) <= 0.25
    print(f"PASS portfolio: optimality suites clean, backtest var ratio {ratio:.3f}")


def test_10_byte_identical_outputs(tmp_path):
    def cli(*argv):
        proc = subprocess.run(
            [sys.executable, "-m", "cmgl.cli", *argv], capture_output=True, text=True
        )
        assert proc.returncode == 0, proc.stderr
        return proc

    sim_cfg = tmp_path / "sim.toml"
    sim_cfg.write_text(
        'p = 20\nk = 3\nk0 = 2\nlink = "exponential"\nn = 4\nreps = 6\nseed = 5\n'
    )
    for jobs, name in ((1, "a"), (4, "b")):
        cli(
            "simulate", "--part", "1", "--config", str(sim_cfg),
            "--jobs", str(jobs), "--out", str(tmp_path / name),
        )
    for fname in ("report.json", "raw.csv"):
        assert (tmp_path / "a" / fname).read_bytes() == (tmp_path / "b" / fname).read_bytes()

    from cmgl.io import write_weight_csv

    gen = np.random.default_rng(6)
    ws = gen_weights_scenario("a", 16, 2, 6)
    y = gen.standard_normal((3, 16)) @ exp_sigma(ws, gen_truth("exponential", 2, 2))
    data = tmp_path / "data.csv"
    write_weight_csv(data, y)
    wdir = tmp_path / "wmats"
    wdir.mkdir()
    for j in (1, 2):
        write_weight_csv(wdir / f"w{j}.csv", ws.matrix(j))
    for command, extra in (
        ("fit", ["--link", "exponential"]),
        ("select", ["--link", "exponential", "--method", "exhaustive"]),
    ):
        out = tmp_path / f"{command}.json"
        outs = []
        for _ in range(2):
            cli(
                command, "--data", str(data), "--weights", str(wdir),
                *extra, "--out", str(out),
            )
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]
        body = json.loads(outs[0])
        assert body["config"]["link"] == "exponential"
    print("PASS determinism: simulate/fit/select outputs byte-identical")
