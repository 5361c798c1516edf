"""Monte Carlo laboratory for the estimators, the selector, and the link test.

Two study designs are implemented. Part 1 measures estimation quality and
subset-selection quality on a single draw per replication: a truth vector
with K0 active weight matrices generates Sigma_0 under the identity or
exponential link, one sample is drawn per replication, and the fitted
coefficients, their plug-in standard deviations and the selected subsets
are aggregated into calibration (SD vs ESD), accuracy (EE, SE, FE) and
recovery (TPR, FDR, CT) summaries. Part 2 draws n replicated observations
under an exponential-link truth and runs the quasi-likelihood ratio test
of each alternative link against the exponential one, reporting rejection
rates.

Reproducibility: all randomness derives from one integer seed. Stream 0
of the seed generates the weight matrices, stream r + 1 generates the
data of replication r, so replications are independent and the report is
byte-identical for a fixed seed regardless of how many workers run the
replications.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from joblib import Parallel, delayed
from threadpoolctl import threadpool_limits

from . import __version__
from .estimate import fit_ols, fit_qmle
from .exceptions import CmglError, InputError, NotPositiveDefiniteError
from .links import Spectral, get_link
from .lrtest import lr_test
from .select import backward_select
from .weights import WeightSet, build_thresholded

__all__ = [
    "SimConfig",
    "gen_truth",
    "gen_weights_scenario",
    "gen_sample",
    "fit_measures",
    "selection_measures",
    "run_part1",
    "run_part2",
]

_DISTS = ("exp_std", "mixture", "normal")
_PART2_ALTERNATIVES = ("identity", "square", "inverse")

# Coefficients reported in the default Part 1 summary (full vectors go to
# the raw per-replication output).
_REPORT_HEAD = 5


@dataclass(frozen=True)
class SimConfig:
    """Settings of one simulation run.

    Part 1 uses n = 1 by default (the asymptotics run in p); Part 2 needs
    n >= 2. ``estimator`` and ``select`` apply to Part 1 only, ``alpha``
    to Part 2 only.
    """

    p: int
    k: int
    k0: int = 3
    link: str = "exponential"
    scenario: str = "a"
    dist: str = "normal"
    n: int = 1
    reps: int = 200
    gamma: float = 0.5
    seed: int = 0
    estimator: str = "qmle"
    select: bool = True
    alpha: float = 0.05

    def __post_init__(self):
        if self.p < 10:
            raise InputError("p must be at least 10")
        if not 0 <= self.k0 <= self.k:
            raise InputError("need 0 <= K0 <= K")
        get_link(self.link)
        if self.scenario not in ("a", "b"):
            raise InputError("scenario must be 'a' or 'b'")
        if self.dist not in _DISTS:
            raise InputError(f"dist must be one of {', '.join(_DISTS)}")
        if self.n < 1 or self.reps < 1:
            raise InputError("n and reps must be positive")
        if not self.gamma >= 0:
            raise InputError("gamma must be nonnegative")
        if self.estimator not in ("qmle", "ols"):
            raise InputError("estimator must be 'qmle' or 'ols'")
        if not 0.0 < self.alpha < 1.0:
            raise InputError("alpha must lie strictly between 0 and 1")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise InputError("seed must be a nonnegative integer")

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise InputError(f"unknown config fields: {', '.join(sorted(extra))}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def gen_truth(link, k: int, k0: int = 3) -> np.ndarray:
    """True coefficient vector with K0 active weight matrices.

    Identity link: intercept 10 and alternating +-1 coefficients.
    Exponential link: intercept 0.3 and the cyclic pattern
    (0.15, -0.15, -0.15). Coefficients beyond K0 are zero.
    """
    link = get_link(link)
    if not 0 <= k0 <= k:
        raise InputError("need 0 <= K0 <= K")
    beta = np.zeros(k + 1)
    if link.name == "identity":
        beta[0] = 10.0
        for j in range(1, k0 + 1):
            beta[j] = (-1.0) ** (j - 1)
    elif link.name == "exponential":
        beta[0] = 0.3
        pattern = (0.15, -0.15, -0.15)
        for j in range(1, k0 + 1):
            beta[j] = pattern[(j - 1) % 3]
    else:
        raise InputError(
            f"no simulation truth is defined for the {link.name!r} link"
        )
    return beta


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def gen_weights_scenario(scenario: str, p: int, k: int, seed) -> WeightSet:
    """Random weight matrices of scenario (a) or (b).

    Scenario (a) draws each upper-triangle entry of every W_k from a
    Bernoulli with success probability 5/p and mirrors it. Scenario (b)
    replaces W_2 and W_5 (when present) by thresholded Gaussian kernels
    of uniform distances on (p^{-1/2}, p^{1/2}) and (p^{-1/3}, p^{1/3})
    respectively, thresholded to density 5/p; the other matrices follow
    scenario (a). Matrices are generated in index order from a single
    stream, so a fixed seed pins the whole set.
    """
    if p < 10:
        raise InputError("p must be at least 10")
    if scenario not in ("a", "b"):
        raise InputError("scenario must be 'a' or 'b'")
    if k < 0:
        raise InputError("K must be nonnegative")
    rng = _as_rng(seed)
    prob = 5.0 / p
    rows, cols = np.triu_indices(p, k=1)
    mats = []
    for idx in range(1, k + 1):
        if scenario == "b" and idx in (2, 5):
            power = 0.5 if idx == 2 else 1.0 / 3.0
            draws = rng.uniform(p**-power, p**power, size=rows.shape[0])
            dist = np.zeros((p, p))
            dist[rows, cols] = draws
            dist = dist + dist.T
            mats.append(build_thresholded(dist, target_density=prob, scale=1.0))
        else:
            w = np.zeros((p, p))
            w[rows, cols] = (rng.random(rows.shape[0]) < prob).astype(float)
            w = w + w.T
            mats.append(w)
    return WeightSet.from_matrices(mats, p=p)


def _draw(dist: str, shape, rng: np.random.Generator) -> np.ndarray:
    """Iid innovations with mean 0 and variance 1.

    The mixture draws its component picks before the normals so the
    stream layout is fixed.
    """
    if dist == "normal":
        return rng.standard_normal(shape)
    if dist == "mixture":
        sd = np.where(rng.random(shape) < 0.1, math.sqrt(5.0), math.sqrt(5.0 / 9.0))
        return rng.standard_normal(shape) * sd
    if dist == "exp_std":
        return rng.exponential(1.0, shape) - 1.0
    raise InputError(f"dist must be one of {', '.join(_DISTS)}")


def _sqrt_psd(sigma0: np.ndarray) -> np.ndarray:
    sigma0 = np.asarray(sigma0, dtype=float)
    if sigma0.ndim != 2 or sigma0.shape[0] != sigma0.shape[1]:
        raise InputError("sigma0 must be a square matrix")
    lam, u = np.linalg.eigh((sigma0 + sigma0.T) / 2.0)
    if not (lam[-1] > 0 and lam[0] > 1e-10 * lam[-1]):
        raise NotPositiveDefiniteError("sigma0 is not positive definite")
    return (u * np.sqrt(lam)) @ u.T


def gen_sample(sigma0, dist: str, n: int, seed) -> np.ndarray:
    """Sample n rows of Sigma0^{1/2} Z with iid unit-variance Z entries.

    The square root is the symmetric PSD one.
    """
    if n < 1:
        raise InputError("n must be positive")
    root = _sqrt_psd(sigma0)
    rng = _as_rng(seed)
    return _draw(dist, (n, root.shape[0]), rng) @ root


def fit_measures(sigma_hat: np.ndarray, beta_hat, beta_true, sigma0) -> dict:
    """Accuracy of a fitted coefficient vector and covariance.

    Returns EE (squared coefficient error), SE (spectral-norm covariance
    error via the extreme eigenvalues of the symmetric difference) and FE
    (squared Frobenius covariance error scaled by 1/p).
    """
    beta_hat = np.asarray(beta_hat, dtype=float)
    beta_true = np.asarray(beta_true, dtype=float)
    delta = np.asarray(sigma_hat, dtype=float) - np.asarray(sigma0, dtype=float)
    p = delta.shape[0]
    eigs = np.linalg.eigvalsh((delta + delta.T) / 2.0)
    return {
        "ee": float(np.sum((beta_hat - beta_true) ** 2)),
        "se": float(max(abs(eigs[0]), abs(eigs[-1]))),
        "fe": float(np.sum(delta * delta)) / p,
    }


def selection_measures(support, k0: int) -> dict:
    """Recovery of the true subset {1, ..., K0} by a selected support.

    ``support`` may include the intercept index 0; it is ignored. TPR is
    1 when there is nothing to find (K0 = 0) and FDR is 0 when nothing
    was selected.
    """
    chosen = set(support) - {0}
    true = set(range(1, k0 + 1))
    tpr = len(chosen & true) / k0 if k0 > 0 else 1.0
    fdr = len(chosen - true) / len(chosen) if chosen else 0.0
    return {"tpr": tpr, "fdr": fdr, "ct": float(chosen == true)}


def _rep_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep + 1,)))


def _part1_rep(cfg: SimConfig, ws: WeightSet, root0, sigma0, beta_true, rep: int):
    with threadpool_limits(limits=1):
        rng = _rep_rng(cfg.seed, rep)
        y = _draw(cfg.dist, (cfg.n, cfg.p), rng) @ root0
        rec = {"rep": rep, "ok": False, "converged": False}
        try:
            if cfg.estimator == "qmle":
                fit = fit_qmle(y, ws, cfg.link)
                rec["converged"] = fit.converged
                sigma_hat = fit.state.sigma()
            else:
                fit = fit_ols(y, ws)
                rec["converged"] = True
                sigma_hat = ws.combine(fit.beta)
            rec["beta"] = fit.beta
            rec["sd"] = fit.sd
            rec["mu4"] = fit.mu4
            rec.update(fit_measures(sigma_hat, fit.beta, beta_true, sigma0))
            if cfg.select:
                sel = backward_select(
                    y, ws, link=cfg.link, estimator=cfg.estimator, gamma=cfg.gamma
                )
                rec["support"] = sel.support
                rec["sel_converged"] = sel.converged
                if sel.converged:
                    rec.update(selection_measures(sel.support, cfg.k0))
            rec["ok"] = True
        except CmglError as exc:
            rec["error"] = f"{type(exc).__name__}: {exc}"
        return rec


def _mean_sd(values) -> dict:
    x = np.asarray(values, dtype=float)
    out = {"mean": float(np.mean(x)) if x.size else None}
    out["sd"] = float(np.std(x, ddof=1)) if x.size > 1 else None
    return out


def _truth_state(cfg: SimConfig, ws: WeightSet):
    beta_true = gen_truth(cfg.link, cfg.k, cfg.k0)
    st = Spectral.from_b(cfg.link, ws.combine(beta_true))
    if not st.feasible:
        raise NotPositiveDefiniteError(
            "the generated truth is not positive definite for this seed; "
            "choose another seed"
        )
    return beta_true, st.sigma(), st.sqrt()


def _run_reps(worker, args: tuple, reps: int, jobs: int):
    """Run one replication function for r = 0..reps-1, optionally in parallel.

    Results come back in replication order either way, so aggregation
    does not depend on worker scheduling.
    """
    if jobs == 0:
        raise InputError("jobs must be a positive worker count or -1")
    if jobs == 1:
        return [worker(*args, r) for r in range(reps)]
    return Parallel(n_jobs=jobs)(delayed(worker)(*args, r) for r in range(reps))


def run_part1(config, jobs: int = 1):
    """Estimation and selection study; returns (report, raw_rows).

    Each replication draws one dataset, fits the full model and, when
    ``config.select`` is set, runs backward elimination. Accuracy
    measures come from the optimizer's final iterate even when it did
    not reach the gradient tolerance, so every completed replication
    contributes to ``measures``; coefficient calibration aggregates
    (``sd_mean``, ``esd``, ``mu4_mean``) use only converged fits, whose
    count is ``reps_converged``. Replications that raise are excluded
    from every aggregate and listed under ``failed_reps``.
    """
    cfg = config if isinstance(config, SimConfig) else SimConfig.from_dict(config)
    if cfg.estimator == "ols" and cfg.link != "identity":
        raise InputError("the least-squares estimator requires the identity link")
    with threadpool_limits(limits=1):
        ws = gen_weights_scenario(
            cfg.scenario, cfg.p, cfg.k, np.random.SeedSequence(cfg.seed, spawn_key=(0,))
        )
        beta_true, sigma0, root0 = _truth_state(cfg, ws)
    records = _run_reps(
        _part1_rep, (cfg, ws, root0, sigma0, beta_true), cfg.reps, jobs
    )

    ok = [rec for rec in records if rec["ok"]]
    conv = [rec for rec in ok if rec["sd"] is not None]
    failed = sorted(rec["rep"] for rec in records if not rec["ok"])
    head = min(_REPORT_HEAD, cfg.k + 1)
    report = {
        "part": 1,
        "version": __version__,
        "config": cfg.to_dict(),
        "reps_used": len(ok),
        "reps_converged": len(conv),
        "n_failed": len(failed),
        "failed_reps": failed,
        "sd_mean": None,
        "esd": None,
        "mu4_mean": None,
        "measures": None,
        "selection": None,
    }
    if conv:
        betas = np.stack([rec["beta"] for rec in conv])
        sds = np.stack([rec["sd"] for rec in conv])
        report["sd_mean"] = [float(v) for v in np.mean(sds, axis=0)[:head]]
        report["esd"] = [float(v) for v in np.std(betas, axis=0, ddof=0)[:head]]
        report["mu4_mean"] = float(np.mean([rec["mu4"] for rec in conv]))
    if ok:
        report["measures"] = {
            name: _mean_sd([rec[name] for rec in ok]) for name in ("ee", "se", "fe")
        }
    chosen = [rec for rec in ok if "tpr" in rec]
    if chosen:
        report["selection"] = {
            "tpr": _mean_sd([rec["tpr"] for rec in chosen]),
            "fdr": _mean_sd([rec["fdr"] for rec in chosen]),
            "ct": float(np.mean([rec["ct"] for rec in chosen])),
        }
    raw = [_part1_raw_row(rec, cfg) for rec in records]
    return report, raw


def _part1_raw_row(rec: dict, cfg: SimConfig) -> dict:
    row = {
        "rep": rec["rep"],
        "ok": int(rec["ok"]),
        "converged": int(rec.get("converged", False)),
    }
    beta = rec.get("beta")
    sd = rec.get("sd")
    for k in range(cfg.k + 1):
        row[f"beta_{k}"] = None if beta is None else float(beta[k])
        row[f"sd_{k}"] = None if sd is None else float(sd[k])
    for name in ("mu4", "ee", "se", "fe"):
        row[name] = rec.get(name)
    if cfg.select:
        support = rec.get("support")
        row["support"] = None if support is None else ";".join(map(str, support))
        row["sel_converged"] = (
            None if "sel_converged" not in rec else int(rec["sel_converged"])
        )
        for name in ("tpr", "fdr", "ct"):
            row[name] = rec.get(name)
    row["error"] = rec.get("error")
    return row


def _part2_rep(cfg: SimConfig, ws: WeightSet, root0, rep: int):
    with threadpool_limits(limits=1):
        rng = _rep_rng(cfg.seed, rep)
        y = _draw(cfg.dist, (cfg.n, cfg.p), rng) @ root0
        rec = {"rep": rep, "ok": False}
        try:
            fit_exp = fit_qmle(y, ws, "exponential", vcov=False)
            if not fit_exp.converged:
                rec["error"] = "exponential fit did not converge"
                return rec
            for alt in _PART2_ALTERNATIVES:
                fit_alt = fit_qmle(y, ws, alt, vcov=False)
                if not fit_alt.converged:
                    rec["error"] = f"{alt} fit did not converge"
                    return rec
                res = lr_test(
                    y, ws, alt, "exponential",
                    alpha=cfg.alpha, fit1=fit_alt, fit2=fit_exp,
                )
                rec[f"z_{alt}"] = res.z
                rec[f"decision_{alt}"] = res.decision
            rec["ok"] = True
        except CmglError as exc:
            rec["error"] = f"{type(exc).__name__}: {exc}"
        return rec


def run_part2(config, jobs: int = 1):
    """Link-test power study; returns (report, raw_rows).

    The truth is the exponential-link model; every replication fits the
    exponential link once and each alternative link (identity, square,
    inverse), then runs the quasi-likelihood ratio test of alternative
    versus exponential at level ``config.alpha``. ``rejection`` is the
    fraction of replications deciding for the exponential link.
    """
    cfg = config if isinstance(config, SimConfig) else SimConfig.from_dict(config)
    if cfg.n < 2:
        raise InputError("Part 2 needs n >= 2 replicated observations")
    if get_link(cfg.link).name != "exponential":
        raise InputError("Part 2 truth uses the exponential link")
    with threadpool_limits(limits=1):
        ws = gen_weights_scenario(
            cfg.scenario, cfg.p, cfg.k, np.random.SeedSequence(cfg.seed, spawn_key=(0,))
        )
        _, _, root0 = _truth_state(cfg, ws)
    records = _run_reps(_part2_rep, (cfg, ws, root0), cfg.reps, jobs)

    ok = [rec for rec in records if rec["ok"]]
    failed = sorted(rec["rep"] for rec in records if not rec["ok"])
    comparisons = {}
    for alt in _PART2_ALTERNATIVES:
        decisions = [rec[f"decision_{alt}"] for rec in ok]
        total = len(decisions)
        counts = {
            "prefer_link1": sum(d == "prefer_link1" for d in decisions),
            "equivalent": sum(d == "equivalent" for d in decisions),
            "prefer_link2": sum(d == "prefer_link2" for d in decisions),
        }
        entry = {
            name: (cnt / total if total else None) for name, cnt in counts.items()
        }
        entry["rejection"] = entry["prefer_link2"]
        entry["non_rejection"] = (
            None if total == 0 else (counts["prefer_link1"] + counts["equivalent"]) / total
        )
        comparisons[f"{alt}_vs_exponential"] = entry
    report = {
        "part": 2,
        "version": __version__,
        "config": cfg.to_dict(),
        "reps_used": len(ok),
        "n_failed": len(failed),
        "failed_reps": failed,
        "comparisons": comparisons,
    }
    raw = []
    for rec in records:
        row = {"rep": rec["rep"], "ok": int(rec["ok"])}
        for alt in _PART2_ALTERNATIVES:
            row[f"z_{alt}"] = rec.get(f"z_{alt}")
            row[f"decision_{alt}"] = rec.get(f"decision_{alt}")
        row["error"] = rec.get("error")
        raw.append(row)
    return report, raw
