"""Acceptance criteria, each run at its stated tolerance and replication count.

Every test records one PASS/FAIL line through the ``report`` fixture; the
lines are repeated in an "acceptance criteria" section of the pytest
summary.
"""

import time

import numpy as np
import pytest
from scipy.stats import norm

from conftest import random_measure
from seda import theory
from seda.classify import conditional_error, fit_multiclass, fit_seda, load_model, plugin_inputs, within_between_scatter
from seda.cli import main
from seda.dataio import Dataset, write_csv
from seda.measures import build_spectral_measure, closed_form_m1, closed_form_t1, closed_form_t2, compute_functionals, solve_mp
from seda.simulate import (
    ClassifierSpec,
    CovarianceSpec,
    ExperimentConfig,
    MeanSpec,
    build_population,
    calibrate_means,
    make_covariance,
    run_experiment,
    sample_gaussian,
)
from seda.spiked import SpikeConfig, spike_chis
from seda.theory import SearchConfig, ThetaParams

LAMS = (0.1, 1.0, 5.0)
YS = (0.5, 1.5)


def quadratic_m(y, lam):
    # y lam m^2 + (1 - y + lam) m - 1 = 0, positive root
    a, b = y * lam, 1 - y + lam
    return (-b + np.sqrt(b * b + 4 * a)) / (2 * a)


def test_criterion_01_mp_point_mass(report):
    t0 = time.perf_counter()
    H = build_spectral_measure([1.0])
    worst_m = worst_res = 0.0
    for lam in LAMS:
        for y in YS:
            sol = solve_mp(H, y, lam)
            worst_m = max(worst_m, abs(sol.m - quadratic_m(y, lam)))
            worst_res = max(worst_res, abs(sol.residual))
    dt = time.perf_counter() - t0
    report(1, worst_m <= 1e-10 and worst_res <= 1e-12 and dt < 1.0,
           f"max|m - quadratic|={worst_m:.2e} max residual={worst_res:.2e} time={dt:.2f}s")


def test_criterion_02_closed_forms(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(200):
        H = random_measure(rng, k=20)
        for lam in LAMS:
            for y in YS:
                f = compute_functionals(H, H, 1.0, y, lam, check=False)
                worst = max(worst, abs(f.t1 - closed_form_t1(f.mp)), abs(f.t2 - closed_form_t2(f.mp)),
                            abs(f.m1 - closed_form_m1(f.mp)))
    dt = time.perf_counter() - t0
    report(2, worst <= 1e-8 and dt < 10.0, f"max abs difference={worst:.2e} over 200 measures time={dt:.1f}s")


def case1_fixed_mean(p, n1, n2, roster, replications=500, base_seed=0):
    # the three spiked coordinates of mu1 are pinned at 0.1, the rest drawn N(0,1) then rescaled
    return ExperimentConfig(
        covariance=CovarianceSpec("case1", p),
        mean=MeanSpec("random-normal", fixed={0: 0.1, 1: 0.1, p - 1: 0.1}),
        n1=n1, n2=n2, roster=roster, replications=replications, base_seed=base_seed)


@pytest.mark.slow
def test_criterion_03_rlda_error_converges(report):
    t0 = time.perf_counter()
    gaps = {}
    for p in (50, 100, 200):
        cfg = case1_fixed_mean(p, p, p, (ClassifierSpec("rlda", "rlda", lam=0.1),))
        tab = run_experiment(cfg)
        gaps[p] = abs(tab.column("rlda").mean() - tab.column("rlda", "theory_error")[0])
    dt = time.perf_counter() - t0
    ok = gaps[50] <= 0.015 and gaps[200] <= 0.01 and gaps[50] > gaps[100] > gaps[200] and dt < 300
    report(3, ok, "gaps " + " ".join(f"p={p}:{g:.4f}" for p, g in gaps.items()) + f" time={dt:.0f}s")


def ar1_rlda_mean(k, eigen_scale=None):
    cfg = ExperimentConfig(
        covariance=CovarianceSpec("ar1", 100, rho=0.5, eigen_scale=eigen_scale or {}),
        mean=MeanSpec("eigvec", k=k), n1=100, n2=100,
        roster=(ClassifierSpec("rlda", "rlda", lam=1.0),), replications=500)
    return run_experiment(cfg).column("rlda").mean()


@pytest.mark.slow
def test_criterion_04_mean_direction_ar1(report):
    t0 = time.perf_counter()
    gap = ar1_rlda_mean("p") - ar1_rlda_mean(1)
    gap_amp = ar1_rlda_mean("p", {100: 20.0}) - ar1_rlda_mean(1, {100: 20.0})
    dt = time.perf_counter() - t0
    report(4, gap >= 0.02 and gap_amp <= 0.5 * gap and dt < 180,
           f"gap v100-v1={gap:.4f} after amplifying s_p: {gap_amp:.4f} time={dt:.0f}s")


def test_criterion_05_overlap(report):
    t0 = time.perf_counter()
    p, n = 400, 800
    s = np.ones(p)
    s[0] = 10.0
    chi = spike_chis(s, p / n, [0])[0].self_weight
    overlaps = []
    for r in range(100):
        X = np.random.default_rng(r).standard_normal((n, p)) * np.sqrt(s)
        _, U = np.linalg.eigh(X.T @ X / n)
        overlaps.append(U[0, -1] ** 2)
    gap = abs(np.mean(overlaps) - chi)
    dt = time.perf_counter() - t0
    report(5, gap <= 0.02 and dt < 120, f"MC={np.mean(overlaps):.4f} chi={chi:.4f} gap={gap:.4f} time={dt:.0f}s")


@pytest.mark.slow
def test_criterion_06_tuned_seda_beats_rlda_grid(report):
    t0 = time.perf_counter()
    grid = SearchConfig().lam_grid
    roster = (ClassifierSpec("tuned", "seda_tuned"),
              *(ClassifierSpec(f"rlda_{i}", "rlda", lam=float(l)) for i, l in enumerate(grid)))
    cfg = ExperimentConfig(covariance=CovarianceSpec("case1", 100), mean=MeanSpec("random-normal"),
                           n1=100, n2=100, roster=roster, replications=500)
    tab = run_experiment(cfg)
    tuned = tab.column("tuned").mean()
    best = min(tab.column(f"rlda_{i}").mean() for i in range(len(grid)))

    pop = build_population(cfg)
    s = pop.covariance.eigenvalues
    config = SpikeConfig.from_counts(100, 1, 2)
    theta = ThetaParams(0.1, {0: -1.0, 98: 0.5, 99: 0.5})
    diffs = {}
    for n1 in (60, 100, 140):
        y1, y2 = 100 / n1, 100 / (200 - n1)
        plain = theory.seda_rate(s, pop.g_masses, pop.mu_norm_sq, theta, config, y1, y2)
        corr = theory.corrected_seda_rate(s, pop.g_masses, pop.mu_norm_sq, theta, config, y1, y2)
        diffs[n1] = corr - plain
    rates_ok = diffs[100] == pytest.approx(0.0, abs=1e-14) and diffs[60] < -1e-8 and diffs[140] < -1e-8
    dt = time.perf_counter() - t0
    report(6, tuned <= best and rates_ok and dt < 300,
           f"tuned={tuned:.4f} best RLDA={best:.4f} corrected-plain rate "
           + " ".join(f"n1={k}:{v:.2e}" for k, v in diffs.items()) + f" time={dt:.0f}s")


@pytest.mark.slow
def test_criterion_07_bias_correction(report):
    t0 = time.perf_counter()
    roster = tuple(ClassifierSpec(name, kind, lam=0.1, large_level=-1.0, small_level=0.5)
                   for name, kind in (("seda", "seda"), ("corrected", "seda_corrected"), ("oracle", "seda_oracle")))
    ok, parts = True, []
    for p in (100, 200):
        for n1 in (60, 100, 140):
            tab = run_experiment(case1_fixed_mean(p, n1, 200 - n1, roster))
            e_s, e_c, e_o = (tab.column(c).mean() for c in ("seda", "corrected", "oracle"))
            ok &= e_c <= e_s and abs(e_c - e_o) <= 0.01
            parts.append(f"p={p},n1={n1}:{e_s:.4f}/{e_c:.4f}/{e_o:.4f}")
    dt = time.perf_counter() - t0
    report(7, ok and dt < 300, "seda/corrected/oracle " + " ".join(parts) + f" time={dt:.0f}s")


def test_criterion_08_plugin_consistency(report):
    t0 = time.perf_counter()
    p = n1 = n2 = 400
    s = np.ones(p)
    s[0], s[-1] = 10.0, 0.1
    mu = np.random.default_rng(5).standard_normal(p)
    mu = calibrate_means(np.diag(s), mu, 0.1)
    g = mu**2 / s
    mns = g.sum()
    config = SpikeConfig.from_counts(p, 1, 1)
    theta = ThetaParams(0.5, {0: -1.0, p - 1: 0.5})
    y = p / (n1 + n2)
    H, G = theory.transformed_measures(s, g / mns, theta, config, y)
    pop = compute_functionals(H, G, mns, y, theta.lam)
    rel, alphas = [], []
    for r in range(50):
        rng = np.random.default_rng(100 + r)
        X1 = mu + rng.standard_normal((n1, p)) * np.sqrt(s)
        X2 = rng.standard_normal((n2, p)) * np.sqrt(s)
        model = fit_seda(X1, X2, theta, config)
        est = theory.plugin_estimates(plugin_inputs(model, X1, X2), theta)
        rel.append([est.t2_hat / pop.t2 - 1, est.u1_hat / pop.u1 - 1, est.u2_hat / pop.u2 - 1])
        alphas.append(theory.alpha_hat(model.eigenvalues, theta, n1, n2))
    err = np.abs(rel).mean(axis=0)
    dt = time.perf_counter() - t0
    ok = np.all(err <= 0.05) and all(a == 0.0 for a in alphas) and dt < 120
    report(8, ok, f"mean |rel err| T2={err[0]:.4f} U1={err[1]:.4f} U2={err[2]:.4f} "
                  f"max|alpha|={max(map(abs, alphas)):.1e} time={dt:.0f}s")


def trace_ratio(W, Sb, Sw):
    return np.trace(W.T @ Sb @ W) / np.trace(W.T @ Sw @ W)


def test_criterion_09_multiclass(report):
    t0 = time.perf_counter()
    p, n = 50, 100
    centres = np.zeros((3, p))
    centres[1, :5] = 1.0
    centres[2, 5:10] = 1.0
    theta = ThetaParams(0.1)
    ok_ratio, shape_ok, margins = True, True, []
    for r in range(20):
        rng = np.random.default_rng(r)
        Xs = [c + rng.standard_normal((n, p)) for c in centres]
        model = fit_multiclass(Xs, theta, SpikeConfig())
        shape_ok &= model.projector.shape == (p, 2)
        Sw, Sb, _ = within_between_scatter(Xs)
        best = trace_ratio(model.projector, Sb, Sw)
        rand = max(trace_ratio(np.linalg.qr(rng.standard_normal((p, 2)))[0], Sb, Sw) for _ in range(100))
        ok_ratio &= best >= rand
        margins.append(best / rand)

    rng = np.random.default_rng(99)
    X1, X2 = centres[1] + rng.standard_normal((n, p)), rng.standard_normal((n, p))
    w_multi = fit_multiclass([X1, X2], theta, SpikeConfig()).projector[:, 0]
    # the pooled covariance divides by n - 2, the within scatter by n
    w_bin = fit_seda(X1, X2, ThetaParams(0.1 * (2 * n - 2) / (2 * n)), SpikeConfig()).direction
    cos = abs(w_multi @ w_bin) / np.linalg.norm(w_bin)
    dt = time.perf_counter() - t0
    report(9, shape_ok and ok_ratio and cos >= 0.999 and dt < 60,
           f"2 columns={shape_ok} min ratio W*/best random={min(margins):.2f} K=2 cosine={cos:.6f} time={dt:.1f}s")


def test_criterion_10_cli_end_to_end(report, tmp_path, capsys):
    t0 = time.perf_counter()
    cov = make_covariance(CovarianceSpec("case1", 100))
    mu = calibrate_means(cov.matrix, np.random.default_rng(0).standard_normal(100), 0.1)
    names = tuple(f"x{i}" for i in range(100))

    def split(path, n, seed):
        rng = np.random.default_rng(seed)
        X = np.vstack([sample_gaussian(mu, cov.factor, n, rng), sample_gaussian(np.zeros(100), cov.factor, n, rng)])
        write_csv(path, Dataset(X, np.repeat([1, 2], n), names))

    n_test = 5000
    split(tmp_path / "train.csv", 100, 1)
    split(tmp_path / "test.csv", n_test, 2)
    rc_fit = main(["fit", str(tmp_path / "train.csv"), "--kind", "seda", "--lam", "0.1", "--large-level", "-1",
                   "--small-level", "0.5", "--out", str(tmp_path / "model.json")])
    rc_pred = main(["predict", str(tmp_path / "model.json"), str(tmp_path / "test.csv"),
                    "--out", str(tmp_path / "pred.csv")])
    out = capsys.readouterr().out
    acc = float(out.split("accuracy: ")[1].split()[0])
    ce = conditional_error(load_model(tmp_path / "model.json"), mu, np.zeros(100), cov.matrix)
    # the balanced-mixture variance is bounded by the pooled binomial variance
    band = norm.ppf(0.995) * np.sqrt(ce * (1 - ce) / (2 * n_test))
    dt = time.perf_counter() - t0
    report(10, rc_fit == 0 and rc_pred == 0 and abs(acc - (1 - ce)) <= band and dt < 60,
           f"accuracy={acc:.4f} 1-conditional={1 - ce:.4f} band=+-{band:.4f} time={dt:.1f}s")
