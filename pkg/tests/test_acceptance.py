"""End-to-end acceptance checks.

Each test is one numbered criterion; run with ``pytest -v`` to get one
pass/fail line per criterion. The two Monte Carlo sweeps are module-scoped
fixtures shared by the criteria that read them.
"""

import math
import time

import numpy as np
import pytest

from shiftcal import cli
from shiftcal.classifiers import (
    BayesOracleClassifier,
    multiaccuracy_error,
    multicalibration_error,
)
from shiftcal.conformal import FlatCalibrationSet, algorithm3_threshold
from shiftcal.quantile import (
    GroupedCalibrationSet,
    group_weighted_threshold,
    standard_cp_threshold,
)
from shiftcal.scores import (
    aps_score,
    degree_matrix_score,
    lac_score,
    lns_score,
    mars_score,
    raps_score,
)
from shiftcal.simulation import (
    ExperimentConfig,
    beta_scenario,
    generate_grouped_data,
    run_experiment,
    theorem1_scenario,
)


def _env_means(results, method, alpha):
    envs = {}
    for r in results:
        if r.method == method and math.isclose(r.alpha, alpha):
            envs.setdefault(r.env_id, []).append(r.metric_value)
    return np.array([np.mean(v) for _, v in sorted(envs.items())])


@pytest.fixture(scope="module")
def shift_sweep():
    """Criterion-3 protocol: K=4, E=100 Dirichlet(0.1) environments, S=15."""
    config = ExperimentConfig(
        n_domains=4,
        score_means=(0.2, 0.4, 0.6, 0.8),
        n_environments=100,
        dirichlet_alpha=0.1,
        n_splits=15,
        n_cal_per_domain=500,
        n_test=2000,
        alphas=(0.1,),
        methods=("unweighted", "max", "oracle", "a1", "a2"),
        master_seed=0,
    )
    start = time.monotonic()
    results = run_experiment(config)
    return results, time.monotonic() - start


@pytest.fixture(scope="module")
def similarity_sweep():
    """Criterion-8 protocol: two separable domains, E=100, alpha=0.05."""
    config = ExperimentConfig(
        n_domains=2,
        score_means=(0.3, 0.7),
        separation=6.0,
        sigma_x=1.0,
        n_environments=100,
        dirichlet_alpha=0.1,
        n_splits=3,
        n_cal_per_domain=500,
        n_test=2000,
        alphas=(0.05,),
        methods=("unweighted", "a3"),
        beta=0.1,
        sigma=0.7,
        master_seed=0,
    )
    return run_experiment(config)


@pytest.fixture(scope="module")
def risk_sweep():
    """Criterion-9 protocol: recall grid over 100 Dirichlet(0.5) environments."""
    config = ExperimentConfig(
        n_domains=2,
        score_means=(0.3, 0.7),
        n_environments=100,
        dirichlet_alpha=0.5,
        n_splits=2,
        n_cal_per_domain=500,
        n_test=2000,
        alphas=(0.1,),
        methods=("risk_uniform", "risk_weighted"),
        target_recalls=(0.80, 0.85, 0.90, 0.95),
        master_seed=0,
    )
    return run_experiment(config)


def test_criterion_01_weighted_quantile_exactness():
    rng = np.random.default_rng(2024)
    start = time.monotonic()
    for _ in range(10000):
        k = int(rng.integers(1, 6))
        sizes = rng.integers(1, 21, size=k)
        lists = [np.round(rng.normal(size=int(n)), 2) for n in sizes]
        lam = rng.dirichlet(np.ones(k))
        alpha = float(rng.uniform(0.01, 0.99))
        cal = GroupedCalibrationSet(lists)
        got = group_weighted_threshold(cal, lam, alpha).threshold
        # brute force: walk the candidate grid in ascending order
        expected = math.inf
        for q in np.unique(np.concatenate(lists)):
            g = sum(
                w * np.sum(s <= q) / (s.size + 1) for w, s in zip(lam, lists)
            )
            if g >= 1.0 - alpha:
                expected = float(q)
                break
        assert got == expected
    elapsed = time.monotonic() - start
    assert elapsed < 10.0
    print(f"criterion 1 PASS: 10000/10000 exact matches in {elapsed:.1f}s")


def test_criterion_02_exchangeable_baseline():
    start = time.monotonic()
    root = np.random.SeedSequence(2025)
    coverages = np.empty(1000)
    for i, ss in enumerate(root.spawn(1000)):
        rng = np.random.default_rng(ss)
        cal = rng.beta(3.0, 7.0, 1000)
        test = rng.beta(3.0, 7.0, 2000)
        q = standard_cp_threshold(cal, 0.1).threshold
        coverages[i] = np.mean(test <= q)
    mean = coverages.mean()
    elapsed = time.monotonic() - start
    assert 0.899 <= mean <= 0.903
    assert elapsed < 60.0
    print(f"criterion 2 PASS: mean coverage {mean:.4f} over 1000 trials "
          f"in {elapsed:.1f}s")


def test_criterion_03_oracle_coverage_under_shift(shift_sweep):
    results, elapsed = shift_sweep
    oracle = _env_means(results, "oracle", 0.1)
    unweighted = _env_means(results, "unweighted", 0.1)
    assert oracle.size == 100
    assert oracle.min() >= 0.89
    assert 0.90 <= oracle.mean() <= 0.93
    assert oracle.std() <= 0.5 * unweighted.std()
    assert elapsed < 600.0
    print(f"criterion 3 PASS: oracle mean {oracle.mean():.4f}, "
          f"min env {oracle.min():.4f}, std ratio "
          f"{oracle.std() / unweighted.std():.3f}, sweep {elapsed:.0f}s")


def test_criterion_04_unweighted_failure_mode(shift_sweep):
    results, _ = shift_sweep
    unweighted = _env_means(results, "unweighted", 0.1)
    assert unweighted.min() < 0.88
    print(f"criterion 4 PASS: worst unweighted environment "
          f"{unweighted.min():.4f}")


def test_criterion_05_max_overcoverage(shift_sweep):
    results, _ = shift_sweep
    mx = _env_means(results, "max", 0.1).mean()
    oracle = _env_means(results, "oracle", 0.1).mean()
    assert mx >= oracle + 0.02
    print(f"criterion 5 PASS: max mean {mx:.4f} vs oracle {oracle:.4f}")


def test_criterion_06_theorem1_reproduction():
    start = time.monotonic()
    res = theorem1_scenario(0.8, 0.1, n_test=10000)
    perfect = theorem1_scenario(1.0, 0.1, n_test=10000)
    elapsed = time.monotonic() - start
    assert 0.60 <= res.domain2_coverage <= 0.72
    assert perfect.coverage >= 0.88
    assert elapsed < 10.0
    print(f"criterion 6 PASS: domain-2 coverage {res.domain2_coverage:.4f} "
          f"(bound {res.coverage_bound:.2f}), gamma=1 coverage "
          f"{perfect.coverage:.4f}, {elapsed:.1f}s")


def test_criterion_07_algorithm3_reduction():
    rng = np.random.default_rng(2026)
    for _ in range(100):
        n = int(rng.integers(2, 80))
        cal = FlatCalibrationSet(rng.normal(size=n), rng.normal(size=(n, 5)))
        z = rng.normal(size=5)
        alpha = float(rng.uniform(0.01, 0.99))
        got = algorithm3_threshold(cal, z, alpha, beta=1.0, sigma=1e12).threshold
        assert got == standard_cp_threshold(cal.scores, alpha).threshold
    print("criterion 7 PASS: 100/100 exact reductions to the split CP "
          "threshold")


def test_criterion_08_algorithm3_adaptivity(similarity_sweep):
    a3 = _env_means(similarity_sweep, "a3", 0.05)
    unweighted = _env_means(similarity_sweep, "unweighted", 0.05)
    assert a3.size == 100
    assert a3.std() <= 0.8 * unweighted.std()
    assert a3.mean() >= 0.94
    print(f"criterion 8 PASS: a3 mean {a3.mean():.4f}, std ratio "
          f"{a3.std() / unweighted.std():.3f}")


def test_criterion_09_risk_control(risk_sweep):
    lines = []
    for r in (0.80, 0.85, 0.90, 0.95):
        weighted = _env_means(risk_sweep, "risk_weighted", 1.0 - r)
        assert weighted.size == 100
        assert weighted.mean() >= r - 0.02
        lines.append(f"r={r:.2f} mean {weighted.mean():.4f}")
    w_std = _env_means(risk_sweep, "risk_weighted", 1.0 - 0.90).std()
    u_std = _env_means(risk_sweep, "risk_uniform", 1.0 - 0.90).std()
    assert w_std <= u_std
    print(f"criterion 9 PASS: {', '.join(lines)}; std at r=0.90 "
          f"{w_std:.4f} vs uniform {u_std:.4f}")


def test_criterion_10_score_function_units():
    tol = 1e-12
    assert abs(lac_score((0.7, 0.2, 0.1), 0) - 0.3) <= tol
    assert abs(aps_score((0.5, 0.3, 0.2), 1) - 0.8) <= tol
    assert abs(raps_score((0.5, 0.3, 0.2), 1, 0.1, 1) - 0.9) <= tol
    assert abs(lns_score((-1.0, -2.0, -3.0)) - (-2.0)) <= tol
    assert abs(mars_score((-1.0, -1.0), (0.5, 0.5)) - math.exp(-1.0)) <= tol
    w = np.full((3, 3), 0.5)
    np.fill_diagonal(w, 1.0)
    assert abs(degree_matrix_score(w) - 1.0 / 3.0) <= tol
    assert degree_matrix_score(np.ones((2, 2))) == 0.0
    print("criterion 10 PASS: closed-form score values exact to 1e-12")


def test_criterion_11_diagnostics():
    rng = np.random.default_rng(2027)
    scenario = beta_scenario((0.3, 0.5, 0.7), dim=4, separation=4.0)
    lam = np.array([0.5, 0.3, 0.2])
    feats, _, domains = generate_grouped_data(scenario, lam, 50000, rng)
    clf = BayesOracleClassifier(scenario, lam)
    ma = multiaccuracy_error(clf, feats, domains, 3)
    assert ma < 0.01
    mc1 = multicalibration_error(clf, feats, domains, 3, bins=1)
    assert abs(mc1 - ma) <= 1e-12
    print(f"criterion 11 PASS: Bayes oracle multiaccuracy {ma:.5f} at "
          f"50000 samples; bins=1 agreement exact")


def test_criterion_12_sweep_determinism(tmp_path):
    cfg = tmp_path / "conf.ini"
    cfg.write_text(
        "[scenario]\n"
        "n_domains = 2\n"
        "score_means = 0.3, 0.7\n"
        "[sweep]\n"
        "n_environments = 3\n"
        "n_splits = 2\n"
        "n_cal_per_domain = 50\n"
        "n_test = 100\n"
        "alphas = 0.1\n"
        "methods = unweighted, max, a1, risk_uniform\n"
        "target_recalls = 0.9\n"
        "master_seed = 42\n"
    )
    outs = []
    for name in ("run1", "run2"):
        out = tmp_path / name
        assert cli.main(["sweep", "--config", str(cfg), "--out", str(out),
                         "--no-figures"]) == 0
        outs.append((out / "results.csv").read_bytes())
    assert outs[0] == outs[1]
    print("criterion 12 PASS: repeated sweeps emit byte-identical CSV")
