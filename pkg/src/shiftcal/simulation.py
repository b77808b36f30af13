"""Synthetic data generation and the Monte Carlo experiment harness.

Environments are mixtures of K fixed domains; test environments draw their
mixture weights from a Dirichlet distribution whose parameter controls
shift severity (small = near one-hot, large = near uniform). All
randomness flows from a master seed through per-purpose seed sequences, so
reruns are bit-identical and trials are independent given their derived
seeds.
"""

import math
from dataclasses import dataclass

import numpy as np

from shiftcal.classifiers import (
    AdversarialGammaClassifier,
    BayesOracleClassifier,
    GaussianMixtureScenario,
    ScoreDistribution,
    simplex_means,
)
from shiftcal.conformal import (
    FlatCalibrationSet,
    algorithm3_thresholds_batch,
    risk_control_threshold,
    similarity_risk_thresholds_batch,
)
from shiftcal.quantile import (
    GroupedCalibrationSet,
    group_weighted_threshold,
    group_weighted_thresholds_batch,
    max_threshold,
    standard_cp_threshold,
)

COVERAGE_METHODS = ("unweighted", "max", "oracle", "a1", "a2", "a3")
RISK_METHODS = ("risk_uniform", "risk_weighted")

# Seed-sequence namespaces; fixed constants so the derivation scheme is stable.
_ENV_TAG = 7
_TRIAL_TAG = 11


def sample_environment(n_domains, alpha_prime, rng):
    """Mixture weights drawn from Dirichlet(alpha_prime * 1_K)."""
    if n_domains < 1:
        raise ValueError("need at least one domain")
    if alpha_prime <= 0:
        raise ValueError("Dirichlet parameter must be positive")
    if n_domains == 1:
        return np.ones(1)
    # Gamma representation; for tiny parameters every draw can underflow to
    # zero, in which case the limit distribution is a uniformly random one-hot.
    g = rng.gamma(alpha_prime, 1.0, n_domains)
    total = g.sum()
    if total <= 0 or not np.isfinite(total):
        lam = np.zeros(n_domains)
        lam[rng.integers(n_domains)] = 1.0
        return lam
    return g / total


def generate_grouped_data(scenario, lam, n, rng):
    """Sample n points from the mixture: domain, Gaussian feature, score.

    Scores are independent of features given the domain, so within-domain
    exchangeability is exact. Returns (features, scores, domains).
    """
    if n < 1:
        raise ValueError("need at least one sample")
    lam = np.asarray(lam, dtype=float)
    domains = rng.choice(scenario.n_domains, size=n, p=lam / lam.sum())
    features = scenario.means[domains] + scenario.sigma_x * rng.standard_normal(
        (n, scenario.dim)
    )
    scores = np.empty(n)
    for k in range(scenario.n_domains):
        mask = domains == k
        if mask.any():
            scores[mask] = scenario.score_dists[k].sample(int(mask.sum()), rng)
    return features, scores, domains


def beta_scenario(score_means, concentration=10.0, dim=8, separation=6.0,
                  sigma_x=1.0):
    """Standard synthetic scenario: simplex-placed means, Beta score laws.

    Beta keeps scores in [0, 1] like a classification score, and the
    domain-dependent means make domains differ in difficulty.
    """
    means = np.asarray(score_means, dtype=float)
    if np.any(means <= 0) or np.any(means >= 1):
        raise ValueError("Beta score means must lie in (0, 1)")
    dists = tuple(
        ScoreDistribution("beta", (m * concentration, (1.0 - m) * concentration))
        for m in means
    )
    return GaussianMixtureScenario(
        simplex_means(means.size, dim, separation), sigma_x, dists
    )


@dataclass(frozen=True)
class TrialResult:
    """One (environment, split, method, level) cell of a sweep."""

    env_id: int
    split_id: int
    method: str
    alpha: float
    coverage: float | None
    mean_set_size: float | None
    threshold: float
    recall: float | None = None

    @property
    def metric_value(self):
        return self.recall if self.coverage is None else self.coverage


@dataclass(frozen=True)
class MethodSummary:
    method: str
    alpha: float
    metric: str
    mean: float
    std: float
    n_environments: int
    n_splits: int


@dataclass(frozen=True)
class CoverageReport:
    """Per-method aggregates: splits averaged within environment first, then
    mean and population standard deviation across environments."""

    summaries: tuple

    def lookup(self, method, alpha):
        for s in self.summaries:
            if s.method == method and math.isclose(s.alpha, alpha):
                return s
        raise KeyError(f"no summary for method={method!r}, alpha={alpha}")


@dataclass(frozen=True)
class ExperimentConfig:
    """All knobs of a sweep; defaults follow the synthetic reference setup."""

    n_domains: int = 4
    dim: int = 8
    separation: float = 6.0
    sigma_x: float = 1.0
    score_means: tuple = (0.2, 0.4, 0.6, 0.8)
    score_concentration: float = 10.0
    n_environments: int = 100
    dirichlet_alpha: float = 0.1
    n_splits: int = 15
    n_cal_per_domain: int = 500
    n_test: int = 2000
    alphas: tuple = (0.1,)
    methods: tuple = ("unweighted", "max", "oracle", "a1", "a2")
    target_recalls: tuple = (0.9,)
    beta: float = 0.1
    sigma: float = 0.7
    similarity: str = "cosine"
    score_direction: str = "higher"
    master_seed: int = 0

    def validate(self):
        for name in ("n_domains", "n_environments", "n_splits",
                     "n_cal_per_domain", "n_test"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if len(self.score_means) != self.n_domains:
            raise ValueError("need one score mean per domain")
        for a in self.alphas:
            if not 0.0 < a < 1.0:
                raise ValueError("every alpha must lie in (0, 1)")
        for r in self.target_recalls:
            if not 0.0 < r < 1.0:
                raise ValueError("every target recall must lie in (0, 1)")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        unknown = set(self.methods) - set(COVERAGE_METHODS) - set(RISK_METHODS)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")
        if self.dirichlet_alpha <= 0:
            raise ValueError("dirichlet_alpha must be positive")
        if self.score_direction not in ("higher", "lower"):
            raise ValueError("score_direction must be 'higher' or 'lower'")
        return self

    def build_scenario(self):
        return beta_scenario(
            self.score_means,
            concentration=self.score_concentration,
            dim=self.dim,
            separation=self.separation,
            sigma_x=self.sigma_x,
        )


def _env_rng(master_seed, env_id):
    return np.random.default_rng(np.random.SeedSequence([master_seed, _ENV_TAG, env_id]))


def _trial_rng(master_seed, env_id, split_id):
    return np.random.default_rng(
        np.random.SeedSequence([master_seed, _TRIAL_TAG, env_id, split_id])
    )


def _sample_calibration(scenario, n_per_domain, rng):
    per_domain_scores = []
    features = []
    for k in range(scenario.n_domains):
        per_domain_scores.append(scenario.score_dists[k].sample(n_per_domain, rng))
        features.append(
            scenario.means[k]
            + scenario.sigma_x * rng.standard_normal((n_per_domain, scenario.dim))
        )
    grouped = GroupedCalibrationSet(per_domain_scores)
    flat = FlatCalibrationSet(
        np.concatenate(per_domain_scores), np.concatenate(features)
    )
    return grouped, flat


def run_experiment(config):
    """Run the full sweep; returns TrialResults ordered by (env, split, method)."""
    config.validate()
    scenario = config.build_scenario()
    uniform_prior = np.full(config.n_domains, 1.0 / config.n_domains)
    want = set(config.methods)
    results = []

    for env_id in range(config.n_environments):
        lam = sample_environment(
            config.n_domains, config.dirichlet_alpha, _env_rng(config.master_seed, env_id)
        )
        for split_id in range(config.n_splits):
            rng = _trial_rng(config.master_seed, env_id, split_id)
            grouped, flat = _sample_calibration(
                scenario, config.n_cal_per_domain, rng
            )
            feats, scores, _ = generate_grouped_data(
                scenario, lam, config.n_test, rng
            )
            oracle_post = train_post = None
            if "oracle" in want:
                oracle_post = BayesOracleClassifier(scenario, lam).classify_batch(feats)
            if want & {"a1", "a2"}:
                train_post = BayesOracleClassifier(
                    scenario, uniform_prior
                ).classify_batch(feats)
            pooled = grouped.pooled()

            for alpha in config.alphas:
                for method in config.methods:
                    if method not in COVERAGE_METHODS:
                        continue
                    th = _coverage_thresholds(
                        method, config, grouped, flat, pooled, feats,
                        oracle_post, train_post, alpha,
                    )
                    covered = scores <= th
                    results.append(TrialResult(
                        env_id, split_id, method, alpha,
                        coverage=float(np.mean(covered)),
                        mean_set_size=None,
                        threshold=float(np.mean(th)),
                    ))
            if want & set(RISK_METHODS):
                for r in config.target_recalls:
                    for method in config.methods:
                        if method not in RISK_METHODS:
                            continue
                        if method == "risk_uniform":
                            th = risk_control_threshold(pooled, r)
                        else:
                            th = similarity_risk_thresholds_batch(
                                flat, feats, r, beta=config.beta,
                                sigma=config.sigma, similarity=config.similarity,
                            )
                        flagged = scores > th
                        results.append(TrialResult(
                            env_id, split_id, method, 1.0 - r,
                            coverage=None,
                            mean_set_size=None,
                            threshold=float(np.mean(th)),
                            recall=float(np.mean(flagged)),
                        ))
    return results


def _coverage_thresholds(method, config, grouped, flat, pooled, feats,
                         oracle_post, train_post, alpha):
    if method == "unweighted":
        return standard_cp_threshold(pooled, alpha).threshold
    if method == "max":
        return max_threshold(grouped, alpha).threshold
    if method == "oracle":
        return group_weighted_thresholds_batch(grouped, oracle_post, alpha)
    if method == "a1":
        return group_weighted_thresholds_batch(grouped, train_post, alpha)
    if method == "a2":
        lam_hat = train_post.mean(axis=0)
        return group_weighted_threshold(
            grouped, lam_hat / lam_hat.sum(), alpha
        ).threshold
    if method == "a3":
        return algorithm3_thresholds_batch(
            flat, feats, alpha, beta=config.beta, sigma=config.sigma,
            similarity=config.similarity,
        )
    raise ValueError(f"unknown coverage method {method!r}")


def aggregate(results):
    """Splits-first aggregation into a CoverageReport.

    For each (method, alpha): average the metric over splits within each
    environment, then report mean and population standard deviation across
    environments.
    """
    if not results:
        raise ValueError("no results to aggregate")
    cells = {}
    for r in results:
        cells.setdefault((r.method, round(r.alpha, 12)), {}).setdefault(
            r.env_id, []
        ).append(r)
    summaries = []
    for (method, alpha), envs in sorted(cells.items()):
        env_means = np.array([
            np.mean([t.metric_value for t in trials]) for _, trials in sorted(envs.items())
        ])
        n_splits = max(len(t) for t in envs.values())
        metric = "recall" if next(iter(envs.values()))[0].coverage is None else "coverage"
        summaries.append(MethodSummary(
            method=method,
            alpha=float(alpha),
            metric=metric,
            mean=float(env_means.mean()),
            std=float(env_means.std()),  # population convention
            n_environments=len(envs),
            n_splits=n_splits,
        ))
    return CoverageReport(tuple(summaries))


@dataclass(frozen=True)
class Theorem1Result:
    """Outcome of the adversarial-classifier coverage construction."""

    gamma: float
    alpha: float
    coverage: float
    domain1_coverage: float
    domain2_coverage: float
    domain1_accuracy: float
    domain2_accuracy: float
    coverage_bound: float  # max(0, gamma - alpha) for domain 2


def theorem1_scenario(gamma, alpha, n_cal_per_domain=20000, n_test=10000, seed=0):
    """Two-domain disjoint-support construction with an adversarial classifier.

    Domain-1 scores are Uniform[0, 1), domain-2 scores Uniform[1, 2]; the
    group-conditional predictor applies the claimed domain's standard CP
    threshold, and the classifier concentrates its domain-2 mistakes on the
    low-score points, driving domain-2 conditional coverage down to about
    max(0, gamma - alpha).
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 13]))
    cal1 = rng.uniform(0.0, 1.0, n_cal_per_domain)
    cal2 = rng.uniform(1.0, 2.0, n_cal_per_domain)
    q1 = standard_cp_threshold(cal1, alpha).threshold
    q2 = standard_cp_threshold(cal2, alpha).threshold

    n_half = n_test // 2
    s1 = rng.uniform(0.0, 1.0, n_half)
    s2 = rng.uniform(1.0, 2.0, n_half)
    clf = AdversarialGammaClassifier(gamma, alpha, seed=seed)
    pred1 = clf.classify_batch(s1).argmax(axis=1)
    pred2 = clf.classify_batch(s2).argmax(axis=1)
    thresholds = np.array([q1, q2])
    cov1 = s1 <= thresholds[pred1]
    cov2 = s2 <= thresholds[pred2]
    return Theorem1Result(
        gamma=float(gamma),
        alpha=float(alpha),
        coverage=float(np.concatenate([cov1, cov2]).mean()),
        domain1_coverage=float(cov1.mean()),
        domain2_coverage=float(cov2.mean()),
        domain1_accuracy=float(np.mean(pred1 == 0)),
        domain2_accuracy=float(np.mean(pred2 == 1)),
        coverage_bound=max(0.0, gamma - alpha),
    )
