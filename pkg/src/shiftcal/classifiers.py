"""Domain classifiers and calibration diagnostics.

A domain classifier maps an input feature vector to a probability simplex
over the K domains. Concrete instances here: the analytic Bayes posterior
for a Gaussian-mixture scenario, an adversarial hard classifier with
controlled per-domain accuracy, and a table-backed classifier that serves
externally computed predictions by id.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np

from shiftcal.quantile import validate_simplex

SCORE_FAMILIES = ("beta", "uniform")


@dataclass(frozen=True)
class ScoreDistribution:
    """Per-domain conformity score distribution (family tag + parameters)."""

    family: str
    params: tuple

    def __post_init__(self):
        if self.family not in SCORE_FAMILIES:
            raise ValueError(f"unknown score family {self.family!r}")
        if len(self.params) != 2:
            raise ValueError("score distribution takes exactly two parameters")

    def sample(self, size, rng):
        a, b = self.params
        if self.family == "beta":
            return rng.beta(a, b, size)
        return rng.uniform(a, b, size)


@dataclass(frozen=True)
class GaussianMixtureScenario:
    """Synthetic multi-domain world: Gaussian features, per-domain score laws.

    Features for domain k are N(means[k], sigma_x^2 I); scores are drawn
    from the domain's score distribution, independent of the features given
    the domain (within-domain exchangeability is exact by construction).
    """

    means: np.ndarray  # (K, d)
    sigma_x: float
    score_dists: tuple  # K ScoreDistribution entries

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "score_dists", tuple(self.score_dists))
        if self.sigma_x <= 0:
            raise ValueError("sigma_x must be positive")
        if len(self.score_dists) != means.shape[0]:
            raise ValueError("need one score distribution per domain")
        if means.shape[0] > 1:
            dists = np.linalg.norm(means[:, None] - means[None, :], axis=-1)
            np.fill_diagonal(dists, np.inf)
            if dists.min() == 0:
                raise ValueError("domain means must be distinct")

    @property
    def n_domains(self):
        return self.means.shape[0]

    @property
    def dim(self):
        return self.means.shape[1]


def simplex_means(n_domains, dim, separation):
    """Domain means on a scaled simplex with pairwise distance ``separation``."""
    if dim < n_domains:
        raise ValueError("feature dimension must be >= number of domains")
    scale = separation / np.sqrt(2.0)
    means = np.zeros((n_domains, dim))
    means[np.arange(n_domains), np.arange(n_domains)] = scale
    return means


class DomainClassifier:
    """Base class: ``classify`` one feature vector, ``classify_batch`` many."""

    def classify(self, x):
        raise NotImplementedError

    def classify_batch(self, xs):
        return np.stack([self.classify(x) for x in np.atleast_2d(xs)])


class BayesOracleClassifier(DomainClassifier):
    """Exact posterior Pr(domain | x) for a Gaussian-mixture scenario.

    The prior is the test environment's mixture weights: the Bayes-optimal
    classifier for an environment depends on that environment's weights, so
    the simulation harness constructs one oracle per environment.
    """

    def __init__(self, scenario, prior):
        self.scenario = scenario
        self.prior = validate_simplex(prior, scenario.n_domains)

    def classify(self, x):
        return self.classify_batch(np.atleast_2d(x))[0]

    def classify_batch(self, xs):
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if not np.all(np.isfinite(xs)):
            raise ValueError("features must be finite")
        # Log posterior up to a constant; max-subtraction for stability.
        diff = xs[:, None, :] - self.scenario.means[None, :, :]  # (T, K, d)
        sq = np.sum(diff * diff, axis=-1)
        with np.errstate(divide="ignore"):
            logpost = np.log(self.prior)[None, :] - sq / (2.0 * self.scenario.sigma_x**2)
        logpost -= logpost.max(axis=1, keepdims=True)
        post = np.exp(logpost)
        return post / post.sum(axis=1, keepdims=True)


class AdversarialGammaClassifier(DomainClassifier):
    """Hard two-domain classifier with per-domain accuracy gamma.

    Built for the disjoint-support scenario where domain-1 scores lie in
    [0, 1) and domain-2 scores in [1, 2], and the classifier sees the score
    itself as the (1-D) feature. All domain-2 mistakes land on the points
    whose score falls below domain 2's (1 - alpha)-quantile, which is the
    worst case for downstream group-conditional coverage. Domain-1 mistakes
    occupy a seed-chosen subinterval of [0, 1) of length 1 - gamma.
    """

    def __init__(self, gamma, alpha, seed=0):
        if not 0.0 <= gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        self.gamma = float(gamma)
        self.alpha = float(alpha)
        rng = np.random.default_rng(seed)
        # Placement of the domain-1 error region is immaterial; fix it at
        # construction so classify stays deterministic and reentrant.
        self._d1_err_start = float(rng.uniform(0.0, self.gamma))

    def classify(self, x):
        return self.classify_batch(np.atleast_1d(x))[0]

    def classify_batch(self, xs):
        s = np.asarray(xs, dtype=float).reshape(-1)
        out = np.zeros((s.size, 2))
        err_width = 1.0 - self.gamma
        lo = self._d1_err_start
        d1 = s < 1.0
        d1_err = d1 & (s >= lo) & (s < lo + err_width)
        d2_err = ~d1 & (s < 1.0 + err_width)
        pred_d2 = (d1 & d1_err) | (~d1 & ~d2_err)
        out[pred_d2, 1] = 1.0
        out[~pred_d2, 0] = 1.0
        return out


class TableClassifier(DomainClassifier):
    """Lookup table of precomputed per-id domain probabilities.

    Ingestion point for externally trained classifiers; queries are by id,
    and an unknown id raises KeyError.
    """

    def __init__(self, rows):
        self.table = {}
        n_domains = None
        for row_id, probs in rows:
            if row_id in self.table:
                raise ValueError(f"duplicate id {row_id!r} in classifier table")
            p = validate_simplex(probs, n_domains)
            n_domains = p.size
            self.table[row_id] = p
        if not self.table:
            raise ValueError("classifier table is empty")
        self.n_domains = n_domains

    def classify(self, row_id):
        try:
            return self.table[row_id]
        except KeyError:
            raise KeyError(f"id {row_id!r} not found in classifier table") from None

    def classify_batch(self, row_ids):
        return np.stack([self.classify(i) for i in row_ids])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            reader = csv.reader(row for row in fh if not row.startswith("#"))
            header = next(reader, None)
            if header is None or header[0] != "id":
                raise ValueError(f"{path}: expected header 'id,p_1,...,p_K'")
            rows = []
            for lineno, rec in enumerate(reader, start=2):
                try:
                    rows.append((rec[0], [float(v) for v in rec[1:]]))
                except (ValueError, IndexError) as exc:
                    raise ValueError(f"{path}, line {lineno}: {exc}") from None
        return cls(rows)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            records = json.load(fh)
        return cls((rec["id"], rec["probs"]) for rec in records)

    def to_json(self, path):
        records = [
            {"id": k, "probs": list(map(float, v))} for k, v in self.table.items()
        ]
        with open(path, "w") as fh:
            json.dump(records, fh, indent=1, sort_keys=True)


def _sample_predictions(classifier, inputs, domains):
    preds = np.atleast_2d(classifier.classify_batch(inputs))
    dom = np.asarray(domains)
    if preds.shape[0] == 0 or dom.size != preds.shape[0]:
        raise ValueError("need one prediction per sampled point")
    return preds, dom


def _mean_gap(preds, dom, n_domains):
    freq = np.bincount(dom, minlength=n_domains) / dom.size
    return float(np.max(np.abs(preds.mean(axis=0) - freq)))


def multiaccuracy_error(classifier, inputs, domains, n_domains):
    """L-infinity gap between mean prediction and empirical domain frequencies.

    The sample (``inputs``, ``domains``) must come from a single environment;
    ``inputs`` are whatever the classifier consumes (feature rows, or ids for
    a table classifier).
    """
    preds, dom = _sample_predictions(classifier, inputs, domains)
    return _mean_gap(preds, dom, n_domains)


def multicalibration_error(classifier, inputs, domains, n_domains, bins=10):
    """Binned multicalibration estimate.

    Predictions are bucketed by their top-domain confidence into ``bins``
    equal-width level sets over [0, 1]; within each nonempty bin the
    multiaccuracy gap is computed and the bins are averaged weighted by
    sample count. With ``bins=1`` this is exactly ``multiaccuracy_error``.
    The binning is an estimable surrogate for conditioning on the full
    prediction vector, which is continuous.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    preds, dom = _sample_predictions(classifier, inputs, domains)
    conf = preds.max(axis=1)
    idx = np.clip((conf * bins).astype(int), 0, bins - 1)
    total = 0.0
    for b in range(bins):
        mask = idx == b
        if not mask.any():
            continue
        total += _mean_gap(preds[mask], dom[mask], n_domains) * mask.sum()
    return total / preds.shape[0]
