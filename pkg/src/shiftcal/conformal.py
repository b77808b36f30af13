"""End-to-end calibration procedures.

Four procedures, each built on the threshold mathematics in
``shiftcal.quantile``:

- per-test-point group weighting: the domain classifier's output on the
  test point weights the per-domain calibration counts;
- batch group weighting: the classifier's mean output over a test batch
  yields one shared threshold;
- similarity weighting: no domain labels; the most similar calibration
  points (by embedding similarity) carry softmax masses in a weighted
  quantile;
- recall-targeted risk control: a low-quantile threshold over hallucinated
  calibration scores such that at least the target fraction lies strictly
  above.

All quantile math here assumes higher score = less conforming; datasets
where larger means more confident are handled by negating scores at
ingestion (see the CLI's score-direction option).
"""

import math
from dataclasses import dataclass

import numpy as np

from shiftcal.quantile import (
    ThresholdRule,
    WeightedPointMasses,
    group_weighted_threshold,
    weighted_pointmass_quantile,
)

SIMILARITIES = ("cosine", "dot", "neg_euclidean")


class FlatCalibrationSet:
    """Domain-label-free calibration scores paired with embedding vectors."""

    def __init__(self, scores, embeddings):
        self.scores = np.asarray(scores, dtype=float).ravel()
        self.embeddings = np.atleast_2d(np.asarray(embeddings, dtype=float))
        if self.scores.size == 0:
            raise ValueError("need at least one calibration point")
        if self.embeddings.shape[0] != self.scores.size:
            raise ValueError("scores and embeddings must have equal length")

    @property
    def n(self):
        return self.scores.size


def algorithm1_threshold(cal, classifier, x_test, alpha):
    """Group-weighted threshold using the classifier's output on one test point."""
    lam = classifier.classify(x_test)
    if np.asarray(lam).size != cal.n_domains:
        raise ValueError("classifier output dimension does not match domains")
    return group_weighted_threshold(cal, lam, alpha)


def algorithm2_threshold(cal, classifier, test_batch, alpha):
    """Group-weighted threshold shared by a batch, from the mean classifier output."""
    batch = np.atleast_2d(np.asarray(test_batch, dtype=float))
    if batch.shape[0] == 0:
        raise ValueError("test batch must be nonempty")
    lam = classifier.classify_batch(batch).mean(axis=0)
    lam = lam / lam.sum()  # kill rounding drift before the simplex check
    return group_weighted_threshold(cal, lam, alpha)


def _similarity_matrix(z_tests, embeddings, similarity):
    if similarity not in SIMILARITIES:
        raise ValueError(f"unknown similarity {similarity!r}")
    z = np.atleast_2d(np.asarray(z_tests, dtype=float))
    e = embeddings
    dots = z @ e.T
    if similarity == "dot":
        return dots
    if similarity == "cosine":
        zn = np.linalg.norm(z, axis=1, keepdims=True)
        en = np.linalg.norm(e, axis=1)[None, :]
        return dots / np.maximum(zn * en, 1e-300)
    sq = np.maximum(
        np.sum(z * z, axis=1, keepdims=True) + np.sum(e * e, axis=1)[None, :] - 2 * dots,
        0.0,
    )
    return -np.sqrt(sq)


def _self_similarity(z_tests, similarity):
    z = np.atleast_2d(np.asarray(z_tests, dtype=float))
    if similarity == "dot":
        return np.sum(z * z, axis=1)
    if similarity == "cosine":
        return np.ones(z.shape[0])
    return np.zeros(z.shape[0])  # neg_euclidean


def _check_a3_params(beta, sigma):
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in (0, 1]")
    if sigma <= 0:
        raise ValueError("sigma must be positive")


def similarity_masses(cal, z_tests, beta, sigma, similarity="cosine"):
    """Top-``ceil(beta*n)`` kept scores and softmax masses per test point.

    Returns ``(kept_scores, masses)`` with shapes (T, n') and (T, n'+1);
    the final mass column belongs to the test point itself (self-similarity
    computed, not hard-coded, since it varies for dot products). Kept-set
    ties in similarity break by lower calibration index.
    """
    _check_a3_params(beta, sigma)
    sims = _similarity_matrix(z_tests, cal.embeddings, similarity)
    n_keep = math.ceil(beta * cal.n)
    order = np.argsort(-sims, axis=1, kind="stable")[:, :n_keep]
    kept_sims = np.take_along_axis(sims, order, axis=1)
    kept_scores = cal.scores[order]
    gam = np.column_stack([kept_sims, _self_similarity(z_tests, similarity)]) / sigma
    gam -= gam.max(axis=1, keepdims=True)
    masses = np.exp(gam)
    masses /= masses.sum(axis=1, keepdims=True)
    return kept_scores, masses


def algorithm3_threshold(cal, z_test, alpha, beta=0.1, sigma=0.7, similarity="cosine"):
    """Similarity-weighted threshold for one test point.

    Keeps the most similar fraction ``beta`` of the calibration set, appends
    the test point with score +inf, forms softmax(similarity / sigma)
    masses, and takes the (1 - alpha) weighted quantile.
    """
    kept_scores, masses = similarity_masses(
        cal, np.atleast_2d(z_test), beta, sigma, similarity
    )
    pm = WeightedPointMasses(
        np.append(kept_scores[0], math.inf), masses[0] / masses[0].sum()
    )
    return ThresholdRule(weighted_pointmass_quantile(pm, 1.0 - alpha))


def algorithm3_thresholds_batch(cal, z_tests, alpha, beta=0.1, sigma=0.7,
                                similarity="cosine"):
    """Vectorized similarity-weighted thresholds, one per row of ``z_tests``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    kept_scores, masses = similarity_masses(cal, z_tests, beta, sigma, similarity)
    t, n_keep = kept_scores.shape
    ext = np.column_stack([kept_scores, np.full(t, math.inf)])
    order = np.argsort(ext, axis=1, kind="stable")
    cum = np.cumsum(np.take_along_axis(masses, order, axis=1), axis=1)
    hit = cum >= 1.0 - alpha
    first = hit.argmax(axis=1)
    first[~hit.any(axis=1)] = n_keep  # rounding drift only; fall back to +inf
    return np.take_along_axis(ext, order, axis=1)[np.arange(t), first]


def risk_control_threshold(cal_scores, target_recall, masses=None):
    """Threshold leaving at least the target fraction of scores strictly above.

    Calibration scores must all come from hallucinated generations. The
    uniform variant returns the floor((n+1)(1-r))-th smallest score, a
    conservative rank so recall coverage errs high; -inf (flag everything)
    when that rank is below 1. The weighted variant takes ``masses`` of
    length n+1, the last entry being the test point's mass, and returns the
    largest score whose strictly-below mass plus the test mass stays within
    1 - r.
    """
    if not 0.0 < target_recall < 1.0:
        raise ValueError("target recall must lie in (0, 1)")
    s = np.sort(np.asarray(cal_scores, dtype=float).ravel())
    if s.size == 0:
        raise ValueError("need at least one calibration score")
    if masses is None:
        rank = math.floor((s.size + 1) * (1.0 - target_recall))
        if rank < 1:
            return -math.inf
        return float(s[rank - 1])
    m = np.asarray(masses, dtype=float)
    if m.size != s.size + 1:
        raise ValueError("masses must have length n + 1 (test mass last)")
    if np.any(m < 0) or abs(m.sum() - 1.0) > 1e-9:
        raise ValueError("masses must be nonnegative and sum to 1")
    order = np.argsort(np.asarray(cal_scores, dtype=float).ravel(), kind="stable")
    ms = m[:-1][order]
    below = _mass_strictly_below(s[None, :], np.cumsum(ms)[None, :])[0]
    ok = m[-1] + below <= 1.0 - target_recall
    n_ok = int(ok.sum())  # prefix property: below is nondecreasing
    if n_ok == 0:
        return -math.inf
    return float(s[n_ok - 1])


def _mass_strictly_below(sorted_scores, cum):
    """Per-row mass strictly below each sorted score, tie-aware.

    ``sorted_scores`` and ``cum`` are (T, n) with scores ascending and
    ``cum`` the cumulative masses in that order. Rows with tied scores share
    the cumulative mass of the last strictly-smaller value; the forward fill
    uses a running maximum, valid because ``cum`` is nondecreasing.
    """
    prev_cum = np.concatenate(
        [np.zeros((cum.shape[0], 1)), cum[:, :-1]], axis=1
    )
    is_new = np.concatenate(
        [
            np.ones((sorted_scores.shape[0], 1), dtype=bool),
            sorted_scores[:, 1:] != sorted_scores[:, :-1],
        ],
        axis=1,
    )
    return np.maximum.accumulate(np.where(is_new, prev_cum, -np.inf), axis=1)


def similarity_risk_thresholds_batch(cal, z_tests, target_recall, beta=0.1,
                                     sigma=0.7, similarity="cosine"):
    """Vectorized similarity-weighted risk-control thresholds.

    Same kept-set and softmax masses as the similarity-weighted quantile,
    but the quantile is taken from the low tail with the test point's mass
    placed below every calibration score (the conservative side for
    recall). Returns -inf where even the smallest kept score cannot be
    cleared.
    """
    if not 0.0 < target_recall < 1.0:
        raise ValueError("target recall must lie in (0, 1)")
    kept_scores, masses = similarity_masses(cal, z_tests, beta, sigma, similarity)
    t = kept_scores.shape[0]
    order = np.argsort(kept_scores, axis=1, kind="stable")
    ss = np.take_along_axis(kept_scores, order, axis=1)
    cum = np.cumsum(np.take_along_axis(masses[:, :-1], order, axis=1), axis=1)
    below = _mass_strictly_below(ss, cum)
    ok = masses[:, -1:] + below <= 1.0 - target_recall
    n_ok = ok.sum(axis=1)
    out = np.full(t, -math.inf)
    has = n_ok > 0
    out[has] = ss[np.arange(t)[has], n_ok[has] - 1]
    return out


@dataclass(frozen=True)
class PredictionSet:
    """Set of class indices admitted by a threshold rule."""

    members: tuple
    n_classes: int

    @property
    def is_full(self):
        return len(self.members) == self.n_classes

    def __contains__(self, label):
        return label in self.members

    def __len__(self):
        return len(self.members)


def build_prediction_set(rule, per_class_scores):
    """Classes whose score passes the rule; +inf threshold admits every class."""
    scores = np.asarray(per_class_scores, dtype=float).ravel()
    members = tuple(int(j) for j in np.nonzero(rule.contains(scores))[0])
    return PredictionSet(members, scores.size)


@dataclass(frozen=True)
class RiskDecision:
    """Binary hallucination flag for one generation."""

    flagged: bool
    score: float
    threshold: float


def risk_decision(score, threshold):
    """Flag as hallucination iff the score lies strictly above the threshold."""
    return RiskDecision(bool(score > threshold), float(score), float(threshold))
