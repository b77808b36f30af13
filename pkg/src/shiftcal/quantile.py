"""Threshold-selection mathematics.

All quantile routines assume higher score = less conforming; callers that
need the flipped direction negate scores at the boundary (see
``shiftcal.conformal``). Thresholds of +inf are first-class values meaning
"emit the full label space"; no exception is raised when the conservative
quantile is unattainable.
"""

import math
from dataclasses import dataclass

import numpy as np

SIMPLEX_TOL = 1e-9


def validate_simplex(weights, n_domains=None):
    """Check a nonnegative weight vector summing to 1; return it as an array."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("simplex weights must be a nonempty 1-D array")
    if n_domains is not None and w.size != n_domains:
        raise ValueError(f"expected {n_domains} weights, got {w.size}")
    if np.any(w < 0):
        raise ValueError("simplex weights must be nonnegative")
    if abs(w.sum() - 1.0) > SIMPLEX_TOL:
        raise ValueError(f"simplex weights sum to {w.sum()!r}, not 1")
    return w


@dataclass(frozen=True)
class ThresholdRule:
    """A scalar threshold plus the score direction defining set membership."""

    threshold: float
    higher_is_less_conforming: bool = True

    def contains(self, score):
        if self.higher_is_less_conforming:
            return np.asarray(score) <= self.threshold
        return np.asarray(score) >= self.threshold


class GroupedCalibrationSet:
    """Per-domain conformity scores, stored sorted ascending.

    Construction rejects empty domains; the sorted arrays and derived
    candidate grid are immutable and safe to share across workers.
    """

    def __init__(self, scores_by_domain):
        arrays = [np.sort(np.asarray(s, dtype=float).ravel()) for s in scores_by_domain]
        if len(arrays) == 0:
            raise ValueError("need at least one domain")
        for k, a in enumerate(arrays):
            if a.size == 0:
                raise ValueError(f"domain {k} has no calibration scores")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"domain {k} has non-finite scores")
        self.scores = arrays
        self.counts = np.array([a.size for a in arrays])
        self._candidates = None
        self._coverage_matrix = None

    @property
    def n_domains(self):
        return len(self.scores)

    def pooled(self):
        return np.sort(np.concatenate(self.scores))

    def candidate_grid(self):
        """Sorted union of all calibration scores (the candidate thresholds)."""
        if self._candidates is None:
            self._candidates = np.unique(np.concatenate(self.scores))
        return self._candidates

    def coverage_matrix(self):
        """Matrix G with G[c, k] = m_k(q_c) / (n_k + 1) over the candidate grid.

        m_k(q) counts domain-k scores <= q (ties inclusive), so each column
        is a right-continuous step function evaluated at its jump points.
        """
        if self._coverage_matrix is None:
            grid = self.candidate_grid()
            cols = [
                np.searchsorted(a, grid, side="right") / (a.size + 1)
                for a in self.scores
            ]
            self._coverage_matrix = np.column_stack(cols)
        return self._coverage_matrix


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def standard_cp_threshold(scores, alpha):
    """Conservative empirical quantile of split conformal prediction.

    Returns the ceil((n+1)(1-alpha))-th smallest score, or +inf when that
    rank exceeds n (too little data: the prediction set is the full label
    space).
    """
    _check_alpha(alpha)
    s = np.sort(np.asarray(scores, dtype=float).ravel())
    if s.size == 0:
        raise ValueError("need at least one calibration score")
    rank = math.ceil((s.size + 1) * (1.0 - alpha))
    if rank > s.size:
        return ThresholdRule(math.inf)
    return ThresholdRule(float(s[rank - 1]))


def per_domain_thresholds(cal, alpha):
    """Standard CP threshold within each domain."""
    return [standard_cp_threshold(a, alpha) for a in cal.scores]


def max_threshold(cal, alpha):
    """Worst-case (robust) threshold: maximum of the per-domain thresholds."""
    rules = per_domain_thresholds(cal, alpha)
    return ThresholdRule(max(r.threshold for r in rules))


def group_weighted_threshold(cal, lambda_hat, alpha):
    """Smallest threshold meeting the weighted coverage constraint.

    Solves min q s.t. sum_k lambda_hat[k] * m_k(q) / (n_k + 1) >= 1 - alpha,
    where m_k(q) counts domain-k calibration scores <= q. The constraint is a
    right-continuous step function changing only at calibration scores, so
    the candidates are the observed scores plus +inf; +inf is returned when
    no finite candidate satisfies the constraint.
    """
    _check_alpha(alpha)
    lam = validate_simplex(lambda_hat, cal.n_domains)
    g = cal.coverage_matrix() @ lam
    hit = np.nonzero(g >= 1.0 - alpha)[0]
    if hit.size == 0:
        return ThresholdRule(math.inf)
    return ThresholdRule(float(cal.candidate_grid()[hit[0]]))


def group_weighted_thresholds_batch(cal, lambdas, alpha):
    """Vectorized ``group_weighted_threshold`` over rows of mixture weights.

    ``lambdas`` is a (T, K) array; returns a length-T float array of
    thresholds (+inf where unattainable). Used by the Monte Carlo harness
    where a per-test-point threshold is needed for thousands of points
    against one shared calibration set.
    """
    _check_alpha(alpha)
    lam = np.asarray(lambdas, dtype=float)
    if lam.ndim != 2 or lam.shape[1] != cal.n_domains:
        raise ValueError("lambdas must be a (T, K) array")
    g = lam @ cal.coverage_matrix().T  # (T, C)
    ok = g >= 1.0 - alpha
    first = ok.argmax(axis=1)
    grid = cal.candidate_grid()
    out = grid[first].astype(float)
    out[~ok.any(axis=1)] = math.inf
    return out


@dataclass(frozen=True)
class WeightedPointMasses:
    """A discrete distribution over scores, with one +inf atom for the test point."""

    scores: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float)
        m = np.asarray(self.masses, dtype=float)
        if s.shape != m.shape or s.ndim != 1 or s.size == 0:
            raise ValueError("scores and masses must be equal-length 1-D arrays")
        if np.count_nonzero(np.isposinf(s)) != 1:
            raise ValueError("exactly one score must be +inf (the test point)")
        if np.any(m < 0):
            raise ValueError("masses must be nonnegative")
        if abs(m.sum() - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"masses sum to {m.sum()!r}, not 1")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "masses", m)


def weighted_pointmass_quantile(pm, level):
    """Smallest score whose cumulative mass reaches ``level``.

    May return +inf when the finite atoms carry less mass than ``level``.
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    order = np.argsort(pm.scores, kind="stable")
    cum = np.cumsum(pm.masses[order])
    idx = int(np.argmax(cum >= level))
    if cum[idx] < level:  # only via rounding drift; +inf atom is last
        idx = cum.size - 1
    return float(pm.scores[order][idx])
