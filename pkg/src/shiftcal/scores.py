"""Conformity score functions.

Classification scores (LAC, APS, RAPS) map a class-probability vector and a
true label to a score; sequence scores (LNS, MARS) map token log-probabilities
to a score; the degree-matrix score maps a pairwise entailment matrix to a
score. All functions are pure and validate rather than clamp their inputs:
malformed probability vectors are rejected so upstream data errors surface.
"""

import numpy as np

SIMPLEX_TOL = 1e-9


def _validate_probs(probs):
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("probability vector must be a nonempty 1-D array")
    if np.any(p < 0):
        raise ValueError("probability vector has negative entries")
    if abs(p.sum() - 1.0) > SIMPLEX_TOL:
        raise ValueError(f"probability vector sums to {p.sum()!r}, not 1")
    return p


def _validate_label(label, n_classes):
    label = int(label)
    if not 0 <= label < n_classes:
        raise ValueError(f"label {label} out of range for {n_classes} classes")
    return label


def lac_score(probs, label):
    """One minus the probability assigned to the true label."""
    p = _validate_probs(probs)
    label = _validate_label(label, p.size)
    return 1.0 - p[label]


def _descending_rank(p, label):
    # Stable sort on negated values: ties break by lower class index.
    order = np.argsort(-p, kind="stable")
    return order, int(np.nonzero(order == label)[0][0])


def aps_score(probs, label):
    """Cumulative probability mass down to and including the true label.

    Classes are taken in descending probability order; ties break
    deterministically by lower class index.
    """
    p = _validate_probs(probs)
    label = _validate_label(label, p.size)
    order, pos = _descending_rank(p, label)
    return float(np.sum(p[order[: pos + 1]]))


def raps_score(probs, label, reg_weight, reg_offset):
    """APS score plus a rank penalty ``reg_weight * max(rank - reg_offset, 0)``.

    ``rank`` is the 1-based position of the true label in the descending
    sort, so with ``reg_offset=1`` the penalty vanishes for the top label.
    """
    if reg_weight < 0:
        raise ValueError("reg_weight must be nonnegative")
    if reg_offset < 0:
        raise ValueError("reg_offset must be nonnegative")
    p = _validate_probs(probs)
    label = _validate_label(label, p.size)
    order, pos = _descending_rank(p, label)
    base = float(np.sum(p[order[: pos + 1]]))
    rank = pos + 1
    return base + reg_weight * max(rank - reg_offset, 0)


def _validate_logprobs(logprobs):
    lp = np.asarray(logprobs, dtype=float)
    if lp.ndim != 1 or lp.size == 0:
        raise ValueError("log-probability sequence must be nonempty")
    if np.any(lp > 0):
        raise ValueError("log-probabilities must be <= 0")
    return lp


def lns_score(logprobs):
    """Length-normalized score: mean token log-probability."""
    lp = _validate_logprobs(logprobs)
    return float(lp.mean())


def mars_score(logprobs, weights):
    """Weighted geometric mean of token probabilities.

    The token weights are caller-supplied data (nonnegative, summing to 1);
    no weight model is fitted here.
    """
    if weights is None:
        raise ValueError("mars_score requires token weights")
    lp = _validate_logprobs(logprobs)
    w = np.asarray(weights, dtype=float)
    if w.shape != lp.shape:
        raise ValueError("weights must have the same length as logprobs")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if abs(w.sum() - 1.0) > SIMPLEX_TOL:
        raise ValueError(f"weights sum to {w.sum()!r}, not 1")
    return float(np.exp(np.dot(w, lp)))


def degree_matrix_score(entailment):
    """Disagreement score from a pairwise entailment matrix.

    Row sums of the m-by-m matrix form the diagonal of a degree matrix D;
    the score is trace(mI - D) / m**2, which is 0 when every pair fully
    entails and approaches 1 as responses disagree.
    """
    w = np.asarray(entailment, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError("entailment matrix must be square")
    if np.any(w < 0) or np.any(w > 1):
        raise ValueError("entailment entries must lie in [0, 1]")
    if not np.allclose(np.diag(w), 1.0, atol=SIMPLEX_TOL):
        raise ValueError("entailment diagonal must be 1")
    m = w.shape[0]
    degrees = w.sum(axis=1)
    return float(np.sum(m - degrees) / m**2)
