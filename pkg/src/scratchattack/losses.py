"""Attack objectives computed from an oracle's answer."""
import numpy as np

from .exceptions import DomainError
from .validation import check_label, check_scores

_EPS = 1e-12


def margin_loss(scores, true_label):
    """Score of ``true_label`` minus the best other score.

    Negative if and only if the image is classified as another class; a tie
    gives exactly zero and does not count as a success.
    """
    scores = check_scores(scores)
    y = check_label(true_label, scores.size, "true_label")
    others = np.delete(scores, y)
    return float(scores[y] - others.max())


def targeted_cross_entropy(scores, target_label):
    """Cross entropy against the one-hot vector of ``target_label``.

    ``-log(p[t]) - sum_{i != t} log(1 - p[i])``. Probabilities are clamped to
    ``[1e-12, 1 - 1e-12]`` before taking logs, so exact zeros and ones give a
    large finite value instead of infinity. Attack success is not implied by
    any loss value; check ``argmax(scores) == target_label`` separately.
    """
    p = check_scores(scores)
    t = check_label(target_label, p.size, "target_label")
    p = np.clip(p, _EPS, 1.0 - _EPS)
    others = np.delete(p, t)
    return float(-np.log(p[t]) - np.sum(np.log1p(-others)))


def confidence_loss(confidence):
    """Loss for endpoints that only report a confidence: the confidence itself."""
    value = float(confidence)
    if not np.isfinite(value):
        raise DomainError(f"confidence must be finite, got {confidence!r}")
    return value
