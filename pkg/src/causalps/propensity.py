"""First-stage machinery: propensity scores, their outcome-blind posterior,
and quintile stratification."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import glm
from .errors import DegenerateStrataError, ModelError

QUINTILE_PROBS = (0.2, 0.4, 0.6, 0.8)


@dataclass(frozen=True)
class QuintileStrata:
    """Quintile bins of a score vector.

    cutoffs: the four 20/40/60/80 empirical percentiles (nondecreasing).
    assignment: per-unit bin index in 1..5; bins are left-closed,
        right-open at the cutoffs, with bin 5 closed on the right.
    counts: units per bin, all positive.
    """

    cutoffs: np.ndarray
    assignment: np.ndarray
    counts: np.ndarray

    @property
    def n(self) -> int:
        return self.assignment.size


def treatment_design(c):
    """Analysis-model design for the treatment stage: intercept plus all
    confounder main effects."""
    c = np.asarray(c, dtype=float)
    return np.column_stack([np.ones(c.shape[0]), c])


def propensity_scores(theta_xc, c_design):
    """Per-unit treatment probabilities expit(c_design . theta_xc).

    Values are nudged into the open interval (0, 1) so downstream
    log-likelihoods and stratification never see an exact 0 or 1.
    """
    theta_xc = np.asarray(theta_xc, dtype=float).ravel()
    c_design = np.asarray(c_design, dtype=float)
    if c_design.ndim != 2 or c_design.shape[1] != theta_xc.size:
        raise ValueError(
            f"design shape {c_design.shape} does not match {theta_xc.size} coefficients"
        )
    e = glm.expit(c_design @ theta_xc)
    tiny = np.finfo(float).tiny
    one_minus = np.nextafter(1.0, 0.0)
    return np.clip(e, tiny, one_minus)


def quintile_strata(e):
    """Assign units to quintile bins of their scores.

    Cutoffs are the empirical 20/40/60/80 percentiles (linear order-statistic
    interpolation). Raises DegenerateStrataError when ties collapse a bin.
    """
    e = np.asarray(e, dtype=float).ravel()
    if e.size < 5:
        raise ValueError(f"need at least 5 units to form quintiles, got {e.size}")
    cutoffs = np.quantile(e, QUINTILE_PROBS)
    assignment = np.searchsorted(cutoffs, e, side="right") + 1
    counts = np.bincount(assignment, minlength=6)[1:]
    if np.any(counts == 0):
        raise DegenerateStrataError(
            f"empty quintile bin (counts {counts.tolist()}); scores too tied"
        )
    return QuintileStrata(cutoffs=cutoffs, assignment=assignment, counts=counts)


def sample_propensity_posterior(x, c_design, prior, chain):
    """Metropolis draws from the treatment-stage posterior p(theta | x, c).

    By construction this posterior never sees the outcome: there is no
    outcome argument, so the draws are identical no matter what outcome
    data exist elsewhere.

    The chain starts at the treatment-model MLE when it exists, otherwise
    at zero. Returns the sampler's ChainResult; ``.draws`` has one row per
    retained draw.
    """
    from .samplers import rw_metropolis  # local import to avoid a cycle

    x = np.asarray(x, dtype=float).ravel()
    c_design = np.asarray(c_design, dtype=float)
    try:
        init = glm.fit_logistic_mle(c_design, x)
    except ModelError:
        init = np.zeros(c_design.shape[1])

    def log_target(theta):
        return glm.logistic_loglik(theta, c_design, x) + prior.logpdf(theta)

    return rw_metropolis(log_target, init, chain)
