"""Outcome-model designs over propensity strata and the averaged causal
contrast computed from their coefficients."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import glm
from .propensity import QuintileStrata

PS_ONLY = "ps_only"
PS_PLUS_COV = "ps_plus_cov"
OUTCOME_SPECS = (PS_ONLY, PS_PLUS_COV)


@dataclass(frozen=True)
class DeltaEstimate:
    """Point estimate of the average causal effect with a 95% interval."""

    point: float
    lo: float
    hi: float
    method: str

    def __post_init__(self):
        if np.isfinite(self.point) and not (self.lo <= self.point <= self.hi):
            # Percentile intervals can in principle exclude the point
            # estimate; worth a diagnostic but not an error.
            warnings.warn(
                f"{self.method}: point estimate {self.point:.4g} outside "
                f"interval [{self.lo:.4g}, {self.hi:.4g}]",
                stacklevel=2,
            )

    @property
    def width(self) -> float:
        return self.hi - self.lo


def _check_spec(spec):
    if spec not in OUTCOME_SPECS:
        raise ValueError(f"unknown outcome spec {spec!r}; expected one of {OUTCOME_SPECS}")


def outcome_design_width(spec, p):
    """Number of outcome-model columns: 6 for the score-only model,
    6 + p when covariates are adjusted for directly."""
    _check_spec(spec)
    return 6 if spec == PS_ONLY else 6 + p


def build_outcome_design(spec, x, strata: QuintileStrata, c):
    """Outcome-model design with fixed column order
    [1, X, I(q2), I(q3), I(q4), I(q5)] plus, for the augmented model, the
    untransformed confounder columns.

    Quintile bin 1 is the reference cell.
    """
    _check_spec(spec)
    x = np.asarray(x, dtype=float).ravel()
    c = np.asarray(c, dtype=float)
    n = x.size
    if strata.n != n or c.shape[0] != n:
        raise ValueError(
            f"inconsistent unit counts: x {n}, strata {strata.n}, c {c.shape[0]}"
        )
    cols = [np.ones(n), x]
    for k in (2, 3, 4, 5):
        cols.append((strata.assignment == k).astype(float))
    if spec == PS_PLUS_COV:
        cols.extend(c.T)
    return np.column_stack(cols)


def delta_g_computation(theta_y, spec, strata: QuintileStrata, c):
    """Average causal effect implied by outcome coefficients ``theta_y``.

    Standardizes over the empirical covariate distribution: every unit's
    outcome probability is evaluated with the treatment column forced to 1
    and then to 0 (strata and covariates unchanged, since the score is a
    function of the confounders only), and the per-unit differences are
    averaged.
    """
    _check_spec(spec)
    theta_y = np.asarray(theta_y, dtype=float).ravel()
    c = np.asarray(c, dtype=float)
    width = outcome_design_width(spec, c.shape[1])
    if theta_y.size != width:
        raise ValueError(
            f"theta_y has length {theta_y.size}, {spec} design has {width} columns"
        )
    base_design = build_outcome_design(spec, np.zeros(strata.n), strata, c)
    eta0 = base_design @ theta_y
    return float(np.mean(glm.expit(eta0 + theta_y[1]) - glm.expit(eta0)))
