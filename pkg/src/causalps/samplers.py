"""Random-walk Metropolis machinery and the joint log-posteriors used by the
Bayesian strategies."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import glm, outcome
from .data import Dataset
from .errors import DegenerateStrataError, ModelError, NonFiniteTargetError, StuckChainWarning
from .propensity import QuintileStrata, propensity_scores, quintile_strata, treatment_design

# Burn-in adaptation: after every window, halve the proposal scale when the
# windowed acceptance rate is below the band, double it when above.
ADAPT_WINDOW = 100
ACCEPT_LOW = 0.2
ACCEPT_HIGH = 0.5

_LOG_2PI = float(np.log(2.0 * np.pi))


def derive_seed(seed, *tags) -> int:
    """Stable 64-bit seed derived from a base seed and integer tags."""
    ss = np.random.SeedSequence((int(seed), *(int(t) for t in tags)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class PriorSpec:
    """Independent normal priors, one per coefficient (log-odds units).

    ``mean`` and ``sd`` may be scalars or per-coefficient vectors.
    """

    mean: float = 0.0
    sd: float = 10.0

    def __post_init__(self):
        sd = np.asarray(self.sd, dtype=float)
        if np.any(sd <= 0) or not np.all(np.isfinite(sd)):
            raise ValueError("prior sd must be positive and finite")

    def logpdf(self, theta):
        """Sum of normal log-densities over the last axis of ``theta``."""
        theta = np.asarray(theta, dtype=float)
        q = theta.shape[-1]
        mean = np.broadcast_to(np.asarray(self.mean, dtype=float), (q,))
        sd = np.broadcast_to(np.asarray(self.sd, dtype=float), (q,))
        z = (theta - mean) / sd
        norm_const = float(np.log(sd).sum() + 0.5 * q * _LOG_2PI)
        val = -0.5 * np.sum(z * z, axis=-1) - norm_const
        return float(val) if theta.ndim == 1 else val


@dataclass(frozen=True)
class ChainConfig:
    """Metropolis chain settings."""

    iterations: int = 12_000
    burn_in: int = 2_000
    thin: int = 10
    initial_scale: float = 0.1
    adapt: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.iterations <= 0:
            raise ValueError("iterations must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.initial_scale < 0:
            raise ValueError("initial proposal scale must be >= 0")
        if self.n_retained < 1:
            raise ValueError("config retains no draws")

    @property
    def n_retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


@dataclass(frozen=True)
class ChainResult:
    """Post-burn-in thinned draws plus realized (post-burn-in) acceptance."""

    draws: np.ndarray
    acceptance_rate: float
    final_scale: float
    n_degenerate: int


def _adapted_scale(scale, accepted, proposed):
    if proposed == 0:
        return scale
    rate = accepted / proposed
    if rate < ACCEPT_LOW:
        return scale * 0.5
    if rate > ACCEPT_HIGH:
        return scale * 2.0
    return scale


def rw_metropolis(log_target, init, cfg: ChainConfig) -> ChainResult:
    """Gaussian random-walk Metropolis sampler.

    The full coefficient vector is proposed jointly with iid Gaussian noise
    of one common scale. During burn-in (when ``cfg.adapt``) the scale is
    halved or doubled after each window so the acceptance rate lands in
    [0.2, 0.5]; it is frozen afterwards. Proposals with a -inf target
    (e.g. degenerate strata) are rejected and counted.

    Raises NonFiniteTargetError when the target is not finite at ``init``;
    warns StuckChainWarning when post-burn-in acceptance falls below 1%.
    """
    theta = np.asarray(init, dtype=float).ravel().copy()
    q = theta.size
    rng = np.random.default_rng(cfg.seed)
    lt = float(log_target(theta))
    if not np.isfinite(lt):
        raise NonFiniteTargetError(f"log target is {lt} at the initial state")

    scale = float(cfg.initial_scale)
    n_keep = cfg.n_retained
    draws = np.empty((n_keep, q))
    k = 0
    accepted_post = 0
    win_accepted = 0
    win_proposed = 0
    n_degenerate = 0

    for t in range(1, cfg.iterations + 1):
        prop = theta + scale * rng.standard_normal(q)
        lt_prop = float(log_target(prop))
        if lt_prop == -np.inf:
            n_degenerate += 1
        u = rng.random()
        with np.errstate(divide="ignore"):
            accept = np.log(u) < lt_prop - lt
        if accept:
            theta = prop
            lt = lt_prop
            if t > cfg.burn_in:
                accepted_post += 1
            win_accepted += 1
        win_proposed += 1
        if t <= cfg.burn_in and cfg.adapt and t % ADAPT_WINDOW == 0:
            scale = _adapted_scale(scale, win_accepted, win_proposed)
            win_accepted = 0
            win_proposed = 0
        if t > cfg.burn_in and (t - cfg.burn_in) % cfg.thin == 0:
            draws[k] = theta
            k += 1

    post_total = cfg.iterations - cfg.burn_in
    acc_rate = accepted_post / post_total
    if acc_rate < 0.01:
        warnings.warn(
            f"post-burn-in acceptance rate {acc_rate:.4f} below 0.01",
            StuckChainWarning,
            stacklevel=2,
        )
    return ChainResult(
        draws=draws[:k],
        acceptance_rate=acc_rate,
        final_scale=scale,
        n_degenerate=n_degenerate,
    )


@dataclass(frozen=True)
class JointState:
    """Joint sampler state: treatment coefficients, outcome coefficients,
    and the caches (scores, strata, outcome design) implied by the former."""

    theta_xc: np.ndarray
    theta_y: np.ndarray
    e: np.ndarray
    strata: QuintileStrata
    design: np.ndarray
    spec: str

    @classmethod
    def from_params(cls, theta_xc, theta_y, data: Dataset, spec: str) -> "JointState":
        """Build a state, recomputing all caches from ``theta_xc``.

        Raises DegenerateStrataError when the implied scores collapse a
        quintile bin.
        """
        theta_xc = np.asarray(theta_xc, dtype=float).ravel()
        theta_y = np.asarray(theta_y, dtype=float).ravel()
        e = propensity_scores(theta_xc, treatment_design(data.c))
        strata = quintile_strata(e)
        design = outcome.build_outcome_design(spec, data.x, strata, data.c)
        if theta_y.size != design.shape[1]:
            raise ValueError(
                f"theta_y has length {theta_y.size}, design has {design.shape[1]} columns"
            )
        return cls(theta_xc=theta_xc, theta_y=theta_y, e=e, strata=strata,
                   design=design, spec=spec)


def _log_posterior_joint(state: JointState, data: Dataset, priors) -> float:
    prior_xc, prior_y = priors
    ll_x = glm.logistic_loglik(state.theta_xc, treatment_design(data.c), data.x)
    ll_y = glm.logistic_loglik(state.theta_y, state.design, data.y)
    return ll_x + ll_y + prior_xc.logpdf(state.theta_xc) + prior_y.logpdf(state.theta_y)


def log_posterior_B(state: JointState, data: Dataset, priors) -> float:
    """Log joint target of the single-likelihood Bayesian strategy: treatment
    log-likelihood plus the score-only outcome log-likelihood evaluated at
    strata derived from the *current* treatment coefficients, plus both
    priors.

    This target deliberately lets outcome information feed back into the
    treatment coefficients; it is the construction whose failure the
    simulation study exhibits.
    """
    if state.spec != outcome.PS_ONLY:
        raise ValueError("log_posterior_B expects a state built with the ps_only design")
    return _log_posterior_joint(state, data, priors)


def log_posterior_D(state: JointState, data: Dataset, priors) -> float:
    """As log_posterior_B but with the augmented outcome design that adjusts
    for both the score strata and the raw covariates."""
    if state.spec != outcome.PS_PLUS_COV:
        raise ValueError("log_posterior_D expects a state built with the ps_plus_cov design")
    return _log_posterior_joint(state, data, priors)


@dataclass(frozen=True)
class JointChainResult:
    theta_xc_draws: np.ndarray
    theta_y_draws: np.ndarray
    delta_draws: np.ndarray
    acceptance_xc: float
    acceptance_y: float
    final_scale_xc: float
    final_scale_y: float
    n_degenerate: int


def sample_joint_posterior(data: Dataset, spec: str, priors, cfg: ChainConfig) -> JointChainResult:
    """Blocked random-walk Metropolis on the joint target of the treatment
    and outcome coefficients.

    Each sweep proposes the treatment block and then the outcome block;
    scores, strata, and the outcome design are recomputed from every
    proposed treatment vector, so the outcome term sees the proposal's own
    stratification. Treatment proposals that collapse a quintile bin are
    rejected (target treated as -inf) and counted.

    Per retained sweep the implied causal contrast is evaluated at the
    current strata, so the returned ``delta_draws`` align with the
    coefficient draws.
    """
    cd = treatment_design(data.c)
    x, y, c = data.x, data.y, data.c
    prior_xc, prior_y = priors

    try:
        theta_xc = glm.fit_logistic_mle(cd, x)
    except ModelError:
        theta_xc = np.zeros(cd.shape[1])
    e = propensity_scores(theta_xc, cd)
    strata = quintile_strata(e)  # degenerate at the MLE is unrecoverable
    design = outcome.build_outcome_design(spec, x, strata, c)
    try:
        theta_y = glm.fit_logistic_mle(design, y)
    except ModelError:
        theta_y = np.zeros(design.shape[1])

    q_xc = theta_xc.size
    q_y = theta_y.size
    rng = np.random.default_rng(cfg.seed)

    ll_x = glm.logistic_loglik(theta_xc, cd, x) + prior_xc.logpdf(theta_xc)
    oll = glm.logistic_loglik(theta_y, design, y)
    pr_y = prior_y.logpdf(theta_y)

    scale_xc = float(cfg.initial_scale)
    scale_y = float(cfg.initial_scale)
    n_keep = cfg.n_retained
    xc_draws = np.empty((n_keep, q_xc))
    y_draws = np.empty((n_keep, q_y))
    delta_draws = np.empty(n_keep)
    k = 0
    acc_xc_post = acc_y_post = 0
    win_xc = win_y = 0
    n_degenerate = 0

    for t in range(1, cfg.iterations + 1):
        # treatment block: strata travel with the proposal
        prop_xc = theta_xc + scale_xc * rng.standard_normal(q_xc)
        u = rng.random()
        e_prop = propensity_scores(prop_xc, cd)
        try:
            strata_prop = quintile_strata(e_prop)
        except DegenerateStrataError:
            strata_prop = None
            n_degenerate += 1
        if strata_prop is not None:
            design_prop = outcome.build_outcome_design(spec, x, strata_prop, c)
            ll_x_prop = glm.logistic_loglik(prop_xc, cd, x) + prior_xc.logpdf(prop_xc)
            oll_prop = glm.logistic_loglik(theta_y, design_prop, y)
            with np.errstate(divide="ignore"):
                if np.log(u) < (ll_x_prop + oll_prop) - (ll_x + oll):
                    theta_xc = prop_xc
                    e, strata, design = e_prop, strata_prop, design_prop
                    ll_x, oll = ll_x_prop, oll_prop
                    if t > cfg.burn_in:
                        acc_xc_post += 1
                    win_xc += 1

        # outcome block: design fixed at the current strata
        prop_y = theta_y + scale_y * rng.standard_normal(q_y)
        u = rng.random()
        oll_prop = glm.logistic_loglik(prop_y, design, y)
        pr_y_prop = prior_y.logpdf(prop_y)
        with np.errstate(divide="ignore"):
            if np.log(u) < (oll_prop + pr_y_prop) - (oll + pr_y):
                theta_y = prop_y
                oll, pr_y = oll_prop, pr_y_prop
                if t > cfg.burn_in:
                    acc_y_post += 1
                win_y += 1

        if t <= cfg.burn_in and cfg.adapt and t % ADAPT_WINDOW == 0:
            scale_xc = _adapted_scale(scale_xc, win_xc, ADAPT_WINDOW)
            scale_y = _adapted_scale(scale_y, win_y, ADAPT_WINDOW)
            win_xc = win_y = 0

        if t > cfg.burn_in and (t - cfg.burn_in) % cfg.thin == 0:
            xc_draws[k] = theta_xc
            y_draws[k] = theta_y
            delta_draws[k] = outcome.delta_g_computation(theta_y, spec, strata, c)
            k += 1

    post_total = cfg.iterations - cfg.burn_in
    acc_xc = acc_xc_post / post_total
    acc_y = acc_y_post / post_total
    for name, rate in (("treatment", acc_xc), ("outcome", acc_y)):
        if rate < 0.01:
            warnings.warn(
                f"{name} block post-burn-in acceptance rate {rate:.4f} below 0.01",
                StuckChainWarning,
                stacklevel=2,
            )
    return JointChainResult(
        theta_xc_draws=xc_draws[:k],
        theta_y_draws=y_draws[:k],
        delta_draws=delta_draws[:k],
        acceptance_xc=acc_xc,
        acceptance_y=acc_y,
        final_scale_xc=scale_xc,
        final_scale_y=scale_y,
        n_degenerate=n_degenerate,
    )
