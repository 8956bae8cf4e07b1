"""Bernoulli-logit model primitives used by every estimation stage.

All functions work on plain numpy arrays: a design matrix of shape (n, q),
a coefficient vector of length q, and a 0/1 response of length n.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from .errors import (
    DegenerateResponseError,
    NonConvergenceError,
    SeparationError,
    SingularHessianError,
)

# Coefficient 2-norm beyond which the Newton iteration is declared separated.
SEPARATION_NORM = 1e3

# A converged fit whose log-likelihood is this close to zero has perfectly
# classified every unit, which for a logistic model means the MLE is at
# infinity (the norm threshold alone cannot fire: the gradient criterion
# triggers first on saturated fits).
_PERFECT_FIT_LOGLIK = -1e-6


def expit(z):
    """Numerically stable inverse logit, 1 / (1 + exp(-z))."""
    return special.expit(z)


def _as_design(design):
    design = np.asarray(design, dtype=float)
    if design.ndim != 2:
        raise ValueError(f"design must be 2-d, got shape {design.shape}")
    if not np.all(np.isfinite(design)):
        raise ValueError("design contains non-finite entries")
    return design


def _check_dims(beta, design, y):
    beta = np.asarray(beta, dtype=float).ravel()
    design = _as_design(design)
    y = np.asarray(y, dtype=float).ravel()
    n, q = design.shape
    if beta.size != q:
        raise ValueError(f"beta has length {beta.size}, design has {q} columns")
    if y.size != n:
        raise ValueError(f"y has length {y.size}, design has {n} rows")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("y entries must be exactly 0 or 1")
    return beta, design, y


def _loglik_eta(eta, y, weights=None):
    # sum_i w_i * (y_i * eta_i - log(1 + exp(eta_i))), stable for extreme eta
    if weights is None:
        return float(y @ eta - np.logaddexp(0.0, eta).sum())
    return float(weights @ (y * eta - np.logaddexp(0.0, eta)))


def logistic_loglik(beta, design, y):
    """Bernoulli log-likelihood sum_i [y_i log p_i + (1 - y_i) log(1 - p_i)].

    p_i = expit(design_i . beta); computed in log-stable form so extreme
    linear predictors do not overflow.
    """
    beta, design, y = _check_dims(beta, design, y)
    return _loglik_eta(design @ beta, y)


def logistic_grad_hess(beta, design, y):
    """Gradient and Hessian of the Bernoulli log-likelihood at ``beta``.

    Returns ``(grad, hess)`` with grad = design' (y - p) and
    hess = -design' W design, W = diag(p_i (1 - p_i)).
    """
    beta, design, y = _check_dims(beta, design, y)
    p = expit(design @ beta)
    grad = design.T @ (y - p)
    w = p * (1.0 - p)
    hess = -(design * w[:, None]).T @ design
    return grad, hess


def fit_logistic_mle(design, y, max_iter=50, tol=1e-8, init=None, weights=None):
    """Maximum-likelihood fit of a Bernoulli-logit model by Newton-Raphson.

    Converged when ``max |gradient| < tol``. Steps that would decrease the
    log-likelihood are halved (up to 30 times) before being taken.

    ``weights`` enables aggregated fitting: rows may then carry a case weight
    and ``y`` may be a success proportion in [0, 1]. The weighted likelihood
    equals the unit-level one, so the fit is identical to expanding the rows.

    Raises
    ------
    DegenerateResponseError
        ``y`` is constant.
    SeparationError
        Coefficient norm exceeds ``SEPARATION_NORM``, or the converged fit
        has (numerically) zero deviance, i.e. the data are perfectly
        classified and the true MLE is at infinity.
    SingularHessianError
        Newton system is singular (rank-deficient design).
    NonConvergenceError
        Iteration cap reached.
    """
    design = _as_design(design)
    y = np.asarray(y, dtype=float).ravel()
    n, q = design.shape
    if y.size != n:
        raise ValueError(f"y has length {y.size}, design has {n} rows")
    if weights is None:
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("y entries must be exactly 0 or 1")
        if n < q:
            raise ValueError(f"need n >= q for MLE fitting, got n={n}, q={q}")
        w = None
        ybar = y.mean()
    else:
        w = np.asarray(weights, dtype=float).ravel()
        if w.size != n:
            raise ValueError("weights length does not match design rows")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if np.any((y < 0) | (y > 1)):
            raise ValueError("proportion responses must lie in [0, 1]")
        wtot = w.sum()
        if wtot <= 0:
            raise ValueError("weights sum to zero")
        ybar = float(w @ y) / wtot
    if ybar <= 0.0 or ybar >= 1.0:
        raise DegenerateResponseError("response is constant; MLE does not exist")

    beta = np.zeros(q) if init is None else np.asarray(init, dtype=float).copy()
    if beta.size != q:
        raise ValueError("init length does not match design columns")
    ll = _loglik_eta(design @ beta, y, w)

    for _ in range(max_iter):
        eta = design @ beta
        p = expit(eta)
        resid = (y - p) if w is None else w * (y - p)
        grad = design.T @ resid
        if np.max(np.abs(grad)) < tol:
            if ll > _PERFECT_FIT_LOGLIK:
                raise SeparationError(
                    "zero-deviance fit: data perfectly separated"
                )
            return beta
        wdiag = p * (1.0 - p) if w is None else w * p * (1.0 - p)
        hess_neg = (design * wdiag[:, None]).T @ design
        try:
            step = np.linalg.solve(hess_neg, grad)
        except np.linalg.LinAlgError as exc:
            raise SingularHessianError(str(exc)) from exc
        new_beta = beta + step
        new_ll = _loglik_eta(design @ new_beta, y, w)
        halvings = 0
        while (not np.isfinite(new_ll) or new_ll < ll) and halvings < 30:
            step = 0.5 * step
            new_beta = beta + step
            new_ll = _loglik_eta(design @ new_beta, y, w)
            halvings += 1
        beta, ll = new_beta, new_ll
        if np.linalg.norm(beta) > SEPARATION_NORM:
            raise SeparationError(
                f"coefficient norm exceeded {SEPARATION_NORM:g}"
            )

    raise NonConvergenceError(f"no convergence in {max_iter} Newton iterations")


def mle_standard_errors(beta, design, y):
    """Asymptotic standard errors: sqrt of diag of the inverse Fisher info."""
    _, hess = logistic_grad_hess(beta, design, y)
    try:
        cov = np.linalg.inv(-hess)
    except np.linalg.LinAlgError as exc:
        raise SingularHessianError(str(exc)) from exc
    return np.sqrt(np.diag(cov))
