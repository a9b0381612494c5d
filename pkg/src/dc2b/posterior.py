"""Gaussian belief over the bandit parameter and its variational update.

The engagement likelihood is logistic and not conjugate with the Gaussian
prior, so the update uses the quadratic (Jaakkola-style) lower bound on the
logistic function, tightened per slate item through auxiliary variables xi.
The resulting coordinate ascent has closed-form mean/covariance steps.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit

from .catalog import ItemCatalog
from .dpp import SCORE_CLAMP
from .exceptions import InputError, NumericError

logger = logging.getLogger(__name__)

SNAPSHOT_VERSION = 1

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 100

_XI_LIMIT = 1e-8  # below this, lambda(xi) uses its analytic limit 1/8


@dataclass(frozen=True)
class PosteriorState:
    """Immutable Gaussian belief N(m, Sigma) over the bandit parameter."""

    m: np.ndarray
    Sigma: np.ndarray
    trial_count: int = 0

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float).ravel()
        Sigma = np.asarray(self.Sigma, dtype=float)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "Sigma", Sigma)
        if Sigma.shape != (m.size, m.size):
            raise InputError(f"Sigma shape {Sigma.shape} does not match d={m.size}")
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(Sigma))):
            raise InputError("posterior state contains non-finite entries")
        if not np.allclose(Sigma, Sigma.T, atol=1e-9):
            raise InputError("Sigma is not symmetric")

    @property
    def dim(self) -> int:
        return self.m.size

    @classmethod
    def prior(cls, d: int, lambda_prior: float = 1.0) -> "PosteriorState":
        """The paper's initial belief: m = 0, Sigma = lambda * I."""
        if lambda_prior <= 0:
            raise InputError(f"lambda_prior must be positive, got {lambda_prior}")
        return cls(np.zeros(d), lambda_prior * np.eye(d), 0)

    def to_json(self) -> str:
        return json.dumps(
            {
                "version": SNAPSHOT_VERSION,
                "d": self.dim,
                "m": self.m.tolist(),
                "Sigma": self.Sigma.ravel().tolist(),  # row-major
                "trial_count": self.trial_count,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "PosteriorState":
        doc = json.loads(text)
        if doc.get("version") != SNAPSHOT_VERSION:
            raise InputError(f"unsupported snapshot version {doc.get('version')}")
        d = int(doc["d"])
        return cls(
            np.array(doc["m"], dtype=float),
            np.array(doc["Sigma"], dtype=float).reshape(d, d),
            int(doc["trial_count"]),
        )


@dataclass
class VariationalAux:
    """Per-update diagnostics: converged xi values and loop accounting."""

    xi: np.ndarray
    iterations_used: int
    converged: bool


def lambda_of_xi(xi):
    """(sigmoid(xi) - 1/2) / (2 xi), with the analytic limit 1/8 at xi -> 0."""
    xi_arr = np.asarray(xi, dtype=float)
    if np.any(xi_arr < 0):
        raise InputError("xi must be non-negative")
    safe = np.where(xi_arr > _XI_LIMIT, xi_arr, 1.0)
    out = np.where(
        xi_arr > _XI_LIMIT, (expit(safe) - 0.5) / (2.0 * safe), 0.125
    )
    return float(out) if np.isscalar(xi) or xi_arr.ndim == 0 else out


def update(
    state: PosteriorState,
    slate,
    feedback,
    items: ItemCatalog,
    alpha: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> tuple[PosteriorState, VariationalAux]:
    """One trial's closed-form variational posterior update.

    ``slate`` is an iterable of item ids (or a Slate); ``feedback`` the
    aligned binary engagements. Coordinate ascent alternates the Gaussian
    (m, Sigma) step with the xi tightening step until max|dxi| < tol.
    Returns a new state; the input state is never mutated.
    """
    slate_ids = tuple(getattr(slate, "items", slate))
    y = np.asarray(feedback, dtype=float).ravel()
    if y.shape[0] != len(slate_ids):
        raise InputError(
            f"feedback length {y.shape[0]} does not match slate size {len(slate_ids)}"
        )
    if len(slate_ids) == 0:
        return (
            PosteriorState(state.m, state.Sigma, state.trial_count + 1),
            VariationalAux(np.empty(0), 0, True),
        )
    X = items.rows(slate_ids)
    if X.shape[1] != state.dim:
        raise InputError("slate feature dimension does not match posterior")

    try:
        prior_chol = cho_factor(state.Sigma)
    except np.linalg.LinAlgError as exc:
        raise NumericError("prior covariance is not positive definite") from exc
    Sigma_inv = cho_solve(prior_chol, np.eye(state.dim))
    Sigma_inv_m = cho_solve(prior_chol, state.m)
    coeff = y + 2.0 * alpha - 0.5  # per-item weight on x_i in the mean step
    rhs_data = coeff @ X

    xi = np.ones(len(slate_ids))
    m_post, Sigma_post = state.m, state.Sigma
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        lam = lambda_of_xi(xi)
        precision = Sigma_inv + 2.0 * (X.T * lam) @ X
        try:
            post_chol = cho_factor(precision)
        except np.linalg.LinAlgError as exc:
            raise NumericError("posterior precision is singular") from exc
        Sigma_post = cho_solve(post_chol, np.eye(state.dim))
        Sigma_post = (Sigma_post + Sigma_post.T) / 2.0
        m_post = Sigma_post @ (Sigma_inv_m + rhs_data)
        second_moment = Sigma_post + np.outer(m_post, m_post)
        xi_new = np.sqrt(np.einsum("ij,jk,ik->i", X, second_moment, X))
        delta = float(np.max(np.abs(xi_new - xi)))
        xi = xi_new
        if delta < tol:
            converged = True
            break
    if not converged:
        logger.warning(
            "variational update did not converge in %d iterations (max|dxi| >= %g)",
            max_iter,
            tol,
        )
    new_state = PosteriorState(m_post, Sigma_post, state.trial_count + 1)
    return new_state, VariationalAux(xi=xi, iterations_used=iterations, converged=converged)


def sample_theta(state: PosteriorState, rng_seed) -> np.ndarray:
    """Draw theta_hat = m + chol(Sigma) z, deterministic given the seed.

    ``rng_seed`` may be an int, SeedSequence, or Generator.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    Sigma = state.Sigma
    try:
        chol = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        try:
            chol = np.linalg.cholesky(Sigma + 1e-12 * np.eye(state.dim))
        except np.linalg.LinAlgError as exc:
            raise NumericError("covariance Cholesky failed") from exc
    return state.m + chol @ rng.standard_normal(state.dim)


def _phi(y: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Bernoulli log-likelihood y log p + (1-y) log(1-p) with p = sigmoid(score)."""
    # log p = -log(1+e^-s), log(1-p) = -log(1+e^s)
    return -(y * np.logaddexp(0.0, -scores) + (1.0 - y) * np.logaddexp(0.0, scores))


def log_likelihood(
    theta,
    slate,
    feedback,
    items: ItemCatalog,
    alpha: float,
    full_catalog: ItemCatalog | None = None,
) -> float:
    """Joint log-likelihood of (engagements, slate) given theta.

    Sum of the per-item engagement terms plus 2 alpha theta.x_i, plus
    log det(X_[S] X_[S]^T), minus the catalog normalizer
    sum_j log(1 + r_j^(2 alpha) x_j x_j^T). Diagnostic only; the update
    excludes the constant-bounded normalizer.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    slate_ids = tuple(getattr(slate, "items", slate))
    y = np.asarray(feedback, dtype=float).ravel()
    if y.shape[0] != len(slate_ids):
        raise InputError("feedback does not align with slate")
    X = items.rows(slate_ids)
    scores = np.clip(X @ theta, -SCORE_CLAMP, SCORE_CLAMP)
    total = float(np.sum(_phi(y, scores) + 2.0 * alpha * scores))
    gram = X @ X.T
    sign, logdet = np.linalg.slogdet(gram)
    if sign <= 0:
        return -np.inf
    total += float(logdet)
    cat = full_catalog if full_catalog is not None else items
    cat_scores = np.clip(cat.features @ theta, -SCORE_CLAMP, SCORE_CLAMP)
    sq_norms = np.einsum("ij,ij->i", cat.features, cat.features)
    total -= float(np.sum(np.logaddexp(0.0, 2.0 * alpha * cat_scores + np.log(sq_norms))))
    return total


def jaakkola_surrogate(theta, xi, slate, feedback, items: ItemCatalog, alpha: float) -> float:
    """The quadratic lower-bound surrogate log h(theta, xi) on the slate terms.

    Used by tests to check bound validity and coordinate-ascent monotonicity.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    xi = np.asarray(xi, dtype=float).ravel()
    slate_ids = tuple(getattr(slate, "items", slate))
    y = np.asarray(feedback, dtype=float).ravel()
    X = items.rows(slate_ids)
    scores = X @ theta
    lam = lambda_of_xi(xi)
    phi_xi = np.log(expit(xi)) - xi / 2.0 + lam * xi**2
    terms = (2.0 * y - 1.0) * scores / 2.0 - lam * scores**2 + 2.0 * alpha * scores + phi_xi
    return float(np.sum(terms))
