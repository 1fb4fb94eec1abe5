"""Projection of utility vectors onto a type's factored basis.

Four routes from elicited utilities to basis weights: plain least squares
(no prior), the closed-form smoothed estimate combining the population
Gaussian with the observation noise, the full posterior over weights for
partially observed vectors via joint-Gaussian conditioning, and
classification of a vector across the types of a mixture model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import logsumexp

from prefdens.gaussian import Gaussian, chol_psd, condition

if TYPE_CHECKING:  # pragma: no cover
    from prefdens.em import MixtureModel


class DegenerateModelError(RuntimeError):
    """Every type assigned zero evidence to the vector."""


def ls_project(u, design: np.ndarray) -> np.ndarray:
    """Least-squares weights for a complete utility vector.

    Solves the normal equations; on a full outcome space the Gram matrix is
    diagonal, so this coincides with exact orthogonal projection.
    """
    u = np.asarray(u, dtype=float)
    a = np.asarray(design, dtype=float)
    if u.shape[0] != a.shape[0]:
        raise ValueError("utility vector length does not match design rows")
    if np.linalg.matrix_rank(a) < a.shape[1]:
        raise ValueError("design matrix is rank deficient")
    w, *_ = np.linalg.lstsq(a, u, rcond=None)
    return w


@dataclass(frozen=True)
class SmoothingOperator:
    """Precomputed smoothed-projection operator for one type.

    The matrix ``(A^T A / noise + Sigma^-1)^-1`` and the prior pull
    ``Sigma^-1 mu`` do not depend on the elicited vector, so one operator
    serves every respondent of the type.
    """

    design: np.ndarray
    mu: np.ndarray
    _chol: np.ndarray
    _prior_pull: np.ndarray
    noise_var: float

    @classmethod
    def build(cls, mu, sigma, noise_var: float, design: np.ndarray) -> "SmoothingOperator":
        if noise_var <= 0:
            raise ValueError("noise variance must be positive")
        mu = np.asarray(mu, dtype=float)
        a = np.asarray(design, dtype=float)
        sig_chol = chol_psd(np.asarray(sigma, dtype=float), "type covariance")
        sigma_inv = cho_solve((sig_chol, True), np.eye(mu.shape[0]))
        normal = a.T @ a / noise_var + sigma_inv
        return cls(a, mu, chol_psd(normal, "normal equations"), sigma_inv @ mu, noise_var)

    def project(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape[0] != self.design.shape[0]:
            raise ValueError("utility vector length does not match design rows")
        rhs = self.design.T @ u / self.noise_var + self._prior_pull
        return cho_solve((self._chol, True), rhs)


def map_project(u, mu, sigma, noise_var: float, design: np.ndarray) -> np.ndarray:
    """Smoothed weights for a complete utility vector under a type's prior."""
    return SmoothingOperator.build(mu, sigma, noise_var, design).project(u)


def joint_over_weights_and_observed(mu, sigma, noise_var, design, observed_idx) -> Gaussian:
    """Joint Gaussian over (weights, observed utility coordinates)."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    a_obs = np.asarray(design, dtype=float)[observed_idx]
    m = mu.shape[0]
    k = a_obs.shape[0]
    mean = np.concatenate([mu, a_obs @ mu])
    cov = np.empty((m + k, m + k))
    cross = sigma @ a_obs.T
    cov[:m, :m] = sigma
    cov[:m, m:] = cross
    cov[m:, :m] = cross.T
    cov[m:, m:] = a_obs @ cross + noise_var * np.eye(k)
    return Gaussian(mean, cov)


def posterior_weights(u_partial, mu, sigma, noise_var: float, design: np.ndarray):
    """Posterior Gaussian over weights given a partially observed vector.

    ``u_partial`` has one entry per outcome with NaN marking missing values.
    Conditions the joint over (weights, observed utilities) on the observed
    entries; the log evidence is the marginal log density of those entries.
    With nothing observed the prior comes back with evidence 0.
    """
    u_partial = np.asarray(u_partial, dtype=float)
    if u_partial.shape[0] != design.shape[0]:
        raise ValueError("utility vector length does not match design rows")
    observed_idx = np.flatnonzero(np.isfinite(u_partial))
    mu = np.asarray(mu, dtype=float)
    m = mu.shape[0]
    if observed_idx.size == 0:
        return Gaussian(mu, np.asarray(sigma, dtype=float)), 0.0
    joint = joint_over_weights_and_observed(mu, sigma, noise_var, design, observed_idx)
    pairs = [(m + i, u_partial[o]) for i, o in enumerate(observed_idx)]
    return condition(joint, pairs)


@dataclass(frozen=True)
class ProjectionResult:
    """Per-type posteriors plus the type posterior and the winning pair."""

    posteriors: tuple[Gaussian, ...]
    log_evidences: tuple[float, ...]
    type_posterior: np.ndarray
    best_type: int

    @property
    def best_weights(self) -> np.ndarray:
        return self.posteriors[self.best_type].mean


def classify(u_partial, model: "MixtureModel") -> ProjectionResult:
    """Most likely (type, weights) pair for a partially observed vector.

    The type posterior is proportional to the type probability times the
    evidence of the observed entries; ties break toward the lowest type id.
    """
    posteriors = []
    evidences = []
    for t in model.types:
        post, ev = posterior_weights(u_partial, t.mu, t.sigma, t.noise_var, t.design)
        posteriors.append(post)
        evidences.append(ev)
    logits = np.log(model.theta) + np.asarray(evidences)
    if not np.any(np.isfinite(logits)):
        raise DegenerateModelError("no type assigns positive evidence")
    log_z = logsumexp(logits)
    type_post = np.exp(logits - log_z)
    best = int(np.argmax(type_post))  # argmax takes the first max: lowest id wins ties
    return ProjectionResult(tuple(posteriors), tuple(evidences), type_post, best)
