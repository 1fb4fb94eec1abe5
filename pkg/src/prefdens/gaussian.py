"""Multivariate Gaussian algebra and conjugate-prior machinery.

Covers block conditioning with evidence, Normal-Wishart updates and
marginalization to point parameters, the scalar Wishart used for the
observation-noise variance, Dirichlet bookkeeping, and closed-form
complete-data marginal likelihoods.  Fractional (expected) counts are
accepted everywhere a count enters an update, which is what EM and the
completed-data score need.

Everything here is a pure function over immutable values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky
from scipy.special import gammaln, multigammaln

LOG_2PI = math.log(2.0 * math.pi)

# Count of factorizations that needed a diagonal jitter to succeed; surfaced
# in EM diagnostics.  Relative jitter: 1e-10 * trace / dim.
_jitter_events = 0


def consume_jitter_events() -> int:
    """Return the number of jittered factorizations since the last call."""
    global _jitter_events
    n, _jitter_events = _jitter_events, 0
    return n


class SingularMatrixError(np.linalg.LinAlgError):
    """A covariance block that must be positive definite is not."""


def chol_psd(a: np.ndarray, context: str = "covariance") -> np.ndarray:
    """Lower Cholesky factor, retrying once with a relative diagonal jitter."""
    global _jitter_events
    a = np.asarray(a, dtype=float)
    try:
        return cholesky(a, lower=True)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-10 * np.trace(a) / a.shape[0]
    if jitter <= 0:
        raise SingularMatrixError(f"{context} is not positive definite")
    try:
        factor = cholesky(a + jitter * np.eye(a.shape[0]), lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"{context} is not positive definite") from exc
    _jitter_events += 1
    return factor


@dataclass(frozen=True)
class Gaussian:
    """A multivariate Gaussian with explicit mean and covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=float))
        if self.cov.shape != (self.dim, self.dim):
            raise ValueError("covariance shape does not match mean")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def log_density(self, x) -> float:
        dev = np.asarray(x, dtype=float) - self.mean
        factor = chol_psd(self.cov, "Gaussian covariance")
        sol = cho_solve((factor, True), dev)
        logdet = 2.0 * np.sum(np.log(np.diag(factor)))
        return float(-0.5 * (self.dim * LOG_2PI + logdet + dev @ sol))


def condition(g: Gaussian, observed) -> tuple[Gaussian, float]:
    """Condition a Gaussian on observed coordinates.

    ``observed`` is a sequence of ``(index, value)`` pairs.  Returns the
    posterior over the remaining coordinates (in their original order) and
    the log evidence: the log density of the observed sub-vector under its
    marginal.  Observing nothing returns the prior and evidence 0.
    """
    observed = list(observed)
    if not observed:
        return g, 0.0
    idx = [i for i, _ in observed]
    if len(set(idx)) != len(idx):
        raise ValueError("observed indices must be distinct")
    vals = np.array([v for _, v in observed], dtype=float)
    keep = [i for i in range(g.dim) if i not in set(idx)]

    cov_oo = g.cov[np.ix_(idx, idx)]
    try:
        factor = chol_psd(cov_oo, f"observed block {idx}")
    except SingularMatrixError:
        raise SingularMatrixError(
            f"observed block {idx} is singular; cannot condition"
        ) from None
    dev = vals - g.mean[idx]
    alpha = cho_solve((factor, True), dev)
    logdet = 2.0 * np.sum(np.log(np.diag(factor)))
    log_evidence = float(-0.5 * (len(idx) * LOG_2PI + logdet + dev @ alpha))

    if not keep:
        return Gaussian(np.empty(0), np.empty((0, 0))), log_evidence
    cov_ro = g.cov[np.ix_(keep, idx)]
    mean_post = g.mean[keep] + cov_ro @ alpha
    cov_post = g.cov[np.ix_(keep, keep)] - cov_ro @ cho_solve((factor, True), cov_ro.T)
    cov_post = 0.5 * (cov_post + cov_post.T)
    return Gaussian(mean_post, cov_post), log_evidence


# ---------------------------------------------------------------------------
# Normal-Wishart over (mean, covariance) of a d-dimensional Gaussian
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalWishart:
    """Conjugate prior for an unknown Gaussian mean and covariance.

    ``r`` accumulates scatter (an m x m positive-definite matrix), ``beta``
    its degrees of freedom (> m - 1), ``lam`` the mean location, and ``nu``
    the pseudo-count behind it.  Marginalizing to a point covariance needs
    beta > m + 1.
    """

    r: np.ndarray
    beta: float
    lam: np.ndarray
    nu: float

    def __post_init__(self):
        object.__setattr__(self, "r", np.asarray(self.r, dtype=float))
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=float))
        m = self.dim
        if self.r.shape != (m, m):
            raise ValueError("scatter matrix shape mismatch")
        if self.beta <= m - 1:
            raise ValueError(f"beta must exceed dim - 1 = {m - 1}")
        if self.nu <= 0:
            raise ValueError("nu must be positive")

    @property
    def dim(self) -> int:
        return self.lam.shape[0]


def nw_update(prior: NormalWishart, count: float, ybar, scatter) -> NormalWishart:
    """Posterior Normal-Wishart after (expected) sufficient statistics.

    ``count`` may be fractional; ``ybar`` is the (weighted) sample mean and
    ``scatter`` the (weighted) centered scatter matrix.  A zero count
    returns the prior unchanged.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    if count == 0:
        return prior
    ybar = np.asarray(ybar, dtype=float)
    scatter = np.asarray(scatter, dtype=float)
    if ybar.shape != prior.lam.shape or scatter.shape != prior.r.shape:
        raise ValueError("statistic dimensions do not match the prior")
    nu = prior.nu + count
    lam = (prior.nu * prior.lam + count * ybar) / nu
    dev = prior.lam - ybar
    r = prior.r + scatter + (prior.nu * count / nu) * np.outer(dev, dev)
    return NormalWishart(0.5 * (r + r.T), prior.beta + count, lam, nu)


def nw_marginalize(nw: NormalWishart) -> Gaussian:
    """Collapse the parameter posterior to a single Gaussian over the data.

    The exact predictive is a multivariate Student-t; this is its Gaussian
    approximation with matched mean and covariance, defined for
    beta > dim + 1.
    """
    m = nw.dim
    if nw.beta <= m + 1:
        raise ValueError(f"marginalization needs beta > dim + 1 = {m + 1}")
    scale = (nw.nu + 1.0) / (nw.nu * (nw.beta - m - 1.0))
    return Gaussian(nw.lam.copy(), scale * nw.r)


def nw_log_marginal_likelihood(prior: NormalWishart, count: float, ybar, scatter) -> float:
    """Log marginal likelihood of data summarized by sufficient statistics.

    For integer counts this equals the sum of sequential Student-t
    posterior-predictive log densities (the chain rule); for fractional
    counts it is the same closed form evaluated with fractional counts.
    """
    if count == 0:
        return 0.0
    post = nw_update(prior, count, ybar, scatter)
    m = prior.dim
    return float(
        -0.5 * count * m * math.log(math.pi)
        + multigammaln(post.beta / 2.0, m)
        - multigammaln(prior.beta / 2.0, m)
        + 0.5 * prior.beta * _logdet_pd(prior.r)
        - 0.5 * post.beta * _logdet_pd(post.r)
        + 0.5 * m * (math.log(prior.nu) - math.log(post.nu))
    )


def _logdet_pd(a: np.ndarray) -> float:
    factor = chol_psd(a, "scatter matrix")
    return float(2.0 * np.sum(np.log(np.diag(factor))))


# ---------------------------------------------------------------------------
# Scalar Wishart over the observation-noise variance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WishartScalar:
    """One-dimensional analog of the Normal-Wishart for a noise variance.

    ``rho`` accumulates squared deviations, ``gamma`` its degrees of
    freedom, and ``eta`` the pseudo-count entering the cross term.
    Marginalization requires gamma > 2.
    """

    rho: float
    gamma: float
    eta: float

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.eta <= 0:
            raise ValueError("eta must be positive")


def wishart_scalar_update(
    prior: WishartScalar, count: float, s: float, cross: float = 0.0
) -> WishartScalar:
    """Accumulate (expected) squared deviations into the noise prior."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    if count == 0:
        return prior
    rho = prior.rho + s + (prior.eta * count / (prior.eta + count)) * cross
    return WishartScalar(rho, prior.gamma + count, prior.eta + count)


def wishart_scalar_marginalize(w: WishartScalar) -> float:
    """Point noise variance implied by the scalar Wishart posterior."""
    if w.gamma <= 2:
        raise ValueError("marginalization needs gamma > 2")
    return (w.eta + 1.0) / (w.eta * (w.gamma - 2.0)) * w.rho


def wishart_scalar_log_marginal(prior: WishartScalar, count: float, s: float) -> float:
    """Closed-form marginal of zero-mean scalar deviations with scatter ``s``.

    The deviations have a known zero location, so this is the exact
    inverse-gamma marginal: for integer counts it equals the sum of
    sequential zero-mean Student-t predictive log densities (df gamma,
    squared scale rho / gamma).  ``eta`` inflates the point-variance
    marginalization but does not enter this integral.
    """
    if count == 0:
        return 0.0
    return float(
        -0.5 * count * math.log(math.pi)
        + gammaln((prior.gamma + count) / 2.0)
        - gammaln(prior.gamma / 2.0)
        + 0.5 * prior.gamma * math.log(prior.rho)
        - 0.5 * (prior.gamma + count) * math.log(prior.rho + s)
    )


# ---------------------------------------------------------------------------
# Dirichlet over mixture types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dirichlet:
    alpha: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))
        if np.any(self.alpha <= 0):
            raise ValueError("all Dirichlet parameters must be positive")


def dirichlet_mean(d: Dirichlet) -> np.ndarray:
    return d.alpha / d.alpha.sum()


def dirichlet_update(d: Dirichlet, counts) -> Dirichlet:
    counts = np.asarray(counts, dtype=float)
    if np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    return Dirichlet(d.alpha + counts)


def dirichlet_log_marginal(d: Dirichlet, counts) -> float:
    counts = np.asarray(counts, dtype=float)
    if np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    a0 = d.alpha.sum()
    return float(
        gammaln(a0)
        - gammaln(a0 + counts.sum())
        + np.sum(gammaln(d.alpha + counts) - gammaln(d.alpha))
    )


# ---------------------------------------------------------------------------
# Log prior densities of point parameters (diagnostics only)
# ---------------------------------------------------------------------------


def nw_log_pdf(nw: NormalWishart, mean, cov) -> float:
    """Log density of (mean, cov) under the Normal - inverse-Wishart prior."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    m = nw.dim
    factor = chol_psd(cov, "point covariance")
    logdet_cov = 2.0 * np.sum(np.log(np.diag(factor)))
    dev = mean - nw.lam
    quad = dev @ cho_solve((factor, True), dev)
    log_n = -0.5 * m * (LOG_2PI - math.log(nw.nu)) - 0.5 * logdet_cov - 0.5 * nw.nu * quad
    trace = np.trace(cho_solve((factor, True), nw.r))
    log_iw = (
        0.5 * nw.beta * _logdet_pd(nw.r)
        - 0.5 * nw.beta * m * math.log(2.0)
        - multigammaln(nw.beta / 2.0, m)
        - 0.5 * (nw.beta + m + 1.0) * logdet_cov
        - 0.5 * trace
    )
    return float(log_n + log_iw)


def wishart_scalar_log_pdf(w: WishartScalar, noise_var: float) -> float:
    """Log density of a noise variance under its inverse-gamma-form prior."""
    shape, scale = w.gamma / 2.0, w.rho / 2.0
    return float(
        shape * math.log(scale)
        - gammaln(shape)
        - (shape + 1.0) * math.log(noise_var)
        - scale / noise_var
    )


def dirichlet_log_pdf(d: Dirichlet, theta) -> float:
    theta = np.asarray(theta, dtype=float)
    return float(
        gammaln(d.alpha.sum())
        - np.sum(gammaln(d.alpha))
        + np.sum((d.alpha - 1.0) * np.log(theta))
    )
