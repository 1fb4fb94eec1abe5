"""MAP-EM learning of the utility mixture from partially observed records.

Each latent type owns a cluster structure, a Gaussian over basis weights,
and a scalar observation-noise variance; a Dirichlet governs type
probabilities.  The E-step conditions each record's observed utilities on
each type to get a posterior over that type's weights plus its evidence,
then soft-assigns records to types.  The M-step pushes the expected
sufficient statistics through the conjugate updates applied to the fixed
initial priors and re-marginalizes to point parameters.

The E-step runs in information form batched across records (one stacked
Cholesky per type), which is algebraically identical to conditioning each
record separately (tested against ``projection.posterior_weights``).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import logsumexp

from prefdens.basis import Basis, ClusterStructure, Domain, build_basis, design_matrix
from prefdens.gaussian import (
    Dirichlet,
    NormalWishart,
    WishartScalar,
    chol_psd,
    consume_jitter_events,
    dirichlet_log_pdf,
    dirichlet_mean,
    dirichlet_update,
    nw_log_pdf,
    nw_marginalize,
    nw_update,
    wishart_scalar_log_pdf,
    wishart_scalar_marginalize,
    wishart_scalar_update,
)

LOG_2PI = math.log(2.0 * math.pi)


class EMFailure(RuntimeError):
    """EM could not complete a single iteration on any restart."""


@dataclass(frozen=True)
class UtilityRecord:
    """One respondent's elicited utilities; NaN marks a missing outcome."""

    respondent: str
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    @property
    def observed_mask(self) -> np.ndarray:
        return np.isfinite(self.values)

    @property
    def n_observed(self) -> int:
        return int(self.observed_mask.sum())


@dataclass(frozen=True)
class UtilityDatabase:
    records: tuple[UtilityRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        lengths = {r.values.shape[0] for r in self.records}
        if len(lengths) > 1:
            raise ValueError("records have inconsistent outcome counts")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def n_outcomes(self) -> int:
        return self.records[0].values.shape[0] if self.records else 0

    def usable(self) -> "UtilityDatabase":
        """Drop records with no observed values, warning about each."""
        kept, dropped = [], []
        for r in self.records:
            (kept if r.n_observed > 0 else dropped).append(r)
        if dropped:
            warnings.warn(
                "skipping records with no observed values: "
                + ", ".join(r.respondent for r in dropped)
            )
        return UtilityDatabase(tuple(kept))

    def values_matrix(self) -> np.ndarray:
        return np.stack([r.values for r in self.records])


@dataclass(frozen=True)
class PriorConfig:
    """Fixed initial priors; weak and scale-matched to utilities in [0, 1].

    The Normal-Wishart for a type with m basis functions starts at
    R = nw_scale * I, beta = m + beta_extra, lambda = 0, nu = nu0.
    """

    nw_scale: float = 0.1
    beta_extra: float = 2.0
    nu0: float = 1.0
    rho0: float = 0.01
    gamma0: float = 3.0
    eta0: float = 1.0
    alpha0: float = 1.0

    def nw_for(self, m: int) -> NormalWishart:
        return NormalWishart(self.nw_scale * np.eye(m), m + self.beta_extra, np.zeros(m), self.nu0)

    def noise_prior(self) -> WishartScalar:
        return WishartScalar(self.rho0, self.gamma0, self.eta0)

    def dirichlet_for(self, n_types: int) -> Dirichlet:
        return Dirichlet(np.full(n_types, self.alpha0))


@dataclass(eq=False)
class TypeModel:
    """One latent type: structure, basis, hyperparameters, point parameters."""

    structure: ClusterStructure
    basis: Basis
    design: np.ndarray
    nw: NormalWishart
    noise: WishartScalar
    mu: np.ndarray
    sigma: np.ndarray
    noise_var: float

    @property
    def m(self) -> int:
        return self.basis.m

    @classmethod
    def from_hyperparameters(cls, basis: Basis, design, nw: NormalWishart, noise: WishartScalar):
        point = nw_marginalize(nw)
        return cls(
            basis.structure, basis, np.asarray(design, dtype=float),
            nw, noise, point.mean, point.cov, wishart_scalar_marginalize(noise),
        )


@dataclass(eq=False)
class MixtureModel:
    domain: Domain
    types: list[TypeModel]
    dirichlet: Dirichlet
    theta: np.ndarray

    @property
    def n_types(self) -> int:
        return len(self.types)

    @classmethod
    def from_priors(cls, domain: Domain, structures, priors: PriorConfig) -> "MixtureModel":
        types = []
        for s in structures:
            basis = build_basis(domain, s)
            a = design_matrix(domain, basis).astype(float)
            types.append(
                TypeModel.from_hyperparameters(basis, a, priors.nw_for(basis.m), priors.noise_prior())
            )
        d = priors.dirichlet_for(len(types))
        return cls(domain, types, d, dirichlet_mean(d))


@dataclass(eq=False)
class SufficientStats:
    """Expected sufficient statistics of one E-step.

    Per type: soft count, weighted posterior-mean average, centered scatter
    (including posterior covariances), observed-scalar count, expected
    squared noise deviations, and the cross term against per-outcome
    empirical means.  Per record: responsibilities and posterior moments.
    """

    counts: np.ndarray                      # (T,) soft record counts
    ybar: list                              # T vectors (m_t,)
    scatter: list                           # T matrices (m_t, m_t)
    obs_counts: np.ndarray                  # (T,) soft observed-scalar counts
    noise_scatter: np.ndarray               # (T,) expected squared deviations
    cross_terms: np.ndarray                 # (T,)
    responsibilities: np.ndarray            # (n, T)
    posterior_means: list                   # T arrays (n, m_t)
    posterior_covs: list                    # T lists of per-record (m_t, m_t) views
    log_evidence: np.ndarray                # (n, T)
    record_log_liks: np.ndarray             # (n,)

    @property
    def log_likelihood(self) -> float:
        return float(self.record_log_liks.sum())

    def posterior(self, t: int, j: int):
        return self.posterior_means[t][j], self.posterior_covs[t][j]


@dataclass(frozen=True)
class EMConfig:
    seed: int = 0
    restarts: int = 5
    tol: float = 1e-6
    max_iters: int = 200
    # how the noise cross term is summarized; "population-spread" is the
    # per-outcome empirical-mean form, which badly inflates the noise
    # estimate on heterogeneous populations (see README notes)
    cross_mode: str = "residual-mean"


@dataclass(eq=False)
class EMDiagnostics:
    traces: list            # score trace per restart (observed-data log likelihood)
    best_restart: int
    m_steps: list           # M-steps performed per restart
    converged: list
    final_score: float
    final_stats: SufficientStats
    log_prior: float        # log prior density of the final point parameters
    jitter_events: int
    skipped_records: int


@dataclass(eq=False)
class _TypePass:
    """Batched per-record posterior quantities for one type."""

    means: np.ndarray        # (n, m) posterior means
    covs: np.ndarray         # (n, m, m) posterior covariances
    log_ev: np.ndarray       # (n,) log evidence of the observed entries
    resid_sq: np.ndarray     # (n,) squared posterior residual + variance trace
    resid_sum: np.ndarray    # (n,) summed posterior residuals over observed
    pred_all: np.ndarray     # (n, N) posterior-mean predictions, all outcomes


def _type_posteriors(model: MixtureModel, values: np.ndarray) -> list[_TypePass]:
    """Weight posteriors and evidences for every (record, type) pair.

    Information form: the posterior precision is Sigma^-1 + G / noise with
    G the masked design Gram matrix, batched across records with one
    stacked Cholesky per type.  Identical (up to rounding) to conditioning
    the joint Gaussian record by record.
    """
    masks = np.isfinite(values)
    v0 = np.where(masks, values, 0.0)
    n_obs = masks.sum(axis=1)
    passes = []
    for t_i, t in enumerate(model.types):
        a = t.design
        sig_chol = chol_psd(t.sigma, f"type {t_i} covariance")
        sigma_inv = cho_solve((sig_chol, True), np.eye(t.m))
        logdet_sigma = 2.0 * np.sum(np.log(np.diag(sig_chol)))
        outer = a[:, :, None] * a[:, None, :]               # (N, m, m)
        gram = np.tensordot(masks.astype(float), outer, axes=1)  # (n, m, m)
        lam = sigma_inv[None, :, :] + gram / t.noise_var
        factor = np.linalg.cholesky(lam)
        logdet_lam = 2.0 * np.log(np.einsum("jii->ji", factor)).sum(axis=1)
        b = ((v0 - a @ t.mu) * masks) @ a                   # (n, m)
        x = np.linalg.solve(lam, b[:, :, None])[:, :, 0]
        means = t.mu + x / t.noise_var
        covs = np.linalg.solve(lam, np.broadcast_to(np.eye(t.m), lam.shape).copy())
        covs = 0.5 * (covs + np.swapaxes(covs, 1, 2))
        pred_all = means @ a.T
        resid = (v0 - pred_all) * masks
        dev = (v0 - a @ t.mu) * masks
        # dev^T C^-1 dev = dev . (u_obs - A mu_post) / noise, a cancellation-free form
        quad = np.einsum("jo,jo->j", dev, resid) / t.noise_var
        logdet_c = logdet_lam + logdet_sigma + n_obs * math.log(t.noise_var)
        log_ev = -0.5 * (n_obs * LOG_2PI + logdet_c + quad)
        ups_trace = np.einsum("jmk,jkm->j", covs, gram)
        passes.append(
            _TypePass(
                means=means,
                covs=covs,
                log_ev=log_ev,
                resid_sq=np.einsum("jo,jo->j", resid, resid) + ups_trace,
                resid_sum=resid.sum(axis=1),
                pred_all=pred_all,
            )
        )
    return passes


def _responsibilities(model: MixtureModel, passes: list[_TypePass], record_names):
    log_ev = np.stack([p.log_ev for p in passes], axis=1)
    logits = np.log(model.theta)[None, :] + log_ev
    bad = ~np.any(np.isfinite(logits), axis=1)
    if np.any(bad):
        names = [record_names[j] for j in np.flatnonzero(bad)]
        raise EMFailure(f"degenerate evidence for records: {', '.join(names)}")
    record_ll = logsumexp(logits, axis=1)
    return np.exp(logits - record_ll[:, None]), record_ll, log_ev


def _aggregate(model: MixtureModel, values: np.ndarray, pi: np.ndarray,
               passes: list[_TypePass], log_ev, record_ll,
               cross_mode: str = "residual-mean") -> SufficientStats:
    n, n_types = pi.shape
    counts = pi.sum(axis=0)
    masks = np.isfinite(values)
    n_obs = masks.sum(axis=1)
    obs_any = masks.any(axis=0)
    u_bar = np.where(
        obs_any,
        np.where(masks, values, 0.0).sum(axis=0) / np.maximum(masks.sum(axis=0), 1),
        0.0,
    )
    ybar, scatter = [], []
    obs_counts = np.zeros(n_types)
    noise_scatter = np.zeros(n_types)
    cross_terms = np.zeros(n_types)
    for t_i, t in enumerate(model.types):
        w = pi[:, t_i]
        p = passes[t_i]
        yb = (w @ p.means) / counts[t_i] if counts[t_i] > 0 else np.zeros(t.m)
        dev = p.means - yb
        s = (dev * w[:, None]).T @ dev + np.einsum("j,jmk->mk", w, p.covs)
        ybar.append(yb)
        scatter.append(0.5 * (s + s.T))
        obs_counts[t_i] = float(w @ n_obs)
        noise_scatter[t_i] = float(w @ p.resid_sq)
        if cross_mode == "residual-mean":
            # squared weighted-mean deviation: prior location zero vs the
            # empirical mean of the expected residuals
            mean_dev = (w @ p.resid_sum) / obs_counts[t_i] if obs_counts[t_i] > 0 else 0.0
            cross_terms[t_i] = float(mean_dev**2)
        elif cross_mode == "population-spread":
            diff = (p.pred_all - u_bar[None, :])[:, obs_any]
            cross_terms[t_i] = float(np.sum(w[:, None] * diff**2))
        else:
            raise ValueError(f"unknown cross_mode {cross_mode!r}")
    return SufficientStats(
        counts=counts,
        ybar=ybar,
        scatter=scatter,
        obs_counts=obs_counts,
        noise_scatter=noise_scatter,
        cross_terms=cross_terms,
        responsibilities=pi,
        posterior_means=[p.means for p in passes],
        posterior_covs=[p.covs for p in passes],
        log_evidence=log_ev,
        record_log_liks=record_ll,
    )


def e_step(model: MixtureModel, db: UtilityDatabase,
           cross_mode: str = "residual-mean") -> SufficientStats:
    """Expected sufficient statistics of the database under the model."""
    db = db.usable()
    values = db.values_matrix()
    passes = _type_posteriors(model, values)
    pi, record_ll, log_ev = _responsibilities(model, passes, [r.respondent for r in db.records])
    return _aggregate(model, values, pi, passes, log_ev, record_ll, cross_mode)


def m_step(model: MixtureModel, priors: PriorConfig, stats: SufficientStats) -> MixtureModel:
    """Conjugate updates of the fixed initial priors with expected statistics."""
    new_types = []
    for t_i, t in enumerate(model.types):
        nw = nw_update(priors.nw_for(t.m), stats.counts[t_i], stats.ybar[t_i], stats.scatter[t_i])
        noise = wishart_scalar_update(
            priors.noise_prior(),
            stats.obs_counts[t_i],
            stats.noise_scatter[t_i],
            stats.cross_terms[t_i],
        )
        new_types.append(TypeModel.from_hyperparameters(t.basis, t.design, nw, noise))
    dirichlet = dirichlet_update(priors.dirichlet_for(model.n_types), stats.counts)
    return MixtureModel(model.domain, new_types, dirichlet, dirichlet_mean(dirichlet))


def log_likelihood(model: MixtureModel, db: UtilityDatabase):
    """Observed-data log likelihood: total and per usable record."""
    db = db.usable()
    if not db.records:
        return 0.0, np.zeros(0)
    values = db.values_matrix()
    passes = _type_posteriors(model, values)
    _, record_ll, _ = _responsibilities(model, passes, [r.respondent for r in db.records])
    return float(record_ll.sum()), record_ll


def log_prior_density(model: MixtureModel, priors: PriorConfig) -> float:
    """Log prior density of the point parameters (diagnostic only)."""
    total = dirichlet_log_pdf(priors.dirichlet_for(model.n_types), model.theta)
    for t in model.types:
        total += nw_log_pdf(priors.nw_for(t.m), t.mu, t.sigma)
        total += wishart_scalar_log_pdf(priors.noise_prior(), t.noise_var)
    return float(total)


def em_fit(
    domain: Domain,
    structures,
    db: UtilityDatabase,
    config: EMConfig = EMConfig(),
    priors: PriorConfig = PriorConfig(),
):
    """Fit the mixture by MAP-EM with random restarts.

    Restarts draw per-record responsibilities from a symmetric Dirichlet to
    break type symmetry, run alternating E/M steps until the relative change
    of the observed-data log likelihood drops below ``tol``, and the restart
    with the best final score wins.
    """
    structures = list(structures)
    n_skipped = sum(1 for r in db.records if r.n_observed == 0)
    db = db.usable()
    if not db.records:
        raise EMFailure("no records with observed values")
    values = db.values_matrix()
    if values.shape[1] != domain.n_outcomes:
        raise ValueError("database outcome count does not match the domain")
    base = MixtureModel.from_priors(domain, structures, priors)
    names = [r.respondent for r in db.records]
    consume_jitter_events()

    # posteriors under the prior point parameters seed every restart
    passes0 = _type_posteriors(base, values)
    _, record_ll0, log_ev0 = _responsibilities(base, passes0, names)

    seeds = np.random.SeedSequence(config.seed).spawn(max(config.restarts, 1))
    traces, m_steps, converged_flags = [], [], []
    results = []
    errors = []
    for r_i in range(max(config.restarts, 1)):
        rng = np.random.default_rng(seeds[r_i])
        pi0 = rng.dirichlet(np.ones(len(structures)), size=len(db.records))
        try:
            stats0 = _aggregate(base, values, pi0, passes0, log_ev0, record_ll0, config.cross_mode)
            model = m_step(base, priors, stats0)
            trace = []
            stats = None
            conv = False
            steps = 0
            for it in range(config.max_iters):
                stats = e_step(model, db, config.cross_mode)
                trace.append(stats.log_likelihood)
                if it > 0 and abs(trace[-1] - trace[-2]) <= config.tol * max(1.0, abs(trace[-2])):
                    conv = True
                    break
                model = m_step(model, priors, stats)
                steps += 1
            if not conv:
                stats = e_step(model, db, config.cross_mode)
                trace.append(stats.log_likelihood)
        except EMFailure as exc:
            errors.append(str(exc))
            traces.append([])
            m_steps.append(0)
            converged_flags.append(False)
            continue
        traces.append(trace)
        m_steps.append(steps)
        converged_flags.append(conv)
        results.append((trace[-1], r_i, model, stats))
    if not results:
        raise EMFailure("all restarts failed: " + "; ".join(errors))
    best_score, best_restart, best_model, best_stats = max(results, key=lambda x: (x[0], -x[1]))
    diagnostics = EMDiagnostics(
        traces=traces,
        best_restart=best_restart,
        m_steps=m_steps,
        converged=converged_flags,
        final_score=best_score,
        final_stats=best_stats,
        log_prior=log_prior_density(best_model, priors),
        jitter_events=consume_jitter_events(),
        skipped_records=n_skipped,
    )
    return best_model, diagnostics
