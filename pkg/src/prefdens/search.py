"""Bayesian scoring of cluster structures and greedy hill-climbing search.

Candidate structures (one cluster structure per latent type) are scored with
the Cheeseman-Stutz approximation to the marginal likelihood: fit by EM,
complete the data with expected sufficient statistics, and combine the
closed-form completed-data marginal with an observed/completed likelihood
correction.  The search walks structure space with add-variable /
delete-variable / new-singleton moves from a fully additive start plus
random restarts, caching scores by canonical candidate.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from prefdens.basis import ClusterStructure, Domain, basis_count
from prefdens.em import (
    EMConfig,
    EMDiagnostics,
    EMFailure,
    MixtureModel,
    PriorConfig,
    SufficientStats,
    UtilityDatabase,
    em_fit,
)
from prefdens.gaussian import (
    chol_psd,
    dirichlet_log_marginal,
    nw_log_marginal_likelihood,
    wishart_scalar_log_marginal,
)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Candidate:
    """One point in search space: a cluster structure per type."""

    structures: tuple[ClusterStructure, ...]

    @classmethod
    def make(cls, structures) -> "Candidate":
        return cls(tuple(ClusterStructure.make(s.clusters) for s in structures))

    @property
    def key(self):
        return tuple(s.clusters for s in self.structures)

    def total_basis_size(self, domain: Domain) -> int:
        return sum(basis_count(domain, s) for s in self.structures)


@dataclass(eq=False)
class StructureScore:
    """Cheeseman-Stutz score and its three components."""

    cs_score: float
    completed_marginal: float      # log P(D_c | s)
    observed_loglik: float         # log P(D | psi, s)
    completed_loglik: float        # log P(D_c | psi, s)
    model: MixtureModel
    diagnostics: EMDiagnostics


def expected_complete_data_loglik(model: MixtureModel, stats: SufficientStats) -> float:
    """Complete-data log likelihood at the point parameters, in expectation.

    Types weighted by responsibilities, weights integrated against their
    per-record posteriors, noise terms over observed entries only.
    """
    total = 0.0
    for t_i, t in enumerate(model.types):
        count = stats.counts[t_i]
        if count > 0:
            total += count * math.log(model.theta[t_i])
        sig_chol = chol_psd(t.sigma, "type covariance")
        logdet = 2.0 * np.sum(np.log(np.diag(sig_chol)))
        dev = stats.ybar[t_i] - t.mu
        spread = stats.scatter[t_i] + count * np.outer(dev, dev)
        quad = float(np.trace(cho_solve((sig_chol, True), spread)))
        total += -0.5 * count * (t.m * LOG_2PI + logdet) - 0.5 * quad
        n_obs = stats.obs_counts[t_i]
        total += (
            -0.5 * n_obs * (LOG_2PI + math.log(t.noise_var))
            - 0.5 * stats.noise_scatter[t_i] / t.noise_var
        )
    return float(total)


def completed_data_marginal(model: MixtureModel, stats: SufficientStats,
                            priors: PriorConfig) -> float:
    """Closed-form marginal of the expected completion under the priors."""
    total = dirichlet_log_marginal(priors.dirichlet_for(model.n_types), stats.counts)
    for t_i, t in enumerate(model.types):
        total += nw_log_marginal_likelihood(
            priors.nw_for(t.m), stats.counts[t_i], stats.ybar[t_i], stats.scatter[t_i]
        )
        total += wishart_scalar_log_marginal(
            priors.noise_prior(), stats.obs_counts[t_i], stats.noise_scatter[t_i]
        )
    return float(total)


def cs_score(
    domain: Domain,
    candidate: Candidate,
    db: UtilityDatabase,
    priors: PriorConfig = PriorConfig(),
    em_config: EMConfig = EMConfig(),
) -> StructureScore:
    """Fit the candidate by EM and return its Cheeseman-Stutz score."""
    if not db.records:
        raise ValueError("cannot score structures against an empty database")
    model, diag = em_fit(domain, candidate.structures, db, em_config, priors)
    stats = diag.final_stats
    observed = diag.final_score
    completed = expected_complete_data_loglik(model, stats)
    marginal = completed_data_marginal(model, stats, priors)
    return StructureScore(
        cs_score=marginal + observed - completed,
        completed_marginal=marginal,
        observed_loglik=observed,
        completed_loglik=completed,
        model=model,
        diagnostics=diag,
    )


def structure_neighbors(structure: ClusterStructure, domain: Domain,
                        max_cluster_size: int) -> list[ClusterStructure]:
    """Single-move variants: add to a cluster, delete from one, new singleton."""
    names = domain.names
    results = set()
    clusters = [set(c) for c in structure.clusters]
    for i, cluster in enumerate(clusters):
        for v in names:
            if v not in cluster:
                grown = [set(c) for c in clusters]
                grown[i] = cluster | {v}
                results.add(ClusterStructure.make(grown))
        for v in cluster:
            shrunk = [set(c) for c in clusters]
            shrunk[i] = cluster - {v}
            results.add(ClusterStructure.make(shrunk))
    existing_singletons = {c[0] for c in structure.clusters if len(c) == 1}
    for v in names:
        if v not in existing_singletons:
            results.add(ClusterStructure.make(list(clusters) + [{v}]))
    results.discard(structure)
    kept = [s for s in results if s.max_cluster_size() <= max_cluster_size]
    return sorted(kept, key=lambda s: s.clusters)


def neighbors(candidate: Candidate, domain: Domain, max_cluster_size: int = 3) -> list[Candidate]:
    """All candidates one structure move away, each type varied independently."""
    out = set()
    for t_i, structure in enumerate(candidate.structures):
        for variant in structure_neighbors(structure, domain, max_cluster_size):
            structures = list(candidate.structures)
            structures[t_i] = variant
            out.add(Candidate(tuple(structures)))
    out.discard(candidate)
    return sorted(out, key=lambda c: c.key)


@dataclass(frozen=True)
class SearchConfig:
    restarts: int = 3
    seed: int = 0
    max_cluster_size: int = 3
    # modest EM budget while searching; the winner is refit in full
    search_em: EMConfig = EMConfig(restarts=2, tol=1e-4, max_iters=60)
    final_em: EMConfig = EMConfig(restarts=5, tol=1e-6, max_iters=200)


@dataclass(eq=False)
class SearchResult:
    candidate: Candidate
    score: StructureScore
    trace: list  # dict per evaluated candidate


def random_candidate(rng: np.random.Generator, domain: Domain, n_types: int,
                     max_cluster_size: int) -> Candidate:
    names = list(domain.names)
    structures = []
    for _ in range(n_types):
        n_clusters = int(rng.integers(1, len(names) + 1))
        clusters = []
        for _ in range(n_clusters):
            size = int(rng.integers(1, min(max_cluster_size, len(names)) + 1))
            clusters.append(rng.choice(names, size=size, replace=False).tolist())
        structures.append(ClusterStructure.make(clusters))
    return Candidate(tuple(structures))


def hill_climb(
    domain: Domain,
    db: UtilityDatabase,
    n_types: int,
    config: SearchConfig = SearchConfig(),
    priors: PriorConfig = PriorConfig(),
) -> SearchResult:
    """Greedy ascent on the Cheeseman-Stutz score with random restarts.

    Restart 0 starts fully additive for every type; later restarts start
    from seeded random structures.  Moves go to the best strictly improving
    neighbor (ties: fewer basis functions, then lexicographic), with one
    EM fit per distinct canonical candidate thanks to the score cache.
    """
    if n_types < 1:
        raise ValueError("need at least one type")
    cache: dict[tuple, StructureScore | None] = {}
    trace: list[dict] = []

    def evaluate(cand: Candidate) -> StructureScore | None:
        if cand.key in cache:
            return cache[cand.key]
        try:
            score = cs_score(domain, cand, db, priors, config.search_em)
        except EMFailure as exc:
            warnings.warn(f"skipping candidate {cand.key}: {exc}")
            cache[cand.key] = None
            return None
        cache[cand.key] = score
        trace.append(
            {
                "structures": [s.to_json_dict() for s in cand.structures],
                "cs_score": score.cs_score,
                "components": {
                    "completed_marginal": score.completed_marginal,
                    "observed_loglik": score.observed_loglik,
                    "completed_loglik": score.completed_loglik,
                },
                "em_iters": int(sum(score.diagnostics.m_steps)),
            }
        )
        return score

    rng = np.random.default_rng(config.seed)
    additive = ClusterStructure.fully_additive(domain)
    starts = [Candidate(tuple([additive] * n_types))]
    for _ in range(max(config.restarts, 1) - 1):
        starts.append(random_candidate(rng, domain, n_types, config.max_cluster_size))

    best_cand: Candidate | None = None
    best_score: StructureScore | None = None
    for start in starts:
        cur = start
        cur_score = evaluate(cur)
        if cur_score is None:
            continue
        while True:
            options = []
            for nb in neighbors(cur, domain, config.max_cluster_size):
                sc = evaluate(nb)
                if sc is not None:
                    options.append((sc.cs_score, -nb.total_basis_size(domain), nb, sc))
            if not options:
                break
            options.sort(key=lambda o: (-o[0], -o[1], o[2].key))
            top_cs, _, top_cand, top_score = options[0]
            if top_cs > cur_score.cs_score:
                cur, cur_score = top_cand, top_score
            else:
                break
        if best_score is None or cur_score.cs_score > best_score.cs_score:
            best_cand, best_score = cur, cur_score
    if best_cand is None:
        raise EMFailure("every candidate structure failed to fit")

    final = cs_score(domain, best_cand, db, priors, config.final_em)
    trace.append(
        {
            "structures": [s.to_json_dict() for s in best_cand.structures],
            "cs_score": final.cs_score,
            "components": {
                "completed_marginal": final.completed_marginal,
                "observed_loglik": final.observed_loglik,
                "completed_loglik": final.completed_loglik,
            },
            "em_iters": int(sum(final.diagnostics.m_steps)),
            "refit": True,
        }
    )
    return SearchResult(best_cand, final, trace)


def search_type_counts(
    domain: Domain,
    db: UtilityDatabase,
    max_types: int,
    config: SearchConfig = SearchConfig(),
    priors: PriorConfig = PriorConfig(),
) -> tuple[int, SearchResult]:
    """Optional outer loop: run the search for 1..max_types and keep the best."""
    best = None
    for k in range(1, max_types + 1):
        result = hill_climb(domain, db, k, config, priors)
        if best is None or result.score.cs_score > best[1].score.cs_score:
            best = (k, result)
    return best
