"""Mixture EM: expected statistics, conjugate M-step, fit behavior.

The sampler here is local to the tests so the learning pipeline is checked
against data it had no hand in generating.
"""

import numpy as np
import pytest

from prefdens.basis import ClusterStructure, Domain, build_basis, design_matrix, project_exact
from prefdens.em import (
    EMConfig,
    EMFailure,
    MixtureModel,
    PriorConfig,
    SufficientStats,
    UtilityDatabase,
    UtilityRecord,
    e_step,
    em_fit,
    log_likelihood,
    m_step,
)
from prefdens.gaussian import nw_update
from prefdens.projection import posterior_weights

DOMAIN = Domain.from_lists(
    [("X1", ["l1", "l2", "l3"]), ("X2", ["l1", "l2"]), ("X3", ["l1", "l2"])]
)
ADDITIVE = ClusterStructure.fully_additive(DOMAIN)
FULL = ClusterStructure.full(DOMAIN)
STRUCTURED = ClusterStructure.make([("X1", "X2"), ("X2", "X3")])


def sample_records(rng, structure, mu, n, sigma_w=0.05, noise=0.05, missing=0.0):
    basis = build_basis(DOMAIN, structure)
    a = design_matrix(DOMAIN, basis).astype(float)
    records = []
    weights = []
    for j in range(n):
        w = rng.multivariate_normal(mu, sigma_w * np.eye(basis.m))
        u = a @ w + rng.normal(scale=noise, size=a.shape[0])
        if missing > 0:
            mask = rng.random(a.shape[0]) < missing
            if mask.all():
                mask[rng.integers(a.shape[0])] = False
            u = np.where(mask, np.nan, u)
        records.append(UtilityRecord(f"r{j}", u))
        weights.append(w)
    return UtilityDatabase(tuple(records)), np.array(weights), a


class TestEStep:
    def test_single_type_unit_responsibility(self):
        rng = np.random.default_rng(0)
        db, _, _ = sample_records(rng, ADDITIVE, np.zeros(5), 12)
        model = MixtureModel.from_priors(DOMAIN, [ADDITIVE], PriorConfig())
        stats = e_step(model, db)
        assert np.allclose(stats.responsibilities, 1.0)
        assert stats.counts[0] == pytest.approx(12.0)

    def test_identical_types_split_evenly(self):
        rng = np.random.default_rng(1)
        db, _, _ = sample_records(rng, ADDITIVE, np.zeros(5), 8, missing=0.2)
        model = MixtureModel.from_priors(DOMAIN, [ADDITIVE, ADDITIVE], PriorConfig())
        stats = e_step(model, db)
        assert np.allclose(stats.responsibilities, 0.5, atol=1e-12)
        assert np.allclose(stats.responsibilities.sum(axis=1), 1.0, atol=1e-12)

    def test_matches_per_record_conditioning(self):
        # the pattern-batched posteriors must equal one-at-a-time conditioning
        rng = np.random.default_rng(2)
        db, _, _ = sample_records(rng, STRUCTURED, np.zeros(8), 10, missing=0.35)
        model = MixtureModel.from_priors(DOMAIN, [STRUCTURED, ADDITIVE], PriorConfig())
        stats = e_step(model, db)
        for t_i, t in enumerate(model.types):
            for j, rec in enumerate(db.records):
                post, ev = posterior_weights(rec.values, t.mu, t.sigma, t.noise_var, t.design)
                mean, cov = stats.posterior(t_i, j)
                assert np.max(np.abs(mean - post.mean)) <= 1e-10
                assert np.max(np.abs(cov - post.cov)) <= 1e-10
                assert stats.log_evidence[j, t_i] == pytest.approx(ev, abs=1e-10)

    def test_noiseless_full_basis_scatter_matches_projection(self):
        rng = np.random.default_rng(3)
        db, weights, a = sample_records(rng, FULL, np.zeros(12), 25, noise=0.0)
        model = MixtureModel.from_priors(DOMAIN, [FULL], PriorConfig())
        model.types[0].noise_var = 1e-12
        stats = e_step(model, db)
        projected = np.array([project_exact(r.values, model.types[0].basis) for r in db.records])
        ybar = projected.mean(axis=0)
        scatter = (projected - ybar).T @ (projected - ybar)
        assert np.max(np.abs(stats.ybar[0] - ybar)) <= 1e-6
        assert np.max(np.abs(stats.scatter[0] - scatter)) <= 1e-5

    def test_counts_partition_records(self):
        rng = np.random.default_rng(4)
        db, _, _ = sample_records(rng, ADDITIVE, np.zeros(5), 9, missing=0.3)
        model = MixtureModel.from_priors(DOMAIN, [ADDITIVE, STRUCTURED, FULL], PriorConfig())
        stats = e_step(model, db)
        assert stats.counts.sum() == pytest.approx(9.0, abs=1e-9)

    def test_skips_empty_records_with_warning(self):
        values = np.full(12, np.nan)
        db = UtilityDatabase(
            (UtilityRecord("empty", values), UtilityRecord("ok", np.linspace(0, 1, 12)))
        )
        model = MixtureModel.from_priors(DOMAIN, [ADDITIVE], PriorConfig())
        with pytest.warns(UserWarning, match="empty"):
            stats = e_step(model, db)
        assert stats.responsibilities.shape[0] == 1


class TestMStep:
    def test_zero_count_type_keeps_prior(self):
        rng = np.random.default_rng(5)
        db, _, _ = sample_records(rng, ADDITIVE, np.zeros(5), 6)
        priors = PriorConfig()
        model = MixtureModel.from_priors(DOMAIN, [ADDITIVE, ADDITIVE], priors)
        stats = e_step(model, db)
        stats.responsibilities[:, 1] = 0.0
        stats.responsibilities[:, 0] = 1.0
        forced = SufficientStats(
            counts=np.array([6.0, 0.0]),
            ybar=[stats.ybar[0], np.zeros(5)],
            scatter=[stats.scatter[0], np.zeros((5, 5))],
            obs_counts=np.array([stats.obs_counts.sum(), 0.0]),
            noise_scatter=np.array([stats.noise_scatter.sum(), 0.0]),
            cross_terms=np.array([stats.cross_terms[0], 0.0]),
            responsibilities=stats.responsibilities,
            posterior_means=stats.posterior_means,
            posterior_covs=stats.posterior_covs,
            log_evidence=stats.log_evidence,
            record_log_liks=stats.record_log_liks,
        )
        new = m_step(model, priors, forced)
        prior_nw = priors.nw_for(5)
        assert np.allclose(new.types[1].nw.r, prior_nw.r)
        assert new.types[1].nw.beta == prior_nw.beta
        assert new.types[1].noise.rho == priors.noise_prior().rho

    def test_idempotent_on_fixed_stats(self):
        rng = np.random.default_rng(6)
        db, _, _ = sample_records(rng, ADDITIVE, np.zeros(5), 10)
        priors = PriorConfig()
        model = MixtureModel.from_priors(DOMAIN, [ADDITIVE], priors)
        stats = e_step(model, db)
        once = m_step(model, priors, stats)
        twice = m_step(once, priors, stats)
        assert np.allclose(once.types[0].mu, twice.types[0].mu)
        assert np.allclose(once.types[0].sigma, twice.types[0].sigma)
        assert once.types[0].noise_var == pytest.approx(twice.types[0].noise_var)

    def test_degenerate_soft_counts_reduce_to_conjugate_update(self):
        # unit responsibilities, complete data, vanishing posterior covariance:
        # the M-step must match a hand-built complete-data update
        rng = np.random.default_rng(7)
        db, _, _ = sample_records(rng, FULL, np.zeros(12), 15, noise=0.0)
        priors = PriorConfig()
        model = MixtureModel.from_priors(DOMAIN, [FULL], priors)
        model.types[0].noise_var = 1e-12
        stats = e_step(model, db)
        new = m_step(model, priors, stats)
        projected = np.array([project_exact(r.values, model.types[0].basis) for r in db.records])
        ybar = projected.mean(axis=0)
        scatter = (projected - ybar).T @ (projected - ybar)
        byhand = nw_update(priors.nw_for(12), 15.0, ybar, scatter)
        assert np.max(np.abs(new.types[0].nw.lam - byhand.lam)) <= 1e-6
        assert np.max(np.abs(new.types[0].nw.r - byhand.r)) <= 1e-4


class TestEmFit:
    def test_tol_inf_runs_exactly_one_iteration(self):
        rng = np.random.default_rng(8)
        db, _, _ = sample_records(rng, ADDITIVE, np.zeros(5), 8)
        _, diag = em_fit(
            DOMAIN, [ADDITIVE], db,
            EMConfig(seed=0, restarts=1, tol=np.inf, max_iters=50),
        )
        assert diag.m_steps == [1]
        assert diag.converged == [True]

    def test_score_trace_monotone(self):
        rng = np.random.default_rng(9)
        for trial in range(5):
            db, _, _ = sample_records(
                rng, STRUCTURED, rng.normal(scale=0.5, size=8), 40, missing=0.25
            )
            _, diag = em_fit(
                DOMAIN, [STRUCTURED], db,
                EMConfig(seed=trial, restarts=2, tol=1e-8, max_iters=60),
            )
            for trace in diag.traces:
                diffs = np.diff(trace)
                assert (diffs >= -1e-6).all(), f"trace decreased: {trace}"

    def test_recovers_single_type_mean(self):
        rng = np.random.default_rng(10)
        mu_true = rng.normal(scale=0.5, size=5)
        db, _, _ = sample_records(rng, ADDITIVE, mu_true, 1000)
        model, diag = em_fit(
            DOMAIN, [ADDITIVE], db, EMConfig(seed=1, restarts=1, tol=1e-8, max_iters=100)
        )
        t = model.types[0]
        se = np.sqrt(np.diag(t.sigma) / t.nw.nu)
        assert np.all(np.abs(t.mu - mu_true) <= 3.0 * se)

    def test_same_seed_same_result(self):
        rng = np.random.default_rng(11)
        db, _, _ = sample_records(rng, ADDITIVE, np.zeros(5), 30, missing=0.2)
        cfg = EMConfig(seed=123, restarts=3, tol=1e-7, max_iters=40)
        m1, d1 = em_fit(DOMAIN, [ADDITIVE, ADDITIVE], db, cfg)
        m2, d2 = em_fit(DOMAIN, [ADDITIVE, ADDITIVE], db, cfg)
        assert d1.final_score == d2.final_score
        assert np.array_equal(m1.types[0].mu, m2.types[0].mu)
        assert np.array_equal(m1.theta, m2.theta)

    def test_record_permutation_invariance_single_type(self):
        rng = np.random.default_rng(12)
        db, _, _ = sample_records(rng, ADDITIVE, np.zeros(5), 20, missing=0.3)
        shuffled = UtilityDatabase(tuple(db.records[i] for i in rng.permutation(20)))
        cfg = EMConfig(seed=5, restarts=1, tol=1e-9, max_iters=60)
        m1, _ = em_fit(DOMAIN, [ADDITIVE], db, cfg)
        m2, _ = em_fit(DOMAIN, [ADDITIVE], shuffled, cfg)
        assert np.allclose(m1.types[0].mu, m2.types[0].mu, atol=1e-9)
        assert np.allclose(m1.types[0].sigma, m2.types[0].sigma, atol=1e-9)

    def test_no_usable_records_raises(self):
        db = UtilityDatabase((UtilityRecord("empty", np.full(12, np.nan)),))
        with pytest.raises(EMFailure):
            with pytest.warns(UserWarning):
                em_fit(DOMAIN, [ADDITIVE], db, EMConfig(restarts=1))

    def test_degenerate_evidence_reports_record(self):
        # a value far outside float range underflows every type's density
        values = np.full(12, np.nan)
        values[0] = 1e300
        db = UtilityDatabase(
            (UtilityRecord("blowup", values), UtilityRecord("fine", np.linspace(0, 1, 12)))
        )
        model = MixtureModel.from_priors(DOMAIN, [ADDITIVE], PriorConfig())
        with pytest.raises(EMFailure, match="blowup"):
            e_step(model, db)

    def test_mean_error_shrinks_with_sample_size(self):
        # complete data: the median mean-recovery error over 10 seeds falls
        # monotonically across N in {10, 100, 1000}
        errors = {10: [], 100: [], 1000: []}
        cfg = EMConfig(restarts=1, tol=1e-6, max_iters=60)
        for seed in range(10):
            rng = np.random.default_rng(3000 + seed)
            mu_true = rng.normal(scale=0.5, size=8)
            for n in errors:
                db, _, _ = sample_records(rng, STRUCTURED, mu_true, n)
                model, _ = em_fit(DOMAIN, [STRUCTURED], db, cfg)
                errors[n].append(float(np.linalg.norm(model.types[0].mu - mu_true)))
        medians = [np.median(errors[n]) for n in (10, 100, 1000)]
        assert medians[0] > medians[1] > medians[2]


class TestLogLikelihood:
    def test_empty_database(self):
        model = MixtureModel.from_priors(DOMAIN, [ADDITIVE], PriorConfig())
        total, per = log_likelihood(model, UtilityDatabase(()))
        assert total == 0.0
        assert per.shape == (0,)

    def test_duplication_doubles_total(self):
        rng = np.random.default_rng(13)
        db, _, _ = sample_records(rng, ADDITIVE, np.zeros(5), 7, missing=0.2)
        model = MixtureModel.from_priors(DOMAIN, [ADDITIVE, STRUCTURED], PriorConfig())
        total, _ = log_likelihood(model, db)
        doubled, _ = log_likelihood(model, UtilityDatabase(db.records + db.records))
        assert doubled == pytest.approx(2.0 * total, rel=1e-12)

    def test_matches_e_step_evidences(self):
        rng = np.random.default_rng(14)
        db, _, _ = sample_records(rng, ADDITIVE, np.zeros(5), 9, missing=0.1)
        model = MixtureModel.from_priors(DOMAIN, [ADDITIVE, FULL], PriorConfig())
        total, per = log_likelihood(model, db)
        stats = e_step(model, db)
        assert total == pytest.approx(stats.log_likelihood, abs=1e-12)
        assert np.allclose(per, stats.record_log_liks)
