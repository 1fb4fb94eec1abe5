"""Gaussian conditioning and conjugate-update machinery.

The marginal-likelihood tests define correctness through an independent
chain-rule oracle: the sum of sequential Student-t posterior-predictive log
densities (scipy's multivariate_t), never the closed form under test.
"""

import math

import numpy as np
import pytest
from scipy.stats import multivariate_t

from prefdens.gaussian import (
    Dirichlet,
    Gaussian,
    NormalWishart,
    SingularMatrixError,
    WishartScalar,
    condition,
    dirichlet_log_marginal,
    dirichlet_mean,
    dirichlet_update,
    nw_log_marginal_likelihood,
    nw_marginalize,
    nw_update,
    wishart_scalar_log_marginal,
    wishart_scalar_marginalize,
    wishart_scalar_update,
)


def student_t_chain_log_density(prior: NormalWishart, data: np.ndarray) -> float:
    """Oracle: sum of sequential posterior-predictive log densities.

    After seeing j points the predictive for the next point is multivariate
    Student-t with df = beta - dim + 1, location lam, and shape
    r * (nu + 1) / (nu * df).
    """
    total = 0.0
    current = prior
    for y in data:
        m = current.dim
        df = current.beta - m + 1.0
        shape = current.r * (current.nu + 1.0) / (current.nu * df)
        total += multivariate_t.logpdf(y, loc=current.lam, shape=shape, df=df)
        current = nw_update(current, 1.0, y, np.zeros((m, m)))
    return float(total)


def stats_of(data: np.ndarray):
    count = data.shape[0]
    ybar = data.mean(axis=0)
    dev = data - ybar
    return count, ybar, dev.T @ dev


class TestCondition:
    def test_bivariate_hand_example(self):
        g = Gaussian([0.0, 0.0], [[1.0, 0.5], [0.5, 1.0]])
        post, logev = condition(g, [(1, 1.0)])
        assert post.mean[0] == pytest.approx(0.5)
        assert post.cov[0, 0] == pytest.approx(0.75)
        # evidence is the standard normal density at 1
        assert logev == pytest.approx(-0.5 * (math.log(2 * math.pi) + 1.0))

    def test_bivariate_against_quadrature(self):
        # integrate the joint density over x1 on a grid to recover the
        # posterior moments and evidence independently of the Schur path
        g = Gaussian([0.3, -0.2], [[2.0, 0.8], [0.8, 1.5]])
        obs = 0.9
        xs = np.linspace(-12, 12, 20001)
        joint = np.array([g.log_density([x, obs]) for x in xs])
        dens = np.exp(joint)
        z = np.trapezoid(dens, xs)
        mean = np.trapezoid(xs * dens, xs) / z
        var = np.trapezoid((xs - mean) ** 2 * dens, xs) / z
        post, logev = condition(g, [(1, obs)])
        assert post.mean[0] == pytest.approx(mean, abs=1e-6)
        assert post.cov[0, 0] == pytest.approx(var, abs=1e-6)
        assert logev == pytest.approx(math.log(z), abs=1e-8)

    def test_observe_nothing(self):
        g = Gaussian([1.0, 2.0], np.eye(2))
        post, logev = condition(g, [])
        assert post is g
        assert logev == 0.0

    def test_diagonal_independence(self):
        g = Gaussian([1.0, 2.0, 3.0], np.diag([1.0, 4.0, 9.0]))
        post, _ = condition(g, [(1, 5.0)])
        assert np.allclose(post.mean, [1.0, 3.0])
        assert np.allclose(post.cov, np.diag([1.0, 9.0]))

    def test_sequential_equals_joint(self):
        rng = np.random.default_rng(42)
        for _ in range(25):
            d = rng.integers(3, 6)
            a = rng.normal(size=(d, d))
            g = Gaussian(rng.normal(size=d), a @ a.T + d * np.eye(d))
            n_obs = rng.integers(2, d)
            idx = rng.choice(d, size=n_obs, replace=False)
            vals = rng.normal(size=n_obs)
            joint_post, joint_ev = condition(g, list(zip(idx.tolist(), vals)))

            # sequential route: condition one coordinate at a time
            cur = g
            remaining = list(range(d))
            total_ev = 0.0
            for i, v in zip(idx.tolist(), vals):
                pos = remaining.index(i)
                cur, ev = condition(cur, [(pos, v)])
                total_ev += ev
                remaining.remove(i)
            assert np.max(np.abs(cur.mean - joint_post.mean)) <= 1e-10
            assert np.max(np.abs(cur.cov - joint_post.cov)) <= 1e-10
            assert total_ev == pytest.approx(joint_ev, abs=1e-10)

    def test_duplicate_indices_rejected(self):
        g = Gaussian([0.0, 0.0], np.eye(2))
        with pytest.raises(ValueError):
            condition(g, [(0, 1.0), (0, 2.0)])

    def test_singular_block_reported(self):
        g = Gaussian([0.0, 0.0], [[0.0, 0.0], [0.0, 1.0]])
        with pytest.raises(SingularMatrixError, match=r"\[0\]"):
            condition(g, [(0, 1.0)])


class TestNormalWishart:
    def test_one_dim_substitution(self):
        prior = NormalWishart(np.eye(1), 3.0, np.zeros(1), 1.0)
        post = nw_update(prior, 1.0, [2.0], [[0.0]])
        assert post.lam[0] == pytest.approx(1.0)
        assert post.nu == pytest.approx(2.0)
        assert post.r[0, 0] == pytest.approx(3.0)  # 1 + 0 + (1/2) * 4
        assert post.beta == pytest.approx(4.0)

    def test_zero_count_returns_prior(self):
        prior = NormalWishart(np.eye(2), 4.0, np.zeros(2), 1.0)
        assert nw_update(prior, 0.0, np.zeros(2), np.zeros((2, 2))) is prior

    def test_batch_equals_stats_route(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            m = rng.integers(1, 4)
            prior = NormalWishart(np.eye(m), m + 2.0, rng.normal(size=m), 1.5)
            data = rng.normal(size=(rng.integers(1, 8), m))
            post = nw_update(prior, *stats_of(data))
            # sequential single-point updates must land on the same posterior
            seq = prior
            for y in data:
                seq = nw_update(seq, 1.0, y, np.zeros((m, m)))
            assert np.max(np.abs(seq.r - post.r)) <= 1e-10
            assert np.max(np.abs(seq.lam - post.lam)) <= 1e-10
            assert seq.nu == pytest.approx(post.nu, abs=1e-12)
            assert seq.beta == pytest.approx(post.beta, abs=1e-12)

    def test_concatenated_equals_sequential_batches(self):
        rng = np.random.default_rng(5)
        m = 3
        prior = NormalWishart(0.5 * np.eye(m), m + 3.0, np.zeros(m), 2.0)
        a = rng.normal(size=(4, m))
        b = rng.normal(size=(6, m))
        both = nw_update(prior, *stats_of(np.vstack([a, b])))
        stepped = nw_update(nw_update(prior, *stats_of(a)), *stats_of(b))
        assert np.max(np.abs(both.r - stepped.r)) <= 1e-10
        assert np.max(np.abs(both.lam - stepped.lam)) <= 1e-10

    def test_negative_count_rejected(self):
        prior = NormalWishart(np.eye(1), 3.0, np.zeros(1), 1.0)
        with pytest.raises(ValueError):
            nw_update(prior, -1.0, [0.0], [[0.0]])


class TestNWMarginalize:
    def test_large_nu_limit(self):
        m = 3
        nw = NormalWishart(np.eye(m), m + 2.0, np.zeros(m), 1e12)
        g = nw_marginalize(nw)
        assert np.allclose(g.cov, np.eye(m), atol=1e-9)

    def test_one_dim_substitution(self):
        nw = NormalWishart([[3.0]], 4.0, [1.0], 2.0)
        g = nw_marginalize(nw)
        assert g.mean[0] == pytest.approx(1.0)
        assert g.cov[0, 0] == pytest.approx(2.25)

    def test_scaling_linearity(self):
        nw = NormalWishart(np.eye(2), 5.0, np.zeros(2), 2.0)
        scaled = NormalWishart(7.0 * np.eye(2), 5.0, np.zeros(2), 2.0)
        assert np.allclose(nw_marginalize(scaled).cov, 7.0 * nw_marginalize(nw).cov)

    def test_beta_constraint(self):
        with pytest.raises(ValueError):
            nw_marginalize(NormalWishart(np.eye(2), 3.0, np.zeros(2), 1.0))

    def test_marginalized_cov_positive_definite(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            m = rng.integers(1, 5)
            a = rng.normal(size=(m, m))
            nw = NormalWishart(
                a @ a.T + m * np.eye(m),
                m + 1.0 + rng.uniform(0.5, 5.0),
                rng.normal(size=m),
                rng.uniform(0.5, 10.0),
            )
            cov = nw_marginalize(nw).cov
            assert np.allclose(cov, cov.T)
            assert np.linalg.eigvalsh(cov).min() > 0


class TestWishartScalar:
    def test_zero_count_unchanged(self):
        w = WishartScalar(1.0, 3.0, 1.0)
        assert wishart_scalar_update(w, 0.0, 0.0, 0.0) is w

    def test_substitution(self):
        w = wishart_scalar_update(WishartScalar(1.0, 3.0, 1.0), 1.0, 0.0, 4.0)
        assert w.rho == pytest.approx(3.0)
        assert w.gamma == pytest.approx(4.0)
        assert w.eta == pytest.approx(2.0)
        assert wishart_scalar_marginalize(w) == pytest.approx(2.25)

    def test_variance_monotone_in_scatter(self):
        prior = WishartScalar(0.5, 3.0, 1.0)
        vals = [
            wishart_scalar_marginalize(wishart_scalar_update(prior, 5.0, s))
            for s in (0.1, 0.5, 2.0, 10.0)
        ]
        assert vals == sorted(vals)
        assert len(set(vals)) == len(vals)

    def test_marginalize_gamma_constraint(self):
        with pytest.raises(ValueError):
            wishart_scalar_marginalize(WishartScalar(1.0, 2.0, 1.0))


class TestNWMarginalLikelihood:
    def test_empty_data(self):
        prior = NormalWishart(np.eye(2), 4.0, np.zeros(2), 1.0)
        assert nw_log_marginal_likelihood(prior, 0.0, np.zeros(2), np.zeros((2, 2))) == 0.0

    def test_chain_rule_oracle_50_datasets(self):
        rng = np.random.default_rng(314)
        for _ in range(50):
            m = int(rng.integers(1, 5))
            a = rng.normal(size=(m, m))
            prior = NormalWishart(
                a @ a.T + m * np.eye(m),
                m + rng.uniform(1.5, 4.0),
                rng.normal(size=m),
                rng.uniform(0.5, 3.0),
            )
            data = rng.normal(scale=rng.uniform(0.5, 2.0), size=(int(rng.integers(1, 9)), m))
            closed = nw_log_marginal_likelihood(prior, *stats_of(data))
            oracle = student_t_chain_log_density(prior, data)
            assert closed == pytest.approx(oracle, abs=1e-8)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(21)
        prior = NormalWishart(np.eye(3), 6.0, np.zeros(3), 1.0)
        data = rng.normal(size=(6, 3))
        base = nw_log_marginal_likelihood(prior, *stats_of(data))
        perm = nw_log_marginal_likelihood(prior, *stats_of(data[rng.permutation(6)]))
        assert base == pytest.approx(perm, abs=1e-10)

    def test_scalar_analog_matches_zero_mean_chain(self):
        # the scalar marginal must equal the zero-mean t chain rule:
        # df gamma, squared scale rho / gamma, location fixed at zero
        rng = np.random.default_rng(77)
        for _ in range(20):
            prior = WishartScalar(rng.uniform(0.2, 2.0), rng.uniform(2.5, 6.0), rng.uniform(0.5, 3.0))
            data = rng.normal(scale=0.7, size=int(rng.integers(1, 7)))
            closed = wishart_scalar_log_marginal(prior, len(data), float(np.sum(data**2)))
            total = 0.0
            rho, gamma = prior.rho, prior.gamma
            for y in data:
                total += multivariate_t.logpdf([y], loc=[0.0], shape=[[rho / gamma]], df=gamma)
                rho, gamma = rho + float(y**2), gamma + 1.0
            assert closed == pytest.approx(total, abs=1e-8)


class TestDirichlet:
    def test_uniform_no_counts(self):
        d = Dirichlet([1.0, 1.0])
        assert np.allclose(dirichlet_mean(d), [0.5, 0.5])
        assert dirichlet_log_marginal(d, [0.0, 0.0]) == pytest.approx(0.0)

    def test_update_mean(self):
        d = dirichlet_update(Dirichlet([1.0, 1.0]), [2.0, 0.0])
        assert np.allclose(dirichlet_mean(d), [0.75, 0.25])

    def test_one_step_predictive(self):
        assert dirichlet_log_marginal(Dirichlet([1.0, 1.0]), [1.0, 0.0]) == pytest.approx(
            math.log(0.5)
        )

    def test_chain_rule_identity(self):
        # marginal equals the product of sequential predictive probabilities
        alpha = np.array([0.7, 1.3, 2.0])
        draws = [0, 2, 2, 1, 0, 2]
        d = Dirichlet(alpha)
        total = 0.0
        counts = np.zeros(3)
        for t in draws:
            total += math.log(dirichlet_mean(dirichlet_update(d, counts))[t])
            counts[t] += 1
        assert dirichlet_log_marginal(d, counts) == pytest.approx(total, abs=1e-12)

    def test_rejects_bad_alpha(self):
        with pytest.raises(ValueError):
            Dirichlet([1.0, 0.0])
