"""Sequential utility elicitation driven by a learned mixture model.

A session tracks, per latent type, the Gaussian posterior over basis
weights given the answers so far, plus mixture weights over types updated
by each answer's predictive density.  Questions come either from the
row-reduction pivot list of the most probable type (answering them pins a
representable utility exactly when noise vanishes) or from a greedy
predictive-variance-reduction policy.  A prequential score over the answer
log flags atypical respondents against a simulation-calibrated threshold.

Sessions are immutable: every update returns a new session, so replaying
the answer log reconstructs the exact same state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from prefdens.em import MixtureModel

LOG_2PI = math.log(2.0 * math.pi)


class RepeatedOutcomeError(ValueError):
    """The outcome was already answered in this session."""


class RankDeficientDesignError(ValueError):
    """The design matrix has linearly dependent columns."""


@dataclass(frozen=True)
class Question:
    outcome_index: int
    description: str
    score: float


@dataclass(frozen=True)
class Prediction:
    outcome_index: int
    mean: float
    stddev: float


@dataclass(frozen=True)
class TypeState:
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class Session:
    model: MixtureModel
    policy: str
    noise_vars: tuple
    stop_eps: float
    answered: tuple            # ((outcome_index, value), ...)
    type_states: tuple         # TypeState per type
    log_weights: np.ndarray    # normalized log type weights
    preq_log_densities: tuple  # mixture predictive log density per answer

    @property
    def answered_indices(self) -> set:
        return {o for o, _ in self.answered}

    @property
    def type_weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def most_probable_type(self) -> int:
        return int(np.argmax(self.log_weights))

    def unanswered(self) -> list[int]:
        taken = self.answered_indices
        return [o for o in range(self.model.domain.n_outcomes) if o not in taken]

    def to_json_dict(self) -> dict:
        return {
            "policy": self.policy,
            "stop_eps": self.stop_eps,
            "answers": [{"outcome_id": int(o), "value": float(v)} for o, v in self.answered],
        }


def start_session(
    model: MixtureModel,
    policy: str = "rref",
    noise_override: float | None = None,
    stop_eps: float = 0.05,
) -> Session:
    """Fresh session at the model prior.

    ``noise_override`` replaces every type's learned noise variance with a
    session-specific elicitation noise.
    """
    if policy not in ("rref", "variance"):
        raise ValueError(f"unknown policy {policy!r}")
    noise = tuple(
        float(noise_override) if noise_override is not None else t.noise_var
        for t in model.types
    )
    states = tuple(TypeState(t.mu.copy(), t.sigma.copy()) for t in model.types)
    return Session(
        model=model,
        policy=policy,
        noise_vars=noise,
        stop_eps=stop_eps,
        answered=(),
        type_states=states,
        log_weights=np.log(model.theta),
        preq_log_densities=(),
    )


def select_questions_rref(design: np.ndarray) -> list[int]:
    """Pivot outcomes of a row reduction of the design matrix.

    Gaussian elimination over the columns with partial pivoting (ties to
    the lowest outcome index) returns exactly one outcome per basis
    function; the selected rows form an invertible submatrix, so answering
    them determines a representable utility exactly when noise is zero.
    """
    a = np.asarray(design, dtype=float).copy()
    n, m = a.shape
    available = np.ones(n, dtype=bool)
    chosen: list[int] = []
    for col in range(m):
        scores = np.where(available, np.abs(a[:, col]), -1.0)
        pivot = int(np.argmax(scores))
        if scores[pivot] <= 1e-12:
            raise RankDeficientDesignError(f"no pivot available for column {col}")
        chosen.append(pivot)
        available[pivot] = False
        others = np.arange(n) != pivot
        factors = a[others, col] / a[pivot, col]
        a[others] -= np.outer(factors, a[pivot])
    return chosen


def update_posterior(session: Session, outcome: int, value: float) -> Session:
    """Condition every type on one answered outcome and reweight the types."""
    if outcome in session.answered_indices:
        raise RepeatedOutcomeError(f"outcome {outcome} already answered")
    if not 0 <= outcome < session.model.domain.n_outcomes:
        raise ValueError(f"outcome index {outcome} out of range")
    new_states = []
    log_pred = np.empty(session.model.n_types)
    for t_i, t in enumerate(session.model.types):
        state = session.type_states[t_i]
        a_o = t.design[outcome]
        pred_mean = float(a_o @ state.mean)
        cross = state.cov @ a_o
        pred_var = float(a_o @ cross) + session.noise_vars[t_i]
        if pred_var <= 0:
            raise np.linalg.LinAlgError(
                f"zero predictive variance for outcome {outcome} on type {t_i}"
            )
        gain = cross / pred_var
        dev = value - pred_mean
        new_cov = state.cov - np.outer(gain, cross)
        new_states.append(TypeState(state.mean + gain * dev, 0.5 * (new_cov + new_cov.T)))
        log_pred[t_i] = -0.5 * (LOG_2PI + math.log(pred_var) + dev * dev / pred_var)
    joint = session.log_weights + log_pred
    mixture_log_density = float(logsumexp(joint))
    return replace(
        session,
        answered=session.answered + ((int(outcome), float(value)),),
        type_states=tuple(new_states),
        log_weights=joint - mixture_log_density,
        preq_log_densities=session.preq_log_densities + (mixture_log_density,),
    )


def replay(model: MixtureModel, answers, policy: str = "rref",
           noise_override: float | None = None, stop_eps: float = 0.05) -> Session:
    """Reconstruct a session from its answer log."""
    session = start_session(model, policy, noise_override, stop_eps)
    for outcome, value in answers:
        session = update_posterior(session, outcome, value)
    return session


def predict(session: Session) -> list[Prediction]:
    """Mixture predictive mean and standard deviation per unanswered outcome."""
    remaining = session.unanswered()
    if not remaining:
        return []
    weights = session.type_weights
    means = np.zeros((session.model.n_types, len(remaining)))
    variances = np.zeros_like(means)
    for t_i, t in enumerate(session.model.types):
        state = session.type_states[t_i]
        a_r = t.design[remaining]
        means[t_i] = a_r @ state.mean
        variances[t_i] = (
            np.einsum("ij,jk,ik->i", a_r, state.cov, a_r) + session.noise_vars[t_i]
        )
    mix_mean = weights @ means
    mix_var = weights @ (variances + (means - mix_mean) ** 2)
    return [
        Prediction(int(o), float(m), float(math.sqrt(max(v, 0.0))))
        for o, m, v in zip(remaining, mix_mean, mix_var)
    ]


def stop_check(session: Session, stop_eps: float | None = None) -> bool:
    """Stop once every unanswered outcome is predicted tightly enough."""
    eps = session.stop_eps if stop_eps is None else stop_eps
    preds = predict(session)
    if not preds:
        return True
    return max(p.stddev for p in preds) < eps


def _variance_scores(session: Session, remaining: list[int]) -> np.ndarray:
    """Expected reduction in summed predictive variance per candidate.

    For one type, observing outcome o shrinks the predictive covariance of
    the unanswered set by a rank-one drop; the traces sum in closed form
    without knowing the answer value.  Scores average those drops by the
    current type weights.
    """
    weights = session.type_weights
    scores = np.zeros(len(remaining))
    for t_i, t in enumerate(session.model.types):
        if weights[t_i] <= 0:
            continue
        state = session.type_states[t_i]
        a_r = t.design[remaining]
        g = a_r @ state.cov @ a_r.T
        denom = np.diag(g) + session.noise_vars[t_i]
        with np.errstate(divide="ignore", invalid="ignore"):
            drop = np.where(denom > 0, (g**2).sum(axis=0) / denom, 0.0)
        scores += weights[t_i] * drop
    return scores


def next_question(session: Session) -> Question | None:
    """Next outcome to ask under the session's policy; None once stopped."""
    if stop_check(session):
        return None
    remaining = session.unanswered()
    scores = _variance_scores(session, remaining)
    if session.policy == "rref":
        order = select_questions_rref(session.model.types[session.most_probable_type].design)
        taken = session.answered_indices
        pick = next((o for o in order if o not in taken), None)
        if pick is None:
            pick = remaining[0]
        score = float(scores[remaining.index(pick)])
    else:
        best = int(np.argmax(scores))  # first max: ties to the lowest index
        pick = remaining[best]
        score = float(scores[best])
    return Question(int(pick), session.model.domain.outcome_key(int(pick)), score)


def simulate_session(model: MixtureModel, rng: np.random.Generator, length: int,
                     policy: str = "rref", noise_override: float | None = None) -> Session:
    """Answer ``length`` policy-chosen questions with model-sampled truth."""
    t = int(rng.choice(model.n_types, p=model.theta))
    true_type = model.types[t]
    w = rng.multivariate_normal(true_type.mu, true_type.sigma)
    noise_sd = math.sqrt(
        noise_override if noise_override is not None else true_type.noise_var
    )
    session = start_session(model, policy, noise_override)
    for _ in range(min(length, model.domain.n_outcomes)):
        question = next_question(session)
        if question is None:
            remaining = session.unanswered()
            if not remaining:
                break
            question = Question(remaining[0], "", 0.0)
        o = question.outcome_index
        value = float(true_type.design[o] @ w + noise_sd * rng.standard_normal())
        session = update_posterior(session, o, value)
    return session


def calibrate_outlier_threshold(
    model: MixtureModel,
    length: int,
    policy: str = "rref",
    noise_override: float | None = None,
    n_sims: int = 1000,
    seed: int = 0,
) -> float:
    """Mean + 3 standard deviations of the prequential score over simulated
    sessions of the given length; cached on the model instance."""
    if length < 1:
        raise ValueError("calibration needs at least one answer")
    cache = getattr(model, "_outlier_thresholds", None)
    if cache is None:
        cache = {}
        model._outlier_thresholds = cache
    key = (length, policy, noise_override, n_sims, seed)
    if key not in cache:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, length, n_sims)))
        scores = np.empty(n_sims)
        for i in range(n_sims):
            sim = simulate_session(model, rng, length, policy, noise_override)
            scores[i] = -float(np.mean(sim.preq_log_densities))
        cache[key] = float(scores.mean() + 3.0 * scores.std())
    return cache[key]


def outlier_score(session: Session, threshold: float | None = None,
                  n_sims: int = 1000, seed: int = 0) -> tuple[float, bool]:
    """Prequential score of the answer log and whether it crosses the bar.

    The score is the negative mean log predictive density of each answer
    given its predecessors; the default threshold comes from
    ``calibrate_outlier_threshold`` at the session's length and policy.
    """
    if not session.answered:
        raise ValueError("outlier score needs at least one answer")
    score = -float(np.mean(session.preq_log_densities))
    if threshold is None:
        noise = session.noise_vars[0]
        uniform = all(v == noise for v in session.noise_vars)
        model_noise = all(
            v == t.noise_var for v, t in zip(session.noise_vars, session.model.types)
        )
        override = None if model_noise else (noise if uniform else None)
        threshold = calibrate_outlier_threshold(
            session.model, len(session.answered), session.policy, override, n_sims, seed
        )
    return score, bool(score > threshold)
