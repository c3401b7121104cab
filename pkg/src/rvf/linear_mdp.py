"""Finite linear MDPs with known feature maps.

Transition kernels factor through the features: P(s'|s,a) = <psi(s,a), phi(s')>
and r(s,a) = psi(s,a)^T upsilon.  On top of that this module provides ridge
regression of Bellman targets (with the exact Gaussian posterior it induces),
the confidence penalty sqrt(psi^T Lambda^-1 psi), empirical coverage checks for
that penalty, pessimistic value iteration, and the value-gap bound, all in
exact tabular arithmetic so the identities can be tested tightly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError, ShapeError

_KERNEL_TOL = 1e-9


@dataclass
class LinearMdpSpec:
    """Tabular MDP whose dynamics and rewards are linear in a known feature map.

    features[s, a] is psi(s,a) in R^d with ||psi||_2 <= 1; next_state_features[s']
    is phi(s') so that P(s'|s,a) = features[s,a] @ next_state_features[s'];
    rewards are features @ reward_weights and must land in [0, 1].
    horizon=None selects the discounted infinite-horizon reading (gamma < 1);
    an integer horizon selects episodic finite-horizon backward induction.
    """

    n_states: int
    n_actions: int
    d: int
    features: np.ndarray              # (S, A, d)
    reward_weights: np.ndarray        # (d,)
    next_state_features: np.ndarray   # (S, d)
    gamma: float = 0.99
    horizon: int | None = None
    initial_state: int = 0

    def validate(self) -> None:
        S, A, d = self.n_states, self.n_actions, self.d
        if self.features.shape != (S, A, d):
            raise ShapeError(f"features shape {self.features.shape} != {(S, A, d)}")
        if self.next_state_features.shape != (S, d):
            raise ShapeError("next_state_features shape mismatch")
        if self.reward_weights.shape != (d,):
            raise ShapeError("reward_weights shape mismatch")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.gamma == 1.0 and self.horizon is None:
            raise ConfigError("gamma = 1 requires a finite horizon")
        norms = np.linalg.norm(self.features, axis=2)
        if np.any(norms > 1.0 + _KERNEL_TOL):
            raise ConfigError(f"||psi||_2 exceeds 1 (max {norms.max()})")
        P = self.transition_tensor()
        if np.any(P < -_KERNEL_TOL):
            raise ConfigError("transition kernel has negative entries")
        row_sums = P.sum(axis=2)
        if np.any(np.abs(row_sums - 1.0) > _KERNEL_TOL):
            raise ConfigError("transition rows do not sum to 1")
        r = self.reward_table()
        if np.any(r < -_KERNEL_TOL) or np.any(r > 1.0 + _KERNEL_TOL):
            raise ConfigError("rewards leave [0, 1]")

    def transition_tensor(self) -> np.ndarray:
        """Dense P[s, a, s']."""
        return np.einsum("sad,td->sat", self.features, self.next_state_features)

    def reward_table(self) -> np.ndarray:
        """Dense r[s, a]."""
        return self.features @ self.reward_weights

    def to_json_dict(self) -> dict:
        return {
            "n_states": self.n_states, "n_actions": self.n_actions, "d": self.d,
            "features": self.features.tolist(),
            "reward_weights": self.reward_weights.tolist(),
            "next_state_features": self.next_state_features.tolist(),
            "gamma": self.gamma, "horizon": self.horizon,
            "initial_state": self.initial_state,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "LinearMdpSpec":
        return cls(
            n_states=int(data["n_states"]), n_actions=int(data["n_actions"]),
            d=int(data["d"]), features=np.asarray(data["features"], dtype=np.float64),
            reward_weights=np.asarray(data["reward_weights"], dtype=np.float64),
            next_state_features=np.asarray(data["next_state_features"], dtype=np.float64),
            gamma=float(data["gamma"]),
            horizon=None if data["horizon"] is None else int(data["horizon"]),
            initial_state=int(data.get("initial_state", 0)),
        )

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f, sort_keys=True)

    @classmethod
    def load(cls, path) -> "LinearMdpSpec":
        with open(path) as f:
            return cls.from_json_dict(json.load(f))


def random_linear_mdp(n_states: int, n_actions: int, d: int,
                      rng: np.random.Generator, gamma: float = 1.0,
                      horizon: int | None = 5) -> LinearMdpSpec:
    """Sample a valid instance: psi rows on the d-simplex (so ||psi||_2 <= 1),
    anchor columns of phi as distributions over next states, rewards as
    convex combinations of weights in [0, 1]."""
    features = rng.dirichlet(np.ones(d), size=(n_states, n_actions))
    anchors = rng.dirichlet(np.ones(n_states), size=d)   # (d, S)
    mdp = LinearMdpSpec(
        n_states=n_states, n_actions=n_actions, d=d,
        features=features, reward_weights=rng.uniform(0.0, 1.0, size=d),
        next_state_features=anchors.T.copy(), gamma=gamma, horizon=horizon,
        initial_state=0,
    )
    mdp.validate()
    return mdp


@dataclass
class FeatureDataset:
    """Regression rows: feature vectors and scalar Bellman targets."""

    features: np.ndarray   # (m, d)
    targets: np.ndarray    # (m,)

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        self.targets = np.asarray(self.targets, dtype=np.float64).reshape(-1)
        if self.features.size and self.features.shape[0] != self.targets.shape[0]:
            raise ShapeError("features and targets row counts differ")
        if not np.all(np.isfinite(self.features)) or not np.all(np.isfinite(self.targets)):
            raise NumericError("non-finite entries in regression data")

    @classmethod
    def empty(cls, d: int) -> "FeatureDataset":
        return cls(np.zeros((0, d)), np.zeros(0))


@dataclass
class RidgePosterior:
    """Gaussian posterior over linear weights: w ~ N(mean, precision^-1).

    precision = sum_i psi_i psi_i^T + ridge * I, so its eigenvalues are >= ridge.
    """

    mean: np.ndarray        # (d,)
    precision: np.ndarray   # (d, d)
    ridge: float

    def covariance(self) -> np.ndarray:
        cov = np.linalg.inv(self.precision)
        return 0.5 * (cov + cov.T)


def lsvi_solve(data: FeatureDataset, ridge: float) -> RidgePosterior:
    """Ridge regression of targets onto features; returns the full posterior."""
    if ridge <= 0.0:
        raise ConfigError(f"ridge must be positive, got {ridge}")
    d = data.features.shape[1]
    precision = data.features.T @ data.features + ridge * np.eye(d)
    moment = data.features.T @ data.targets
    mean = np.linalg.solve(precision, moment)
    return RidgePosterior(mean=mean, precision=precision, ridge=ridge)


def lcb_penalty(psi: np.ndarray, precision: np.ndarray) -> float:
    """Confidence width sqrt(psi^T precision^-1 psi); zero iff psi is zero."""
    psi = np.asarray(psi, dtype=np.float64)
    try:
        x = np.linalg.solve(precision, psi)
    except np.linalg.LinAlgError as e:
        raise NumericError(f"singular precision matrix: {e}") from e
    return float(np.sqrt(max(psi @ x, 0.0)))


def lcb_penalty_table(mdp: LinearMdpSpec, precision: np.ndarray) -> np.ndarray:
    """lcb_penalty evaluated at every (s, a) of the MDP; shape (S, A)."""
    flat = mdp.features.reshape(-1, mdp.d)
    sol = np.linalg.solve(precision, flat.T)
    vals = np.einsum("id,di->i", flat, sol)
    return np.sqrt(np.maximum(vals, 0.0)).reshape(mdp.n_states, mdp.n_actions)


def sample_posterior_weights(posterior: RidgePosterior, n_samples: int,
                             rng: np.random.Generator) -> np.ndarray:
    """Draw exact posterior weight vectors, shape (n_samples, d)."""
    chol = np.linalg.cholesky(posterior.covariance())
    z = rng.standard_normal((n_samples, posterior.mean.shape[0]))
    return posterior.mean + z @ chol.T


def posterior_std_check(posterior: RidgePosterior, psi: np.ndarray,
                        n_samples: int, seed: int) -> tuple[float, float]:
    """Analytic vs Monte-Carlo standard deviation of psi^T w under the posterior.

    The analytic value is exactly lcb_penalty(psi, precision); the sampled value
    is the population std of psi^T w over n_samples exact posterior draws.
    """
    if n_samples < 2:
        raise ConfigError("n_samples must be >= 2")
    analytic = lcb_penalty(psi, posterior.precision)
    ws = sample_posterior_weights(posterior, n_samples, np.random.default_rng(seed))
    sampled = float(np.std(ws @ np.asarray(psi, dtype=np.float64)))
    return analytic, sampled


# ---------------------------------------------------------------------------
# Exact Bellman arithmetic.

def _policy_per_step(policy: np.ndarray, horizon: int, S: int, A: int) -> np.ndarray:
    policy = np.asarray(policy, dtype=np.float64)
    if policy.shape == (S, A):
        return np.broadcast_to(policy, (horizon, S, A))
    if policy.shape == (horizon, S, A):
        return policy
    raise ShapeError(f"policy shape {policy.shape} fits neither (S,A) nor (T,S,A)")


def exact_values(mdp: LinearMdpSpec, policy: np.ndarray,
                 tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Exact Q and V tables for an explicit policy.

    Finite horizon (mdp.horizon = T): backward induction; returns Q of shape
    (T, S, A) and V of shape (T+1, S) with V[T] = 0.  Infinite horizon:
    fixed-point iteration on the discounted equations to sup-norm tol;
    returns Q of shape (S, A) and V of shape (S,).
    """
    P = mdp.transition_tensor()
    R = mdp.reward_table()
    S, A = mdp.n_states, mdp.n_actions
    if mdp.horizon is not None:
        T = mdp.horizon
        pi = _policy_per_step(policy, T, S, A)
        Q = np.zeros((T, S, A))
        V = np.zeros((T + 1, S))
        for t in reversed(range(T)):
            Q[t] = R + mdp.gamma * P @ V[t + 1]
            V[t] = np.einsum("sa,sa->s", pi[t], Q[t])
        return Q, V
    pi = np.asarray(policy, dtype=np.float64)
    if pi.shape != (S, A):
        raise ShapeError("infinite-horizon mode needs a stationary (S, A) policy")
    V = np.zeros(S)
    for _ in range(100_000):
        Q = R + mdp.gamma * P @ V
        V_new = np.einsum("sa,sa->s", pi, Q)
        if np.max(np.abs(V_new - V)) < tol:
            return R + mdp.gamma * P @ V_new, V_new
        V = V_new
    raise NumericError("value iteration failed to converge")


def optimal_values(mdp: LinearMdpSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Finite-horizon optimal Q*, V*, and a greedy deterministic policy."""
    if mdp.horizon is None:
        raise ConfigError("optimal_values requires a finite horizon")
    P = mdp.transition_tensor()
    R = mdp.reward_table()
    T, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
    Q = np.zeros((T, S, A))
    V = np.zeros((T + 1, S))
    pi = np.zeros((T, S, A))
    for t in reversed(range(T)):
        Q[t] = R + mdp.gamma * P @ V[t + 1]
        best = np.argmax(Q[t], axis=1)
        V[t] = Q[t][np.arange(S), best]
        pi[t, np.arange(S), best] = 1.0
    return Q, V, pi


# ---------------------------------------------------------------------------
# Episodic data generation and the empirical coverage of the penalty.

@dataclass
class EpisodeBatch:
    """m episodes of horizon T over a finite MDP, stored per timestep."""

    states: np.ndarray       # (m, T) int
    actions: np.ndarray      # (m, T) int
    rewards: np.ndarray      # (m, T)
    next_states: np.ndarray  # (m, T) int


def _sample_rows(prob_rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of a (m, K) probability matrix."""
    cdf = np.cumsum(prob_rows, axis=1)
    u = rng.random(prob_rows.shape[0])
    return np.minimum((u[:, None] > cdf).sum(axis=1), prob_rows.shape[1] - 1)


def rollout_episodes(mdp: LinearMdpSpec, behavior_policy: np.ndarray,
                     episodes: int, rng: np.random.Generator) -> EpisodeBatch:
    """Roll m episodes from the fixed initial state under a stationary policy."""
    if mdp.horizon is None:
        raise ConfigError("rollout_episodes requires a finite horizon")
    P = mdp.transition_tensor()
    R = mdp.reward_table()
    T = mdp.horizon
    m = episodes
    states = np.zeros((m, T), dtype=np.int64)
    actions = np.zeros((m, T), dtype=np.int64)
    rewards = np.zeros((m, T))
    next_states = np.zeros((m, T), dtype=np.int64)
    s = np.full(m, mdp.initial_state, dtype=np.int64)
    for t in range(T):
        a = _sample_rows(behavior_policy[s], rng)
        s_next = _sample_rows(P[s, a], rng)
        states[:, t] = s
        actions[:, t] = a
        rewards[:, t] = R[s, a]
        next_states[:, t] = s_next
        s = s_next
    return EpisodeBatch(states, actions, rewards, next_states)


@dataclass
class CoverageReport:
    """Empirical validity of tau * penalty as a deviation bound."""

    tau_grid: np.ndarray
    tuple_coverage: np.ndarray    # fraction of (s, a, t, trial) tuples covered
    uniform_coverage: np.ndarray  # fraction of trials covered at every (s, a, t)
    n_tuples: int


def xi_quantifier_check(mdp: LinearMdpSpec, behavior_policy: np.ndarray,
                        episodes: int, ridge: float, tau_grid,
                        trials: int, seed: int) -> CoverageReport:
    """Regenerate datasets and measure how often the ridge-regression backup
    deviates from the exact backup by more than tau times the penalty.

    Targets are frozen at the exact optimal continuation values, so each
    step-t regression estimates a fixed function and the deviation
    |estimated backup - exact backup| is compared to tau * penalty at every
    state-action pair.  Coverage is nondecreasing in tau by construction.
    """
    if trials < 100:
        raise ConfigError("trials must be >= 100")
    tau_grid = np.sort(np.asarray(tau_grid, dtype=np.float64))
    _, V_star, _ = optimal_values(mdp)
    P = mdp.transition_tensor()
    R = mdp.reward_table()
    T = mdp.horizon
    flat_psi = mdp.features.reshape(-1, mdp.d)
    tuple_hits = np.zeros(tau_grid.shape[0], dtype=np.int64)
    uniform_hits = np.zeros(tau_grid.shape[0], dtype=np.int64)
    n_per_trial = T * mdp.n_states * mdp.n_actions
    for trial in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence([seed, trial]))
        batch = rollout_episodes(mdp, behavior_policy, episodes, rng)
        ok_counts = np.zeros(tau_grid.shape[0], dtype=np.int64)
        for t in range(T):
            psi_rows = mdp.features[batch.states[:, t], batch.actions[:, t]]
            y = batch.rewards[:, t] + mdp.gamma * V_star[t + 1][batch.next_states[:, t]]
            post = lsvi_solve(FeatureDataset(psi_rows, y), ridge)
            est_backup = (flat_psi @ post.mean).reshape(mdp.n_states, mdp.n_actions)
            exact_backup = R + mdp.gamma * P @ V_star[t + 1]
            dev = np.abs(est_backup - exact_backup)
            pen = lcb_penalty_table(mdp, post.precision)
            for k, tau in enumerate(tau_grid):
                ok_counts[k] += int(np.count_nonzero(dev <= tau * pen))
        tuple_hits += ok_counts
        uniform_hits += (ok_counts == n_per_trial).astype(np.int64)
    n_tuples = trials * n_per_trial
    return CoverageReport(tau_grid, tuple_hits / n_tuples, uniform_hits / trials,
                          n_tuples)


# ---------------------------------------------------------------------------
# Pessimistic value iteration from data, and the value-gap bound.

def pessimistic_lsvi(mdp: LinearMdpSpec, batch: EpisodeBatch, ridge: float,
                     penalty_scale: float) -> tuple[np.ndarray, np.ndarray]:
    """Backward ridge value iteration with a subtracted confidence penalty.

    Per step: regress r + gamma * Vhat_{t+1}(s') onto psi, estimate
    Q(s,a) = psi^T mean - penalty_scale * penalty(s,a), truncate to the
    feasible value range, act greedily.  Returns the greedy policy (T, S, A)
    and the raw (unscaled) penalty table (T, S, A).
    """
    if mdp.horizon is None:
        raise ConfigError("pessimistic_lsvi requires a finite horizon")
    T, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
    flat_psi = mdp.features.reshape(-1, mdp.d)
    policy = np.zeros((T, S, A))
    penalties = np.zeros((T, S, A))
    V_hat = np.zeros(S)
    vmax = 0.0
    for t in reversed(range(T)):
        vmax = 1.0 + mdp.gamma * vmax   # rewards live in [0, 1]
        psi_rows = mdp.features[batch.states[:, t], batch.actions[:, t]]
        y = batch.rewards[:, t] + mdp.gamma * V_hat[batch.next_states[:, t]]
        post = lsvi_solve(FeatureDataset(psi_rows, y), ridge)
        pen = lcb_penalty_table(mdp, post.precision)
        q_hat = (flat_psi @ post.mean).reshape(S, A) - penalty_scale * pen
        q_hat = np.clip(q_hat, 0.0, vmax)
        best = np.argmax(q_hat, axis=1)
        policy[t] = 0.0
        policy[t, np.arange(S), best] = 1.0
        penalties[t] = pen
        V_hat = q_hat[np.arange(S), best]
    return policy, penalties


def suboptimality_gap(mdp: LinearMdpSpec, learned_policy: np.ndarray,
                      penalty_table: np.ndarray) -> tuple[float, float]:
    """Exact value gap at the initial state vs the penalty bound.

    gap = V*(s1) - V^pi(s1); bound = sum_t E under the optimal policy of
    penalty_table[t, s_t, a_t] starting from s1, both by dynamic programming.
    """
    if mdp.horizon is None:
        raise ConfigError("suboptimality_gap requires a finite horizon")
    T, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
    penalty_table = np.asarray(penalty_table, dtype=np.float64)
    if penalty_table.shape != (T, S, A):
        raise ShapeError(f"penalty table shape {penalty_table.shape} != {(T, S, A)}")
    _, V_star, pi_star = optimal_values(mdp)
    _, V_pi = exact_values(mdp, learned_policy)
    s1 = mdp.initial_state
    gap = float(V_star[0, s1] - V_pi[0, s1])
    P = mdp.transition_tensor()
    occupancy = np.zeros(S)
    occupancy[s1] = 1.0
    bound = 0.0
    for t in range(T):
        sa_occ = occupancy[:, None] * pi_star[t]
        bound += float(np.sum(sa_occ * penalty_table[t]))
        occupancy = np.einsum("sa,sat->t", sa_occ, P)
    return gap, bound
