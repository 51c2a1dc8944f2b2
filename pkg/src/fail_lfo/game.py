"""Single-step min-max game between a policy player and a discriminator.

The discriminator best-responds through its class oracle; the policy player
runs follow-the-regularized-leader with an entropy regulariser, whose
minimiser has the closed form of exponential weights.  A softmax
policy-gradient variant replaces FTRL by gradient descent on the logits.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .discriminators import FunctionClass, two_sample_weights
from .mdp import PropensityError, Transitions


class GameError(RuntimeError):
    pass


class PropensityMismatch(ValueError):
    """Data are not on-policy for the parameters the REINFORCE form was asked for."""


def policy_digest(policy):
    return hashlib.sha1(np.round(np.asarray(policy, dtype=np.float64), 10).tobytes()).hexdigest()[:12]


# -- policy classes -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FiniteList:
    """Explicit candidate policies, ``candidates[j]`` of shape ``(states, K)``."""

    candidates: np.ndarray

    def __post_init__(self):
        cand = np.array(self.candidates, dtype=np.float64)
        if cand.ndim != 3 or cand.shape[0] == 0:
            raise GameError("FiniteList needs a (policies, states, actions) array")
        if np.any(cand < -1e-9) or np.any(np.abs(cand.sum(-1) - 1.0) > 1e-9):
            raise GameError("FiniteList entries must be valid policy rows")
        cand.setflags(write=False)
        object.__setattr__(self, "candidates", cand)

    @property
    def n_states(self):
        return self.candidates.shape[1]

    @property
    def n_actions(self):
        return self.candidates.shape[2]

    @property
    def n_arms(self):
        return self.candidates.shape[0]

    def __len__(self):
        return self.candidates.shape[0]

    def index_of(self, policy, tol=1e-9):
        hits = np.flatnonzero(np.all(np.abs(self.candidates - np.asarray(policy)) <= tol, axis=(1, 2)))
        return int(hits[0]) if hits.size else None


@dataclass(frozen=True)
class TabularSoftmax:
    """All stochastic policies over ``n_states x n_actions`` (softmax of a logit table)."""

    n_states: int
    n_actions: int

    @property
    def n_arms(self):
        return self.n_actions


def softmax_rows(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def mixture_weights(policy_class: FiniteList, cum_costs, eta):
    losses = np.einsum("jxa,xa->j", policy_class.candidates, cum_costs)
    return softmax_rows(-eta * losses)


def ftrl_step(cum_costs, eta, policy_class=None):
    """Entropy-regularised leader for accumulated per-(x, a) costs.

    Tabular softmax: ``pi(a|x) ~ exp(-eta * cum_costs[x, a])``.  Finite list:
    exponential weights over the candidates (each candidate's cumulative loss
    is linear in ``cum_costs``), returned as the mixture's per-state action
    distribution.
    """
    cum_costs = np.asarray(cum_costs, dtype=np.float64)
    if not np.all(np.isfinite(cum_costs)):
        raise GameError("accumulated costs must be finite")
    if policy_class is None or isinstance(policy_class, TabularSoftmax):
        return softmax_rows(-eta * cum_costs)
    w = mixture_weights(policy_class, cum_costs, eta)
    return np.einsum("j,jxa->xa", w, policy_class.candidates)


def default_eta(policy_class, T, K):
    """Exponential-weights rate ``sqrt(2 log(arms) / (T K^2))`` for losses in [-K, K]."""
    arms = policy_class.n_arms
    if arms <= 1:
        return 1.0
    return math.sqrt(2.0 * math.log(arms) / (T * K * K))


# -- utility ------------------------------------------------------------------

def cost_matrix(f_next_values, data: Transitions, n_states, n_actions):
    """Per-(x, a) loss table ``C[x, a] = sum_i 1[x_i=x, a_i=a] f(x'_i) / (p_i N)``.

    For any policy, ``sum_{x,a} pi(a|x) C[x, a]`` is the learner term of the utility.
    """
    data.check_propensities()
    C = np.zeros((n_states, n_actions))
    np.add.at(C, (data.x, data.a), np.asarray(f_next_values) / (data.p * len(data)))
    return C


def utility(policy, f, data: Transitions, expert_obs):
    """``sum_i (pi(a_i|x_i)/p_i) f(x'_i) / N - sum_j f(x~_j) / N'``."""
    data.check_propensities()
    expert_obs = np.asarray(expert_obs, dtype=np.int64)
    if expert_obs.size == 0 or len(data) == 0:
        raise GameError("utility needs nonempty learner and expert data")
    w = np.asarray(policy)[data.x, data.a] / data.p
    return float(np.mean(w * f(data.x_next)) - np.mean(f(expert_obs)))


# -- transcripts --------------------------------------------------------------

@dataclass
class GameTranscript:
    """Per-iteration record of a min-max solve; iterations are numbered from 1."""

    f_ids: list = field(default_factory=list)
    values: list = field(default_factory=list)
    policy_digests: list = field(default_factory=list)
    n_star: Optional[int] = None
    policy: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def record(self, f_id, value, policy):
        self.f_ids.append(f_id)
        self.values.append(float(value))
        self.policy_digests.append(policy_digest(policy))

    def __len__(self):
        return len(self.values)

    @property
    def best_value(self):
        return self.values[self.n_star - 1]

    def records(self):
        for n, (f_id, u, dig) in enumerate(zip(self.f_ids, self.values, self.policy_digests), start=1):
            yield {"iteration": n, "f": f_id, "u": u, "policy": dig, "selected": n == self.n_star,
                   **self.meta}

    def to_jsonl(self):
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records())


def _select(values):
    return int(np.argmin(values)) + 1  # earliest among equal minima


# -- Algorithm: FTRL vs best response -------------------------------------------

def minmax_solve(expert_obs, data: Transitions, policy_class, fclass: FunctionClass, T: int,
                 eta: Optional[float] = None):
    """Solve ``min_pi max_f u(pi, f)`` by FTRL against best responses.

    Returns ``(policy, transcript)`` where ``policy`` is the iterate with the
    smallest recorded game value.
    """
    if T < 1:
        raise GameError("T must be at least 1")
    if len(data) == 0 or len(np.atleast_1d(expert_obs)) == 0:
        raise GameError("min-max game needs nonempty data")
    data.check_propensities()
    n_states = policy_class.n_states
    K = policy_class.n_actions
    if data.x.max() >= n_states or data.a.max() >= K:
        raise GameError("data refer to states or actions outside the policy class")
    eta = default_eta(policy_class, T, K) if eta is None else float(eta)
    cum = np.zeros((n_states, K))
    policy = ftrl_step(cum, eta, policy_class)
    transcript = GameTranscript(meta={})
    iterates = []
    for n in range(1, T + 1):
        points, weights = two_sample_weights(policy, data, expert_obs)
        try:
            f, _ = fclass.best_response(points, weights)
        except Exception as exc:
            raise GameError(f"best-response oracle failed at iteration {n}: {exc}") from exc
        u = utility(policy, f, data, expert_obs)
        transcript.record(f.ident, u, policy)
        iterates.append(policy)
        cum += cost_matrix(f(data.x_next), data, n_states, K)
        policy = ftrl_step(cum, eta, policy_class)
    transcript.n_star = _select(transcript.values)
    transcript.policy = iterates[transcript.n_star - 1]
    transcript.meta["eta"] = eta
    return transcript.policy, transcript


def brute_force_minmax(expert_obs, data: Transitions, candidates, fclass: FunctionClass):
    """``min_j max_f u(pi_j, f)`` over an explicit candidate list (oracle for tests)."""
    best = math.inf
    for pol in candidates:
        points, weights = two_sample_weights(pol, data, expert_obs)
        _, val = fclass.best_response(points, weights)
        best = min(best, val)
    return best


# -- policy-gradient variant ----------------------------------------------------

def utility_gradient(theta, f, data: Transitions):
    """Exact gradient of the utility in the softmax logits.

    ``(1/N) sum_i (pi(a_i|x_i)/p_i) f(x'_i) grad log pi(a_i|x_i)``; at on-policy
    parameters (``p_i = pi(a_i|x_i)``) this is the REINFORCE estimator.
    """
    data.check_propensities()
    theta = np.asarray(theta, dtype=np.float64)
    pi = softmax_rows(theta)
    coef = pi[data.x, data.a] / data.p * f(data.x_next) / len(data)
    grad = np.zeros_like(theta)
    np.add.at(grad, (data.x, data.a), coef)
    np.add.at(grad, data.x, -coef[:, None] * pi[data.x])
    return grad


def reinforce_gradient(theta, f, data: Transitions, tol=1e-9):
    """``(1/N) sum_i grad log pi(a_i|x_i) f(x'_i)``; data must be on-policy for ``theta``."""
    data.check_propensities()
    pi = softmax_rows(theta)
    if np.any(np.abs(pi[data.x, data.a] - data.p) > tol):
        raise PropensityMismatch("recorded propensities differ from the policy's probabilities")
    coef = f(data.x_next) / len(data)
    grad = np.zeros_like(np.asarray(theta, dtype=np.float64))
    np.add.at(grad, (data.x, data.a), coef)
    np.add.at(grad, data.x, -coef[:, None] * pi[data.x])
    return grad


def pg_minmax_solve(expert_obs, data: Transitions, theta0, fclass: FunctionClass, T: int,
                    eta0: float = 1.0, step_sizes=None, form: str = "importance"):
    """Gradient descent on softmax logits against best-response discriminators.

    ``step_sizes`` overrides the default schedule ``eta0 / sqrt(n)``.  With
    ``form="reinforce"`` the data must be on-policy for ``theta0``.  Returns
    ``(theta, transcript)`` with ``theta`` the iterate of smallest game value.
    """
    if T < 1:
        raise GameError("T must be at least 1")
    if form not in ("importance", "reinforce"):
        raise GameError(f"unknown gradient form {form!r}")
    data.check_propensities()
    theta = np.array(theta0, dtype=np.float64)
    if form == "reinforce":
        pi0 = softmax_rows(theta)
        if np.any(np.abs(pi0[data.x, data.a] - data.p) > 1e-9):
            raise PropensityMismatch("data were not generated by the initial policy")
    transcript = GameTranscript(meta={})
    thetas = []
    for n in range(1, T + 1):
        policy = softmax_rows(theta)
        points, weights = two_sample_weights(policy, data, expert_obs)
        try:
            f, _ = fclass.best_response(points, weights)
        except Exception as exc:
            raise GameError(f"best-response oracle failed at iteration {n}: {exc}") from exc
        transcript.record(f.ident, utility(policy, f, data, expert_obs), policy)
        thetas.append(theta.copy())
        step = step_sizes[n - 1] if step_sizes is not None else eta0 / math.sqrt(n)
        theta = theta - step * utility_gradient(theta, f, data)
    transcript.n_star = _select(transcript.values)
    best = thetas[transcript.n_star - 1]
    transcript.policy = softmax_rows(best)
    return best, transcript


__all__ = [
    "FiniteList", "TabularSoftmax", "GameTranscript", "GameError", "PropensityMismatch",
    "PropensityError", "ftrl_step", "default_eta", "cost_matrix", "utility", "minmax_solve",
    "brute_force_minmax", "utility_gradient", "reinforce_gradient", "pg_minmax_solve",
    "softmax_rows", "mixture_weights", "policy_digest",
]
