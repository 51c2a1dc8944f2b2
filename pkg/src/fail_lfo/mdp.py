"""Explicit finite-horizon decision processes with exact dynamic programming.

Steps are numbered ``1..H`` in every public signature; per-step containers are
plain tuples indexed by ``h - 1``.  Observations at step ``h`` are the integers
``0..obs_counts[h-1]-1``.  Costs live only on the last step.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from . import kernels
from .rng import make_rng

SCHEMA_VERSION = 1
PROB_TOL = 1e-9


class MdpError(ValueError):
    """Raised for malformed processes, policies or step indices."""


def _frozen(a, dtype=np.float64):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _check_simplex(arr, what):
    if np.any(arr < -PROB_TOL) or not np.all(np.isfinite(arr)):
        raise MdpError(f"{what} has negative or non-finite entries")
    sums = arr.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > PROB_TOL):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise MdpError(f"{what} rows must sum to 1 (worst deviation {worst:.3g})")


def _row_cdf(p):
    """Cumulative rows whose tail (from the last positive entry on) is exactly 1."""
    p = np.asarray(p, dtype=np.float64)
    p2 = p.reshape(-1, p.shape[-1])
    cdf = np.cumsum(p2, axis=1)
    width = p2.shape[1]
    last = width - 1 - np.argmax((p2 > 0)[:, ::-1], axis=1)
    cdf[np.arange(width)[None, :] >= last[:, None]] = 1.0
    return np.ascontiguousarray(cdf)


@dataclass(frozen=True, eq=False)
class Mdp:
    """Finite-horizon process with terminal costs.

    ``transitions[h-1]`` has shape ``(obs_counts[h-1], K, obs_counts[h])``.
    ``metric`` (optional) holds one symmetric distance matrix per step and
    ``abstraction`` one integer block label per observation per step.
    """

    horizon: int
    obs_counts: tuple
    action_count: int
    transitions: tuple
    terminal_cost: np.ndarray
    initial_dist: np.ndarray
    metric: Optional[tuple] = None
    abstraction: Optional[tuple] = None

    def __post_init__(self):
        H = int(self.horizon)
        if H < 1:
            raise MdpError("horizon must be positive")
        counts = tuple(int(c) for c in self.obs_counts)
        if len(counts) != H or min(counts) < 1:
            raise MdpError("obs_counts needs one positive entry per step")
        K = int(self.action_count)
        if K < 1:
            raise MdpError("action_count must be positive")
        if len(self.transitions) != H - 1:
            raise MdpError(f"expected {H - 1} transition tensors, got {len(self.transitions)}")
        trans = []
        for h, P in enumerate(self.transitions, start=1):
            P = _frozen(P)
            if P.shape != (counts[h - 1], K, counts[h]):
                raise MdpError(f"transition at step {h} has shape {P.shape}, "
                               f"expected {(counts[h - 1], K, counts[h])}")
            _check_simplex(P, f"transition at step {h}")
            trans.append(P)
        cost = _frozen(self.terminal_cost)
        if cost.shape != (counts[-1],):
            raise MdpError("terminal_cost must cover the last step's observations")
        if np.any(cost < 0) or np.any(cost > 1):
            raise MdpError("terminal_cost must lie in [0, 1]")
        rho = _frozen(self.initial_dist)
        if rho.shape != (counts[0],):
            raise MdpError("initial_dist must cover the first step's observations")
        _check_simplex(rho, "initial_dist")
        metric = None
        if self.metric is not None:
            if len(self.metric) != H:
                raise MdpError("metric needs one matrix per step")
            metric = []
            for h, d in enumerate(self.metric, start=1):
                d = _frozen(d)
                if d.shape != (counts[h - 1],) * 2:
                    raise MdpError(f"metric at step {h} has wrong shape")
                metric.append(d)
            metric = tuple(metric)
        abstraction = None
        if self.abstraction is not None:
            if len(self.abstraction) != H:
                raise MdpError("abstraction needs one label vector per step")
            abstraction = []
            for h, phi in enumerate(self.abstraction, start=1):
                phi = _frozen(phi, dtype=np.int64)
                if phi.shape != (counts[h - 1],) or np.any(phi < 0):
                    raise MdpError(f"abstraction at step {h} is malformed")
                abstraction.append(phi)
            abstraction = tuple(abstraction)
        object.__setattr__(self, "horizon", H)
        object.__setattr__(self, "obs_counts", counts)
        object.__setattr__(self, "action_count", K)
        object.__setattr__(self, "transitions", tuple(trans))
        object.__setattr__(self, "terminal_cost", cost)
        object.__setattr__(self, "initial_dist", rho)
        object.__setattr__(self, "metric", metric)
        object.__setattr__(self, "abstraction", abstraction)

    def n_obs(self, h):
        self.check_step(h)
        return self.obs_counts[h - 1]

    def transition(self, h):
        """Transition tensor out of step ``h`` (``1 <= h <= H-1``)."""
        if not 1 <= h <= self.horizon - 1:
            raise MdpError(f"no transition out of step {h}")
        return self.transitions[h - 1]

    def with_terminal_cost(self, cost):
        """Same dynamics with new terminal costs.

        Skips revalidating the transition tensors and shares the cached
        sampling tables, which matters for large deterministic trees.
        """
        cost = _frozen(cost)
        if cost.shape != self.terminal_cost.shape:
            raise MdpError("terminal_cost must cover the last step's observations")
        if np.any(cost < 0) or np.any(cost > 1):
            raise MdpError("terminal_cost must lie in [0, 1]")
        self._transition_cdfs, self._initial_cdf  # build once, then share
        new = object.__new__(Mdp)
        new.__dict__.update(self.__dict__)
        object.__setattr__(new, "terminal_cost", cost)
        return new

    def check_step(self, h):
        if not 1 <= int(h) <= self.horizon:
            raise MdpError(f"step {h} outside [1, {self.horizon}]")

    def check_metric(self, tol=1e-12):
        """Exhaustively verify the metric axioms on every step; returns True or raises."""
        if self.metric is None:
            raise MdpError("process has no metric")
        for h, d in enumerate(self.metric, start=1):
            if np.any(np.abs(np.diag(d)) > tol) or np.any(d < -tol):
                raise MdpError(f"metric at step {h} is not a distance")
            if np.any(np.abs(d - d.T) > tol):
                raise MdpError(f"metric at step {h} is not symmetric")
            # d[x, z] <= d[x, y] + d[y, z] for all triples
            through = d[:, :, None] + d[None, :, :]
            if np.any(d[:, None, :] > through + tol):
                raise MdpError(f"metric at step {h} violates the triangle inequality")
        return True

    @cached_property
    def _transition_cdfs(self):
        return tuple(_row_cdf(P) for P in self.transitions)

    @cached_property
    def _initial_cdf(self):
        return _row_cdf(self.initial_dist[None, :])

    # -- serialisation -------------------------------------------------
    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "horizon": self.horizon,
            "obs_counts": list(self.obs_counts),
            "action_count": self.action_count,
            "transitions": [P.tolist() for P in self.transitions],
            "terminal_cost": self.terminal_cost.tolist(),
            "initial_dist": self.initial_dist.tolist(),
            "metric": None if self.metric is None else [d.tolist() for d in self.metric],
            "abstraction": None if self.abstraction is None else [p.tolist() for p in self.abstraction],
        }

    @classmethod
    def from_dict(cls, doc):
        version = doc.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise MdpError(f"unsupported MDP schema version {version}")
        return cls(
            horizon=doc["horizon"],
            obs_counts=tuple(doc["obs_counts"]),
            action_count=doc["action_count"],
            transitions=tuple(np.asarray(P, dtype=np.float64) for P in doc["transitions"]),
            terminal_cost=np.asarray(doc["terminal_cost"], dtype=np.float64),
            initial_dist=np.asarray(doc["initial_dist"], dtype=np.float64),
            metric=None if doc.get("metric") is None else tuple(np.asarray(d) for d in doc["metric"]),
            abstraction=None if doc.get("abstraction") is None else tuple(
                np.asarray(p, dtype=np.int64) for p in doc["abstraction"]),
        )

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class PolicySequence:
    """Time-indexed stochastic policies; ``policies[h-1]`` has shape ``(|X_h|, K)``.

    A sequence may be a prefix (fewer than ``H-1`` entries) while training.
    """

    policies: tuple = ()

    def __post_init__(self):
        pols = []
        for h, p in enumerate(self.policies, start=1):
            p = _frozen(p)
            if p.ndim != 2:
                raise MdpError(f"policy at step {h} must be a (states, actions) table")
            _check_simplex(p, f"policy at step {h}")
            pols.append(p)
        object.__setattr__(self, "policies", tuple(pols))

    def __len__(self):
        return len(self.policies)

    def at(self, h):
        if not 1 <= h <= len(self.policies):
            raise MdpError(f"policy for step {h} is missing")
        return self.policies[h - 1]

    def append(self, policy):
        return PolicySequence(self.policies + (policy,))

    def replace(self, h, policy):
        pols = list(self.policies)
        pols[h - 1] = policy
        return PolicySequence(tuple(pols))

    def prefix(self, steps):
        return PolicySequence(self.policies[:steps])

    def check(self, mdp, steps=None):
        steps = mdp.horizon - 1 if steps is None else steps
        if len(self.policies) < steps:
            raise MdpError(f"policy sequence covers {len(self.policies)} steps, need {steps}")
        for h in range(1, steps + 1):
            if self.policies[h - 1].shape != (mdp.obs_counts[h - 1], mdp.action_count):
                raise MdpError(f"policy at step {h} does not match the process shape")
        return self

    @classmethod
    def uniform(cls, mdp):
        K = mdp.action_count
        return cls(tuple(np.full((n, K), 1.0 / K) for n in mdp.obs_counts[:-1]))

    @classmethod
    def deterministic(cls, mdp, actions):
        """Build from per-step arrays of chosen action indices."""
        pols = []
        for h, acts in enumerate(actions, start=1):
            acts = np.broadcast_to(np.asarray(acts, dtype=np.int64), (mdp.obs_counts[h - 1],))
            pol = np.zeros((mdp.obs_counts[h - 1], mdp.action_count))
            pol[np.arange(len(acts)), acts] = 1.0
            pols.append(pol)
        return cls(tuple(pols))

    def to_dict(self):
        return {"policies": [p.tolist() for p in self.policies]}

    @classmethod
    def from_dict(cls, doc):
        return cls(tuple(np.asarray(p, dtype=np.float64) for p in doc["policies"]))


@dataclass(frozen=True)
class Trajectory:
    """One sampled episode (possibly truncated before step H).

    ``action_probs[t]`` is the probability with which ``actions[t]`` was drawn;
    ``cost`` is ``None`` when the episode stops before the last step.
    """

    observations: np.ndarray
    actions: np.ndarray
    action_probs: np.ndarray
    cost: Optional[float] = None

    @property
    def length(self):
        return len(self.observations)


@dataclass(frozen=True)
class TrajectoryBatch:
    """``count`` episodes stored column-wise; column ``t`` is step ``t+1``."""

    observations: np.ndarray
    actions: np.ndarray
    action_probs: np.ndarray
    costs: Optional[np.ndarray] = None

    def __len__(self):
        return self.observations.shape[0]

    def __getitem__(self, i):
        cost = None if self.costs is None else float(self.costs[i])
        return Trajectory(self.observations[i].copy(), self.actions[i].copy(),
                          self.action_probs[i].copy(), cost)

    def obs(self, h):
        return self.observations[:, h - 1]


def _resolve_stop(mdp, policies, explore_step, stop):
    H = mdp.horizon
    if explore_step is not None and not 1 <= explore_step <= H - 1:
        raise MdpError(f"explore_step {explore_step} outside [1, {H - 1}]")
    if stop is None:
        if len(policies) >= H - 1:
            stop = H
        elif explore_step is not None:
            stop = explore_step + 1
        else:
            stop = len(policies) + 1
    if not 1 <= stop <= H:
        raise MdpError(f"stop step {stop} outside [1, {H}]")
    for t in range(1, stop):
        if t == explore_step:
            continue
        if t > len(policies):
            raise MdpError(f"policy for step {t} is missing")
        if policies.policies[t - 1].shape != (mdp.obs_counts[t - 1], mdp.action_count):
            raise MdpError(f"policy at step {t} does not match the process shape")
    return stop


def rollout_batch(mdp: Mdp, policies: PolicySequence, seed: int, count: int,
                  explore_step: Optional[int] = None, stop: Optional[int] = None,
                  backend=None) -> TrajectoryBatch:
    """Sample ``count`` episodes from a single seeded stream.

    At ``explore_step`` the action is uniform over the K actions (recorded
    probability ``1/K``); elsewhere it is drawn from the policy.  Episodes end
    at step ``stop`` (default: as far as the policies reach, or one step past
    the exploration step).  Row ``i`` depends only on ``(seed, i)`` and the
    uniforms drawn for earlier steps, so truncation never changes a prefix.
    """
    if count < 0:
        raise MdpError("count must be nonnegative")
    kern = kernels.get_backend(backend)
    stop = _resolve_stop(mdp, policies, explore_step, stop)
    H, K = mdp.horizon, mdp.action_count
    rng = make_rng(seed)
    # fixed width 2H-1 regardless of stop; values in (0, 1]
    u = 1.0 - rng.random((count, 2 * H - 1))
    obs = np.empty((count, stop), dtype=np.int64)
    acts = np.empty((count, stop - 1), dtype=np.int64)
    probs = np.empty((count, stop - 1), dtype=np.float64)
    obs[:, 0] = kern.sample_rows(mdp._initial_cdf, np.zeros(count, dtype=np.int64), u[:, 0])
    uniform_cdf = _row_cdf(np.full((1, K), 1.0 / K))
    for t in range(1, stop):
        x = obs[:, t - 1]
        if t == explore_step:
            a = kern.sample_rows(uniform_cdf, np.zeros(count, dtype=np.int64), u[:, 2 * t - 1])
            p = np.full(count, 1.0 / K)
        else:
            pol = policies.policies[t - 1]
            a = kern.sample_rows(_row_cdf(pol), x, u[:, 2 * t - 1])
            p = pol[x, a]
        acts[:, t - 1] = a
        probs[:, t - 1] = p
        obs[:, t] = kern.sample_rows(mdp._transition_cdfs[t - 1], x * K + a, u[:, 2 * t])
    costs = mdp.terminal_cost[obs[:, -1]] if stop == H else None
    return TrajectoryBatch(obs, acts, probs, costs)


def rollout(mdp: Mdp, policies: PolicySequence, seed: int,
            explore_step: Optional[int] = None, stop: Optional[int] = None) -> Trajectory:
    """Single seeded episode; identical to row 0 of ``rollout_batch`` with the same seed."""
    return rollout_batch(mdp, policies, seed, 1, explore_step=explore_step, stop=stop)[0]


def step_from(mdp: Mdp, h: int, states, actions, seed: int, backend=None):
    """Sample next observations from ``(states, actions)`` at step ``h``."""
    kern = kernels.get_backend(backend)
    states = np.asarray(states, dtype=np.int64)
    actions = np.asarray(actions, dtype=np.int64)
    u = 1.0 - make_rng(seed).random(len(states))
    mdp.transition(h)
    return kern.sample_rows(mdp._transition_cdfs[h - 1], states * mdp.action_count + actions, u)


def sample_actions(policy, states, seed: int, backend=None):
    """Draw one action per state from the policy table; returns ``(actions, probs)``."""
    kern = kernels.get_backend(backend)
    states = np.asarray(states, dtype=np.int64)
    u = 1.0 - make_rng(seed).random(len(states))
    a = kern.sample_rows(_row_cdf(policy), states, u)
    return a, np.asarray(policy)[states, a]


# -- exact dynamic programming ---------------------------------------------

def push_forward(mu, policy, P):
    """Next-step marginal: sum_{x,a} mu[x] policy[x,a] P[x,a,x']."""
    return np.einsum("x,xa,xay->y", mu, policy, P)


def state_distributions(mdp: Mdp, policies: PolicySequence, upto: Optional[int] = None):
    """Exact marginals ``[mu_1, ..., mu_upto]`` under the policy prefix."""
    upto = mdp.horizon if upto is None else upto
    mdp.check_step(upto)
    policies.check(mdp, upto - 1)
    mus = [np.array(mdp.initial_dist)]
    for t in range(1, upto):
        mus.append(push_forward(mus[-1], policies.policies[t - 1], mdp.transitions[t - 1]))
    return mus


def exact_state_distribution(mdp: Mdp, policies: PolicySequence, h: int):
    mdp.check_step(h)
    return state_distributions(mdp, policies, h)[-1]


def policy_values(mdp: Mdp, policies: PolicySequence):
    """Backward induction: ``(V[h-1] over X_h, Q[h-1] over X_h x A)`` for the given policies."""
    policies.check(mdp)
    H = mdp.horizon
    V = [None] * H
    Q = [None] * (H - 1)
    V[H - 1] = np.array(mdp.terminal_cost)
    for h in range(H - 1, 0, -1):
        Q[h - 1] = mdp.transitions[h - 1] @ V[h]
        V[h - 1] = np.einsum("xa,xa->x", policies.policies[h - 1], Q[h - 1])
    return V, Q


def exact_value(mdp: Mdp, policies: PolicySequence) -> float:
    """Expected terminal cost J(pi)."""
    V, _ = policy_values(mdp, policies)
    return float(mdp.initial_dist @ V[0])


def expert_value_functions(mdp: Mdp, expert: PolicySequence):
    """``(V*, Q*)`` of the expert: ``V*_H = c`` and ``V*_h = Gamma_h V*_{h+1}``."""
    return policy_values(mdp, expert)


def bellman_backup(mdp: Mdp, h: int, policy, f_next):
    """Expert-style backup of a tabulated function: x -> E_{a~policy, x'~P} f(x')."""
    return np.einsum("xa,xa->x", policy, mdp.transition(h) @ np.asarray(f_next, dtype=np.float64))


def performance_difference(mdp: Mdp, learner: PolicySequence, expert: PolicySequence):
    """Per-step expert-advantage terms whose sum is J(learner) - J(expert)."""
    V, Q = expert_value_functions(mdp, expert)
    mus = state_distributions(mdp, learner)
    terms = np.empty(mdp.horizon - 1)
    for h in range(1, mdp.horizon):
        adv = np.einsum("xa,xa->x", learner.policies[h - 1], Q[h - 1]) - V[h - 1]
        terms[h - 1] = mus[h - 1] @ adv
    return float(terms.sum()), terms


def optimal_policy(mdp: Mdp):
    """Deterministic cost-minimising policy; ties go to the lowest action index."""
    H = mdp.horizon
    V = np.array(mdp.terminal_cost)
    actions = [None] * (H - 1)
    for h in range(H - 1, 0, -1):
        Q = mdp.transitions[h - 1] @ V
        actions[h - 1] = np.argmin(Q, axis=1)
        V = Q[np.arange(Q.shape[0]), actions[h - 1]]
    return PolicySequence.deterministic(mdp, actions)


@dataclass
class MeteredEnv:
    """Sampling access to an MDP that counts environment resets.

    Training drivers only touch the process through this wrapper so the
    number of trajectories they consume can be audited.
    """

    mdp: Mdp
    trajectories: int = 0
    expert_queries: int = 0
    log: list = field(default_factory=list)

    def rollouts(self, policies, seed, count, explore_step=None, stop=None):
        batch = rollout_batch(self.mdp, policies, seed, count, explore_step=explore_step, stop=stop)
        self.trajectories += count
        self.log.append(("rollouts", count))
        return batch

    def expert_step(self, expert: PolicySequence, h: int, states, seed: int):
        """Let the expert act once from ``states`` at step ``h``; returns next observations only."""
        a_seed, x_seed = np.random.SeedSequence(int(seed)).generate_state(2, np.uint64)
        actions, _ = sample_actions(expert.at(h), states, int(a_seed))
        self.expert_queries += len(states)
        return step_from(self.mdp, h, states, actions, int(x_seed))


class PropensityError(ValueError):
    """A recorded action probability is zero (importance weight undefined)."""


@dataclass(frozen=True)
class Transitions:
    """Learner tuples ``(x_h, a_h, p_h, x_{h+1})`` for a single step.

    ``p`` is the probability with which ``a`` was drawn at ``x``.
    """

    x: np.ndarray
    a: np.ndarray
    p: np.ndarray
    x_next: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.int64).ravel()
        n = x.size
        vals = {"x": x}
        for name, dtype in (("a", np.int64), ("p", np.float64), ("x_next", np.int64)):
            arr = np.asarray(getattr(self, name), dtype=dtype).ravel()
            if arr.size != n:
                raise MdpError("transition fields must have equal length")
            vals[name] = arr
        for name, val in vals.items():
            object.__setattr__(self, name, val)

    def __len__(self):
        return self.x.size

    def check_propensities(self):
        if np.any(~(self.p > 0)):
            raise PropensityError("zero recorded propensity; importance weight undefined")
        return self

    @classmethod
    def from_batch(cls, batch: TrajectoryBatch, h: int):
        """Slice the step-``h`` tuples out of a trajectory batch."""
        return cls(batch.observations[:, h - 1], batch.actions[:, h - 1],
                   batch.action_probs[:, h - 1], batch.observations[:, h])

    def to_records(self):
        return [{"x": int(x), "a": int(a), "p": float(p), "x_next": int(y)}
                for x, a, p, y in zip(self.x, self.a, self.p, self.x_next)]
