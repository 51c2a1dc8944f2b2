"""Constructive environments and expert demonstrations.

Every generator takes an explicit seed and returns immutable objects.
"""
from __future__ import annotations

import functools
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .mdp import (Mdp, MdpError, PolicySequence, optimal_policy, policy_values,
                  rollout_batch)
from .rng import child_seed, make_rng

BISIM_TOL = 1e-9


class ConstructionError(ValueError):
    """Construction failed (bad parameters or retries exhausted)."""


# -- demonstrations -----------------------------------------------------------

@dataclass(frozen=True)
class DemoSet:
    """Expert observations per step; ``demos[h-1]`` holds samples from mu*_h."""

    demos: tuple
    seed: int
    n_per_step: int

    def __post_init__(self):
        object.__setattr__(self, "demos", tuple(np.asarray(d, dtype=np.int64) for d in self.demos))

    @property
    def horizon(self):
        return len(self.demos)

    def at(self, h):
        if not 1 <= h <= len(self.demos):
            raise MdpError(f"no demonstrations for step {h}")
        return self.demos[h - 1]

    def count(self, h):
        return len(self.at(h))

    def validate(self, mdp: Mdp):
        if self.horizon != mdp.horizon:
            raise MdpError("demonstration horizon does not match the process")
        for h, d in enumerate(self.demos, start=1):
            if d.size and (d.min() < 0 or d.max() >= mdp.n_obs(h)):
                raise MdpError(f"demonstration at step {h} has an invalid observation")

    def records(self):
        for h, d in enumerate(self.demos, start=1):
            for i, x in enumerate(d):
                yield {"h": h, "x": int(x), "seed_index": i}

    def to_jsonl(self):
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records())

    @classmethod
    def from_jsonl(cls, text, horizon=None, seed=0):
        per = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            extra = set(rec) - {"h", "x", "seed_index"}
            if extra:
                raise MdpError(f"unexpected demonstration fields {sorted(extra)}")
            per.setdefault(int(rec["h"]), []).append((int(rec["seed_index"]), int(rec["x"])))
        H = horizon or (max(per) if per else 0)
        demos = []
        for h in range(1, H + 1):
            rows = sorted(per.get(h, []))
            demos.append(np.array([x for _, x in rows], dtype=np.int64))
        n = min((len(d) for d in demos), default=0)
        return cls(tuple(demos), seed, n)


def generate_demos(mdp: Mdp, expert: PolicySequence, n_per_step: int, seed: int) -> DemoSet:
    """``n_per_step`` i.i.d. expert observations at every step.

    Each step uses its own batch of rollouts so samples at different steps
    never come from the same episode.
    """
    if n_per_step < 1:
        raise MdpError("n_per_step must be at least 1")
    expert.check(mdp)
    demos = []
    for h in range(1, mdp.horizon + 1):
        batch = rollout_batch(mdp, expert, child_seed(seed, h), n_per_step, stop=h)
        demos.append(batch.obs(h).copy())
    return DemoSet(tuple(demos), seed, n_per_step)


# -- binary tree --------------------------------------------------------------

@functools.lru_cache(maxsize=2)
def _tree_skeleton(H: int):
    counts = [2 ** (h - 1) for h in range(1, H + 1)]
    transitions = []
    for h in range(1, H):
        P = np.zeros((counts[h - 1], 2, counts[h]))
        j = np.arange(counts[h - 1])
        P[j, 0, 2 * j] = 1.0
        P[j, 1, 2 * j + 1] = 1.0
        transitions.append(P)
    return Mdp(H, counts, 2, transitions, np.zeros(counts[-1]), np.array([1.0]))


def make_tree_mdp(H: int, leaf_costs):
    """Perfect binary tree with deterministic moves; action 0 goes left, 1 right.

    Node ``j`` at depth ``h`` has children ``2j`` and ``2j+1``.  Returns
    ``(mdp, expert)`` with the expert following the cheapest-leaf path.
    """
    if H < 2:
        raise MdpError("tree needs H >= 2")
    leaf_costs = np.asarray(leaf_costs, dtype=np.float64).ravel()
    if leaf_costs.size != 2 ** (H - 1):
        raise MdpError(f"expected {2 ** (H - 1)} leaf costs, got {leaf_costs.size}")
    if np.count_nonzero(leaf_costs == leaf_costs.min()) != 1:
        raise MdpError("leaf costs must have a unique minimiser")
    mdp = _tree_skeleton(int(H)).with_terminal_cost(leaf_costs)
    return mdp, optimal_policy(mdp)


def tree_path_states(H, leaf):
    """Node index at each depth on the way to ``leaf``."""
    return [leaf >> (H - h) for h in range(1, H + 1)]


def separation_leaf_costs(H, seed):
    """One zero-cost leaf at a seeded position, cost 1 elsewhere."""
    costs = np.ones(2 ** (H - 1))
    costs[int(make_rng(seed).integers(costs.size))] = 0.0
    return costs


# -- Lipschitz chain ----------------------------------------------------------

def _line_metric(n):
    z = np.arange(n) / max(n - 1, 1)
    return np.abs(z[:, None] - z[None, :])


def _smoother(n, width):
    z = np.arange(n) / max(n - 1, 1)
    k = np.exp(-0.5 * ((z[:, None] - z[None, :]) / width) ** 2)
    return k / k.sum(axis=1, keepdims=True)


def lipschitz_ratio(rows, metric):
    """``max_{x != x'} ||rows[x] - rows[x']||_1 / d(x, x')`` over all pairs."""
    rows = np.asarray(rows, dtype=np.float64)
    diff = np.abs(rows[:, None, :] - rows[None, :, :]).sum(-1)
    off = metric > 0
    return float((diff[off] / metric[off]).max()) if off.any() else 0.0


def _smooth_simplex_rows(rng, n, width_cols, smooth, scale):
    noise = rng.standard_normal((n, width_cols))
    logits = scale * (smooth @ noise)
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def make_lipschitz_chain(n_states: int, H: int, K: int, smoothness=(1.0, 1.0), seed: int = 0,
                         max_retries: int = 40, scale: float = 3.0):
    """Chain of ``n_states`` points on [0, 1] per step with Lipschitz dynamics and expert.

    Smoothed Gaussian noise is pushed through a softmax; each draw is
    verified on every state pair and redrawn with a wider kernel on failure.
    The terminal cost is a smooth function with Lipschitz constant at most
    ``L_P + L_pi``.
    """
    L_P, L_pi = (float(v) for v in smoothness)
    if L_P <= 0 or L_pi <= 0:
        raise ConstructionError("Lipschitz constants must be positive")
    if n_states < 1 or H < 2 or K < 1:
        raise ConstructionError("need n_states >= 1, H >= 2, K >= 1")
    rng = make_rng(seed)
    d = _line_metric(n_states)

    def draw(cols, bound):
        width = 1.0 / bound
        for _ in range(max_retries):
            rows = _smooth_simplex_rows(rng, n_states, cols, _smoother(n_states, width), scale)
            if lipschitz_ratio(rows, d) <= bound:
                return rows
            width *= 1.25
        raise ConstructionError(f"no draw met Lipschitz bound {bound} after {max_retries} tries")

    transitions = []
    for _ in range(H - 1):
        P = np.stack([draw(n_states, L_P) for _ in range(K)], axis=1)
        transitions.append(P)
    expert = PolicySequence(tuple(draw(K, L_pi) for _ in range(H - 1)))

    z = np.arange(n_states) / max(n_states - 1, 1)
    raw = np.tanh(_smoother(n_states, 0.2) @ rng.standard_normal(n_states) * 2.0)
    cost = 0.5 + 0.5 * raw
    lc = np.abs(np.diff(cost)).max() / (z[1] - z[0]) if n_states > 1 else 0.0
    bound = L_P + L_pi
    if lc > bound:
        cost = 0.5 + (cost - 0.5) * (bound / lc)
    init = np.full(n_states, 1.0 / n_states)
    mdp = Mdp(H, [n_states] * H, K, transitions, cost, init, metric=[d] * H)
    return mdp, expert


def verify_lipschitz(mdp: Mdp, expert: PolicySequence, L_P, L_pi, tol=1e-12):
    """Exhaustive check of both Lipschitz inequalities; returns the worst ratios."""
    rp = max(lipschitz_ratio(mdp.transitions[h][:, a, :], mdp.metric[h])
             for h in range(mdp.horizon - 1) for a in range(mdp.action_count))
    rpi = max(lipschitz_ratio(expert.policies[h], mdp.metric[h]) for h in range(mdp.horizon - 1))
    return (rp <= L_P + tol and rpi <= L_pi + tol), rp, rpi


# -- bisimulation -------------------------------------------------------------

def _dirichlet(rng, shape, alpha=1.0):
    g = rng.gamma(alpha, size=shape)
    g = np.maximum(g, 1e-300)
    return g / g.sum(axis=-1, keepdims=True)


def make_abstraction_mdp(concrete_per_abstract: int, abstract_count: int, H: int, K: int,
                         seed: int = 0):
    """Lift a random abstract process so that ``x // concrete_per_abstract`` is a bisimulation.

    Mass moving into an abstract block is split across its concrete members
    by a random (state, action)-dependent share.  The expert is the lifted
    optimal abstract policy.
    """
    m, S = int(concrete_per_abstract), int(abstract_count)
    if m < 1 or S < 1 or H < 2 or K < 1:
        raise ConstructionError("sizes must be positive and H >= 2")
    rng = make_rng(seed)
    phi = np.repeat(np.arange(S), m)
    n = m * S
    abstract_P = [_dirichlet(rng, (S, K, S)) for _ in range(H - 1)]
    abstract_c = rng.random(S)
    abstract = Mdp(H, [S] * H, K, abstract_P, abstract_c, np.full(S, 1.0 / S))
    abstract_expert = optimal_policy(abstract)
    transitions = []
    for P in abstract_P:
        share = _dirichlet(rng, (n, K, S, m))
        transitions.append((P[phi][:, :, :, None] * share).reshape(n, K, n))
    cost = abstract_c[phi]
    init = np.full(n, 1.0 / n)
    mdp = Mdp(H, [n] * H, K, transitions, cost, init, abstraction=[phi] * H)
    expert = PolicySequence(tuple(p[phi] for p in abstract_expert.policies))
    return mdp, expert


@dataclass(frozen=True)
class BisimulationResult:
    ok: bool
    violation: Optional[dict] = None

    def __bool__(self):
        return self.ok


def verify_bisimulation(mdp: Mdp, expert: PolicySequence, tol: float = BISIM_TOL):
    """Exhaustively check costs, expert actions and block-aggregated transitions.

    Returns the first violating tuple in the order (cost, policy, transition)
    by step and state index.
    """
    if mdp.abstraction is None:
        raise MdpError("process has no abstraction map")
    H, K = mdp.horizon, mdp.action_count
    phi = [np.asarray(p) for p in mdp.abstraction]
    c, phiH = mdp.terminal_cost, phi[H - 1]
    for x in range(len(c)):
        for y in range(x + 1, len(c)):
            if phiH[x] == phiH[y] and abs(c[x] - c[y]) > tol:
                return BisimulationResult(False, {"kind": "cost", "h": H, "x": x, "x2": y,
                                                  "lhs": float(c[x]), "rhs": float(c[y])})
    for h in range(1, H):
        ph, pn = phi[h - 1], phi[h]
        pol = expert.at(h)
        S_next = int(pn.max()) + 1
        agg = np.zeros((mdp.n_obs(h), K, S_next))
        np.add.at(agg.transpose(2, 0, 1), pn, mdp.transition(h).transpose(2, 0, 1))
        for x in range(mdp.n_obs(h)):
            for y in range(x + 1, mdp.n_obs(h)):
                if ph[x] != ph[y]:
                    continue
                for a in range(K):
                    if abs(pol[x, a] - pol[y, a]) > tol:
                        return BisimulationResult(False, {"kind": "policy", "h": h, "x": x, "x2": y,
                                                          "a": a, "lhs": float(pol[x, a]),
                                                          "rhs": float(pol[y, a])})
                for a in range(K):
                    for s in range(S_next):
                        if abs(agg[x, a, s] - agg[y, a, s]) > tol:
                            return BisimulationResult(False, {
                                "kind": "transition", "h": h, "x": x, "x2": y, "a": a, "s": s,
                                "lhs": float(agg[x, a, s]), "rhs": float(agg[y, a, s])})
    return BisimulationResult(True)


def block_constant(values, phi, tol=BISIM_TOL):
    """True when ``values`` is constant on every block of ``phi``."""
    values, phi = np.asarray(values), np.asarray(phi)
    for s in np.unique(phi):
        v = values[phi == s]
        if v.max() - v.min() > tol:
            return False
    return True


def abstract_value_check(mdp: Mdp, expert: PolicySequence, tol=BISIM_TOL):
    """V*_h piecewise constant over the abstraction at every step."""
    V, _ = policy_values(mdp, expert)
    return all(block_constant(V[h], mdp.abstraction[h], tol) for h in range(mdp.horizon))


# -- random instances ---------------------------------------------------------

def make_random_mdp(obs_counts, K: int, seed: int, concentration: float = 1.0, support=None):
    """Dirichlet transitions, uniform-random costs and initial distribution.

    ``support`` limits every transition row to that many successors.
    """
    rng = make_rng(seed)
    obs_counts = [int(c) for c in obs_counts]
    H = len(obs_counts)
    transitions = []
    for h in range(H - 1):
        P = _dirichlet(rng, (obs_counts[h], K, obs_counts[h + 1]), concentration)
        if support is not None and support < obs_counts[h + 1]:
            keep = rng.random(P.shape).argsort(axis=-1) < support
            P = np.where(keep, P, 0.0)
            P /= P.sum(axis=-1, keepdims=True)
        transitions.append(P)
    cost = rng.random(obs_counts[-1])
    init = _dirichlet(rng, (obs_counts[0],))
    return Mdp(H, obs_counts, K, transitions, cost, init)


def random_policy(mdp: Mdp, seed: int, deterministic: bool = False, concentration: float = 1.0):
    rng = make_rng(seed)
    pols = []
    for h in range(1, mdp.horizon):
        if deterministic:
            acts = rng.integers(mdp.action_count, size=mdp.n_obs(h))
            pols.append(np.eye(mdp.action_count)[acts])
        else:
            pols.append(_dirichlet(rng, (mdp.n_obs(h), mdp.action_count), concentration))
    return PolicySequence(tuple(pols))


def candidate_policies(mdp: Mdp, expert: PolicySequence, h: int, count: int, seed: int,
                       deterministic: bool = True):
    """``count`` step-``h`` policies with the expert's at a seeded position (realizable class)."""
    if count < 1:
        raise ConstructionError("need at least one candidate")
    rng = make_rng(seed)
    n, K = mdp.n_obs(h), mdp.action_count
    cands = []
    for _ in range(count - 1):
        if deterministic:
            cands.append(np.eye(K)[rng.integers(K, size=n)])
        else:
            cands.append(_dirichlet(rng, (n, K)))
    pos = int(rng.integers(count))
    cands.insert(pos, np.array(expert.at(h)))
    return np.stack(cands), pos


def sign_table(n):
    """All ``2^n`` vectors in {-1, +1}^n (closed under negation)."""
    if n > 16:
        raise ConstructionError("sign table capped at 16 states")
    bits = (np.arange(2 ** n)[:, None] >> np.arange(n)[None, :]) & 1
    return np.where(bits == 1, 1.0, -1.0)


# -- capacity construction ----------------------------------------------------

def make_capacity_mdp(n_states: int):
    """Two-step process: one start state; each action spreads mass uniformly over half of X_2.

    Action 1 is the expert's and lands in the second half.
    """
    if n_states < 2 or n_states % 2:
        raise ConstructionError("state count must be even and at least 2")
    half = n_states // 2
    P = np.zeros((1, 2, n_states))
    P[0, 0, :half] = 1.0 / half
    P[0, 1, half:] = 1.0 / half
    mdp = Mdp(2, [1, n_states], 2, [P], np.zeros(n_states), np.array([1.0]))
    expert = PolicySequence((np.array([[0.0, 1.0]]),))
    return mdp, expert


def empirical_l1(a, b, n_obs=None):
    """``sum_x |hist_a(x) - hist_b(x)|`` of two samples (in [0, 2])."""
    a, b = np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64)
    pts = np.concatenate([a, b])
    uniq, inv = np.unique(pts, return_inverse=True)
    ha = np.bincount(inv[:a.size], minlength=uniq.size) / max(a.size, 1)
    hb = np.bincount(inv[a.size:], minlength=uniq.size) / max(b.size, 1)
    return float(np.abs(ha - hb).sum())


__all__ = [
    "DemoSet", "generate_demos", "make_tree_mdp", "tree_path_states", "separation_leaf_costs",
    "make_lipschitz_chain", "verify_lipschitz", "lipschitz_ratio", "make_abstraction_mdp",
    "verify_bisimulation", "BisimulationResult", "block_constant", "abstract_value_check",
    "make_random_mdp", "random_policy", "candidate_policies", "sign_table", "make_capacity_mdp",
    "empirical_l1", "ConstructionError",
]
