"""Forward training drivers and the constructive helpers around them.

All environment access goes through :class:`MeteredEnv`, so every driver's
trajectory consumption can be read off ``report.trajectories``.
"""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .discriminators import FiniteClass, dedup_rows
from .environments import DemoSet
from .game import FiniteList, minmax_solve, pg_minmax_solve, policy_digest, softmax_rows
from .mdp import (MeteredEnv, Mdp, PolicySequence, Transitions, exact_value, policy_values,
                  state_distributions)
from .rng import child_seed

MODEL_CLASS_CAP = 100_000


class TrainingError(ValueError):
    pass


@dataclass
class TrainReport:
    algorithm: str
    seed: int
    n: int
    n_prime: int
    T: int
    trajectories: int
    policy_digests: list
    game_values: list
    J_learned: Optional[float] = None
    J_expert: Optional[float] = None
    gap: Optional[float] = None
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)
    transcripts: list = field(default_factory=list, repr=False)

    def to_dict(self):
        d = asdict(self)
        d.pop("transcripts")
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def transcripts_jsonl(self):
        out = []
        for h, tr in enumerate(self.transcripts, start=1):
            for rec in tr.records():
                rec["step"] = h
                out.append(json.dumps(rec, sort_keys=True))
        return "".join(line + "\n" for line in out)


def _per_step(obj, count, what):
    if isinstance(obj, (list, tuple)):
        if len(obj) != count:
            raise TrainingError(f"need {count} {what}, got {len(obj)}")
        return list(obj)
    return [obj] * count


def _finish(report: TrainReport, mdp, learned, expert, start):
    report.wall_time = time.perf_counter() - start
    report.J_learned = exact_value(mdp, learned)
    if expert is not None:
        report.J_expert = exact_value(mdp, expert)
        report.gap = report.J_learned - report.J_expert
    return report


def _check_budget(n, n_prime=1, T=1):
    if n < 1:
        raise TrainingError("n must be at least 1")
    if n_prime < 1:
        raise TrainingError("n' must be at least 1")
    if T < 1:
        raise TrainingError("T must be at least 1")


def _classes(mdp, policy_classes, fclasses):
    H = mdp.horizon
    pcs = _per_step(policy_classes, H - 1, "policy classes")
    fcs = _per_step(fclasses, H, "discriminator classes")
    for h, pc in enumerate(pcs, start=1):
        if (pc.n_states, pc.n_actions) != (mdp.n_obs(h), mdp.action_count):
            raise TrainingError(f"policy class at step {h} does not match the process")
    return pcs, fcs


# -- FAIL ---------------------------------------------------------------------

def fail_train(mdp: Mdp, demos: DemoSet, policy_classes, fclasses, n: int, n_prime: int,
               T: int, seed: int, eta=None, expert: Optional[PolicySequence] = None,
               env: Optional[MeteredEnv] = None):
    """Forward training: one min-max game per step against the expert's next-step samples.

    ``policy_classes[h-1]`` is the class for step ``h``; ``fclasses[h-1]``
    acts on ``X_h`` (a single object is reused at every step).  ``expert``
    is only used to report ``J(pi*)``.
    """
    start = time.perf_counter()
    _check_budget(n, n_prime, T)
    H = mdp.horizon
    pcs, fcs = _classes(mdp, policy_classes, fclasses)
    demos.validate(mdp)
    for h in range(2, H + 1):
        if demos.count(h) < n_prime:
            raise TrainingError(f"only {demos.count(h)} demonstrations at step {h}, need {n_prime}")
    env = env or MeteredEnv(mdp)
    learned = PolicySequence()
    report = TrainReport("fail", seed, n, n_prime, T, 0, [], [])
    for h in range(1, H):
        batch = env.rollouts(learned, child_seed(seed, h), n, explore_step=h)
        data = Transitions.from_batch(batch, h)
        pol, tr = minmax_solve(demos.at(h + 1)[:n_prime], data, pcs[h - 1], fcs[h], T, eta=eta)
        learned = learned.append(pol)
        report.transcripts.append(tr)
        report.game_values.append(tr.best_value)
        report.policy_digests.append(policy_digest(pol))
    report.trajectories = env.trajectories
    return learned, _finish(report, mdp, learned, expert, start)


# -- IFAIL --------------------------------------------------------------------

def ifail_train(mdp: Mdp, expert: PolicySequence, policy_classes, fclasses, n: int, T: int,
                seed: int, eta=None, env: Optional[MeteredEnv] = None):
    """Interactive variant: the expert takes over for one step from learner-prefix states.

    Only the expert's next observations enter the game, never its actions.
    """
    start = time.perf_counter()
    _check_budget(n, 1, T)
    H = mdp.horizon
    pcs, fcs = _classes(mdp, policy_classes, fclasses)
    expert.check(mdp)
    env = env or MeteredEnv(mdp)
    learned = PolicySequence()
    report = TrainReport("ifail", seed, n, n, T, 0, [], [])
    for h in range(1, H):
        batch = env.rollouts(learned, child_seed(seed, h, 0), n, explore_step=h)
        data = Transitions.from_batch(batch, h)
        handoff = env.rollouts(learned, child_seed(seed, h, 1), n, stop=h)
        expert_next = env.expert_step(expert, h, handoff.obs(h), child_seed(seed, h, 2))
        pol, tr = minmax_solve(expert_next, data, pcs[h - 1], fcs[h], T, eta=eta)
        learned = learned.append(pol)
        report.transcripts.append(tr)
        report.game_values.append(tr.best_value)
        report.policy_digests.append(policy_digest(pol))
    report.trajectories = env.trajectories
    report.extra["expert_queries"] = env.expert_queries
    return learned, _finish(report, mdp, learned, expert, start)


# -- FAIL* --------------------------------------------------------------------

def fail_star_train(mdp: Mdp, demos: DemoSet, theta0, fclasses, n: int, T: int, seed: int,
                    n_prime: Optional[int] = None, eta0: float = 1.0,
                    expert: Optional[PolicySequence] = None, env: Optional[MeteredEnv] = None):
    """Forward training with softmax policies refreshed on their own on-policy data.

    At outer step ``h`` the prefix is executed, step ``h`` explores
    uniformly, and every ``pi_t`` with ``t <= h`` is re-solved by the
    policy-gradient game on the tuples collected at step ``t``.
    """
    start = time.perf_counter()
    H, K = mdp.horizon, mdp.action_count
    n_prime = n_prime or min(demos.count(h) for h in range(2, H + 1))
    _check_budget(n, n_prime, T)
    fcs = _per_step(fclasses, H, "discriminator classes")
    demos.validate(mdp)
    thetas = [np.array(t, dtype=np.float64) for t in _per_step(theta0, H - 1, "initial logits")]
    for h, th in enumerate(thetas, start=1):
        if th.shape != (mdp.n_obs(h), K):
            raise TrainingError(f"initial logits at step {h} have the wrong shape")
    for h in range(2, H + 1):
        if demos.count(h) < n_prime:
            raise TrainingError(f"only {demos.count(h)} demonstrations at step {h}, need {n_prime}")
    env = env or MeteredEnv(mdp)
    report = TrainReport("fail_star", seed, n, n_prime, T, 0, [], [])
    audit = []
    refresh_values = []
    for h in range(1, H):
        current = PolicySequence(tuple(softmax_rows(thetas[t]) for t in range(h - 1)))
        batch = env.rollouts(current, child_seed(seed, h), n, explore_step=h)
        step_values = []
        for t in range(1, h + 1):
            data = Transitions.from_batch(batch, t)
            on_policy = t < h
            if on_policy:
                pi_t = current.at(t)
                audit.append(bool(np.allclose(pi_t[data.x, data.a], data.p, atol=1e-12)))
            form = "reinforce" if on_policy else "importance"
            theta, tr = pg_minmax_solve(demos.at(t + 1)[:n_prime], data, thetas[t - 1], fcs[t], T,
                                        eta0=eta0, form=form)
            thetas[t - 1] = theta
            step_values.append(tr.best_value)
            if t == h:
                report.transcripts.append(tr)
        refresh_values.append(step_values)
    learned = PolicySequence(tuple(softmax_rows(th) for th in thetas))
    report.game_values = [vals[-1] for vals in refresh_values]
    report.policy_digests = [policy_digest(p) for p in learned.policies]
    report.trajectories = env.trajectories
    report.extra["on_policy_audit"] = all(audit)
    report.extra["refresh_values"] = refresh_values
    return learned, _finish(report, mdp, learned, expert, start)


# -- model-based class construction --------------------------------------------

@dataclass
class ModelBasedClasses:
    policy_classes: list           # FiniteList per step 1..H-1
    fclasses: list                 # FiniteClass per step 1..H
    raw_policy_counts: list        # |models| * |F_{h+1}| before dedup
    policy_tables: list            # deduplicated deterministic policies per step
    function_tables: list          # tabulated F~_h (closed under negation)


def greedy_policy(Q):
    """Deterministic argmin policy; ties go to the lowest action."""
    Q = np.asarray(Q)
    acts = np.argmin(Q, axis=1)
    return np.eye(Q.shape[1])[acts]


def model_based_construct(models: Sequence, ftables: Sequence, cap: int = MODEL_CLASS_CAP):
    """Build greedy policy classes and Bellman-expanded discriminators from a model list.

    ``models`` are processes (or per-step transition lists) sharing one
    shape; ``ftables[h-1]`` tabulates F_h as an ``(m, |X_h|)`` array.
    """
    trans = [m.transitions if isinstance(m, Mdp) else tuple(np.asarray(P) for P in m) for m in models]
    if not trans:
        raise TrainingError("model list is empty")
    H = len(ftables)
    if any(len(t) != H - 1 for t in trans):
        raise TrainingError("models and discriminator tables disagree on the horizon")
    shapes = [P.shape for P in trans[0]]
    if any([P.shape for P in t] != shapes for t in trans):
        raise TrainingError("models must share one shape")
    tables = [np.atleast_2d(np.asarray(f, dtype=np.float64)) for f in ftables]

    f_tilde = [None] * H
    f_tilde[H - 1] = dedup_rows(np.vstack([tables[H - 1], -tables[H - 1]]))
    pol_tables = [None] * (H - 1)
    raw_counts = [0] * (H - 1)
    for h in range(H - 1, 0, -1):
        nxt = tables[h]
        raw = []
        for P in trans:
            Q = np.einsum("xay,my->mxa", P[h - 1], nxt)
            raw.extend(greedy_policy(q) for q in Q)
        raw_counts[h - 1] = len(raw)
        pols = _dedup_policies(np.stack(raw))
        pol_tables[h - 1] = pols
        total = len(trans) * len(pols) * len(f_tilde[h])
        if total > 10 * cap:
            raise TrainingError(f"expanded class at step {h} would need {total} candidates (cap {cap})")
        expanded = [tables[h - 1], -tables[h - 1]]
        for P in trans:
            PF = np.einsum("xay,my->mxa", P[h - 1], f_tilde[h])          # (m, x, a)
            expanded.append(np.einsum("pxa,mxa->pmx", pols, PF).reshape(-1, PF.shape[1]))
        ft = dedup_rows(np.vstack(expanded))
        ft = dedup_rows(np.vstack([ft, -ft]))
        if len(ft) > cap:
            raise TrainingError(f"|F~_{h}| = {len(ft)} exceeds the cap {cap}")
        f_tilde[h - 1] = ft
    return ModelBasedClasses(
        policy_classes=[FiniteList(p) for p in pol_tables],
        fclasses=[FiniteClass(f) for f in f_tilde],
        raw_policy_counts=raw_counts,
        policy_tables=pol_tables,
        function_tables=f_tilde,
    )


def _dedup_policies(stack, tol=1e-12):
    keep = []
    for i, p in enumerate(stack):
        if not any(np.max(np.abs(p - stack[j])) <= tol for j in keep):
            keep.append(i)
    return stack[keep]


def table_contains(table, values, tol=1e-12):
    return bool(np.any(np.max(np.abs(np.asarray(table) - np.asarray(values)[None, :]), axis=1) <= tol))


# -- tree identification ------------------------------------------------------

class IdentificationError(ValueError):
    def __init__(self, level, message):
        super().__init__(message)
        self.level = level


def tree_identify_expert(mdp: Mdp, observations, env: Optional[MeteredEnv] = None, seed: int = 0):
    """Recover the expert's action sequence on a deterministic tree.

    Each level probes both actions after the recovered prefix (one rollout
    each) and keeps the one whose next observation matches.  Uses exactly
    ``2(H-1)`` rollouts on success.
    """
    H, K = mdp.horizon, mdp.action_count
    obs = [int(x) for x in observations]
    if len(obs) != H:
        raise IdentificationError(1, f"expected {H} observations, got {len(obs)}")
    env = env or MeteredEnv(mdp)
    actions = []
    for h in range(1, H):
        matches = []
        for a in range(K):
            seq = PolicySequence.deterministic(mdp, actions + [a])
            traj = env.rollouts(seq, child_seed(seed, h, a), 1, stop=h + 1)
            if int(traj.observations[0, h - 1]) != obs[h - 1]:
                raise IdentificationError(h, f"prefix does not reach observation {obs[h - 1]} at level {h}")
            if int(traj.observations[0, h]) == obs[h]:
                matches.append(a)
        if not matches:
            raise IdentificationError(h + 1, f"no action reaches observation {obs[h]} at level {h + 1}")
        actions.append(matches[0])
    return actions, env


# -- reporting helpers --------------------------------------------------------

def inherent_bellman_error(mdp: Mdp, expert: PolicySequence, ftables, learned=None):
    """Plug-in inherent Bellman errors for tabulated classes.

    Returns ``(sup-norm version, averaged version)``; the averaged one uses
    the exact mixture ``(mu_h^learned + mu_h^expert) / 2`` and needs ``learned``.
    """
    H = mdp.horizon
    tables = [np.atleast_2d(np.asarray(f, dtype=np.float64)) for f in ftables]
    mu_e = state_distributions(mdp, expert)
    mu_l = state_distributions(mdp, learned) if learned is not None else None
    sup_err, avg_err = 0.0, 0.0
    for h in range(1, H):
        P = mdp.transition(h)
        backups = np.einsum("xa,xay,my->mx", expert.at(h), P, tables[h])
        diff = np.abs(backups[:, None, :] - tables[h - 1][None, :, :])     # (g, f, x)
        sup_err = max(sup_err, float(diff.max(axis=2).min(axis=1).max()))
        if mu_l is not None:
            w = 0.5 * (mu_l[h - 1] + mu_e[h - 1])
            avg_err = max(avg_err, float((diff @ w).min(axis=1).max()))
    return sup_err, (avg_err if learned is not None else None)


def expert_values_in(mdp, expert, ftables, tol=1e-12):
    """Whether every V*_h appears in the tabulated F_h."""
    V, _ = policy_values(mdp, expert)
    return all(table_contains(ftables[h], V[h], tol) for h in range(mdp.horizon))


__all__ = [
    "TrainReport", "TrainingError", "fail_train", "ifail_train", "fail_star_train",
    "ModelBasedClasses", "model_based_construct", "greedy_policy", "table_contains",
    "tree_identify_expert", "IdentificationError", "inherent_bellman_error", "expert_values_in",
    "MODEL_CLASS_CAP",
]
