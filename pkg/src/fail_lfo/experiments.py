"""Config-driven experiment builders and per-seed runners used by the CLI.

Runners are top-level functions of plain arguments so a process pool can
pickle them; each returns a dict and never touches shared state.
"""
from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from . import checks
from .config import ConfigError, ExperimentConfig
from .discriminators import FiniteClass, LipschitzClass, PiecewiseConstantClass, RkhsClass
from .environments import (DemoSet, candidate_policies, empirical_l1, generate_demos,
                           make_abstraction_mdp, make_capacity_mdp, make_lipschitz_chain,
                           make_random_mdp, make_tree_mdp, optimal_policy, random_policy,
                           separation_leaf_costs, sign_table)
from .fail import (fail_star_train, fail_train, ifail_train, model_based_construct,
                   tree_identify_expert)
from .game import FiniteList, TabularSoftmax
from .lp import LinearProgram, Status, solve
from .mdp import MeteredEnv, PolicySequence, exact_value, policy_values, rollout, rollout_batch
from .rng import child_seed, make_rng

CSV_COLUMNS = ["algorithm", "env", "n", "n_prime", "T", "trajectories_used", "J_learned",
               "J_expert", "gap", "wall_time"]


# -- builders -----------------------------------------------------------------

def build_environment(cfg: ExperimentConfig):
    """Return ``(mdp, expert)`` for the configured environment (fixed by ``env.seed``)."""
    p = cfg.group("env")
    env_seed = int(p.get("seed", 0))
    name = cfg.env
    if name == "tree":
        H = int(p.get("H", 4))
        costs = p.get("leaf_costs")
        costs = separation_leaf_costs(H, env_seed) if costs is None else [float(v) for v in costs.split(",")]
        return make_tree_mdp(H, costs)
    if name == "random":
        counts = [int(v) for v in p.get("obs_counts", "4,8,8").split(",")]
        mdp = make_random_mdp(counts, int(p.get("K", 2)), env_seed)
        if p.get("expert", "random") == "optimal":
            return mdp, optimal_policy(mdp)
        return mdp, random_policy(mdp, child_seed(env_seed, 1), deterministic=True)
    if name == "chain":
        return make_lipschitz_chain(int(p.get("n_states", 10)), int(p.get("H", 3)), int(p.get("K", 2)),
                                    (float(p.get("L_P", 1.0)), float(p.get("L_pi", 1.0))), env_seed)
    if name == "abstraction":
        return make_abstraction_mdp(int(p.get("per_block", 2)), int(p.get("blocks", 3)),
                                    int(p.get("H", 3)), int(p.get("K", 2)), env_seed)
    raise ConfigError(f"unknown environment {name!r}")


def build_classes(cfg: ExperimentConfig, mdp, expert):
    """Per-step policy classes (length H-1) and discriminator classes (length H)."""
    H = mdp.horizon
    pname = cfg.get("policy_class", "finite")
    fname = cfg.get("fclass", "sign")
    pp, fp = cfg.group("policy_class"), cfg.group("fclass")
    class_seed = int(cfg.group("env").get("seed", 0))

    if pname == "model_based":
        models = [mdp] + [make_random_mdp(mdp.obs_counts, mdp.action_count, child_seed(class_seed, 7, i))
                          for i in range(int(pp.get("models", 2)) - 1)]
        rng = make_rng(child_seed(class_seed, 8))
        V, _ = policy_values(mdp, expert)
        extra = int(pp.get("extra_functions", 2))
        tables = [np.vstack([V[h], rng.uniform(-1, 1, (extra, mdp.n_obs(h + 1)))]) for h in range(H)]
        built = model_based_construct(models[::-1], tables)
        return built.policy_classes, built.fclasses

    if pname == "finite":
        count = int(pp.get("count", 4))
        pcs = [FiniteList(candidate_policies(mdp, expert, h, count, child_seed(class_seed, 9, h))[0])
               for h in range(1, H)]
    elif pname == "tabular":
        pcs = [TabularSoftmax(mdp.n_obs(h), mdp.action_count) for h in range(1, H)]
    else:
        raise ConfigError(f"unknown policy class {pname!r}")

    if fname == "sign":
        fcs = [FiniteClass(sign_table(mdp.n_obs(h))) for h in range(1, H + 1)]
    elif fname == "lipschitz":
        if mdp.metric is None:
            raise ConfigError("lipschitz discriminators need an environment with a metric")
        L = float(fp.get("L", 2.0))
        fcs = [LipschitzClass(mdp.metric[h], L) for h in range(H)]
    elif fname == "rkhs":
        width = fp.get("width", "median")
        width = None if width == "median" else float(width)
        fcs = [RkhsClass(coords=np.arange(mdp.n_obs(h)) / max(mdp.n_obs(h) - 1, 1), width=width)
               for h in range(1, H + 1)]
    elif fname == "piecewise":
        if mdp.abstraction is None:
            raise ConfigError("piecewise discriminators need an abstraction map")
        fcs = [PiecewiseConstantClass(mdp.abstraction[h]) for h in range(H)]
    elif fname == "finite_file":
        path = fp.get("path")
        if not path or not Path(path).is_file():
            raise ConfigError(f"finite class file {path!r} not found")
        tables = json.loads(Path(path).read_text())
        fcs = [FiniteClass.closed(t) for t in tables]
    else:
        raise ConfigError(f"unknown discriminator class {fname!r}")
    return pcs, fcs


def load_demos(path, horizon):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"demonstration file {path} not found")
    return DemoSet.from_jsonl(path.read_text(), horizon=horizon)


# -- per-seed runners ------------------------------------------------------------

def run_gen_expert(cfg_values: dict, seed: int, out: str):
    cfg = ExperimentConfig(cfg_values)
    mdp, expert = build_environment(cfg)
    n_prime = cfg.int("n_prime", 100)
    demos = generate_demos(mdp, expert, n_prime, seed)
    name = f"demos_seed{seed}.jsonl"
    Path(out, name).write_text(demos.to_jsonl())
    return {"seed": seed, "file": name, "n_per_step": n_prime, "J_expert": exact_value(mdp, expert)}


def run_train(cfg_values: dict, seed: int, out: str):
    cfg = ExperimentConfig(cfg_values)
    start = time.perf_counter()
    mdp, expert = build_environment(cfg)
    algo = cfg.algorithm
    n, n_prime, T = cfg.int("n", 200), cfg.int("n_prime", 200), cfg.int("T", 100)
    eta = cfg.float("eta")
    report_doc, transcripts = {}, ""
    H = mdp.horizon

    if algo in ("fail", "ifail", "fail_star"):
        pcs, fcs = build_classes(cfg, mdp, expert)
        if algo == "ifail":
            learned, rep = ifail_train(mdp, expert, pcs, fcs, n, T, seed, eta=eta)
        else:
            demo_file = cfg.get("demo_file")
            if demo_file:
                path = Path(demo_file.replace("{seed}", str(seed)))
                demos = load_demos(path, H)
            else:
                demos = generate_demos(mdp, expert, n_prime, child_seed(seed, 101))
            if algo == "fail":
                learned, rep = fail_train(mdp, demos, pcs, fcs, n, n_prime, T, seed, eta=eta, expert=expert)
            else:
                theta0 = [np.zeros((mdp.n_obs(h), mdp.action_count)) for h in range(1, H)]
                learned, rep = fail_star_train(mdp, demos, theta0, fcs, n, T, seed, n_prime=n_prime,
                                               eta0=cfg.float("eta0", 1.0), expert=expert)
        report_doc = rep.to_dict()
        transcripts = rep.transcripts_jsonl()
        row = [algo, cfg.env, n, n_prime, T, rep.trajectories, rep.J_learned, rep.J_expert, rep.gap]
    elif algo == "tree_identify":
        if cfg.env != "tree":
            raise ConfigError("tree_identify needs the tree environment")
        traj = rollout(mdp, expert, child_seed(seed, 102))
        actions, env = tree_identify_expert(mdp, traj.observations, seed=seed)
        learned = PolicySequence.deterministic(mdp, actions)
        J, Je = exact_value(mdp, learned), exact_value(mdp, expert)
        report_doc = {"algorithm": algo, "seed": seed, "actions": actions, "trajectories": env.trajectories}
        row = [algo, cfg.env, 0, 1, 0, env.trajectories, J, Je, J - Je]
    elif algo == "rl_random_search_baseline":
        budget = cfg.int("rl_budget", 2 * (H - 1))
        cost, _, used = random_search(mdp, budget, seed)
        Je = exact_value(mdp, expert)
        report_doc = {"algorithm": algo, "seed": seed, "best_cost": cost, "trajectories": used}
        row = [algo, cfg.env, budget, 0, 0, used, cost, Je, cost - Je]
    else:
        raise ConfigError(f"unknown algorithm {algo!r}")

    Path(out, f"report_seed{seed}.json").write_text(json.dumps(report_doc, sort_keys=True, indent=2))
    if transcripts:
        Path(out, f"transcripts_seed{seed}.jsonl").write_text(transcripts)
    row.append(time.perf_counter() - start)
    return {"seed": seed, "row": row}


def random_search(mdp, budget, seed):
    """Uniform-random action sequences; keeps the cheapest leaf reached."""
    env = MeteredEnv(mdp)
    if budget < 1:
        return 1.0, None, 0
    batch = env.rollouts(PolicySequence.uniform(mdp), seed, budget)
    best = int(np.argmin(batch.costs))
    return float(batch.costs[best]), batch[best], env.trajectories


def run_separation(H: int, seeds, factor: float):
    ilfo_traj, ilfo_ok, rl_ok = [], [], []
    budget = int(min(factor * 2 * (H - 1), 10 ** 6))
    for s in seeds:
        mdp, expert = make_tree_mdp(H, separation_leaf_costs(H, child_seed(s, H)))
        traj = rollout(mdp, expert, child_seed(s, H, 1))
        actions, env = tree_identify_expert(mdp, traj.observations, seed=s)
        ilfo_traj.append(env.trajectories)
        ilfo_ok.append(exact_value(mdp, PolicySequence.deterministic(mdp, actions)) == 0.0)
        cost, _, _ = random_search(mdp, budget, child_seed(s, H, 2))
        rl_ok.append(cost == 0.0)
    return {"H": H, "seeds": len(seeds), "ilfo_trajectories": max(ilfo_traj),
            "ilfo_success_rate": float(np.mean(ilfo_ok)), "rl_budget": budget,
            "rl_success_rate": float(np.mean(rl_ok)),
            "rl_success_bound": min(1.0, budget / 2 ** (H - 1))}


def run_capacity(n_states: int, M: int, seeds):
    mdp, expert = make_capacity_mdp(n_states)
    other = PolicySequence((np.array([[1.0, 0.0]]),))
    overlap, overlap_p, tv, tv_p = [], [], [], []
    for s in seeds:
        d_star = rollout_batch(mdp, expert, child_seed(s, 0), M).obs(2)
        d = rollout_batch(mdp, expert, child_seed(s, 1), M).obs(2)
        d_p = rollout_batch(mdp, other, child_seed(s, 2), M).obs(2)
        overlap.append(np.intersect1d(d, d_star).size > 0)
        overlap_p.append(np.intersect1d(d_p, d_star).size > 0)
        tv.append(empirical_l1(d_star, d))
        tv_p.append(empirical_l1(d_star, d_p))
    return {"states": n_states, "M": M, "seeds": len(seeds),
            "overlap_prob": float(np.mean(overlap)), "overlap_prob_prime": float(np.mean(overlap_p)),
            "mean_tv": float(np.mean(tv)), "mean_tv_prime": float(np.mean(tv_p))}


def run_lp_check(size: int, seed: int, tol_grid=2e-2, tol_exact=1e-7):
    """One Lipschitz instance (grid oracle + witness) and one small generic program."""
    rows = []
    inst = checks.random_lipschitz_instance(seed, max_per_side=size)
    fc = LipschitzClass(inst.dist, inst.L)
    handle, value = fc.best_response(inst.points, inst.weights)
    sub = inst.dist[np.ix_(inst.points, inst.points)]
    grid = checks.lipschitz_grid_max(inst.weights, sub, inst.L)
    rows.append({"kind": "lipschitz_grid", "size": size, "seed": seed, "value": value,
                 "oracle": grid, "diff": abs(value - grid), "pass": abs(value - grid) <= tol_grid,
                 "instance": inst.to_json()})
    vals = handle.tabulate(len(inst.dist))
    lstar = handle.lipschitz
    pair_gap = np.abs(vals[:, None] - vals[None, :]) - lstar * inst.dist
    ok_w = (np.max(np.abs(vals[handle.points] - handle.alpha)) <= 1e-9
            and pair_gap.max() <= 1e-9 and np.abs(vals).max() <= 1 + 1e-12)
    rows.append({"kind": "witness", "size": size, "seed": seed, "value": float(pair_gap.max()),
                 "oracle": 0.0, "diff": max(float(pair_gap.max()), 0.0), "pass": bool(ok_w),
                 "instance": inst.to_json()})
    c, A, b, lo, hi = checks.random_bounded_lp(child_seed(seed, size), max_vars=min(4, size + 1))
    res = solve(LinearProgram(c, A, b, lo, hi))
    best, _ = checks.vertex_enumeration(c, A, b, lo, hi)
    if best is None:
        ok = res.status is Status.INFEASIBLE
        v, diff = float("nan"), 0.0 if ok else float("inf")
    else:
        ok = res.status is Status.OPTIMAL and abs(res.value - best) <= tol_exact
        v, diff = res.value, abs(res.value - best) if res.status is Status.OPTIMAL else float("inf")
    rows.append({"kind": "vertex_enum", "size": size, "seed": seed, "value": v,
                 "oracle": best if best is not None else float("nan"), "diff": diff, "pass": bool(ok),
                 "instance": json.dumps({"c": c.tolist(), "A": A.tolist(), "b": b.tolist(),
                                         "lo": lo.tolist(), "hi": hi.tolist()})})
    return rows
