"""Command-line experiment runner: ``fail-lfo <command> [options]``.

Seeds run in a process pool (``--jobs``, or ``FAIL_LFO_JOBS``); results are
merged in seed order so outputs do not depend on scheduling.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import experiments
from .config import ConfigError, ExperimentConfig, load_config

log = logging.getLogger("fail_lfo")


def resolve_jobs(jobs):
    if jobs is None:
        env = os.environ.get("FAIL_LFO_JOBS")
        if env:
            try:
                jobs = int(env)
            except ValueError:
                raise ConfigError(f"FAIL_LFO_JOBS must be an integer, got {env!r}")
    jobs = 1 if jobs is None else jobs
    if jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    return jobs


def _pool_map(fn, arglists, jobs):
    """Apply ``fn`` to each argument tuple; results come back in input order."""
    if jobs == 1 or len(arglists) <= 1:
        return [fn(*args) for args in arglists]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(fn, *args) for args in arglists]
        return [f.result() for f in futures]


def _config(args):
    return load_config(args.config) if args.config else ExperimentConfig({}).validate()


def _out_dir(args, cfg):
    out = Path(args.out or cfg.get("out", "results"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    Path(path).write_text(buf.getvalue())
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(round(v, 12))
    return v


# -- commands -----------------------------------------------------------------

def cmd_gen_expert(args):
    cfg = _config(args)
    out = _out_dir(args, cfg)
    seeds = cfg.seeds(args.seed_count)
    results = _pool_map(experiments.run_gen_expert, [(cfg.values, s, str(out)) for s in seeds],
                        args.jobs)
    manifest = {"env": cfg.env, "env_params": cfg.group("env"), "demos": results}
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    print(f"wrote {len(results)} demonstration files to {out}")
    return 0


def cmd_train(args):
    cfg = _config(args)
    out = _out_dir(args, cfg)
    seeds = cfg.seeds(args.seed_count)
    results = _pool_map(experiments.run_train, [(cfg.values, s, str(out)) for s in seeds], args.jobs)
    rows = [[_fmt(v) for v in r["row"]] for r in sorted(results, key=lambda r: seeds.index(r["seed"]))]
    text = _write_csv(out / "summary.csv", experiments.CSV_COLUMNS, rows)
    print(text, end="")
    return 0


def cmd_separation(args):
    cfg = _config(args)
    out = _out_dir(args, cfg)
    H_list = [int(h) for h in (args.H_list or cfg.get("H_list", "2,4,6,8,10,12,14")).split(",") if h]
    factor = args.rl_budget_factor if args.rl_budget_factor is not None else cfg.float("rl_budget_factor", 1.0)
    seeds = cfg.seeds(args.seed_count if args.seed_count is not None else cfg.int("seed_count", 100))
    results = _pool_map(experiments.run_separation, [(H, seeds, factor) for H in H_list], args.jobs)
    header = ["H", "seeds", "ilfo_trajectories", "ilfo_success_rate", "rl_budget",
              "rl_success_rate", "rl_success_bound"]
    text = _write_csv(out / "separation.csv", header, [[_fmt(r[k]) for k in header] for r in results])
    print(text, end="")
    bad = [r["H"] for r in results if r["ilfo_trajectories"] != 2 * (r["H"] - 1) or r["ilfo_success_rate"] < 1]
    if bad:
        print(f"identification failed or overspent at H = {bad}", file=sys.stderr)
        return 1
    return 0


def cmd_capacity_demo(args):
    cfg = _config(args)
    out = _out_dir(args, cfg)
    states = [int(float(s)) for s in (args.states or cfg.get("states", "100,10000,1000000")).split(",") if s]
    M = args.M if args.M is not None else cfg.int("M", 20)
    seeds = cfg.seeds(args.seed_count if args.seed_count is not None else cfg.int("seed_count", 200))
    results = _pool_map(experiments.run_capacity, [(n, M, seeds) for n in states], args.jobs)
    header = ["states", "M", "seeds", "overlap_prob", "overlap_prob_prime", "mean_tv", "mean_tv_prime"]
    text = _write_csv(out / "capacity.csv", header, [[_fmt(r[k]) for k in header] for r in results])
    print(text, end="")
    return 0


def cmd_lp_check(args):
    cfg = _config(args)
    out = _out_dir(args, cfg)
    raw = args.sizes if args.sizes is not None else cfg.get("sizes", "1,2,3")
    sizes = [int(s) for s in raw.split(",") if s.strip()]
    seeds = cfg.seeds(args.seed_count if args.seed_count is not None else cfg.int("seed_count", 10))
    tasks = [(size, s) for size in sizes for s in seeds]
    results = _pool_map(experiments.run_lp_check, tasks, args.jobs)
    header = ["kind", "size", "seed", "value", "oracle", "diff", "pass"]
    rows, failures = [], []
    for group in results:
        for r in group:
            rows.append([_fmt(r[k]) for k in header])
            if not r["pass"]:
                failures.append(r)
    text = _write_csv(out / "lp_check.csv", header, rows)
    print(text, end="")
    for r in failures:
        print(f"FAIL {r['kind']} size={r['size']} seed={r['seed']}: {r['instance']}", file=sys.stderr)
    return 1 if failures else 0


def cmd_report(args):
    cfg = _config(args)
    out = Path(args.out or cfg.get("out", "results"))
    if not out.is_dir():
        raise FileNotFoundError(f"output directory {out} not found")
    summary = {}
    path = out / "summary.csv"
    if path.is_file():
        with path.open() as fh:
            rows = list(csv.DictReader(fh))
        groups = {}
        for r in rows:
            groups.setdefault((r["algorithm"], r["env"]), []).append(r)
        summary["train"] = []
        for (algo, env), rs in sorted(groups.items()):
            gaps = [float(r["gap"]) for r in rs if r["gap"] not in ("", "None")]
            summary["train"].append({
                "algorithm": algo, "env": env, "runs": len(rs),
                "mean_gap": sum(gaps) / len(gaps) if gaps else None,
                "max_gap": max(gaps) if gaps else None,
                "within_0.05": sum(g <= 0.05 for g in gaps),
                "trajectories_used": sorted({int(r["trajectories_used"]) for r in rs}),
            })
    steps = {}
    for tpath in sorted(out.glob("transcripts_seed*.jsonl")):
        for line in tpath.read_text().splitlines():
            rec = json.loads(line)
            if rec.get("selected"):
                steps.setdefault(rec["step"], []).append(rec["u"])
    if steps:
        summary["game_values"] = {str(h): {"runs": len(v), "mean_u_star": sum(v) / len(v)}
                                  for h, v in sorted(steps.items())}
    for name in ("separation.csv", "capacity.csv", "lp_check.csv"):
        p = out / name
        if p.is_file():
            with p.open() as fh:
                summary[name[:-4]] = list(csv.DictReader(fh))
    if not summary:
        print(f"nothing to report in {out}", file=sys.stderr)
        return 1
    (out / "report.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    print(json.dumps(summary, sort_keys=True, indent=2))
    return 0


COMMANDS = {
    "gen-expert": cmd_gen_expert,
    "train": cmd_train,
    "separation": cmd_separation,
    "capacity-demo": cmd_capacity_demo,
    "lp-check": cmd_lp_check,
    "report": cmd_report,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value experiment config")
    common.add_argument("--seed-count", type=int, metavar="INT", help="use seeds 0..INT-1")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--jobs", type=int, metavar="INT",
                        help="worker processes (default: $FAIL_LFO_JOBS or 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="fail-lfo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-expert", parents=[common], help="write expert demonstrations")
    sub.add_parser("train", parents=[common], help="train and summarise per seed")
    p = sub.add_parser("separation", parents=[common], help="tree identification vs random search")
    p.add_argument("--H-list", dest="H_list", help="comma-separated horizons")
    p.add_argument("--rl-budget-factor", dest="rl_budget_factor", type=float)
    p = sub.add_parser("capacity-demo", parents=[common], help="overlap of small samples in huge spaces")
    p.add_argument("--states", help="comma-separated state counts")
    p.add_argument("--M", type=int, help="samples per dataset")
    p = sub.add_parser("lp-check", parents=[common], help="cross-check the LP oracle by brute force")
    p.add_argument("--sizes", help="comma-separated points-per-side bounds")
    sub.add_parser("report", parents=[common], help="aggregate outputs in --out")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.jobs = resolve_jobs(args.jobs)
        return COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"fail-lfo {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
