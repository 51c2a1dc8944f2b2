"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Each workload runs on both backends with identical inputs; the script
checks the outputs agree before reporting timings.
"""
import argparse
import time

import numpy as np

from fail_lfo import kernels
from fail_lfo.checks import random_lipschitz_instance
from fail_lfo.discriminators import LipschitzClass
from fail_lfo.environments import make_random_mdp, random_policy
from fail_lfo.mdp import rollout_batch


def lipschitz_game(backend):
    rng = np.random.default_rng(0)
    coords = rng.random((60, 2))
    d = np.sqrt(((coords[:, None] - coords[None]) ** 2).sum(-1))
    d /= d.max()
    w = np.concatenate([np.full(30, 1 / 30), np.full(30, -1 / 30)])
    _, value = LipschitzClass(d, 2.0, backend=backend).best_response(np.arange(60), w)
    return value


def small_lipschitz(backend):
    vals = []
    for s in range(50):
        inst = random_lipschitz_instance(s, max_per_side=3)
        vals.append(LipschitzClass(inst.dist, inst.L, backend=backend)
                    .best_response(inst.points, inst.weights)[1])
    return np.array(vals)


def rollouts(backend):
    mdp = make_random_mdp([50, 200, 200, 200], 4, seed=1)
    pol = random_policy(mdp, 2)
    return rollout_batch(mdp, pol, 3, 200_000, backend=backend).observations


def witness(backend):
    rng = np.random.default_rng(1)
    dist = rng.random((2000, 400))
    alpha = rng.uniform(-1, 1, 400)
    return kernels.get_backend(backend).witness_eval(dist, alpha, 1.5)


WORKLOADS = {
    "lipschitz LP, 30+30 points": lipschitz_game,
    "lipschitz LP, 50 small instances": small_lipschitz,
    "200k rollouts, H=4": rollouts,
    "witness eval 2000x400": witness,
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    names = kernels.available_backends()
    if "cython" not in names:
        print("compiled kernels not built; only the fallback is available")
    print(f"{'workload':36s} " + " ".join(f"{n:>10s}" for n in names) + "    speedup")
    for label, fn in WORKLOADS.items():
        times, outs = {}, {}
        for name in names:
            best = np.inf
            for _ in range(args.repeat):
                t = time.perf_counter()
                outs[name] = fn(name)
                best = min(best, time.perf_counter() - t)
            times[name] = best
        if len(names) == 2:
            assert np.allclose(outs["cython"], outs["python"], atol=1e-9), label
            speed = f"{times['python'] / times['cython']:8.1f}x"
        else:
            speed = ""
        print(f"{label:36s} " + " ".join(f"{times[n]:9.3f}s" for n in names) + f"   {speed}")


if __name__ == "__main__":
    main()
