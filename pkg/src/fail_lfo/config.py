"""Plain-text ``key = value`` experiment configs.

Lines starting with ``#`` are comments.  Dotted keys group parameters, e.g.
``env.H = 4`` or ``fclass.L = 2.0``.  Lists are comma separated.

Recognised keys:

    env            tree | random | chain | abstraction
    env.*          H, leaf_costs, obs_counts, K, n_states, L_P, L_pi,
                   per_block, blocks, seed, expert (optimal | random)
    algorithm      fail | ifail | fail_star | tree_identify | rl_random_search_baseline
    policy_class   finite | tabular | model_based
    policy_class.* count, models, extra_functions
    fclass         sign | rkhs | lipschitz | piecewise | finite_file
    fclass.*       L, width, path
    n, n_prime, T  budgets
    eta, eta0      learner step sizes (optional)
    rl_budget      trajectories for the random-search baseline
    seeds          explicit seed list (overridden by --seed-count)
    demo_file      JSONL demonstrations to use instead of generating them
    out            output directory
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

SECTION = "experiment"

ENVIRONMENTS = ("tree", "random", "chain", "abstraction")
ALGORITHMS = ("fail", "ifail", "fail_star", "tree_identify", "rl_random_search_baseline")
POLICY_CLASSES = ("finite", "tabular", "model_based")
FCLASSES = ("sign", "rkhs", "lipschitz", "piecewise", "finite_file")


class ConfigError(ValueError):
    pass


def _parse_list(text, cast=float):
    text = text.strip()
    if not text:
        return []
    return [cast(v) for v in text.replace(";", ",").split(",") if v.strip()]


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)
    source: str = "<defaults>"

    def get(self, key, default=None):
        return self.values.get(key, default)

    def int(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else int(float(v))

    def float(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else float(v)

    def list(self, key, cast=float, default=None):
        v = self.values.get(key)
        return default if v is None else _parse_list(v, cast)

    def group(self, prefix):
        p = prefix + "."
        return {k[len(p):]: v for k, v in self.values.items() if k.startswith(p)}

    @property
    def env(self):
        return self.values.get("env", "tree")

    @property
    def algorithm(self):
        return self.values.get("algorithm", "fail")

    def seeds(self, seed_count=None):
        if seed_count is not None:
            if seed_count < 1:
                raise ConfigError("--seed-count must be positive")
            return list(range(seed_count))
        seeds = self.list("seeds", int, default=[0])
        if not seeds:
            raise ConfigError("seed list is empty")
        return seeds

    def validate(self):
        if self.env not in ENVIRONMENTS:
            raise ConfigError(f"unknown environment {self.env!r}; choose from {ENVIRONMENTS}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        pc = self.values.get("policy_class", "finite")
        if pc not in POLICY_CLASSES:
            raise ConfigError(f"unknown policy class {pc!r}")
        fc = self.values.get("fclass", "sign")
        if fc not in FCLASSES:
            raise ConfigError(f"unknown discriminator class {fc!r}")
        return self


def parse_config(text, source="<string>"):
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",),
                                       inline_comment_prefixes=("#",), delimiters=("=",))
    parser.optionxform = str
    try:
        parser.read_string(f"[{SECTION}]\n" + text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    values = {k.strip(): v.strip() for k, v in parser[SECTION].items()}
    return ExperimentConfig(values, source).validate()


def load_config(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    return parse_config(path.read_text(), str(path))
