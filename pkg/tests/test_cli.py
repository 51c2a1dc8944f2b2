import csv
import json
import subprocess
import sys

import pytest

from fail_lfo.cli import main, resolve_jobs
from fail_lfo.config import ConfigError, parse_config

TREE_CFG = """\
# small tree run
env = tree
env.H = 3
env.leaf_costs = 1, 0.5, 0, 0.7
algorithm = fail
policy_class = tabular
fclass = sign
n = 200
n_prime = 200
T = 30
"""


def write_cfg(tmp_path, text=TREE_CFG, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_config_parsing_and_errors():
    cfg = parse_config(TREE_CFG)
    assert cfg.env == "tree" and cfg.int("n") == 200
    assert cfg.group("env")["leaf_costs"] == "1, 0.5, 0, 0.7"
    assert cfg.seeds(3) == [0, 1, 2]
    with pytest.raises(ConfigError, match="environment"):
        parse_config("env = moon\n")
    with pytest.raises(ConfigError):
        parse_config("this is not a config\n")


def test_resolve_jobs(monkeypatch):
    monkeypatch.delenv("FAIL_LFO_JOBS", raising=False)
    assert resolve_jobs(None) == 1
    monkeypatch.setenv("FAIL_LFO_JOBS", "3")
    assert resolve_jobs(None) == 3
    assert resolve_jobs(2) == 2
    monkeypatch.setenv("FAIL_LFO_JOBS", "many")
    with pytest.raises(ConfigError):
        resolve_jobs(None)


def test_gen_expert_is_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["gen-expert", "--config", cfg, "--seed-count", "2", "--out", str(a)]) == 0
    assert main(["gen-expert", "--config", cfg, "--seed-count", "2", "--out", str(b)]) == 0
    for name in ("demos_seed0.jsonl", "demos_seed1.jsonl", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rec = json.loads((a / "demos_seed0.jsonl").read_text().splitlines()[0])
    assert set(rec) == {"h", "x", "seed_index"}


def test_train_summary_independent_of_jobs(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path)
    monkeypatch.setenv("FAIL_LFO_JOBS", "2")
    assert main(["train", "--config", cfg, "--seed-count", "3", "--out", str(tmp_path / "p")]) == 0
    assert main(["train", "--config", cfg, "--seed-count", "3", "--out", str(tmp_path / "s"),
                 "--jobs", "1"]) == 0

    def rows(d):
        with (tmp_path / d / "summary.csv").open() as fh:
            return [{k: v for k, v in r.items() if k != "wall_time"} for r in csv.DictReader(fh)]

    assert rows("p") == rows("s")
    first = rows("s")[0]
    assert first["algorithm"] == "fail" and int(first["trajectories_used"]) == 400
    assert (tmp_path / "s" / "transcripts_seed2.jsonl").is_file()
    assert main(["report", "--out", str(tmp_path / "s")]) == 0
    report = json.loads((tmp_path / "s" / "report.json").read_text())
    assert report["train"][0]["runs"] == 3


def test_train_from_demo_file(tmp_path):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "d"
    assert main(["gen-expert", "--config", cfg, "--seed-count", "1", "--out", str(out)]) == 0
    cfg2 = write_cfg(tmp_path, TREE_CFG + f"demo_file = {out}/demos_seed{{seed}}.jsonl\n", "d.cfg")
    assert main(["train", "--config", cfg2, "--seed-count", "1", "--out", str(out)]) == 0


@pytest.mark.parametrize("algo", ["ifail", "fail_star", "tree_identify", "rl_random_search_baseline"])
def test_train_other_algorithms(tmp_path, algo):
    text = TREE_CFG.replace("algorithm = fail", f"algorithm = {algo}")
    assert main(["train", "--config", write_cfg(tmp_path, text), "--out", str(tmp_path)]) == 0


def test_missing_demo_file_exits_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path, TREE_CFG + "demo_file = /nonexistent/demos.jsonl\n")
    assert main(["train", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "not found" in capsys.readouterr().err


def test_bad_config_exits_2(tmp_path):
    assert main(["train", "--config", str(tmp_path / "none.cfg"), "--out", str(tmp_path)]) == 2


def test_separation_and_capacity(tmp_path, capsys):
    assert main(["separation", "--H-list", "2,6", "--seed-count", "5", "--out", str(tmp_path)]) == 0
    with (tmp_path / "separation.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["ilfo_trajectories"]) for r in rows] == [2, 10]
    assert main(["capacity-demo", "--states", "1000000,2", "--M", "20", "--seed-count", "20",
                 "--out", str(tmp_path)]) == 0
    with (tmp_path / "capacity.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert float(rows[0]["overlap_prob"]) <= 0.05 and float(rows[1]["overlap_prob"]) == 1.0


def test_lp_check(tmp_path):
    assert main(["lp-check", "--sizes", "1,3", "--seed-count", "4", "--out", str(tmp_path)]) == 0
    with (tmp_path / "lp_check.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 * 4 * 3 and all(r["pass"] == "True" for r in rows)
    assert main(["lp-check", "--sizes", "", "--out", str(tmp_path / "e")]) == 0
    assert (tmp_path / "e" / "lp_check.csv").read_text().count("\n") == 1


def test_report_on_empty_dir(tmp_path):
    assert main(["report", "--out", str(tmp_path)]) == 1


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fail_lfo.cli", "lp-check", "--sizes", "1",
                           "--seed-count", "1", "--out", str(tmp_path)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.startswith("kind,size,seed")
