import json
import os
import subprocess
import sys

import pytest
from hypothesis import given, strategies as st

from fracheat.cli import main
from fracheat.config import ConfigError, RunConfig, merge_flags

REF = os.path.join(os.path.dirname(__file__), "..", "configs", "reference.ini")


@given(st.sampled_from(["white", "riesz:0.5", "fracspace:0.3"]), st.floats(0.3, 0.9), st.integers(1, 8),
       st.integers(0, 2 ** 31), st.dictionaries(st.sampled_from(["hit", "metric"]),
                                               st.dictionaries(st.from_regex(r"[a-z][a-z0-9_]{0,6}", fullmatch=True),
                                                               st.from_regex(r"[a-z0-9.:]{1,8}", fullmatch=True),
                                                               max_size=3), max_size=2))
def test_round_trip(spec, H, d, seed, sections):
    cfg = RunConfig(spectrum=spec, H=H, d=d, seed=seed, sections=sections)
    text = cfg.to_string()
    again = RunConfig.from_string(text)
    assert again.to_string() == text and again.config_hash() == cfg.config_hash()


def test_config_errors():
    with pytest.raises(ConfigError, match="H"):
        RunConfig.from_string("[run]\nH = abc\n")
    with pytest.raises(ConfigError, match="unknown field"):
        RunConfig.from_string("[run]\nfoo = 1\n")
    with pytest.raises(ConfigError, match="line"):
        RunConfig.from_string("[run]\nH = 0.5\nH = 0.6\n")


def test_flag_precedence():
    env = {"FRACHEAT_SEED": "7", "FRACHEAT_OUT": "x"}
    merged = merge_flags({"seed": 3, "out": None}, env)
    assert merged["seed"] == 3 and merged["out"] == "x"


def test_spectrum_quarter_exit_2(tmp_path, capsys):
    p = tmp_path / "c.ini"
    p.write_text("[run]\nspectrum = white\nH = 0.25\n")
    assert main(["spectrum", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "nonexistent: H ≤ 1/4" in capsys.readouterr().out


def test_metric_deterministic_and_manifest(tmp_path):
    for k in ("a", "b"):
        assert main(["metric", "--config", REF, "--out", str(tmp_path / k)]) == 0
    a = (tmp_path / "a" / "metric_delta_t.csv").read_bytes()
    assert a == (tmp_path / "b" / "metric_delta_t.csv").read_bytes()
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert {f["file"] for f in man["files"]} == {"metric_delta_t.csv", "metric_delta_t.json"}
    assert man["exit_code"] == 0 and man["config_hash"]


def test_holder_failure_exit_1(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[run]\nspectrum = white\nH = 0.5\n\n[holder]\naxis = space\ntol = 0.0000001\n")
    assert main(["holder", "--config", str(p), "--out", str(tmp_path / "o")]) == 1


@pytest.mark.parametrize("sub", ["spectrum", "capacity", "hausdorff", "simulate", "hit"])
def test_subcommands_run(sub, tmp_path):
    assert main([sub, "--config", REF, "--out", str(tmp_path)]) == 0
    assert (tmp_path / "manifest.json").exists()


def test_console_script_and_env(tmp_path):
    env = dict(os.environ, FRACHEAT_SEED="11", FRACHEAT_OUT=str(tmp_path))
    r = subprocess.run([sys.executable, "-m", "fracheat.cli", "spectrum", "--config", REF], env=env,
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert json.loads((tmp_path / "manifest.json").read_text())["seed"] == 11


def test_verify_all_subset(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[verify]\nchecks = 2 12\n")
    assert main(["verify-all", "--config", str(p), "--out", str(tmp_path)]) == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["verdicts"] == {"criterion_02": True, "criterion_12": True}


def test_threads_do_not_change_output(tmp_path):
    sums = []
    for th in ("1", "3"):
        out = tmp_path / th
        assert main(["simulate", "--config", REF, "--threads", th, "--out", str(out)]) == 0
        man = json.loads((out / "replicas" / "manifest.json").read_text())
        sums.append(sorted((f["file"], f["sha256"]) for f in man["files"]))
    assert sums[0] == sums[1]
