from __future__ import annotations

import filecmp
import os
import shutil
import subprocess
import sys
import textwrap
from fractions import Fraction

import pytest

from qvorder.cli import main
from qvorder.config import ConfigError, parse_config
from qvorder.rng import derive_seed

BS_PRICE = """
experiment.kind = price
model.kind = levy
model.sigma2 = 0.04
pricing.payoffs = call:fixed:0.04
"""


def _write(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return str(p)


def _read(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


# ---------------------------------------------------------------------------
# parsing

def test_minimal_config_gets_defaults():
    cfg = parse_config(BS_PRICE)
    assert cfg.kind == "price" and cfg.eps == 1e-3 and cfg.alpha == 0.05 and cfg.r == 0.0
    assert cfg.paths == 100_000 and cfg.threads >= 1 and cfg.n == [4]
    assert cfg.models[0].triplet.sigma2 == 0.04 and cfg.payoffs[0].kind == "call"


def test_unknown_family_is_rejected_with_line_and_key():
    with pytest.raises(ConfigError, match="unknown family") as err:
        parse_config("experiment.kind = price\nmodel.kind = levy\nmodel.jumps.family = kou_asym\n")
    assert err.value.line == 3 and err.value.key == "model.jumps.family"


def test_missing_kind_names_the_key():
    with pytest.raises(ConfigError, match="experiment.kind"):
        parse_config("model.kind = levy\nmodel.sigma2 = 0.04\n")


@pytest.mark.parametrize("text,key,line", [
    ("experiment.kind = price\nexperiment.colour = red\n", "experiment.colour", 2),
    ("experiment.kind = oracle\nexperiment.paths = many\n", "experiment.paths", 2),
    ("experiment.kind = oracle\nexperiment.paths = 0\n", "experiment.paths", 2),
    ("experiment.kind = oracle\nexperiment.kind = price\n", "experiment.kind", 2),
    ("experiment.kind = order-test\nmodel.kind = levy\nmodel.sigma2 = -1\n", "model.sigma2", 3),
    ("experiment.kind = order-test\nmodel.kind = levy\nmodel.jumps.family = gaussian\n"
     "model.jumps.lambda = -1\nmodel.jumps.delta = 0.1\n", "model.jumps.lambda", 4),
    ("experiment.kind = nonsense\n", "experiment.kind", 1),
])
def test_config_errors_name_line_and_key(text, key, line):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.key == key and err.value.line == line
    assert f"line {line}" in str(err.value) and key in str(err.value)


def test_multi_model_config_and_clock_default():
    cfg = parse_config("""
experiment.kind = order-test
model.a.kind = levy
model.a.sigma2 = 0.04
model.b.kind = time_changed
model.b.sigma2 = 1
model.b.jumps.family = gaussian
model.b.jumps.lambda = 25
model.b.jumps.delta = 0.1
model.b.clock.kappa = 2
""")
    a, b = cfg.models
    assert (a.model_id, b.model_id) == ("a", "b")
    assert b.clock.kind == "integrated_cir" and b.clock.kappa == 2 and b.triplet.jumps.lam == 25


def test_oracle_config_parses_fractions():
    cfg = parse_config("experiment.kind = oracle\noracle.n = 2, 4\noracle.probs = 1/2, 1/2\n")
    assert cfg.oracle_n == [2, 4] and cfg.oracle_probs == [Fraction(1, 2)] * 2


def test_derive_seed_is_injective_over_run_budget():
    keys = derive_seed(7, "order-test", range(1_000_000))
    assert len(set(keys.tolist())) == 1_000_000


# ---------------------------------------------------------------------------
# end-to-end runs

ORDER = """
experiment.kind = order-test
experiment.seed = 7
experiment.paths = 20000
experiment.batch_size = 3000
model.kind = levy
model.id = bs
model.b = -0.5
model.sigma2 = 0.04
partition.T = 1
partition.n = 4
"""


def test_order_test_run_reports_mean_gap(tmp_path, capsys):
    out = tmp_path / "out"
    assert main([_write(tmp_path, ORDER), "--out", str(out), "--threads", "1"]) == 0
    summary = _read(out / "summary.txt")
    assert "mean_gap.bs.uniform-n4-T1 = 0.0625" in summary
    assert "verdict.bs.uniform-n4-T1.RV>=icxQV = consistent" in summary and "status = pass" in summary
    header = _read(out / "verdicts.csv").splitlines()[0]
    assert header == "seed,version,model_id,partition_id,relation,K,D,SE,z,verdict"
    assert "pass" in capsys.readouterr().out


def test_reruns_are_byte_identical_across_threads(tmp_path):
    cfg = _write(tmp_path, ORDER)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main([cfg, "--out", str(a), "--threads", "1"]) == 0
    assert main([cfg, "--out", str(b), "--threads", "3"]) == 0
    names = sorted(os.listdir(a))
    assert names == sorted(os.listdir(b)) and "verdicts.csv" in names
    match, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    assert mismatch == [] and errors == []


def test_hazard_run_and_wrong_direction(tmp_path):
    base = "experiment.kind = counterexample\ncounterexample.name = hazard\nexperiment.paths = 100000\n"
    ok = tmp_path / "ok"
    assert main([_write(tmp_path, base), "--out", str(ok)]) == 0
    rows = _read(ok / "counterexamples.csv")
    for name in ("ks_pqv_vs_exp1", "stop_loss_equal_at_K0", "stop_loss_dominance_all_K",
                 "stop_loss_strict_K_positive"):
        assert name in rows
    bad = tmp_path / "bad"
    code = main([_write(tmp_path, base + "counterexample.wrong_direction = true\n", "wrong.cfg"), "--out", str(bad)])
    assert code == 1
    summary = _read(bad / "summary.txt")
    assert "status = fail" in summary and "stop_loss_dominance_all_K" in summary


def test_oracle_run(tmp_path):
    out = tmp_path / "o"
    assert main([_write(tmp_path, "experiment.kind = oracle\noracle.n = 2, 4\n"), "--out", str(out)]) == 0
    text = _read(out / "oracle.csv")
    assert text.splitlines()[0] == "seed,version,model_id,partition_id,quantity,exact,value"
    assert ",8," in text and ",4," in text


def test_price_run_rows(tmp_path):
    out = tmp_path / "p"
    text = BS_PRICE.replace("call:fixed:0.04", "call:fixed:0.04; swap:relative:1; volswap:fixed:0.2")
    assert main([_write(tmp_path, text + "experiment.paths = 5000\n"), "--out", str(out)]) == 0
    lines = _read(out / "pricing.csv").splitlines()
    assert lines[0].startswith("seed,version,model_id,partition_id,basis,payoff,strike_mode,K_eff,price,SE,")
    assert any("volswap" in ln and "no order guarantee" in ln for ln in lines[1:])


def test_cli_exit_codes_for_bad_input(tmp_path, capsys):
    assert main([_write(tmp_path, "experiment.kind = price\nmodel.kind = levy\nmodel.jumps.family = kou_asym\n")]) == 2
    assert "unknown family" in capsys.readouterr().err
    assert main([str(tmp_path / "missing.cfg")]) == 2
    assert main([_write(tmp_path, "experiment.kind = oracle\n", "o.cfg"), "--paths", "0"]) == 2


def test_flags_override_config(tmp_path):
    out = tmp_path / "flags"
    cfg = _write(tmp_path, "experiment.kind = oracle\noracle.n = 2\n")
    assert main([cfg, "--paths", "3000", "--seed", "5", "--out", str(out)]) == 0
    summary = _read(out / "summary.txt")
    assert "experiment.paths = 3000" in summary and "experiment.seed = 5" in summary


@pytest.mark.skipif(shutil.which("qvorder") is None, reason="console script not installed")
def test_console_script(tmp_path):
    cfg = _write(tmp_path, "experiment.kind = oracle\noracle.n = 2\n")
    res = subprocess.run(["qvorder", cfg, "--out", str(tmp_path / "cs")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr


def test_module_entry_point(tmp_path):
    cfg = _write(tmp_path, "experiment.kind = oracle\noracle.n = 2\n")
    res = subprocess.run([sys.executable, "-m", "qvorder.cli", cfg, "--out", str(tmp_path / "m")],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
