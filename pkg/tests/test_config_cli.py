import json

import numpy as np
import pytest

from nelsonlab import cli
from nelsonlab import config as cfgmod
from nelsonlab import container as io

GOOD = """
[run]
preset = tiny-chain
seed = 9

[sampler]
M = 1500
T_grid = 0.5, 1.0

[coefficients]
m = constant:1.5
"""


def test_parse_and_preset_overrides():
    cfg = cfgmod.parse_text(GOOD)
    assert cfg.seed == 9 and cfg.preset_name == "tiny-chain"
    p = cfg.preset()
    assert p.settings["M"] == 1500 and p.settings["T_grid"] == [0.5, 1.0]
    assert float(p.spec.m(np.zeros((1, 1)))[0]) == 1.5


def test_hash_ignores_scheduling_knobs(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(GOOD)
    a = cfgmod.load(path)
    b = cfgmod.load(path, workers=4, out=str(tmp_path / "x"))
    c = cfgmod.load(path, ["sampler.M=1600"])
    assert a.hash == b.hash != c.hash
    assert a.hash == cfgmod.load(path).hash
    # the preset default is part of the hash even when not written out
    assert cfgmod.parse_text("").hash == cfgmod.parse_text("[run]\npreset = harmonic-1d\n").hash


@pytest.mark.parametrize("text, line", [
    ("[run]\npreset = tiny-chain\n[grid]\nN = ten\n", 4),
    ("[run]\nbogus = 1\n", 2),
    ("[nosuch]\nx = 1\n", 1),
    ("[run]\npreset = no-such-preset\n", 2),
    ("[coefficients]\n\nm = wobble:1\n", 3),
])
def test_config_errors_carry_line_numbers(text, line):
    with pytest.raises(cfgmod.ConfigError) as e:
        cfgmod.parse_text(text).preset()
    assert e.value.line == line and f"line {line}" in str(e.value)


def test_lambda_outside_window():
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.load(None, ["run.preset=tiny-chain", "sampler.lam=0.3"])
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.load(None, ["sampler.M"])


def test_field_syntax():
    assert cfgmod.parse_field("identity") is not None
    assert cfgmod.parse_field("power:1,2")(np.zeros((1, 1)))[0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        cfgmod.parse_field("nope:1")


def test_container_round_trip(tmp_path):
    arrays = {"a": np.arange(6.0).reshape(2, 3), "b": np.array([1, -2, 3], dtype=np.int64)}
    io.write_container(tmp_path / "x.nlab", arrays, {"config_hash": "abc", "note": 1.5})
    back, meta = io.read_container(tmp_path / "x.nlab")
    for k in arrays:
        np.testing.assert_array_equal(back[k], arrays[k])
        assert back[k].dtype == arrays[k].dtype
    assert meta == {"config_hash": "abc", "note": 1.5}
    (tmp_path / "bad.nlab").write_bytes(b"garbage")
    with pytest.raises(ValueError):
        io.read_container(tmp_path / "bad.nlab")


def test_csv_round_trip_and_hash_guard(tmp_path):
    rows = [{"T": 0.5, "gamma": 0.1 + 0.2, "ok": True}, {"T": 1.0, "gamma": 1e-300, "ok": False}]
    io.write_csv(tmp_path / "a.csv", rows, "h1")
    back, header = io.read_csv(tmp_path / "a.csv")
    assert header["config_hash"] == "h1"
    assert float(back[0]["gamma"]) == 0.1 + 0.2 and back[1]["ok"] == "0"
    io.write_csv(tmp_path / "b.csv", rows, "h1")
    io.write_csv(tmp_path / "c.csv", rows, "h2")
    assert io.require_same_hash([tmp_path / "a.csv", tmp_path / "b.csv"]) == "h1"
    with pytest.raises(io.HashMismatch):
        io.require_same_hash([tmp_path / "a.csv", tmp_path / "c.csv"])


def run_cli(tmp_path, *args):
    return cli.main([*args, "--out", str(tmp_path)])


TINY = ["--set", "run.preset=tiny-chain", "--set", "sampler.M=1500"]


def test_cli_exit_codes(tmp_path, capsys):
    assert run_cli(tmp_path / "ok", "spectrum", *TINY) == 0
    assert (tmp_path / "ok" / "spectrum.csv").exists()
    assert (tmp_path / "ok" / "spectrum.csv.meta.json").exists()
    assert run_cli(tmp_path / "e", "spectrum", "--set", "grid.N=ten") == 2
    assert run_cli(tmp_path / "e", "nosuch") == 2
    assert run_cli(tmp_path / "e", "spectrum", "--seed", "-1") == 2
    assert run_cli(tmp_path / "e", "spectrum", "--workers", "0") == 2
    assert run_cli(tmp_path / "cap", "spectrum", *TINY, "--set", "kernel.dense_cap=2") == 3
    assert run_cli(tmp_path / "fcap", "fock-check", *TINY, "--set", "fock.cap=10") == 3
    # a reflecting-free flat potential violates confinement
    assert run_cli(tmp_path / "e", "spectrum", *TINY, "--set", "coefficients.V=constant:0") == 2
    out = capsys.readouterr().out
    assert "PASS" in out


def test_cli_check_failure(tmp_path, capsys):
    # 64 paths cannot meet a 2% relative tolerance
    assert run_cli(tmp_path, "fk-check", "--set", "sampler.fk_M=64") == 1
    assert "FAIL  within_2pct" in capsys.readouterr().out


def test_cli_gamma_strong_coupling_stays_in_log_domain(tmp_path):
    assert run_cli(tmp_path, "gamma", *TINY, "--set", "gamma.q=200", "--set", "sampler.T_grid=2") == 0
    rows, _ = io.read_csv(tmp_path / "gamma.csv")
    assert float(rows[0]["log_gamma"]) < -700


def test_cli_gamma_zero_coupling(tmp_path):
    assert run_cli(tmp_path, "gamma", *TINY, "--set", "gamma.q=0") == 0
    rows, header = io.read_csv(tmp_path / "gamma.csv")
    assert [float(r["gamma"]) for r in rows] == [1.0] * len(rows)
    body = json.loads((tmp_path / "gamma.json").read_text())
    assert body["config_hash"] == header["config_hash"]
    assert "seconds" not in json.dumps(body)


def test_cli_determinism_across_workers(tmp_path):
    for w in (1, 4):
        assert run_cli(tmp_path / str(w), "gamma", *TINY, "--workers", str(w)) == 0
    for name in ("gamma.csv", "gamma.json"):
        assert (tmp_path / "1" / name).read_bytes() == (tmp_path / "4" / name).read_bytes()


def test_cli_flags_before_subcommand(tmp_path):
    assert cli.main(["--out", str(tmp_path), *TINY, "spectrum"]) == 0
    assert (tmp_path / "spectrum.json").exists()
