import csv
import math
import subprocess
import sys

import pytest

from radcom_platoon import cli
from radcom_platoon.cli import RunSpec, main, run_experiment
from radcom_platoon.scenario import ConfigError

TINY = "road_length = 1000\nlanes_per_direction = 1\nwarmup = 1\nmeasure = 2\n"
OUTPUTS = ("summary.csv", "scbr_timeseries.csv", "gaps.csv", "fuel.csv", "resolved_config.txt",
           "trace_hashes.csv")


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.cfg"
    cfg.write_text(TINY)
    outs = []
    for name in ("a", "b"):
        code = main(["--config", str(cfg), "--out", str(root / name), "--replications", "1",
                     "--seed", "11"])
        assert code == 0
        outs.append(root / name)
    return cfg, outs


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_all_outputs_written(tiny_run):
    _, (out, _) = tiny_run
    for name in OUTPUTS:
        assert (out / name).is_file()
    assert not list(out.glob(".*"))


def test_summary_three_rows(tiny_run):
    _, (out, _) = tiny_run
    summary = rows(out / "summary.csv")
    assert [r["penetration"] for r in summary] == ["0", "0.5", "1"]
    for r in summary:
        assert 0 <= float(r["pdr_pcm"]) <= 1
        assert 0 <= float(r["scbr"]) <= 1
        assert float(r["latency_ms"]) > 0
        assert math.isnan(float(r["pdr_sd"]))


def test_csv_headers(tiny_run):
    _, (out, _) = tiny_run
    heads = {name: (out / name).read_text().splitlines()[0] for name in OUTPUTS[:4]}
    assert heads == {
        "summary.csv": "penetration,pdr_pcm,pdr_sd,scbr,scbr_sd,latency_ms,latency_sd",
        "scbr_timeseries.csv": "penetration,t_s,scbr",
        "gaps.csv": "penetration,pair_index,tau_s,gap_m",
        "fuel.csv": "penetration,mean_gap_m,saving_fraction",
    }
    assert b"\r" not in (out / "summary.csv").read_bytes()


def test_gaps_three_pairs_per_rate(tiny_run):
    _, (out, _) = tiny_run
    gaps = rows(out / "gaps.csv")
    assert len(gaps) == 9
    assert all(float(g["gap_m"]) >= 0 for g in gaps)


def test_byte_identical_reruns(tiny_run):
    _, (a, b) = tiny_run
    for name in OUTPUTS:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_resolved_config_parses_back(tiny_run):
    from radcom_platoon.config import parse_config
    _, (out, _) = tiny_run
    text = (out / "resolved_config.txt").read_text()
    cfg = parse_config(text)
    assert cfg.scenario.road_length == 1000 and cfg.scenario.seed == 11
    assert cfg.drag_multiplier is not None
    assert "drag multiplier calibrated" in text


def test_config_error_exit_2(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("penetration_rate = 1.5\n")
    assert main(["--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path / "o")]) == 2
    assert main(["--penetrations", "0.5,0.2", "--out", str(tmp_path / "o")]) == 2
    assert main(["--replications", "0", "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o" / "summary.csv").exists()


def test_runspec_validation():
    with pytest.raises(ConfigError):
        RunSpec(penetrations=(0.0, 1.2))
    with pytest.raises(ConfigError):
        RunSpec(penetrations=())


def test_runtime_failure_exit_1_leaves_nothing(tmp_path, monkeypatch):
    calls = []

    def boom(*args, **kwargs):
        calls.append(args)
        if len(calls) > 1:
            raise RuntimeError("simulated crash")
        return real(*args, **kwargs)

    real = cli.run_replication
    monkeypatch.setattr(cli, "run_replication", boom)
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(TINY)
    out = tmp_path / "out"
    assert main(["--config", str(cfg), "--out", str(out), "--replications", "1"]) == 1
    assert list(out.iterdir()) == []


def test_atomic_write_keeps_old_file(tmp_path, monkeypatch):
    target = tmp_path / "x.csv"
    target.write_text("old\n")

    def fail(*a, **k):
        raise OSError("disk full")

    monkeypatch.setattr(cli.os, "replace", fail)
    with pytest.raises(OSError):
        cli._write(target, "new\n")
    assert target.read_text() == "old\n"
    assert [p.name for p in tmp_path.iterdir()] == ["x.csv"]


def test_trace_files(tmp_path):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(TINY.replace("measure = 2", "measure = 0.5"))
    spec = RunSpec(cfg, (0.0,), 1, 3, tmp_path / "out", trace=True)
    assert run_experiment(spec) == 0
    trace = tmp_path / "out" / "trace_p0_r0.tsv"
    first = trace.read_text().splitlines()[0].split("\t")
    assert len(first) == 4 and first[0].isdigit()


def test_module_entry_help():
    res = subprocess.run([sys.executable, "-m", "radcom_platoon", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for flag in ("--config", "--out", "--seed", "--penetrations", "--replications", "--trace",
                 "--oracle-check"):
        assert flag in res.stdout
