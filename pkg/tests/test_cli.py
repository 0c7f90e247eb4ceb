import json
import subprocess
import sys

from dragonroute.cli import main

from test_harness import BASE


def write_config(tmp_path, **over):
    d = json.loads(json.dumps(BASE))
    d.update(over)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(d))
    return str(p)


def test_run_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["run", "--config", cfg, "--out", str(a), "--quiet"]) == 0
    assert main(["run", "--config", cfg, "--out", str(b), "--quiet"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().startswith("#dragonroute-csv-v1\n")


def test_seed_override_is_reproducible(tmp_path):
    cfg = write_config(tmp_path, background={"nodes": 8, "size": 1024, "load": 0.2, "seed": 4})
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["run", "--config", cfg, "--seed", "1", "--out", str(a), "--quiet"])
    main(["run", "--config", cfg, "--seed", "1", "--out", str(b), "--quiet"])
    assert a.read_bytes() == b.read_bytes()


def test_summarize_verb(tmp_path):
    cfg = write_config(tmp_path)
    recs, summ = tmp_path / "r.csv", tmp_path / "s.csv"
    main(["run", "--config", cfg, "--out", str(recs), "--quiet"])
    assert main(["summarize", str(recs), "--out", str(summ), "--quiet"]) == 0
    lines = summ.read_text().splitlines()
    assert lines[1].startswith("mode,n,q1,median")
    assert len(lines) == 4


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path, trials=0)
    assert main(["run", "--config", cfg, "--quiet"]) == 2
    assert "trials" in capsys.readouterr().err


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "dragonroute.cli", "--help"],
                         capture_output=True, text=True, check=True).stdout
    for verb in ("run", "sweep", "summarize", "validate-model"):
        assert verb in out
