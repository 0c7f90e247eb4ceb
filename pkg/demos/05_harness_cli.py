"""
Experiments from config files
=============================

The harness runs a JSON config end to end and writes one CSV row per
measured message. The CLI is a thin wrapper over the same calls.
"""

from pathlib import Path
import subprocess
import sys
import tempfile

from dragonroute import harness

here = Path(__file__).parent / "configs"
out = Path(tempfile.mkdtemp())

# run a pingpong that alternates between two bias modes
cfg = harness.ExperimentConfig.load(here / "pingpong_alternate.json")
records = harness.run_experiment(cfg)
print(len(records), "records", flush=True)

# group by mode and normalize against the default arm
summary = harness.summarize([r.row() for r in records], ["mode"], "t_msg_cycles", "ADAPTIVE_0")
print(harness.write_summary(summary, ["mode"]), flush=True)

# the same thing through the command line, twice, to show determinism
cmd = [sys.executable, "-m", "dragonroute.cli", "sweep", "--config",
       str(here / "alltoall_policy_sweep.json"), "--quiet"]
a = subprocess.run(cmd + ["--out", str(out / "a.csv")], check=True)
b = subprocess.run(cmd + ["--out", str(out / "b.csv")], check=True)
print("identical sweep output:", (out / "a.csv").read_bytes() == (out / "b.csv").read_bytes(), flush=True)

subprocess.run([sys.executable, "-m", "dragonroute.cli", "summarize", str(out / "a.csv"),
                "--group-by", "size_bytes,mode"], check=True)
