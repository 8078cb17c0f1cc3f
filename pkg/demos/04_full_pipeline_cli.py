"""
The full pipeline through the CLI
=================================

generate -> signals -> eval -> route -> report, on a synthetic
multiple-choice dataset and two deterministic mock backends (no servers
needed). Everything lands in ./demo_run as plain JSONL/JSON/CSV.

Run `python3 demos/04_full_pipeline_cli.py`, then poke around:

    demo_run/answers_*.jsonl        one greedy answer per instance
    demo_run/signals_*__*.jsonl     one signal record per instance
    demo_run/eval_*__*.json         AUROC/APGR/coverage/quintiles/case means
    demo_run/report/*.csv           merged plot-data tables

Rerunning is free: every backend result is cached content-addressed in
demo_run/store, so a second pass issues zero backend calls and rewrites
byte-identical reports.
"""

import json
import shutil
from pathlib import Path

from crossmodel.cli import main

root = Path("demo_run")
shutil.rmtree(root, ignore_errors=True)
root.mkdir()

# 1. a synthetic 60-question multiple-choice dataset
dataset = root / "dataset.jsonl"
with dataset.open("w", encoding="utf-8") as fh:
    for i in range(60):
        fh.write(json.dumps({
            "id": f"q{i:03d}",
            "task_type": "multiple_choice",
            "prompt": f"Question {i}: pick the right letter.",
            "gold": "ABCD"[i % 4],
        }) + "\n")

# 2. two mock backends: different seeds behave like different model families
letters = [" A", " B", " C", " D"]
gen_cfg = root / "weak.json"
gen_cfg.write_text(json.dumps({
    "id": "weak-7b", "type": "mock", "seed": 3, "peak": 2.0, "vocab": letters,
}, indent=2))
ver_cfg = root / "strong.json"
ver_cfg.write_text(json.dumps({
    "id": "strong-70b", "type": "mock", "seed": 8, "peak": 3.0, "vocab": letters,
}, indent=2))

flags = [
    "--dataset", str(dataset), "--preset", "mmlu",
    "--generator", str(gen_cfg), "--verifier", str(ver_cfg),
    "--out", str(root),
]

for stage in (["generate"], ["signals"], ["eval"],
              ["route", "--budget", "0.3"],
              ["report", str(root), "--out", str(root / "report")]):
    cmd = stage + (flags if stage[0] != "report" else [])
    print(f"\n$ crossmodel {' '.join(cmd)}")
    code = main(cmd)
    assert code == 0, f"stage {stage[0]} exited {code}"

report = json.loads((root / "eval_weak-7b__strong-70b.json").read_text())
print("\n--- headline numbers ---")
print(f"weak accuracy   : {report['weak_accuracy']:.3f}")
print(f"strong accuracy : {report['strong_accuracy']:.3f}")
for name in ("log_cmp", "cme", "log_gppl", "g_ent"):
    sig = report["signals"][name]
    print(f"{name:12s} AUROC={sig['auroc']:.3f}  APGR_raw={sig['apgr_raw']:.3f}"
          f"  APGR_norm={sig['apgr_normalized']:.3f}")
