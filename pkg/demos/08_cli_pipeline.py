"""
Command-line pipeline
=====================

gen-data -> train -> eval -> weights-report, driven in-process through the
same entry point as the ``kappaface`` console script.
"""

import csv
import json
import pathlib
import tempfile

from kappaface.cli import main

out = pathlib.Path(tempfile.mkdtemp())
(out / "run.cfg").write_text("""# small desk run
num_classes = 20
max_n = 200
epochs = 10
lr_decay_epochs = 6, 8
num_pos = 300
num_neg = 300
""")
common = ["--config", str(out / "run.cfg"), "--out", str(out), "--no-timestamp"]
for cmd in ["gen-data", "train", "eval", "weights-report"]:
    print(f"$ kappaface {cmd}")
    assert main([cmd, *common]) == 0

print(sorted(p.name for p in out.iterdir()))
print(json.loads((out / "report.json").read_text()))
with open(out / "weights.csv") as fh:
    rows = list(csv.DictReader(fh))
print("first weights rows:")
for r in rows[:3]:
    print(r)
