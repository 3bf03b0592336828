"""End to end: synthesize a dataset, run all four stages, read the report.

Equivalent to:
    recoverycast generate --out demo_data --seed 7 --destinations 8 --years 7
    recoverycast run --config demo_data/config.json --out demo_out
"""

import csv
import json
import tempfile
from pathlib import Path

from recoverycast import pipeline, synthetic
from recoverycast.config import build_config, synthetic_config

workdir = Path(tempfile.mkdtemp(prefix="recoverycast_demo_"))
data_dir = workdir / "data"
out_dir = workdir / "out"

spec = synthetic.SyntheticSpec(destinations=8, years=7, recovery_shape="linear", suppression=0.7)
dataset = synthetic.generate(spec, seed=7)
paths = synthetic.write_dataset(dataset, data_dir)
print(f"dataset written to {data_dir}")

raw = synthetic_config(paths, dataset.regions, seed=7)
config = build_config(raw)
manifest = pipeline.run(config, out_dir)

print(f"\nstages: " + ", ".join(f"{k} {v:.1f}s" for k, v in manifest.timings.items()))
print(f"warnings: {len(manifest.warnings)}")
print(f"outputs: {sorted(set(manifest.outputs))}")

with open(out_dir / pipeline.F_POINT_METRICS, newline="", encoding="utf-8") as fh:
    rows = list(csv.DictReader(fh))
print(f"\n{'destination':14s} {'rmse':>10s} {'mape':>8s} {'mase':>8s}")
for row in rows:
    print(f"{row['destination']:14s} {float(row['rmse']):10.0f} {float(row['mape']):8.3f} {float(row['mase']):8.3f}")

with open(out_dir / pipeline.F_BENCHMARK, newline="", encoding="utf-8") as fh:
    bench = {r["destination"]: r for r in csv.DictReader(fh)}
print(f"\nseasonal-naive benchmark average MASE: {float(bench['Average']['mase']):.3f}")
print(f"pipeline average MASE:                 {float([r for r in rows if r['destination'] == 'Average'][0]['mase']):.3f}")
