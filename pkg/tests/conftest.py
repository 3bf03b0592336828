import json
from pathlib import Path

import pytest

from recoverycast import synthetic
from recoverycast.config import build_config, synthetic_config

FAST_MODELS = [
    {"id": "seasonal_naive", "family": "seasonal_naive"},
    {"id": "drift", "family": "drift"},
    {"id": "ses", "family": "ses"},
    {"id": "holt_winters", "family": "holt_winters"},
    {"id": "bchw", "family": "bchw"},
]

FAST_HIERARCHICAL = [
    {"id": "td_a_ets", "method": "td_forecast_prop", "base_family": "ses"},
    {"id": "td_b_ets", "method": "td_hist_prop", "base_family": "ses"},
    {"id": "mint", "method": "mint", "base_family": "ses"},
    {"id": "wls", "method": "wls", "base_family": "ses"},
]


def make_dataset(out_dir: Path, seed=0, destinations=5, years=6, shape="linear", suppression=0.7):
    spec = synthetic.SyntheticSpec(
        destinations=destinations,
        years=years,
        recovery_shape=shape,
        suppression=suppression,
    )
    ds = synthetic.generate(spec, seed)
    paths = synthetic.write_dataset(ds, out_dir)
    return ds, paths


def fast_raw_config(paths, regions, seed=0, **overrides):
    raw = synthetic_config(paths, regions, seed)
    raw["models"] = FAST_MODELS
    raw["hierarchical"] = FAST_HIERARCHICAL
    raw["workers"] = 1
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(raw.get(key), dict):
            raw[key] = {**raw[key], **value}
        else:
            raw[key] = value
    return raw


@pytest.fixture(scope="session")
def small_run(tmp_path_factory):
    """One fast end-to-end run shared by the read-only pipeline tests."""
    root = tmp_path_factory.mktemp("small")
    data_dir = root / "data"
    out_dir = root / "out"
    ds, paths = make_dataset(data_dir, seed=1)
    raw = fast_raw_config(paths, ds.regions, seed=1)
    (data_dir / "config.json").write_text(json.dumps(raw), encoding="utf-8")
    cfg = build_config(raw)

    from recoverycast import pipeline

    manifest = pipeline.run(cfg, out_dir)
    return {
        "config": cfg,
        "raw": raw,
        "out": out_dir,
        "data": data_dir,
        "dataset": ds,
        "manifest": manifest,
    }
