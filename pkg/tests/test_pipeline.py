import filecmp
import json
import os

import numpy as np
import pandas as pd
import pytest

from earnkit.pipeline import (RunConfig, StageError, emit_report, load_schemas,
                              run_pipeline, validate_output, validate_outputs)

LIGHT_STAGES = {"akm": False, "indicators": False, "mobility": False,
                "decompose": False, "microagg": False}


def light_config(outdir, **kw):
    base = dict(outdir=str(outdir), n_persons=900, n_firms=120,
                stages=dict(LIGHT_STAGES))
    base.update(kw)
    return RunConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError, match="cohort window"):
        RunConfig(outdir="x", cohort_window=(1990, 2015)).validate()
    with pytest.raises(ValueError, match="reference year"):
        RunConfig(outdir="x", indicator_reference_year=1950).validate()
    with pytest.raises(ValueError, match="unknown stages"):
        RunConfig(outdir="x", stages={"nope": True}).validate()


def test_config_json_roundtrip(tmp_path):
    cfg = RunConfig(outdir=str(tmp_path), seed=5, horizons=(1, 5))
    path = tmp_path / "cfg.json"
    path.write_text(cfg.to_json())
    cfg2 = RunConfig.from_json(str(path))
    assert cfg2 == cfg
    assert cfg2.config_hash() == cfg.config_hash()


def test_medium_run_completes_all_stages(medium_run):
    cfg, manifest = medium_run
    for stage, record in manifest["stages"].items():
        assert record["status"] in ("done", "cached"), stage
        for name in record.get("outputs", []):
            assert os.path.exists(os.path.join(cfg.outdir, name)), name


def test_medium_outputs_validate_against_schemas(medium_run):
    cfg, _ = medium_run
    counts = validate_outputs(cfg.outdir)
    assert counts["table5.csv"] > 0
    assert counts["sample_counts.csv"] > 0


def test_rerun_is_fully_cached(medium_run):
    cfg, _ = medium_run
    manifest = run_pipeline(cfg)
    for stage, record in manifest["stages"].items():
        assert record["status"] == "cached", stage


def test_single_stage_rerun_reproduces_bytes(medium_run, tmp_path):
    cfg, _ = medium_run
    src = os.path.join(cfg.outdir, "measures.csv")
    saved = tmp_path / "measures.csv"
    saved.write_bytes(open(src, "rb").read())
    os.remove(src)
    run_pipeline(cfg, only="measures")
    assert filecmp.cmp(src, saved, shallow=False)


def test_light_runs_are_byte_identical(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    m1 = run_pipeline(light_config(out1))
    m2 = run_pipeline(light_config(out2))
    names = sorted({n for r in m1["stages"].values()
                    for n in r.get("outputs", [])})
    assert names
    for name in names:
        assert filecmp.cmp(out1 / name, out2 / name, shallow=False), name
    for stage in LIGHT_STAGES:
        assert m1["stages"][stage]["status"] == "skipped"


def test_changed_seed_changes_outputs(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    run_pipeline(light_config(out1))
    run_pipeline(light_config(out2, seed=777))
    assert not filecmp.cmp(out1 / "jobs.csv", out2 / "jobs.csv", shallow=False)


def test_stage_error_names_the_stage(tmp_path):
    cfg = RunConfig(outdir=str(tmp_path))
    with pytest.raises(StageError, match="stage load"):
        run_pipeline(cfg, only="load")


def test_emit_report(medium_run, tmp_path):
    cfg, _ = medium_run
    text = emit_report(cfg.outdir)
    assert "table5.csv" in text
    assert "skipped" not in text        # the full run produced everything
    with pytest.raises(ValueError, match="no pipeline outputs"):
        emit_report(str(tmp_path / "empty"))


def test_emit_report_marks_missing(tmp_path):
    run_pipeline(light_config(tmp_path))
    text = emit_report(str(tmp_path))
    assert "skipped" in text            # figure stages were disabled
    assert "measures.csv" in text


def test_validate_output_rejects_wrong_columns(tmp_path):
    schemas = load_schemas()
    bad = tmp_path / "table5.csv"
    pd.DataFrame({"wrong": [1]}).to_csv(bad, index=False)
    with pytest.raises(ValueError, match="columns"):
        validate_output(str(bad), schemas["table5.csv"])


def test_manifest_row_counts_consistent(medium_run):
    cfg, manifest = medium_run
    n_gen = manifest["stages"]["gen"]["rows"]["persons"]
    assert n_gen == cfg.n_persons
    persons = pd.read_csv(os.path.join(cfg.outdir, "persons.csv"))
    assert len(persons) == cfg.n_persons
    meas = pd.read_csv(os.path.join(cfg.outdir, "measures.csv"))
    assert manifest["stages"]["measures"]["rows"]["measures"] == len(meas)
    assert len(meas) > 0


def test_external_inputs_respected(medium_run, tmp_path):
    """Pointing the config at existing input CSVs skips generation."""
    cfg, _ = medium_run
    inputs = {k: os.path.join(cfg.outdir, f"{k}.csv")
              for k in ("persons", "jobs", "deflator", "minwage")}
    cfg2 = RunConfig(outdir=str(tmp_path), n_persons=4000, n_firms=300,
                     stages={s: False for s in
                             ("impute", "samples", "measures", "akm",
                              "indicators", "mobility", "decompose",
                              "microagg")},
                     inputs=inputs)
    manifest = run_pipeline(cfg2)
    assert manifest["stages"]["gen"]["status"] == "done"
    summary = json.load(open(tmp_path / "load_summary.json"))
    assert summary["n_persons"] == 4000
