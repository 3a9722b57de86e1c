import json
import os

import pytest

from earnkit.cli import main
from earnkit.pipeline import RunConfig

LIGHT = {"akm": False, "indicators": False, "mobility": False,
         "decompose": False, "microagg": False}


def write_config(tmp_path, **kw):
    outdir = tmp_path / "out"
    cfg = RunConfig(outdir=str(outdir), n_persons=700, n_firms=100,
                    stages=dict(LIGHT), **kw)
    path = tmp_path / "config.json"
    path.write_text(cfg.to_json())
    return str(path), str(outdir)


def test_run_command(tmp_path, capsys):
    cfg_path, outdir = write_config(tmp_path)
    assert main(["run", "--config", cfg_path]) == 0
    out = capsys.readouterr().out
    assert "completed stages" in out
    assert os.path.exists(os.path.join(outdir, "measures.csv"))


def test_single_stage_runs_prerequisites(tmp_path, capsys):
    cfg_path, outdir = write_config(tmp_path)
    assert main(["samples", "--config", cfg_path]) == 0
    assert os.path.exists(os.path.join(outdir, "sample_counts.csv"))
    # downstream stages were not touched
    assert not os.path.exists(os.path.join(outdir, "measures.csv"))
    out = capsys.readouterr().out
    assert "samples: done" in out


def test_second_invocation_uses_cache(tmp_path, capsys):
    cfg_path, _ = write_config(tmp_path)
    assert main(["samples", "--config", cfg_path]) == 0
    capsys.readouterr()
    assert main(["samples", "--config", cfg_path]) == 0
    assert "samples: cached" in capsys.readouterr().out


def test_report_command(tmp_path, capsys):
    cfg_path, _ = write_config(tmp_path)
    assert main(["run", "--config", cfg_path]) == 0
    capsys.readouterr()
    assert main(["report", "--config", cfg_path]) == 0
    out = capsys.readouterr().out
    assert "measures.csv" in out
    assert "skipped" in out             # disabled figure stages


def test_bad_config_exits_nonzero(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"outdir": str(tmp_path), "stages": {"x": True}}))
    assert main(["run", "--config", str(bad)]) == 1
    assert "unknown stages" in capsys.readouterr().err


def test_failing_stage_names_it_on_stderr(tmp_path, capsys):
    # measures without its sample inputs in an isolated directory
    outdir = tmp_path / "out"
    outdir.mkdir()
    cfg = RunConfig(outdir=str(outdir), stages={"gen": False, "load": False,
                                                "impute": False,
                                                "samples": False})
    path = tmp_path / "cfg.json"
    path.write_text(cfg.to_json())
    assert main(["measures", "--config", str(path)]) == 1
    assert "measures" in capsys.readouterr().err


def test_unknown_command_rejected():
    with pytest.raises(SystemExit):
        main(["explode", "--config", "x"])
