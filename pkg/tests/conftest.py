import pytest

from earnkit import GenConfig, RunConfig, gen_population, run_pipeline


@pytest.fixture(scope="session")
def small_world():
    """Generated panel plus ground truth shared by the module tests."""
    return gen_population(GenConfig(seed=99, n_persons=1200, n_firms=150))


@pytest.fixture(scope="session")
def medium_run(tmp_path_factory):
    """One full pipeline run at a scale where every group is estimable."""
    out = tmp_path_factory.mktemp("medium")
    cfg = RunConfig(outdir=str(out), n_persons=4000, n_firms=300)
    manifest = run_pipeline(cfg)
    return cfg, manifest
