import time
from pathlib import Path

import numpy as np
import pytest

from tgcn_fault import pipeline
from tgcn_fault.graph import graph_from_spec, normalize
from tgcn_fault.model import init_params

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def ims_dir():
    return FIXTURES / "ims_mini"


@pytest.fixture
def pair2():
    return normalize(graph_from_spec("pair2"))


@pytest.fixture
def path4():
    return normalize(graph_from_spec("path4"))


def perturbed_model(seed, graph, window=2, hidden=3, layers=2, noise=0.3):
    """Small model with non-zero biases so every parameter carries gradient."""
    model = init_params(seed, graph, window, hidden, layers)
    rng = np.random.default_rng(1000 + seed)
    model.params = {k: v + rng.normal(0.0, noise, size=v.shape) for k, v in model.params.items()}
    return model


@pytest.fixture(scope="session")
def synthetic_run(tmp_path_factory):
    """One full synthetic-preset pipeline run, shared by the slower tests."""
    out = tmp_path_factory.mktemp("synthetic_run")
    cfg = pipeline.build_config({"preset": "synthetic", "seed": 7, "out_dir": str(out)})
    start = time.perf_counter()
    art = pipeline.run_pipeline(cfg)
    art.elapsed = time.perf_counter() - start
    return art
