import shutil
import subprocess

import numpy as np
import pytest

from score_trainer import TrainingConfig, train


def run_dmsbl(args, **kw):
    """Invoke the estimator CLI; the file formats and this binary are the
    only couplings between the two packages."""
    return subprocess.run(["dmsbl", *args], capture_output=True, text=True, **kw)


@pytest.fixture(scope="session")
def dmsbl_cli():
    if shutil.which("dmsbl") is None:
        pytest.skip("dmsbl CLI not installed; cross-component tests need it")
    return run_dmsbl


def make_white_segments(n, m, seed=11):
    rng = np.random.default_rng(seed)
    return (rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))) / np.sqrt(2)


@pytest.fixture(scope="module")
def trained_white(tmp_path_factory):
    """Small net fitted to white CN(0, I) segments; the analytic score of
    the diffused marginal is -x_t / (alpha^2 + 2(1 - alpha^2))."""
    out = tmp_path_factory.mktemp("white") / "white.dmsc"
    cfg = TrainingConfig(dataset="", out=str(out), iterations=3000,
                         batch_size=64, lr=2e-3, width=16, blocks=3,
                         emb_dim=16, seed=4, quiet=True)
    model, log = train(cfg, data=make_white_segments(2048, 32))
    return model.double(), log, cfg
