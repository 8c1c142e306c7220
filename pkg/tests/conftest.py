"""Shared fixtures: the desk-scale synthetic enrollment pipeline, run through the CLI.

End-to-end runs take ~15 s each, so they are cached per session and shared by
the acceptance suite and the few unit tests that need a trained model.
"""

import os
import time

import pytest

from regnet import cli

POOL_CONFIG = """\
data_seed = 7
image_height = 16
image_width = 16
n_identities = 11
samples_per_identity = 40
"""

ENROLL_CONFIG = """\
authorized_id = 0
holdout_unauth = 3
arch = conv_residual
block_filters = 8 16 32 64
block_strides = 2 2 2 2
residual = true
latent_dim = 3
objective = {objective}
seed = {seed}
steps = 2000
batch_size = 64
auth_fraction = 0.5
mixup_alpha = 0.2
test_out = {test_out}
"""


def write(path, text):
    with open(path, "w") as fh:
        fh.write(text)
    return str(path)


def read_report(path):
    values = {}
    with open(path) as fh:
        next(fh)
        for line in fh:
            name, _, rate = line.strip().split(",")
            values[name] = float(rate)
    return values


class Pipeline:
    """gen-data once, then enroll + eval per (seed, objective), memoized."""

    def __init__(self, root):
        self.root = root
        self.runs = {}
        self.pool = None

    def pool_dir(self):
        if self.pool is None:
            cfg = write(self.root / "pool.cfg", POOL_CONFIG)
            out = str(self.root / "pool")
            assert cli.main(["gen-data", "--config", cfg, "--out", out]) == 0
            self.pool = out
        return self.pool

    def run(self, seed=0, objective="regnet_kl", tag="main"):
        key = (seed, objective, tag)
        if key not in self.runs:
            start = time.perf_counter()
            self.runs[key] = self._run(seed, objective, tag)
            self.runs[key]["seconds"] = time.perf_counter() - start
        return self.runs[key]

    def _run(self, seed, objective, tag):
        work = self.root / f"{tag}_{objective}_{seed}"
        work.mkdir()
        if tag == "main":
            pool = self.pool_dir()
        else:  # a fully independent repeat, data generation included
            cfg = write(work / "pool.cfg", POOL_CONFIG)
            pool = str(work / "pool")
            assert cli.main(["gen-data", "--config", cfg, "--out", pool]) == 0
        test_dir = str(work / "test")
        cfg = write(work / "enroll.cfg", ENROLL_CONFIG.format(objective=objective, seed=seed, test_out=test_dir))
        model = str(work / "model.rgnt")
        assert cli.main(["enroll", "--config", cfg, "--data", pool, "--out", model]) == 0
        out = str(work / "eval")
        assert cli.main(["eval", "--model", model, "--data", test_dir, "--out", out]) == 0
        return {
            "pool": pool,
            "model": model,
            "test": test_dir,
            "eval": out,
            "report": read_report(os.path.join(out, "report.txt")),
        }


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    return Pipeline(tmp_path_factory.mktemp("pipeline"))


# acceptance reporting: one line per criterion at the end of the run

_criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and report.passed:
        return
    n, text = marker.args
    ok = report.passed and _criteria.get(n, (True, text))[0]
    _criteria[n] = (ok, text)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        ok, text = _criteria[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {text}")
