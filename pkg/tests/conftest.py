import numpy as np
import pytest

from weakvid.datasetgen import DatasetVariant, build_dataset
from weakvid.ingest import best_detections, read_detections, read_manifest
from weakvid.synth import SynthConfig, generate_corpus

SMALL = dict(n_classes=3, videos_per_class=4, frames_per_video=6, frame_width=40, frame_height=32,
             patch_width=14, patch_height=16, seed=3)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """A tiny synthetic corpus shared by read-only tests."""
    return generate_corpus(SynthConfig(**SMALL), tmp_path_factory.mktemp("small_corpus"))


@pytest.fixture(scope="session")
def small_inputs(small_corpus):
    manifest = read_manifest(small_corpus.manifest_path)
    best = best_detections(read_detections(small_corpus.detections_path))
    return manifest, best


@pytest.fixture(scope="session")
def small_samples(small_inputs):
    manifest, best = small_inputs
    return build_dataset(manifest, best, DatasetVariant(False, 0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one PASS/FAIL line per acceptance criterion."""
    lines = getattr(request.config, "_acceptance_lines", None)
    if lines is None:
        lines = request.config._acceptance_lines = []
    return lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
