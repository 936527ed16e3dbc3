import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qcrack.clustering import ClusterConfig  # noqa: E402
from qcrack.optim import OptimizerConfig  # noqa: E402
from qcrack.pipeline import (  # noqa: E402
    CorpusSpec,
    PipelineConfig,
    fit_classifier,
    image_dataset,
    region_dataset,
    synthetic_corpus,
)

EXACT_PIPELINE = PipelineConfig(cluster=ClusterConfig(shots=0))


@pytest.fixture(scope="session")
def trained_models():
    """Gate and region classifiers trained in exact mode on a synthetic corpus."""
    items = synthetic_corpus(CorpusSpec(n=80, seed=100))
    gate, _ = fit_classifier(image_dataset(items, EXACT_PIPELINE), "basic", shots=0,
                             opt=OptimizerConfig(max_iters=300))
    crack_items = [it for it in items if it[2].any()]
    seg, _ = fit_classifier(region_dataset(crack_items, EXACT_PIPELINE), "basic", shots=0,
                            opt=OptimizerConfig(max_iters=300))
    return gate, seg


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
