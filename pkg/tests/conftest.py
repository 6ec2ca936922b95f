import numpy as np
import pytest
import torch

from hazedepth.config import DecoderConfig, EncoderConfig, RunConfig
from hazedepth.scenes import write_corpus, write_pseudo_real
from hazedepth.synthesis import generate_dataset

torch.set_num_threads(1)


@pytest.fixture
def tiny_cfg():
    return RunConfig(
        encoder=EncoderConfig(channels=[4, 8, 12, 16], kernel_sizes=[3, 5]),
        decoder=DecoderConfig(num_queries=6, blocks_per_scale=1, heads=2),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def toy_data(tmp_path_factory):
    """8 labeled 32×32 pairs plus 8 pseudo-real negatives."""
    root = tmp_path_factory.mktemp("toy")
    write_corpus(root / "corpus", 8, size=32, seed=3)
    generate_dataset(root / "corpus", None, 8, 5, root / "ds")
    write_pseudo_real(root / "real", 8, size=32)
    return {"root": root, "train": root / "ds", "real": root / "real", "corpus": root / "corpus"}


# one verdict line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def verdict():
    def record(number: int, title: str, ok: bool, detail: str = "") -> bool:
        ACCEPTANCE_LINES[number] = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
