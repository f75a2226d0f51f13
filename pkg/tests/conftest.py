import numpy as np
import pytest

from msg import TrainConfig, build_vocab, make_batch
from msg.cli.fixtures import make_fixture
from msg.corpus import TokenizedExample
from msg.model import MSGModel

TINY = dict(emb_dim=8, hidden=6, dec_hidden=8, attn_dim=6, dropout=0.0, batch_size=4)


def tiny_config(**overrides) -> TrainConfig:
    return TrainConfig(**{**TINY, **overrides})


@pytest.fixture
def copy_examples():
    return make_fixture("copy", 8, seed=3)


@pytest.fixture
def copy_vocab(copy_examples):
    return build_vocab(copy_examples)


def tiny_model(vocab, **overrides) -> MSGModel:
    return MSGModel(tiny_config(**overrides), len(vocab))


def batch_of(examples, vocab, cfg=None):
    cfg = cfg or tiny_config()
    return make_batch([TokenizedExample.from_raw(e) for e in examples], vocab, cfg.limits)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# acceptance criteria report one line each; printed together after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda x: int(x.split('criterion ')[1].split(':')[0])):
            terminalreporter.write_line(line)
