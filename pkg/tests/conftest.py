import json
from pathlib import Path

import numpy as np
import pytest

from mixcontext.classify import Head, init_head
from mixcontext.config import default_synth
from mixcontext.encoder import EncoderConfig, init_encoder
from mixcontext.models import Label, Level, Sample, ThreadNode
from mixcontext.tokenizer import build_vocab

GOLDEN_DIR = Path(__file__).parent / "golden"

SMALL_TEXTS = (
    "india needs vaccines",
    "is there any vaccine which can prevent india from you",
    "vaccine insano k liye hain reptiles",
    "yaar kya baat hai",
    "भारत सरकार खबर",
    "you idiot",
)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="запускать долгие тесты")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: обучение на синтетическом корпусе (минуты)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="нужен --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def golden_dir() -> Path:
    return GOLDEN_DIR


@pytest.fixture
def small_vocab():
    return build_vocab(SMALL_TEXTS, target_size=200)


@pytest.fixture
def small_config(small_vocab) -> EncoderConfig:
    return EncoderConfig(
        num_layers=2, num_heads=2, hidden=16, ffn=32, embed_dim=16,
        vocab_size=len(small_vocab), max_len=24, seed=3,
    )


@pytest.fixture
def wide_model(small_config):
    """float64-энкодер и голова с ненулевыми логитами."""
    state = init_encoder(small_config, dtype=np.float64)
    rng = np.random.default_rng(11)
    head = Head(weight=rng.normal(0.0, 1.0, (small_config.hidden, 2)), bias=np.array([0.1, -0.1]))
    return state, head


@pytest.fixture
def float_model(small_config):
    return init_encoder(small_config), init_head(small_config.hidden, small_config.seed)


@pytest.fixture
def thread_nodes() -> list[ThreadNode]:
    return [
        ThreadNode("t1", "@user INDIA NEEDS VACCINES", Level.TWEET, Label.NOT),
        ThreadNode("c1", "Is there any Vaccine https://t.co/x", Level.COMMENT, Label.HOF, "t1"),
        ThreadNode("r1", "vaccine insano k liye hain reptiles", Level.REPLY, Label.HOF, "c1"),
    ]


@pytest.fixture
def six_samples() -> list[Sample]:
    flags = [True, False, True, False, True, False]
    labels = [Label.HOF] * 3 + [Label.NOT] * 3
    return [
        Sample(f"s{i}", f"text {i}", label, context_text="ctx" if flag else None)
        for i, (label, flag) in enumerate(zip(labels, flags))
    ]


@pytest.fixture
def synth_config():
    return default_synth()


def write_jsonl(path: Path, records) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    return path


@pytest.fixture
def jsonl_writer():
    return write_jsonl
