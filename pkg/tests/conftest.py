"""测试公共配置：slow 标记与小规模数据夹具"""

import pytest

from data.dataset import Instance
from data.synth import SynthConfig, synth_generate
from models.encoder import EncoderConfig


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="运行耗时较长的复现测试")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 桌面规模的多种子复现，需要 --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="需要 --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def tiny_synth_config(**overrides) -> SynthConfig:
    """几十条实例的合成数据配置"""
    values = dict(
        relations=1,
        positives_per_relation=60,
        negatives_g=60,
        negatives_d=60,
        heldout_per_relation=30,
        noise_rate=0.3,
        vocab_size=120,
        min_length=6,
        max_length=10,
        signal_block=5,
        entity_block=10,
        background_entities=20,
        negative_kb_rate=0.0,
        seed=7,
    )
    values.update(overrides)
    return SynthConfig(**values)


def tiny_encoder_config(vocab_size: int = 120) -> EncoderConfig:
    return EncoderConfig(word_dim=8, position_dim=2, window=3, kernels=6, max_distance=5, vocab_size=vocab_size)


@pytest.fixture
def tiny_dataset():
    return synth_generate(tiny_synth_config())


@pytest.fixture
def tiny_encoder():
    return tiny_encoder_config()


def make_instance(ident: str, tokens, head_pos: int = 0, tail_pos: int = 1, relation: str = "rel_0", pair=None):
    """手工构造实例"""
    return Instance(
        id=ident,
        pair_id=pair or (f"h_{ident}", f"t_{ident}"),
        relation=relation,
        tokens=tuple(tokens),
        head_pos=head_pos,
        tail_pos=tail_pos,
    )
