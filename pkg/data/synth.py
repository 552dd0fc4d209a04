"""
合成远程监督数据生成器
按给定噪声率植入假正例，并把真值单独放在旁路表中
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from data.dataset import NA_RELATION, DatasetSplits, Instance
from data.truth import FALSE_POSITIVE, TRUE_POSITIVE, TruthTable
from utils.exceptions import ConfigError

logger = logging.getLogger(__name__)

# 背景词块的最小容量
MIN_BACKGROUND_WORDS = 50
# 信号词注入在实体 ±2 的范围内
SIGNAL_RADIUS = 2


class SynthConfig(BaseModel):
    """合成数据配置"""
    model_config = ConfigDict(extra="forbid")

    relations: int = Field(default=1, ge=1, description="关系类型数")
    positives_per_relation: int = Field(default=2000, ge=1, description="每个关系的 |P|")
    negatives_g: int = Field(default=2000, ge=1, description="|N_G|")
    negatives_d: int = Field(default=2000, ge=1, description="|N_D|")
    heldout_per_relation: int = Field(default=600, ge=3, description="每个关系的评估集大小")
    noise_rate: float = Field(default=0.3, ge=0.0, lt=0.5, description="假正例比例 ρ")
    vocab_size: int = Field(default=2000, ge=2, description="词表大小")
    min_length: int = Field(default=8, ge=3, description="句长下限")
    max_length: int = Field(default=20, ge=3, description="句长上限")
    signal_strength: int = Field(default=2, ge=1, description="每个真正例注入的信号词数")
    signal_block: int = Field(default=20, ge=1, description="每个关系的信号词块大小")
    entity_block: int = Field(default=50, ge=1, description="每个关系的知识库实体词块大小")
    background_entities: int = Field(default=200, ge=1, description="背景实体词块大小")
    max_sentences_per_pair: int = Field(default=3, ge=1, description="每个实体对的最大句子数")
    pair_level_noise: bool = Field(default=True, description="噪声按实体对整体植入")
    entity_cue: bool = Field(default=True, description="P 的实体来自知识库实体词块")
    negative_kb_rate: float = Field(default=0.3, ge=0.0, le=1.0, description="N_D 中一侧实体来自知识库实体词块的实体对比例")
    seed: Optional[int] = Field(default=None, description="为空时由主种子派生")

    @model_validator(mode="after")
    def check_lengths(self):
        if self.min_length > self.max_length:
            raise ValueError("min_length 不能大于 max_length")
        return self

    def relation_names(self) -> List[str]:
        return [f"rel_{i}" for i in range(self.relations)]


@dataclass(frozen=True)
class _VocabLayout:
    """词表分块：0 号保留，随后是信号词块、知识库实体块、背景实体块与背景词"""
    signal_starts: Tuple[int, ...]
    entity_starts: Tuple[int, ...]
    signal_block: int
    entity_block: int
    background_entity_start: int
    background_entity_end: int
    background_word_start: int
    vocab_size: int

    @classmethod
    def build(cls, cfg: SynthConfig) -> "_VocabLayout":
        cursor = 1
        signal_starts = []
        for _ in range(cfg.relations):
            signal_starts.append(cursor)
            cursor += cfg.signal_block
        entity_starts = []
        for _ in range(cfg.relations):
            entity_starts.append(cursor)
            cursor += cfg.entity_block
        background_entity_start = cursor
        cursor += cfg.background_entities
        needed = cursor + MIN_BACKGROUND_WORDS
        if cfg.vocab_size < needed:
            raise ConfigError(
                f"词表过小，无法容纳互不相交的信号词与背景词块: 需要 ≥ {needed}",
                {"vocab_size": cfg.vocab_size, "needed": needed}
            )
        return cls(
            signal_starts=tuple(signal_starts),
            entity_starts=tuple(entity_starts),
            signal_block=cfg.signal_block,
            entity_block=cfg.entity_block,
            background_entity_start=background_entity_start,
            background_entity_end=cursor,
            background_word_start=cursor,
            vocab_size=cfg.vocab_size,
        )

    def vocab(self) -> Dict[str, int]:
        names = {"<pad>": 0}
        for r, start in enumerate(self.signal_starts):
            for k in range(self.signal_block):
                names[f"sig{r}_{k}"] = start + k
        for r, start in enumerate(self.entity_starts):
            for k in range(self.entity_block):
                names[f"kb{r}_{k}"] = start + k
        for index in range(self.background_entity_start, self.background_entity_end):
            names[f"ent_{index - self.background_entity_start}"] = index
        for index in range(self.background_word_start, self.vocab_size):
            names[f"w{index - self.background_word_start}"] = index
        return names


class SyntheticDataset(NamedTuple):
    """合成结果：划分、真值旁路表与词表"""
    splits: DatasetSplits
    truth: TruthTable
    vocab: Dict[str, int]


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _pair_sizes(rng: np.random.Generator, total: int, max_per_pair: int) -> List[int]:
    sizes = []
    remaining = total
    while remaining > 0:
        size = min(int(rng.integers(1, max_per_pair + 1)), remaining)
        sizes.append(size)
        remaining -= size
    return sizes


def _assign_pair_noise(rng: np.random.Generator, sizes: List[int], target: int) -> List[Tuple[int, bool]]:
    """
    选出整体为假正例的实体对，使假正例句子数恰好等于 target

    无法用整对凑齐时，把一个实体对拆成两个。
    """
    order = rng.permutation(len(sizes))
    noisy = [False] * len(sizes)
    total = 0
    for i in order:
        if total == target:
            break
        if total + sizes[i] <= target:
            noisy[i] = True
            total += sizes[i]

    pairs = [(size, flag) for size, flag in zip(sizes, noisy)]
    if total < target:
        remainder = target - total
        # 剩余的干净实体对都比 remainder 大
        split_at = next(int(i) for i in order if not noisy[i])
        size = pairs[split_at][0]
        pairs[split_at] = (size - remainder, False)
        pairs.insert(split_at + 1, (remainder, True))
    return pairs


class _SentenceFactory:
    """按词表分块生成句子"""

    def __init__(self, cfg: SynthConfig, layout: _VocabLayout, rng: np.random.Generator):
        self.cfg = cfg
        self.layout = layout
        self.rng = rng

    def kb_entity(self, relation_index: int) -> int:
        start = self.layout.entity_starts[relation_index]
        return int(self.rng.integers(start, start + self.layout.entity_block))

    def background_entity(self) -> int:
        return int(self.rng.integers(self.layout.background_entity_start, self.layout.background_entity_end))

    def pair_entities(self, relation_index: Optional[int]) -> Tuple[int, int]:
        if relation_index is not None and self.cfg.entity_cue:
            return self.kb_entity(relation_index), self.kb_entity(relation_index)
        return self.background_entity(), self.background_entity()

    def half_kb_entities(self) -> Tuple[int, int]:
        """一侧为某关系的知识库实体、另一侧为背景实体"""
        kb = self.kb_entity(int(self.rng.integers(self.cfg.relations)))
        other = self.background_entity()
        return (kb, other) if self.rng.random() < 0.5 else (other, kb)

    def sentence(self, head_token: int, tail_token: int, signal_relation: Optional[int]) -> Tuple[Tuple[int, ...], int, int]:
        rng = self.rng
        length = int(rng.integers(self.cfg.min_length, self.cfg.max_length + 1))
        tokens = rng.integers(self.layout.background_word_start, self.layout.vocab_size, size=length)
        head_pos, tail_pos = (int(x) for x in rng.choice(length, size=2, replace=False))
        tokens[head_pos] = head_token
        tokens[tail_pos] = tail_token

        if signal_relation is not None:
            slots = sorted({
                t for anchor in (head_pos, tail_pos)
                for t in range(anchor - SIGNAL_RADIUS, anchor + SIGNAL_RADIUS + 1)
                if 0 <= t < length and t not in (head_pos, tail_pos)
            })
            count = min(self.cfg.signal_strength, len(slots))
            chosen = rng.choice(slots, size=count, replace=False)
            start = self.layout.signal_starts[signal_relation]
            tokens[chosen] = rng.integers(start, start + self.layout.signal_block, size=count)

        return tuple(int(t) for t in tokens), head_pos, tail_pos


def _negatives(
    factory: _SentenceFactory,
    count: int,
    prefix: str,
    truth: TruthTable,
    kb_rate: float = 0.0
) -> List[Instance]:
    instances = []
    sizes = _pair_sizes(factory.rng, count, factory.cfg.max_sentences_per_pair)
    for k, size in enumerate(sizes):
        # kb_rate 为 0 时不消耗随机数
        if kb_rate > 0.0 and factory.rng.random() < kb_rate:
            head, tail = factory.half_kb_entities()
        else:
            head, tail = factory.pair_entities(None)
        for _ in range(size):
            tokens, head_pos, tail_pos = factory.sentence(head, tail, None)
            inst = Instance(
                id=f"{prefix}-{len(instances):06d}",
                pair_id=(f"{prefix}/h{k}", f"{prefix}/t{k}"),
                relation=NA_RELATION,
                tokens=tokens,
                head_pos=head_pos,
                tail_pos=tail_pos,
            )
            instances.append(inst)
            truth.set(inst.id, FALSE_POSITIVE)
    return instances


def synth_generate(cfg: SynthConfig) -> SyntheticDataset:
    """
    生成带植入噪声的合成数据集

    真正例在实体 ±2 范围内含关系专属信号词；假正例与负例只含背景词。
    每个关系的 P 中恰有 round(ρ·|P|) 个假正例。
    N_D 中约 negative_kb_rate 的实体对一侧是知识库实体，N_G 只用背景实体。

    Args:
        cfg: 合成配置（seed 必须已确定）

    Returns:
        划分、真值表与词表
    """
    if cfg.seed is None:
        raise ConfigError("合成数据需要确定的种子", {"field": "synth.seed"})
    layout = _VocabLayout.build(cfg)
    rng = np.random.default_rng(cfg.seed)
    factory = _SentenceFactory(cfg, layout, rng)
    truth = TruthTable()
    splits = DatasetSplits()

    for r, relation in enumerate(cfg.relation_names()):
        n_pos = cfg.positives_per_relation
        target = _round_half_up(cfg.noise_rate * n_pos)
        sizes = _pair_sizes(rng, n_pos, cfg.max_sentences_per_pair)
        if cfg.pair_level_noise:
            pairs = _assign_pair_noise(rng, sizes, target)
            flags = [flag for size, flag in pairs for _ in range(size)]
            sizes = [size for size, _ in pairs]
        else:
            noisy_positions = set(int(i) for i in rng.choice(n_pos, size=target, replace=False))
            flags = [i in noisy_positions for i in range(n_pos)]

        cursor = 0
        for k, size in enumerate(sizes):
            head, tail = factory.pair_entities(r)
            for _ in range(size):
                is_false = flags[cursor]
                tokens, head_pos, tail_pos = factory.sentence(head, tail, None if is_false else r)
                inst = Instance(
                    id=f"{relation}-p{cursor:06d}",
                    pair_id=(f"{relation}/h{k}", f"{relation}/t{k}"),
                    relation=relation,
                    tokens=tokens,
                    head_pos=head_pos,
                    tail_pos=tail_pos,
                )
                splits.positives.append(inst)
                truth.set(inst.id, FALSE_POSITIVE if is_false else TRUE_POSITIVE)
                cursor += 1

        # 评估集：真正例 / 知识库实体干扰句 / 背景句，各约三分之一
        n_heldout = cfg.heldout_per_relation
        n_true = n_heldout // 3
        n_distractor = n_heldout // 3
        for j in range(n_heldout):
            if j < n_true:
                head, tail = factory.pair_entities(r)
                signal, label = r, relation
            elif j < n_true + n_distractor:
                head, tail = factory.pair_entities(r)
                signal, label = None, NA_RELATION
            else:
                head, tail = factory.pair_entities(None)
                signal, label = None, NA_RELATION
            tokens, head_pos, tail_pos = factory.sentence(head, tail, signal)
            inst = Instance(
                id=f"{relation}-h{j:06d}",
                pair_id=(f"heldout/{relation}/h{j}", f"heldout/{relation}/t{j}"),
                relation=label,
                tokens=tokens,
                head_pos=head_pos,
                tail_pos=tail_pos,
            )
            splits.heldout.append(inst)
            truth.set(inst.id, TRUE_POSITIVE if signal is not None else FALSE_POSITIVE)

        logger.info(f"🧪 关系 {relation}: |P|={n_pos}, 假正例 {target}")

    splits.negatives_g = _negatives(factory, cfg.negatives_g, "nag", truth)
    splits.negatives_d = _negatives(factory, cfg.negatives_d, "nad", truth, cfg.negative_kb_rate)
    splits.validate()
    return SyntheticDataset(splits=splits, truth=truth, vocab=layout.vocab())
