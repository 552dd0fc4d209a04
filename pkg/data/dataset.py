"""
数据集模型与文件格式
实例以 JSONL 保存，按目录组织四个划分，并提供确定性的分袋
"""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterator, List, Sequence, Tuple, Union

import numpy as np

from utils.exceptions import ConfigError, DataFormatError, DatasetContractError

logger = logging.getLogger(__name__)

NA_RELATION = "NA"

SPLIT_FILES = {
    "positives": "P.jsonl",
    "negatives_g": "N_G.jsonl",
    "negatives_d": "N_D.jsonl",
    "heldout": "heldout.jsonl",
}
TRUTH_FILE = "truth.tsv"
VOCAB_FILE = "vocab.tsv"


@dataclass(frozen=True)
class Instance:
    """一条带标签的句子"""
    id: str
    pair_id: Tuple[str, str]
    relation: str
    tokens: Tuple[int, ...]
    head_pos: int
    tail_pos: int

    def __post_init__(self):
        if not self.tokens:
            raise DatasetContractError(f"实例 {self.id} 没有词", {"id": self.id})
        if self.head_pos == self.tail_pos:
            raise DatasetContractError(f"实例 {self.id} 的头尾实体位置相同", {"id": self.id})
        n = len(self.tokens)
        if not (0 <= self.head_pos < n and 0 <= self.tail_pos < n):
            raise DatasetContractError(
                f"实例 {self.id} 的实体位置越界",
                {"id": self.id, "head_pos": self.head_pos, "tail_pos": self.tail_pos, "length": n}
            )

    def __len__(self) -> int:
        return len(self.tokens)

    def relabel(self, relation: str) -> "Instance":
        """返回更换关系标签后的副本"""
        return replace(self, relation=relation)

    def to_json_dict(self) -> Dict:
        return {
            "id": self.id,
            "pair_id": list(self.pair_id),
            "relation": self.relation,
            "tokens": list(self.tokens),
            "head_pos": self.head_pos,
            "tail_pos": self.tail_pos,
        }

    @classmethod
    def from_json_dict(cls, data: Dict) -> "Instance":
        pair = data["pair_id"]
        if not (isinstance(pair, list) and len(pair) == 2 and all(isinstance(x, str) for x in pair)):
            raise ValueError("pair_id 必须是两个字符串组成的列表")
        tokens = data["tokens"]
        if not isinstance(tokens, list) or any(isinstance(t, bool) or not isinstance(t, int) for t in tokens):
            raise ValueError("tokens 必须是整数列表")
        for key in ("head_pos", "tail_pos"):
            if isinstance(data[key], bool) or not isinstance(data[key], int):
                raise ValueError(f"{key} 必须是整数")
        if not isinstance(data["id"], str) or not isinstance(data["relation"], str):
            raise ValueError("id 与 relation 必须是字符串")
        return cls(
            id=data["id"],
            pair_id=(pair[0], pair[1]),
            relation=data["relation"],
            tokens=tuple(tokens),
            head_pos=data["head_pos"],
            tail_pos=data["tail_pos"],
        )


@dataclass
class DatasetSplits:
    """
    数据集划分

    positives 为远程监督正例集 P，negatives_g / negatives_d 分别供生成器预训练与判别器使用，
    heldout 为带金标准标签的评估集。
    """
    positives: List[Instance] = field(default_factory=list)
    negatives_g: List[Instance] = field(default_factory=list)
    negatives_d: List[Instance] = field(default_factory=list)
    heldout: List[Instance] = field(default_factory=list)

    def validate(self):
        """检查ID唯一与集合互斥"""
        ids_g = {inst.id for inst in self.negatives_g}
        overlap = sorted(ids_g & {inst.id for inst in self.negatives_d})
        if overlap:
            raise DatasetContractError(
                f"N_G 与 N_D 存在相同的实例ID: {overlap[0]}",
                {"overlap": overlap[:10]}
            )
        seen: Dict[str, str] = {}
        for split_name in SPLIT_FILES:
            for inst in getattr(self, split_name):
                if inst.id in seen:
                    raise DatasetContractError(
                        f"实例ID重复: {inst.id}",
                        {"id": inst.id, "splits": [seen[inst.id], split_name]}
                    )
                seen[inst.id] = split_name

    def relations(self) -> List[str]:
        """P 中出现的关系类型（排序）"""
        return sorted({inst.relation for inst in self.positives if inst.relation != NA_RELATION})

    def positives_for(self, relation: str) -> List[Instance]:
        return [inst for inst in self.positives if inst.relation == relation]

    def negatives(self) -> List[Instance]:
        """下游分类器使用的负例：N_G ∪ N_D"""
        return self.negatives_g + self.negatives_d

    def total_size(self) -> int:
        return sum(len(getattr(self, name)) for name in SPLIT_FILES)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DatasetSplits):
            return NotImplemented
        return all(getattr(self, name) == getattr(other, name) for name in SPLIT_FILES)


def read_instances(path: Union[str, Path]) -> List[Instance]:
    """
    读取 JSONL 实例文件

    Args:
        path: 文件路径

    Returns:
        实例列表
    """
    path = Path(path)
    instances = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                instances.append(Instance.from_json_dict(json.loads(line)))
            except json.JSONDecodeError as e:
                raise DataFormatError(f"JSON 解析失败: {e.msg}", str(path), lineno) from e
            except KeyError as e:
                raise DataFormatError(f"缺少字段: {e.args[0]}", str(path), lineno) from e
            except (ValueError, TypeError) as e:
                raise DataFormatError(str(e), str(path), lineno) from e
            except DatasetContractError as e:
                raise DataFormatError(e.message, str(path), lineno) from e
    return instances


def write_instances(path: Union[str, Path], instances: Sequence[Instance]):
    """写出 JSONL 实例文件"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for inst in instances:
            f.write(json.dumps(inst.to_json_dict(), ensure_ascii=False) + "\n")


def load_dataset(path: Union[str, Path]) -> DatasetSplits:
    """
    从目录加载四个划分

    Args:
        path: 数据集目录

    Returns:
        校验后的数据集划分
    """
    root = Path(path)
    if not root.is_dir():
        raise ConfigError(f"数据集目录不存在: {root}", {"path": str(root)})
    parts = {}
    for attr, filename in SPLIT_FILES.items():
        file_path = root / filename
        if not file_path.exists():
            raise DataFormatError(f"缺少划分文件 {filename}", str(file_path))
        parts[attr] = read_instances(file_path)
    splits = DatasetSplits(**parts)
    splits.validate()
    logger.info(
        f"📂 已加载数据集 {root}: P={len(splits.positives)}, N_G={len(splits.negatives_g)}, "
        f"N_D={len(splits.negatives_d)}, heldout={len(splits.heldout)}"
    )
    return splits


def save_dataset(splits: DatasetSplits, path: Union[str, Path]) -> Path:
    """把划分写入目录"""
    splits.validate()
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    for attr, filename in SPLIT_FILES.items():
        write_instances(root / filename, getattr(splits, attr))
    return root


def load_vocab(path: Union[str, Path]) -> Dict[str, int]:
    """读取 "token<TAB>index" 词表"""
    path = Path(path)
    vocab: Dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataFormatError("词表行必须是 token<TAB>index", str(path), lineno)
            try:
                index = int(parts[1])
            except ValueError as e:
                raise DataFormatError(f"非法的词索引: {parts[1]}", str(path), lineno) from e
            if parts[0] in vocab:
                raise DataFormatError(f"词重复: {parts[0]}", str(path), lineno)
            vocab[parts[0]] = index
    return vocab


def save_vocab(vocab: Dict[str, int], path: Union[str, Path]):
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for token, index in sorted(vocab.items(), key=lambda item: item[1]):
            f.write(f"{token}\t{index}\n")


@dataclass(frozen=True)
class BagSequence:
    """P 的固定分袋序列，每个 epoch 复用"""
    bags: Tuple[Tuple[Instance, ...], ...]
    seed: int
    bag_size: int

    def __len__(self) -> int:
        return len(self.bags)

    def __iter__(self) -> Iterator[Tuple[Instance, ...]]:
        return iter(self.bags)

    def __getitem__(self, index: int) -> Tuple[Instance, ...]:
        return self.bags[index]

    def total_size(self) -> int:
        return sum(len(bag) for bag in self.bags)

    def serialize(self) -> bytes:
        """按袋与袋内顺序序列化实例ID"""
        payload = {"seed": self.seed, "bag_size": self.bag_size,
                   "bags": [[inst.id for inst in bag] for bag in self.bags]}
        return json.dumps(payload, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def make_bags(positives: Sequence[Instance], bag_size: int = 64, seed: int = 0) -> BagSequence:
    """
    按种子打乱 P 后切成 ⌈|P|/bag_size⌉ 个连续的袋（最后一个可能较短）

    Args:
        positives: 正例集 P
        bag_size: 袋大小
        seed: 随机种子

    Returns:
        分袋序列
    """
    if bag_size < 1:
        raise ConfigError(f"袋大小必须 ≥ 1: {bag_size}", {"bag_size": bag_size})
    if not positives:
        raise DatasetContractError("正例集 P 为空，无法分袋")
    order = np.random.default_rng(seed).permutation(len(positives))
    shuffled = [positives[i] for i in order]
    bags = tuple(tuple(shuffled[i:i + bag_size]) for i in range(0, len(shuffled), bag_size))
    logger.debug(f"分袋完成: {len(bags)} 个袋, 袋大小 {bag_size}")
    return BagSequence(bags=bags, seed=seed, bag_size=bag_size)
