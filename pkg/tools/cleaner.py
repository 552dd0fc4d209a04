"""
数据清洗工具
把训练好的生成器当作二分类器，整体判负的实体对从正例集移入负例集
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from data.dataset import NA_RELATION, Instance
from models.encoder import SentenceModel

logger = logging.getLogger(__name__)

# 报告中对 "false negative" 措辞的解释
DECISION_NOTE = (
    "一个实体对的全部句子都被生成器判为负（疑似假正例）时，该实体对被移入负例集并改标为 NA"
)


class CleanConfig(BaseModel):
    """清洗配置"""
    model_config = ConfigDict(extra="forbid")

    threshold: float = Field(default=0.5, ge=0.0, le=1.0, description="p_G ≥ threshold 判为正")


class Verdict(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


class Decision(str, Enum):
    KEPT = "kept"
    REDISTRIBUTED = "redistributed"


@dataclass
class PairDecision:
    """单个实体对的清洗决定"""
    pair_id: Tuple[str, str]
    relation: str
    decision: Decision
    probs: List[float]

    @property
    def n(self) -> int:
        return len(self.probs)

    def summary(self) -> Dict[str, float]:
        values = np.asarray(self.probs)
        return {"min": float(values.min()), "max": float(values.max()), "mean": float(values.mean())}


@dataclass
class CleanReport:
    """清洗报告"""
    pairs: List[PairDecision] = field(default_factory=list)
    positive_before: int = 0
    negative_before: int = 0
    positive_after: int = 0
    negative_after: int = 0
    threshold: float = 0.5

    @property
    def redistributed(self) -> List[PairDecision]:
        return [pair for pair in self.pairs if pair.decision is Decision.REDISTRIBUTED]

    def is_conserved(self) -> bool:
        return self.positive_before + self.negative_before == self.positive_after + self.negative_after


def classify_instance(generator: SentenceModel, instance: Instance, threshold: float = 0.5) -> Verdict:
    """p_G ≥ threshold 判为正"""
    return Verdict.POSITIVE if generator.predict_prob(instance) >= threshold else Verdict.NEGATIVE


def group_by_pair(instances: Sequence[Instance]) -> "OrderedDict[Tuple[str, str], List[Instance]]":
    """按实体对分组，保持首次出现的顺序"""
    groups: "OrderedDict[Tuple[str, str], List[Instance]]" = OrderedDict()
    for inst in instances:
        groups.setdefault(inst.pair_id, []).append(inst)
    return groups


def redistribute(
    positives: Sequence[Instance],
    negatives: Sequence[Instance],
    generator: SentenceModel,
    threshold: float = 0.5
) -> Tuple[List[Instance], List[Instance], CleanReport]:
    """
    按实体对清洗正例集

    实体对的全部句子都判负时，整对改标为 NA 追加到负例集末尾；否则整对保留。
    实例总数不变。

    Args:
        positives: 正例集
        negatives: 负例集
        generator: 训练好的生成器
        threshold: 判正阈值

    Returns:
        (新正例集, 新负例集, 清洗报告)
    """
    probs = generator.predict_probs(list(positives))
    prob_of = {inst.id: float(p) for inst, p in zip(positives, probs)}

    report = CleanReport(
        positive_before=len(positives),
        negative_before=len(negatives),
        threshold=threshold,
    )
    moved = set()
    for pair_id, members in group_by_pair(positives).items():
        pair_probs = [prob_of[inst.id] for inst in members]
        all_negative = all(p < threshold for p in pair_probs)
        decision = Decision.REDISTRIBUTED if all_negative else Decision.KEPT
        if all_negative:
            moved.update(inst.id for inst in members)
        report.pairs.append(PairDecision(pair_id, members[0].relation, decision, pair_probs))

    new_positives = [inst for inst in positives if inst.id not in moved]
    new_negatives = list(negatives) + [inst.relabel(NA_RELATION) for inst in positives if inst.id in moved]
    report.positive_after = len(new_positives)
    report.negative_after = len(new_negatives)

    logger.info(
        f"🧹 清洗完成: {len(report.redistributed)}/{len(report.pairs)} 个实体对移入负例集, "
        f"正例 {report.positive_before} → {report.positive_after}"
    )
    return new_positives, new_negatives, report
