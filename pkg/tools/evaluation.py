"""
评估工具
原始数据与清洗后数据的下游对比、生成器质量与等规模正例集实验
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from agents.pretrain import ClassifierConfig, train_classifier, training_accuracy
from data.dataset import NA_RELATION, DatasetSplits, Instance
from data.truth import TruthTable
from models.encoder import EncoderConfig, SentenceModel
from models.nn import Tensor
from tools.metrics import BinaryScores, PrCurve, auc, binary_scores, paired_t_test, pr_curve
from utils.exceptions import ConfigError, DatasetContractError
from utils.parallel import ordered_map

logger = logging.getLogger(__name__)

RAW = "raw"
CLEANED = "cleaned"
ORACLE = "oracle"

DSGAN = "DSGAN"
RANDOM = "Random"
PRETRAINED = "Pre-training"


class EvalConfig(BaseModel):
    """评估配置"""
    model_config = ConfigDict(extra="forbid")

    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4], description="下游对比的种子")
    classifier_epochs: int = Field(default=8, ge=1)
    classifier_batch_size: int = Field(default=32, ge=2)
    classifier_lr: float = Field(default=0.05, gt=0.0)
    threshold: float = Field(default=0.5, ge=0.0, le=1.0, description="生成器质量的判正阈值")
    experiment_size: int = Field(default=0, ge=0, description="正例集实验规模 m，0 表示 |P| 的一半")
    oracle: bool = Field(default=True, description="是否额外训练真值清洗条件")

    @field_validator("seeds", mode="before")
    @classmethod
    def split_seeds(cls, v):
        if isinstance(v, str):
            return [int(s) for s in v.split(",") if s.strip()]
        return v

    def classifier(self) -> ClassifierConfig:
        return ClassifierConfig(
            epochs=self.classifier_epochs,
            batch_size=self.classifier_batch_size,
            learning_rate=self.classifier_lr,
        )


@dataclass
class ComparisonResult:
    """下游对比结果"""
    relation: str
    seeds: List[int]
    auc_pairs: List[Tuple[float, float]]
    t: float
    p: float
    degenerate: bool
    oracle_aucs: Optional[List[float]] = None
    curves: Dict[str, List[PrCurve]] = field(default_factory=dict)

    @property
    def mean_raw(self) -> float:
        return float(np.mean([a for a, _ in self.auc_pairs]))

    @property
    def mean_cleaned(self) -> float:
        return float(np.mean([b for _, b in self.auc_pairs]))

    def wins(self) -> int:
        """清洗后 AUC 更高的种子数"""
        return sum(1 for a, b in self.auc_pairs if b > a)


@dataclass
class ExperimentResult:
    """等规模正例集实验结果：条件 → 每个种子的逐 epoch 训练准确率"""
    relation: str
    size: int
    seeds: List[int]
    curves: Dict[str, List[List[float]]]
    identical_sets: bool

    def final_means(self) -> Dict[str, float]:
        return {name: float(np.mean([curve[-1] for curve in runs])) for name, runs in self.curves.items()}


def heldout_labels(heldout: Sequence[Instance], relation: str) -> List[int]:
    return [1 if inst.relation == relation else 0 for inst in heldout]


def _heldout_auc(
    positives: Sequence[Instance],
    negatives: Sequence[Instance],
    heldout: Sequence[Instance],
    relation: str,
    cfg: EvalConfig,
    encoder_cfg: EncoderConfig,
    seed: int,
    word_vectors: Optional[Tensor] = None
) -> Tuple[float, PrCurve]:
    model = train_classifier(positives, negatives, cfg.classifier(), encoder_cfg, seed, word_vectors=word_vectors)
    curve = pr_curve(model.predict_probs(heldout), heldout_labels(heldout, relation))
    return auc(curve), curve


def downstream_compare(
    raw: DatasetSplits,
    cleaned: DatasetSplits,
    relation: str,
    cfg: EvalConfig,
    encoder_cfg: EncoderConfig,
    base_seed: int,
    oracle: Optional[DatasetSplits] = None,
    workers: int = 1,
    word_vectors: Optional[Tensor] = None
) -> ComparisonResult:
    """
    在原始与清洗后数据上用相同超参数训练二分类器，比较评估集上的 PR AUC

    每个种子两个条件使用同一个训练种子，结果按种子配对做 t 检验。

    Args:
        raw: 原始划分
        cleaned: 清洗后的划分
        relation: 关系类型
        cfg: 评估配置
        encoder_cfg: 编码器配置
        base_seed: 派生训练种子的基数
        oracle: 可选的真值清洗划分
        workers: 并发数

    Returns:
        对比结果
    """
    if len(cfg.seeds) < 2:
        raise ConfigError("下游对比至少需要 2 个种子", {"seeds": cfg.seeds})
    if raw.heldout != cleaned.heldout or (oracle is not None and oracle.heldout != raw.heldout):
        raise DatasetContractError("各条件的评估集必须完全相同")
    heldout = raw.heldout
    if not any(inst.relation == relation for inst in heldout):
        raise DatasetContractError(f"评估集中没有关系 {relation} 的正例", {"relation": relation})

    conditions = [(RAW, raw), (CLEANED, cleaned)]
    if oracle is not None:
        conditions.append((ORACLE, oracle))

    jobs = [(name, splits, seed) for seed in cfg.seeds for name, splits in conditions]

    def job(item):
        name, splits, seed = item
        return _heldout_auc(
            splits.positives_for(relation), splits.negatives(), heldout,
            relation, cfg, encoder_cfg, base_seed + seed, word_vectors
        )

    outcomes = dict(zip([(name, seed) for name, _, seed in jobs], ordered_map(job, jobs, workers)))

    auc_pairs = [(outcomes[(RAW, s)][0], outcomes[(CLEANED, s)][0]) for s in cfg.seeds]
    curves = {name: [outcomes[(name, s)][1] for s in cfg.seeds] for name, _ in conditions}
    result = paired_t_test([b for _, b in auc_pairs], [a for a, _ in auc_pairs])
    comparison = ComparisonResult(
        relation=relation,
        seeds=list(cfg.seeds),
        auc_pairs=auc_pairs,
        t=result.t,
        p=result.p,
        degenerate=result.degenerate,
        oracle_aucs=[outcomes[(ORACLE, s)][0] for s in cfg.seeds] if oracle is not None else None,
        curves=curves,
    )
    logger.info(
        f"📊 {relation}: AUC raw={comparison.mean_raw:.4f}, cleaned={comparison.mean_cleaned:.4f}, "
        f"t={comparison.t:.3f}, p={comparison.p:.4g}"
    )
    return comparison


def oracle_clean(splits: DatasetSplits, truth: TruthTable, relation: str) -> DatasetSplits:
    """按真值把该关系的假正例移入 N_D（改标为 NA），作为清洗效果的上界"""
    moved = [inst for inst in splits.positives if inst.relation == relation and not truth.is_true_positive(inst)]
    moved_ids = {inst.id for inst in moved}
    return DatasetSplits(
        positives=[inst for inst in splits.positives if inst.id not in moved_ids],
        negatives_g=list(splits.negatives_g),
        negatives_d=list(splits.negatives_d) + [inst.relabel(NA_RELATION) for inst in moved],
        heldout=list(splits.heldout),
    )


def generator_quality(
    generator: SentenceModel,
    positives: Sequence[Instance],
    truth: TruthTable,
    threshold: float = 0.5
) -> BinaryScores:
    """
    生成器识别真正例的精确率、召回率与 F1

    Args:
        generator: 生成器
        positives: 正例集
        truth: 真值表
        threshold: 判正阈值

    Returns:
        二分类指标
    """
    if not positives:
        raise DatasetContractError("正例集为空，无法评估生成器")
    actual = [truth.is_true_positive(inst) for inst in positives]
    predicted = generator.predict_probs(positives) >= threshold
    return binary_scores(predicted, actual)


def redistribution_precision(moved: Sequence[Instance], truth: TruthTable) -> float:
    """被移入负例集的实例中假正例的比例；没有移动时为 nan"""
    if not moved:
        return float("nan")
    return float(np.mean([not truth.is_true_positive(inst) for inst in moved]))


def top_by_prob(model: SentenceModel, positives: Sequence[Instance], size: int) -> List[Instance]:
    """按概率降序选出前 size 个（同分按原顺序），结果保持原顺序"""
    order = np.argsort(-model.predict_probs(positives), kind="stable")
    return [positives[i] for i in np.sort(order[:size])]


def resolve_experiment_size(size: int, total: int) -> int:
    if size == 0:
        size = max(1, total // 2)
    if size > total:
        raise ConfigError(f"实验规模 m={size} 超过 |P|={total}", {"m": size, "P": total})
    return size


def positive_set_experiment(
    positives: Sequence[Instance],
    negatives: Sequence[Instance],
    generator_dsgan: SentenceModel,
    generator_pretrained: SentenceModel,
    relation: str,
    size: int,
    cfg: EvalConfig,
    encoder_cfg: EncoderConfig,
    base_seed: int,
    workers: int = 1,
    word_vectors: Optional[Tensor] = None
) -> ExperimentResult:
    """
    三个等规模正例集的对比实验

    DSGAN 生成器概率最高的 m 个、预训练生成器概率最高的 m 个、以及按种子随机抽取的 m 个，
    各自配同一个负例集训练相同的分类器，记录逐 epoch 训练准确率。

    Returns:
        实验结果
    """
    if not positives:
        raise DatasetContractError("正例集为空")
    size = resolve_experiment_size(size, len(positives))
    positives = list(positives)

    fixed_sets = {
        DSGAN: top_by_prob(generator_dsgan, positives, size),
        PRETRAINED: top_by_prob(generator_pretrained, positives, size),
    }

    def random_set(seed: int) -> List[Instance]:
        picked = np.sort(np.random.default_rng(base_seed + seed).choice(len(positives), size=size, replace=False))
        return [positives[i] for i in picked]

    jobs = [(name, seed) for seed in cfg.seeds for name in (DSGAN, RANDOM, PRETRAINED)]

    def job(item) -> List[float]:
        name, seed = item
        chosen = fixed_sets[name] if name in fixed_sets else random_set(seed)
        curve: List[float] = []
        train_classifier(
            chosen, negatives, cfg.classifier(), encoder_cfg, base_seed + seed,
            on_epoch=lambda epoch, model: curve.append(training_accuracy(model, chosen, negatives)),
            word_vectors=word_vectors,
        )
        return curve

    outcomes = dict(zip(jobs, ordered_map(job, jobs, workers)))
    curves = {name: [outcomes[(name, s)] for s in cfg.seeds] for name in (DSGAN, RANDOM, PRETRAINED)}

    identical = size == len(positives)
    result = ExperimentResult(relation=relation, size=size, seeds=list(cfg.seeds), curves=curves, identical_sets=identical)
    finals = result.final_means()
    logger.info(
        f"🔬 {relation} 正例集实验 m={size}: "
        + ", ".join(f"{name}={value:.4f}" for name, value in finals.items())
    )
    return result
