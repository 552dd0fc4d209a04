"""
预训练
为对抗训练准备初始参数：足够强的判别器，以及故意过拟合 P 的生成器
"""

import logging
import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from data.dataset import Instance
from models.encoder import WORD_EMBEDDING, EncoderConfig, SentenceModel, binary_accuracy, supervised_step
from models.nn import ParamSnapshot, Tensor
from utils.exceptions import DatasetContractError, PretrainTargetError, ShapeError

logger = logging.getLogger(__name__)


class PretrainConfig(BaseModel):
    """预训练配置"""
    model_config = ConfigDict(extra="forbid")

    max_epochs: int = Field(default=30, ge=1, description="最大轮数")
    batch_size: int = Field(default=32, ge=2, description="批大小（正负各半）")
    learning_rate: float = Field(default=0.05, gt=0.0, description="SGD 学习率")
    target_accuracy: float = Field(default=0.90, gt=0.5, lt=1.0, description="判别器留出准确率目标")
    target_mean_prob: float = Field(default=0.90, gt=0.5, lt=1.0, description="生成器在 P 上的平均概率目标")
    heldout_fraction: float = Field(default=0.1, gt=0.0, lt=0.5, description="判别器留出比例")


class ClassifierConfig(BaseModel):
    """固定轮数的二分类训练配置（下游评估与正例集实验共用）"""
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(default=8, ge=1)
    batch_size: int = Field(default=32, ge=2)
    learning_rate: float = Field(default=0.05, gt=0.0)


def _balanced_epoch(
    model: SentenceModel,
    positives: Sequence[Instance],
    negatives: Sequence[Instance],
    batch_size: int,
    learning_rate: float,
    rng: np.random.Generator
) -> float:
    """
    一轮正负交替的平衡小批量训练，较小的一侧循环补齐

    Returns:
        本轮平均损失
    """
    half = batch_size // 2
    pos_order = rng.permutation(len(positives))
    neg_order = rng.permutation(len(negatives))
    steps = math.ceil(max(len(positives), len(negatives)) / half)
    losses = []
    for step in range(steps):
        batch: List[Instance] = []
        labels: List[int] = []
        for j in range(half):
            k = step * half + j
            batch.append(positives[pos_order[k % len(positives)]])
            labels.append(1)
            batch.append(negatives[neg_order[k % len(negatives)]])
            labels.append(0)
        losses.append(supervised_step(model, batch, labels, learning_rate, loss_scale=1.0 / len(batch)))
    return float(np.mean(losses))


def _require(name: str, instances: Sequence[Instance]):
    if not instances:
        raise DatasetContractError(f"{name} 不能为空", {"set": name})


def _carve_heldout(
    instances: Sequence[Instance],
    fraction: float,
    rng: np.random.Generator
) -> Tuple[List[Instance], List[Instance]]:
    order = rng.permutation(len(instances))
    size = min(max(1, int(round(fraction * len(instances)))), len(instances) - 1)
    held = [instances[i] for i in order[:size]]
    train = [instances[i] for i in order[size:]]
    return train, held


def new_model(
    encoder_cfg: EncoderConfig,
    rng: np.random.Generator,
    word_vectors: Optional[Tensor] = None
) -> SentenceModel:
    """随机初始化模型，给定预训练词向量时覆盖词嵌入表"""
    model = SentenceModel.initialize(encoder_cfg, rng)
    if word_vectors is not None:
        table = model.params[WORD_EMBEDDING].value
        if word_vectors.shape != table.shape:
            raise ShapeError(
                "预训练词向量与词嵌入表形状不一致",
                {"word_vectors": list(word_vectors.shape), "table": list(table.shape)}
            )
        table[...] = word_vectors
    return model


def pretrain_discriminator(
    positives: Sequence[Instance],
    negatives_d: Sequence[Instance],
    cfg: PretrainConfig,
    encoder_cfg: EncoderConfig,
    seed: int,
    word_vectors: Optional[Tensor] = None
) -> Tuple[SentenceModel, ParamSnapshot, float]:
    """
    用 P（标签1）与 N_D（标签0）预训练判别器，直到留出准确率达到目标

    留出集按比例分别从 P 与 N_D 中切出。

    Args:
        positives: 正例集 P
        negatives_d: 判别器负例集 N_D
        cfg: 预训练配置
        encoder_cfg: 编码器配置
        seed: 随机种子

    Returns:
        (模型, 每个对抗 epoch 重新加载的快照, 达到的留出准确率)
    """
    _require("P", positives)
    _require("N_D", negatives_d)
    if len(positives) < 2 or len(negatives_d) < 2:
        raise DatasetContractError("P 与 N_D 至少各需 2 个实例才能切出留出集")

    rng = np.random.default_rng(seed)
    model = new_model(encoder_cfg, rng, word_vectors)
    train_pos, held_pos = _carve_heldout(positives, cfg.heldout_fraction, rng)
    train_neg, held_neg = _carve_heldout(negatives_d, cfg.heldout_fraction, rng)
    held = held_pos + held_neg
    held_labels = [1] * len(held_pos) + [0] * len(held_neg)

    best = 0.0
    for epoch in range(1, cfg.max_epochs + 1):
        loss = _balanced_epoch(model, train_pos, train_neg, cfg.batch_size, cfg.learning_rate, rng)
        accuracy = binary_accuracy(model.predict_probs(held), held_labels)
        best = max(best, accuracy)
        logger.info(f"判别器预训练 epoch {epoch}: loss={loss:.4f}, 留出准确率={accuracy:.4f}")
        if accuracy >= cfg.target_accuracy:
            return model, model.snapshot(), accuracy

    raise PretrainTargetError(
        f"判别器在 {cfg.max_epochs} 轮内未达到准确率 {cfg.target_accuracy}（最好 {best:.4f}）",
        best=best, target=cfg.target_accuracy, role="discriminator"
    )


def pretrain_generator(
    positives: Sequence[Instance],
    negatives_g: Sequence[Instance],
    cfg: PretrainConfig,
    encoder_cfg: EncoderConfig,
    seed: int,
    word_vectors: Optional[Tensor] = None
) -> SentenceModel:
    """
    让生成器过拟合 P：以 P 为1、N_G 为0 训练，直到 P 上平均概率达到目标

    此阶段生成器也会给假正例很高的概率。

    Returns:
        预训练后的生成器
    """
    _require("P", positives)
    _require("N_G", negatives_g)

    rng = np.random.default_rng(seed)
    model = new_model(encoder_cfg, rng, word_vectors)
    best = 0.0
    for epoch in range(1, cfg.max_epochs + 1):
        loss = _balanced_epoch(model, positives, negatives_g, cfg.batch_size, cfg.learning_rate, rng)
        mean_prob = float(np.mean(model.predict_probs(positives)))
        best = max(best, mean_prob)
        logger.info(f"生成器预训练 epoch {epoch}: loss={loss:.4f}, P 上平均概率={mean_prob:.4f}")
        if mean_prob >= cfg.target_mean_prob:
            return model

    raise PretrainTargetError(
        f"生成器在 {cfg.max_epochs} 轮内未达到平均概率 {cfg.target_mean_prob}（最好 {best:.4f}）",
        best=best, target=cfg.target_mean_prob, role="generator"
    )


def train_classifier(
    positives: Sequence[Instance],
    negatives: Sequence[Instance],
    cfg: ClassifierConfig,
    encoder_cfg: EncoderConfig,
    seed: int,
    on_epoch: Optional[Callable[[int, SentenceModel], None]] = None,
    word_vectors: Optional[Tensor] = None
) -> SentenceModel:
    """
    固定轮数训练二分类器

    Args:
        positives: 标签1
        negatives: 标签0
        cfg: 分类器配置
        encoder_cfg: 编码器配置
        seed: 随机种子
        on_epoch: 每轮结束后的回调 (epoch, model)

    Returns:
        训练后的模型
    """
    _require("positives", positives)
    _require("negatives", negatives)
    rng = np.random.default_rng(seed)
    model = new_model(encoder_cfg, rng, word_vectors)
    for epoch in range(1, cfg.epochs + 1):
        loss = _balanced_epoch(model, positives, negatives, cfg.batch_size, cfg.learning_rate, rng)
        logger.debug(f"分类器 epoch {epoch}: loss={loss:.4f}")
        if on_epoch is not None:
            on_epoch(epoch, model)
    return model


def training_accuracy(model: SentenceModel, positives: Sequence[Instance], negatives: Sequence[Instance]) -> float:
    """训练集上的准确率"""
    probs = model.predict_probs(list(positives) + list(negatives))
    labels = [1] * len(positives) + [0] * len(negatives)
    return binary_accuracy(probs, labels)
