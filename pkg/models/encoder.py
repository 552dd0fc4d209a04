"""
共享句子打分网络
词嵌入 + 位置嵌入 → 窗口卷积 + 最大池化 → sigmoid 真正例概率
生成器、判别器与下游评估分类器共用这一结构
"""

import logging
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from data.dataset import Instance
from models.nn import (
    ConvCache, Direction, ParamSet, ParamSnapshot, SgdConfig, Tensor,
    affine_sigmoid, affine_sigmoid_backward, bce_loss, check_finite,
    conv1d_maxpool, conv1d_maxpool_backward, embedding_backward,
    embedding_lookup, embedding_uniform, glorot_uniform, restore, sgd_apply, snapshot,
)
from utils.exceptions import CheckpointError, DataFormatError, DatasetContractError, ShapeError

logger = logging.getLogger(__name__)

WORD_EMBEDDING = "word_embedding"
POSITION_HEAD = "position_head"
POSITION_TAIL = "position_tail"
CONV_KERNELS = "conv_kernels"
CONV_BIAS = "conv_bias"
OUTPUT_WEIGHT = "output_weight"
OUTPUT_BIAS = "output_bias"


class EncoderConfig(BaseModel):
    """编码器超参数（默认值取自生成器/判别器超参数表）"""
    model_config = ConfigDict(extra="forbid")

    word_dim: int = Field(default=50, gt=0, description="词向量维度 d_e")
    position_dim: int = Field(default=5, gt=0, description="位置向量维度 d_p")
    window: int = Field(default=3, gt=0, description="卷积窗口 c_w")
    kernels: int = Field(default=100, gt=0, description="卷积核数 c_k")
    max_distance: int = Field(default=30, ge=1, description="相对位置截断距离")
    vocab_size: int = Field(default=2000, gt=0, description="词表大小 V")

    @property
    def input_dim(self) -> int:
        return self.word_dim + 2 * self.position_dim


def position_index(token_pos: int, entity_pos: int, max_distance: int) -> int:
    """相对位置截断到 [−max, +max] 后平移为表索引"""
    distance = max(-max_distance, min(max_distance, token_pos - entity_pos))
    return distance + max_distance


def _position_indices(length: int, entity_pos: int, max_distance: int) -> np.ndarray:
    return np.clip(np.arange(length) - entity_pos, -max_distance, max_distance) + max_distance


@dataclass
class _GroupPass:
    """同长度实例组的前向缓存"""
    rows: np.ndarray           # 在批次中的位置
    token_ids: np.ndarray      # [B, n]
    head_ids: np.ndarray       # [B, n]
    tail_ids: np.ndarray       # [B, n]
    pooled: Tensor             # [B, c_k]
    conv: ConvCache


@dataclass
class ForwardPass:
    """一次批量前向的结果，按输入顺序排列"""
    probs: Tensor
    logits: Tensor
    groups: List[_GroupPass]


class SentenceModel:
    """句子级真正例概率模型"""

    def __init__(self, config: EncoderConfig, params: ParamSet):
        """
        Args:
            config: 编码器配置
            params: 已注册好全部参数的集合
        """
        self.config = config
        self.params = params

    @classmethod
    def initialize(cls, config: EncoderConfig, rng: np.random.Generator) -> "SentenceModel":
        """按配置随机初始化"""
        cfg = config
        table_rows = 2 * cfg.max_distance + 1
        width = cfg.window * cfg.input_dim
        params = ParamSet()
        params.add(WORD_EMBEDDING, embedding_uniform(rng, (cfg.vocab_size, cfg.word_dim)))
        params.add(POSITION_HEAD, embedding_uniform(rng, (table_rows, cfg.position_dim)))
        params.add(POSITION_TAIL, embedding_uniform(rng, (table_rows, cfg.position_dim)))
        params.add(CONV_KERNELS, glorot_uniform(rng, (cfg.kernels, width), width, cfg.kernels))
        params.add(CONV_BIAS, np.zeros(cfg.kernels))
        params.add(OUTPUT_WEIGHT, glorot_uniform(rng, (cfg.kernels,), cfg.kernels, 1))
        params.add(OUTPUT_BIAS, np.zeros(1))
        return cls(cfg, params)

    @classmethod
    def from_snapshot(cls, snap: ParamSnapshot) -> "SentenceModel":
        """由快照（或检查点）重建模型，配置从张量形状推断"""
        required = [WORD_EMBEDDING, POSITION_HEAD, POSITION_TAIL, CONV_KERNELS, CONV_BIAS, OUTPUT_WEIGHT, OUTPUT_BIAS]
        missing = [name for name in required if name not in snap]
        if missing:
            raise CheckpointError("检查点缺少编码器参数", details={"missing": missing})
        vocab_size, word_dim = snap[WORD_EMBEDDING].shape
        table_rows, position_dim = snap[POSITION_HEAD].shape
        kernels, width = snap[CONV_KERNELS].shape
        input_dim = word_dim + 2 * position_dim
        config = EncoderConfig(
            word_dim=word_dim,
            position_dim=position_dim,
            window=width // input_dim,
            kernels=kernels,
            max_distance=(table_rows - 1) // 2,
            vocab_size=vocab_size,
        )
        params = ParamSet()
        for name in required:
            params.add(name, snap[name])
        model = cls(config, params)
        restore(model.params, snap)
        return model

    def copy(self) -> "SentenceModel":
        return SentenceModel.from_snapshot(self.snapshot())

    def snapshot(self) -> ParamSnapshot:
        return snapshot(self.params)

    def restore(self, snap: ParamSnapshot):
        restore(self.params, snap)

    def zero_output_layer(self):
        """输出层清零，使所有实例的概率为 0.5"""
        self.params[OUTPUT_WEIGHT].value.fill(0.0)
        self.params[OUTPUT_BIAS].value.fill(0.0)

    # ------------------------------------------------------------ 特征

    def _check_instance(self, instance: Instance):
        tokens = np.asarray(instance.tokens, dtype=np.int64)
        vocab_size = self.config.vocab_size
        bad = (tokens < 0) | (tokens >= vocab_size)
        if bad.any():
            index = int(tokens[np.argmax(bad)])
            raise ShapeError(
                f"实例 {instance.id} 的词ID越界: {index}",
                {"id": instance.id, "index": index, "vocab_size": vocab_size}
            )
        n = len(instance.tokens)
        for pos in (instance.head_pos, instance.tail_pos):
            if not 0 <= pos < n:
                raise ShapeError(
                    f"实例 {instance.id} 的实体位置越界: {pos}",
                    {"id": instance.id, "index": pos, "length": n}
                )

    def _indices(self, instances: Sequence[Instance]):
        length = len(instances[0].tokens)
        max_distance = self.config.max_distance
        token_ids = np.array([inst.tokens for inst in instances], dtype=np.int64)
        head_ids = np.stack([_position_indices(length, inst.head_pos, max_distance) for inst in instances])
        tail_ids = np.stack([_position_indices(length, inst.tail_pos, max_distance) for inst in instances])
        return token_ids, head_ids, tail_ids

    def _features(self, token_ids, head_ids, tail_ids) -> Tensor:
        return np.concatenate([
            embedding_lookup(self.params[WORD_EMBEDDING].value, token_ids),
            embedding_lookup(self.params[POSITION_HEAD].value, head_ids),
            embedding_lookup(self.params[POSITION_TAIL].value, tail_ids),
        ], axis=-1)

    def featurize(self, instance: Instance) -> Tensor:
        """
        逐词拼接 [词向量 | 相对头实体位置向量 | 相对尾实体位置向量]

        Returns:
            [n × (d_e + 2·d_p)] 特征矩阵
        """
        self._check_instance(instance)
        token_ids, head_ids, tail_ids = self._indices([instance])
        return self._features(token_ids, head_ids, tail_ids)[0]

    # ------------------------------------------------------------ 前向 / 反向

    def forward(self, instances: Sequence[Instance]) -> ForwardPass:
        """
        批量前向，同长度实例一起向量化计算

        Args:
            instances: 实例序列

        Returns:
            按输入顺序排列的概率与 logit
        """
        by_length: Dict[int, List[int]] = defaultdict(list)
        for row, inst in enumerate(instances):
            self._check_instance(inst)
            by_length[len(inst.tokens)].append(row)

        probs = np.zeros(len(instances))
        logits = np.zeros(len(instances))
        kernels = self.params[CONV_KERNELS].value
        conv_bias = self.params[CONV_BIAS].value
        out_w = self.params[OUTPUT_WEIGHT].value
        out_b = float(self.params[OUTPUT_BIAS].value[0])

        groups = []
        for length in sorted(by_length):
            rows = np.array(by_length[length], dtype=np.int64)
            token_ids, head_ids, tail_ids = self._indices([instances[i] for i in rows])
            features = self._features(token_ids, head_ids, tail_ids)
            pooled, conv = conv1d_maxpool(features, kernels, conv_bias, self.config.window)
            p, z = affine_sigmoid(pooled, out_w, out_b)
            probs[rows] = p
            logits[rows] = z
            groups.append(_GroupPass(rows, token_ids, head_ids, tail_ids, pooled, conv))
        return ForwardPass(probs=probs, logits=logits, groups=groups)

    def backward(self, forward_pass: ForwardPass, grad_logits):
        """
        把 dL/dlogit 反向传播并累加到参数梯度

        Args:
            forward_pass: 同一批次的前向结果
            grad_logits: 每个实例的 logit 梯度（输入顺序）
        """
        grad_logits = np.asarray(grad_logits, dtype=np.float64)
        params = self.params
        d_e, d_p = self.config.word_dim, self.config.position_dim
        kernels = params[CONV_KERNELS].value
        out_w = params[OUTPUT_WEIGHT].value

        for group in forward_pass.groups:
            g = grad_logits[group.rows]
            grad_pooled, grad_w, grad_b = affine_sigmoid_backward(g, group.pooled, out_w)
            params[OUTPUT_WEIGHT].grad += grad_w
            params[OUTPUT_BIAS].grad += grad_b

            grad_features, grad_kernels, grad_bias = conv1d_maxpool_backward(grad_pooled, group.conv, kernels)
            params[CONV_KERNELS].grad += grad_kernels
            params[CONV_BIAS].grad += grad_bias

            embedding_backward(params[WORD_EMBEDDING].grad, group.token_ids, grad_features[..., :d_e])
            embedding_backward(params[POSITION_HEAD].grad, group.head_ids, grad_features[..., d_e:d_e + d_p])
            embedding_backward(params[POSITION_TAIL].grad, group.tail_ids, grad_features[..., d_e + d_p:])

    def predict_probs(self, instances: Sequence[Instance]) -> Tensor:
        """批量打分"""
        if not instances:
            return np.zeros(0)
        return self.forward(instances).probs

    def predict_prob(self, instance: Instance) -> float:
        """单个实例的真正例概率"""
        return float(self.forward([instance]).probs[0])


def supervised_step(
    model: SentenceModel,
    batch: Sequence[Instance],
    labels: Sequence[int],
    lr: float,
    loss_scale: float = 1.0
) -> float:
    """
    一步有监督下降：累加 loss_scale·Σ BCE 的梯度并更新

    Args:
        model: 模型
        batch: 非空批次
        labels: 0/1 标签
        lr: 学习率（0 表示不更新）
        loss_scale: 损失缩放系数

    Returns:
        更新前的平均损失
    """
    if not batch:
        raise DatasetContractError("批次不能为空")
    if len(labels) != len(batch):
        raise ShapeError("标签数与批次大小不一致", {"batch": len(batch), "labels": len(labels)})
    if lr < 0 or loss_scale <= 0:
        raise ShapeError("学习率必须 ≥ 0 且损失缩放必须 > 0", {"lr": lr, "loss_scale": loss_scale})

    forward_pass = model.forward(batch)
    loss, grad_logits = bce_loss(forward_pass.probs, np.asarray(labels, dtype=np.float64))
    check_finite("loss", loss)

    model.params.zero_grad()
    model.backward(forward_pass, loss_scale * grad_logits)
    if lr > 0:
        sgd_apply(model.params, SgdConfig(learning_rate=lr), Direction.DESCENT)
    else:
        model.params.zero_grad()
    return float(loss.mean())


def binary_accuracy(probs, labels) -> float:
    """阈值 0.5 的准确率：p ≥ 0.5 判为正"""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.size == 0:
        return 0.0
    return float(np.mean((probs >= 0.5).astype(np.int64) == labels))


def load_word_embeddings(
    model: SentenceModel,
    path: Union[str, Path],
    vocab: Dict[str, int]
) -> int:
    """
    从文本文件加载预训练词向量

    每行为 token 后跟 d_e 个空格分隔的浮点数；未匹配的词表项保留随机初始化。

    Args:
        model: 目标模型
        path: 词向量文件
        vocab: 词 → 索引

    Returns:
        命中的词数
    """
    path = Path(path)
    table = model.params[WORD_EMBEDDING].value
    word_dim = model.config.word_dim
    matched = 0
    skipped = 0
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != word_dim:
                raise DataFormatError(
                    f"词向量维度应为 {word_dim}，实际为 {len(values)}", str(path), lineno
                )
            index = vocab.get(token)
            if index is None or not 0 <= index < table.shape[0]:
                skipped += 1
                continue
            try:
                table[index] = np.array([float(v) for v in values])
            except ValueError as e:
                raise DataFormatError(f"非法的浮点数: {e}", str(path), lineno) from e
            matched += 1
    logger.info(f"词向量加载完成: 命中 {matched}, 跳过 {skipped}, 未覆盖 {len(vocab) - matched}")
    if matched < len(vocab):
        logger.warning(f"有 {len(vocab) - matched} 个词表项未在词向量文件中找到，保留随机初始化")
    return matched
