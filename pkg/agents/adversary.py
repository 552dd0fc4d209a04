"""
对抗训练引擎
逐袋采样、判别器更新、两部分奖励、策略梯度更新生成器，
每个 epoch 重新加载判别器，并按 N_D 上的准确率决定何时停止
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from data.dataset import BagSequence, Instance
from models.encoder import SentenceModel, supervised_step
from models.nn import Direction, ParamSnapshot, SgdConfig, check_finite, sgd_apply
from utils.exceptions import DatasetContractError, DSGANError, ShapeError

logger = logging.getLogger(__name__)


class AdversaryConfig(BaseModel):
    """对抗训练配置"""
    model_config = ConfigDict(extra="forbid")

    eta: float = Field(default=1.0, ge=0.0, description="r2 的缩放系数 η")
    baseline_decay: float = Field(default=0.9, ge=0.0, lt=1.0, description="b1 滑动平均衰减")
    lr_generator: float = Field(default=1e-5, gt=0.0, description="生成器学习率")
    lr_discriminator: float = Field(default=1e-4, gt=0.0, description="判别器学习率")
    max_epochs: int = Field(default=20, ge=1, description="最大 epoch 数")
    patience: int = Field(default=1, ge=1, description="ACC_D 连续未创新低的 epoch 数")
    bag_size: int = Field(default=64, ge=1, description="袋大小")


@dataclass
class RewardState:
    """
    奖励状态

    b1 为历次生成集合上平均 p_D 的滑动平均；p_tilde_history[k][i] 为第 k+1 个 epoch
    第 i 个袋之后的 p̃。
    """
    n_bags: int
    b1: float = 0.5
    p_tilde_history: List[List[float]] = field(default_factory=list)

    def prior_rows(self, epoch: int) -> List[List[float]]:
        """epoch 之前的完整历史行"""
        rows = self.p_tilde_history[:epoch - 1]
        if len(rows) != epoch - 1 or any(len(row) != self.n_bags for row in rows):
            raise DSGANError(
                f"第 {epoch} 个 epoch 之前的 p̃ 历史不完整",
                error_code="REWARD_STATE",
                details={"epoch": epoch, "rows": [len(row) for row in self.p_tilde_history]}
            )
        return rows

    def record(self, epoch: int, bag_index: int, p_tilde: float):
        if len(self.p_tilde_history) < epoch:
            self.p_tilde_history.append([])
        row = self.p_tilde_history[epoch - 1]
        if len(row) != bag_index:
            raise DSGANError(
                f"袋 {bag_index} 的 p̃ 记录顺序错误（期望袋 {len(row)}）",
                error_code="REWARD_STATE",
                details={"epoch": epoch, "bag": bag_index}
            )
        row.append(p_tilde)

    def update_baseline(self, mean_pd_on_t: float, decay: float):
        self.b1 = decay * self.b1 + (1.0 - decay) * mean_pd_on_t


@dataclass
class BagMetrics:
    """单个袋处理后的指标"""
    epoch: int
    bag: int
    acc_nd: float
    p_tilde: float
    r1: float
    r2: float
    t_size: int
    f_size: int
    d_loss: float
    b1: float


@dataclass
class EpochMetrics:
    """单个 epoch 的指标"""
    epoch: int
    bags: List[BagMetrics] = field(default_factory=list)
    acc_nd: float = float("nan")

    def acc_trace(self) -> List[float]:
        return [bag.acc_nd for bag in self.bags]


@dataclass
class RunReport:
    """对抗训练结果：全部 epoch 指标、最佳 epoch 与其生成器参数"""
    epochs: List[EpochMetrics]
    best_epoch: int
    generator: ParamSnapshot

    @property
    def best(self) -> EpochMetrics:
        return self.epochs[self.best_epoch - 1]


# ---------------------------------------------------------------- 单步操作

def sample_generated_set(probs, rng: np.random.Generator) -> Tuple[List[int], List[int]]:
    """
    每个索引以 probs[j] 的概率独立进入生成集合 T，其余构成 F

    Args:
        probs: [0,1] 内的概率
        rng: 随机数生成器

    Returns:
        (T 的索引, F 的索引)
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.size and (probs.min() < 0.0 or probs.max() > 1.0):
        raise ShapeError("采样概率必须位于 [0,1]", {"min": float(probs.min()), "max": float(probs.max())})
    picked = rng.random(probs.size) < probs
    generated = [int(j) for j in np.flatnonzero(picked)]
    rest = [int(j) for j in np.flatnonzero(~picked)]
    return generated, rest


def discriminator_step(
    discriminator: SentenceModel,
    generated: Sequence[Instance],
    rest: Sequence[Instance],
    lr: float,
    total_positive_size: int
) -> float:
    """
    判别器下降一步：T 标为 0，F 标为 1，损失按 1/|P| 缩放

    Returns:
        更新前的平均交叉熵；T 与 F 都为空时不更新并返回 0
    """
    batch = list(generated) + list(rest)
    if not batch:
        return 0.0
    if total_positive_size < 1:
        raise DatasetContractError("|P| 必须 ≥ 1", {"total_positive_size": total_positive_size})
    labels = [0] * len(generated) + [1] * len(rest)
    return supervised_step(discriminator, batch, labels, lr, loss_scale=1.0 / total_positive_size)


def reward_r1(pd_on_generated, b1: float) -> float:
    """r1 = mean(p_D(T)) − b1"""
    values = np.asarray(pd_on_generated, dtype=np.float64)
    if values.size == 0:
        raise DatasetContractError("生成集合 T 为空，无法计算 r1")
    return float(values.mean()) - b1


def avg_neg_prob(discriminator: SentenceModel, negatives_d: Sequence[Instance]) -> Tuple[float, float]:
    """
    N_D 上的平均判别概率 p̃

    Returns:
        (p̃, 准确率 = p_D < 0.5 的比例)
    """
    if not negatives_d:
        raise DatasetContractError("N_D 为空，无法计算 p̃")
    probs = discriminator.predict_probs(negatives_d)
    return float(probs.mean()), float(np.mean(probs < 0.5))


def reward_r2(p_tilde: float, bag_index: int, epoch: int, state: RewardState, eta: float) -> float:
    """
    r2 = η·(p̃ − 之前各 epoch 同一袋位置的最大 p̃)；第一个 epoch 为 0

    计算后把 p̃ 追加到历史。
    """
    if not 0 <= bag_index < state.n_bags:
        raise ShapeError(f"袋索引越界: {bag_index}", {"index": bag_index, "n_bags": state.n_bags})
    if epoch < 1:
        raise ShapeError(f"epoch 从 1 开始: {epoch}", {"epoch": epoch})
    rows = state.prior_rows(epoch)
    reward = 0.0 if not rows else eta * (p_tilde - max(row[bag_index] for row in rows))
    state.record(epoch, bag_index, p_tilde)
    return reward


def generator_step(generator: SentenceModel, generated: Sequence[Instance], reward: float, lr: float):
    """
    生成器上升一步：目标为 (r/|T|)·Σ_T log p_G

    d log σ(z) / dz = 1 − σ(z)
    """
    if not generated:
        raise DatasetContractError("生成集合 T 为空，不能更新生成器")
    check_finite("reward", reward)
    forward_pass = generator.forward(generated)
    grad_logits = (reward / len(generated)) * (1.0 - forward_pass.probs)
    generator.params.zero_grad()
    generator.backward(forward_pass, grad_logits)
    sgd_apply(generator.params, SgdConfig(learning_rate=lr), Direction.ASCENT)


# ---------------------------------------------------------------- 袋与 epoch

def run_bag(
    generator: SentenceModel,
    discriminator: SentenceModel,
    bag: Sequence[Instance],
    bag_index: int,
    epoch: int,
    negatives_d: Sequence[Instance],
    state: RewardState,
    cfg: AdversaryConfig,
    total_positive_size: int,
    rng: np.random.Generator
) -> BagMetrics:
    """
    处理一个袋：G 打分 → 采样 T/F → 判别器更新 → 探测 p̃ → r = r1 + r2 → 生成器更新

    T 为空时仍做判别器更新与 p̃ 记录，跳过奖励与生成器更新。
    """
    bag = list(bag)
    generated_idx, rest_idx = sample_generated_set(generator.predict_probs(bag), rng)
    generated = [bag[j] for j in generated_idx]
    rest = [bag[j] for j in rest_idx]

    d_loss = discriminator_step(discriminator, generated, rest, cfg.lr_discriminator, total_positive_size)
    p_tilde, accuracy = avg_neg_prob(discriminator, negatives_d)
    r2 = reward_r2(p_tilde, bag_index, epoch, state, cfg.eta)

    r1 = 0.0
    if generated:
        pd_on_generated = discriminator.predict_probs(generated)
        r1 = reward_r1(pd_on_generated, state.b1)
        generator_step(generator, generated, r1 + r2, cfg.lr_generator)
        state.update_baseline(float(pd_on_generated.mean()), cfg.baseline_decay)
    else:
        logger.warning(f"epoch {epoch} 袋 {bag_index}: 生成集合为空，跳过生成器更新")

    metrics = BagMetrics(
        epoch=epoch, bag=bag_index, acc_nd=accuracy, p_tilde=p_tilde,
        r1=r1, r2=r2, t_size=len(generated), f_size=len(rest), d_loss=d_loss, b1=state.b1,
    )
    logger.debug(
        f"epoch {epoch} 袋 {bag_index}: |T|={metrics.t_size}, acc_ND={accuracy:.4f}, "
        f"p̃={p_tilde:.4f}, r1={r1:.4f}, r2={r2:.4f}"
    )
    return metrics


def run(
    bags: BagSequence,
    negatives_d: Sequence[Instance],
    generator_init: SentenceModel,
    discriminator_snapshot: ParamSnapshot,
    cfg: AdversaryConfig,
    seed: int,
    on_epoch: Optional[Callable[[EpochMetrics], None]] = None
) -> RunReport:
    """
    完整对抗训练

    每个 epoch 先把判别器恢复为预训练快照，再按固定袋序列逐袋处理；
    ACC_D 连续 patience 个 epoch 未创新低或达到最大 epoch 时停止。
    输入模型不会被修改。

    Args:
        bags: 固定分袋序列
        negatives_d: N_D
        generator_init: 预训练生成器
        discriminator_snapshot: 预训练判别器快照
        cfg: 对抗训练配置
        seed: 采样种子
        on_epoch: 每个 epoch 结束后的回调

    Returns:
        运行报告，generator 为 ACC_D 最低的 epoch 结束时的参数
    """
    if len(bags) == 0:
        raise DatasetContractError("袋序列为空")
    if not negatives_d:
        raise DatasetContractError("N_D 为空，无法计算 ACC_D")

    rng = np.random.default_rng(seed)
    generator = generator_init.copy()
    discriminator = SentenceModel.from_snapshot(discriminator_snapshot)
    state = RewardState(n_bags=len(bags))
    total_positive_size = bags.total_size()

    epochs: List[EpochMetrics] = []
    best_epoch, best_acc = 0, math.inf
    best_generator: Optional[ParamSnapshot] = None
    stale = 0

    for epoch in range(1, cfg.max_epochs + 1):
        discriminator.restore(discriminator_snapshot)
        metrics = EpochMetrics(epoch=epoch)
        for bag_index, bag in enumerate(bags):
            metrics.bags.append(run_bag(
                generator, discriminator, bag, bag_index, epoch, negatives_d,
                state, cfg, total_positive_size, rng
            ))
        # 最后一个袋之后判别器不再变化
        metrics.acc_nd = metrics.bags[-1].acc_nd
        epochs.append(metrics)
        logger.info(
            f"⚔️ epoch {epoch}: ACC_D={metrics.acc_nd:.4f}, "
            f"平均 |T|={np.mean([b.t_size for b in metrics.bags]):.1f}"
        )
        if on_epoch is not None:
            on_epoch(metrics)

        if metrics.acc_nd < best_acc:
            best_epoch, best_acc = epoch, metrics.acc_nd
            best_generator = generator.snapshot()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                logger.info(f"ACC_D 连续 {stale} 个 epoch 未创新低，停止训练")
                break

    logger.info(f"✅ 对抗训练结束: 最佳 epoch {best_epoch}, ACC_D={best_acc:.4f}")
    return RunReport(epochs=epochs, best_epoch=best_epoch, generator=best_generator)
