"""
最小稠密张量神经网络内核
手写前向/反向传播、朴素SGD更新，以及确定性的参数快照与恢复
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Iterator, List, Mapping, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import expit

from utils.exceptions import CheckpointError, NonFiniteError, ShapeError

logger = logging.getLogger(__name__)

# 全部运算使用 float64，行主序
Tensor = np.ndarray

LOG_CLAMP_EPS = 1e-12


def as_tensor(values) -> Tensor:
    """转换为 C 连续的 float64 数组"""
    return np.ascontiguousarray(values, dtype=np.float64)


class Direction(str, Enum):
    """SGD 更新方向"""
    DESCENT = "descent"
    ASCENT = "ascent"


class SgdConfig(BaseModel):
    """SGD 配置"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    learning_rate: float = Field(..., gt=0.0, description="学习率 α_G 或 α_D")


@dataclass
class Param:
    """单个参数：取值与同形状的梯度缓冲"""
    value: Tensor
    grad: Tensor


class ParamSet:
    """有序的命名参数集合"""

    def __init__(self):
        self._entries: "OrderedDict[str, Param]" = OrderedDict()

    def add(self, name: str, value) -> Param:
        """
        注册新参数

        Args:
            name: 参数名（唯一）
            value: 初始取值

        Returns:
            新建的参数
        """
        if name in self._entries:
            raise ShapeError(f"参数名重复: {name}", {"name": name})
        tensor = as_tensor(value).copy()
        param = Param(value=tensor, grad=np.zeros_like(tensor))
        self._entries[name] = param
        return param

    def __getitem__(self, name: str) -> Param:
        return self._entries[name]

    def __contains__(self, name: object) -> bool:
        return name in self._entries

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def items(self):
        return self._entries.items()

    def names(self) -> List[str]:
        return list(self._entries)

    def zero_grad(self):
        """清空所有梯度缓冲"""
        for param in self._entries.values():
            param.grad.fill(0.0)

    def num_coordinates(self) -> int:
        return sum(param.value.size for param in self._entries.values())


class ParamSnapshot(Mapping):
    """参数取值的只读快照"""

    def __init__(self, entries: Mapping[str, Tensor]):
        self._entries: "OrderedDict[str, Tensor]" = OrderedDict()
        for name, value in entries.items():
            tensor = as_tensor(value).copy()
            tensor.setflags(write=False)
            self._entries[name] = tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ParamSnapshot):
            return NotImplemented
        if list(self._entries) != list(other._entries):
            return False
        return all(
            self._entries[name].shape == other._entries[name].shape
            and self._entries[name].tobytes() == other._entries[name].tobytes()
            for name in self._entries
        )

    __hash__ = None


def snapshot(params: ParamSet) -> ParamSnapshot:
    """复制当前参数取值"""
    return ParamSnapshot({name: param.value for name, param in params.items()})


def restore(params: ParamSet, snap: ParamSnapshot):
    """
    将快照写回参数集合（逐位精确）

    Args:
        params: 目标参数集合
        snap: 参数快照
    """
    expected, given = set(params.names()), set(snap)
    if expected != given:
        raise CheckpointError(
            "快照参数名与模型不匹配",
            details={"missing": sorted(expected - given), "unexpected": sorted(given - expected)}
        )
    for name, param in params.items():
        if param.value.shape != snap[name].shape:
            raise CheckpointError(
                f"参数 {name} 形状不匹配",
                details={"name": name, "expected": list(param.value.shape), "got": list(snap[name].shape)}
            )
    for name, param in params.items():
        np.copyto(param.value, snap[name])
        param.grad.fill(0.0)


def glorot_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, fan_out: int) -> Tensor:
    """Glorot 均匀初始化"""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def embedding_uniform(rng: np.random.Generator, shape: Tuple[int, ...], scale: float = 0.25) -> Tensor:
    """未从文件加载的嵌入表按 [-0.25, 0.25] 均匀初始化"""
    return rng.uniform(-scale, scale, size=shape)


# ---------------------------------------------------------------- 嵌入层

def embedding_lookup(table: Tensor, indices) -> Tensor:
    """
    嵌入查表

    Args:
        table: [V × d] 嵌入表
        indices: 任意形状的整数索引

    Returns:
        形状为 indices.shape + (d,) 的张量
    """
    idx = np.asarray(indices, dtype=np.int64)
    vocab_size = table.shape[0]
    bad = (idx < 0) | (idx >= vocab_size)
    if bad.any():
        index = int(idx.reshape(-1)[np.argmax(bad.reshape(-1))])
        raise ShapeError(
            f"嵌入索引越界: {index}",
            {"index": index, "vocab_size": vocab_size}
        )
    return table[idx]


def embedding_backward(table_grad: Tensor, indices, grad_out: Tensor):
    """把输出梯度累加到对应的表行（重复索引求和）"""
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    np.add.at(table_grad, idx, grad_out.reshape(idx.shape[0], -1))


# ---------------------------------------------------------------- 卷积 + 最大池化

@dataclass
class ConvCache:
    """卷积前向缓存"""
    windows: Tensor       # [B, n, c_w·d_in]
    argmax: np.ndarray    # [B, c_k]
    output: Tensor        # [B, c_k]
    window: int
    squeeze: bool


def conv1d_maxpool(inputs: Tensor, kernels: Tensor, bias: Tensor, window: int) -> Tuple[Tensor, ConvCache]:
    """
    窗口卷积 + 时间维最大池化 + tanh

    两端各补 ⌊c_w/2⌋ 行零，保证每个词位置恰好对应一个窗口。

    Args:
        inputs: [n × d_in] 或 [B × n × d_in]
        kernels: [c_k × (c_w·d_in)]
        bias: [c_k]
        window: 窗口大小 c_w

    Returns:
        (输出 [c_k] 或 [B × c_k], 反向缓存)
    """
    squeeze = inputs.ndim == 2
    batch = inputs[None] if squeeze else inputs
    if window < 1:
        raise ShapeError("窗口大小必须 ≥ 1", {"window": window})
    n_batch, length, d_in = batch.shape
    if length < 1:
        raise ShapeError("序列长度必须 ≥ 1", {"length": length})
    if kernels.ndim != 2 or kernels.shape[1] != window * d_in:
        raise ShapeError(
            "卷积核与输入维度不匹配",
            {"d_in": d_in, "window": window, "kernel_shape": list(kernels.shape)}
        )
    if bias.shape != (kernels.shape[0],):
        raise ShapeError("卷积偏置形状不匹配", {"bias_shape": list(bias.shape)})

    pad = window // 2
    padded = np.zeros((n_batch, length + 2 * pad, d_in))
    padded[:, pad:pad + length] = batch
    # [B, L', d_in, c_w] -> 取前 n 个窗口，展平为行主序的窗口向量
    windows = sliding_window_view(padded, window, axis=1)[:, :length]
    windows = windows.transpose(0, 1, 3, 2).reshape(n_batch, length, window * d_in)

    pre = windows @ kernels.T + bias
    argmax = pre.argmax(axis=1)  # 并列时取最小的 t
    pooled = np.take_along_axis(pre, argmax[:, None, :], axis=1)[:, 0, :]
    output = np.tanh(pooled)

    cache = ConvCache(windows=windows, argmax=argmax, output=output, window=window, squeeze=squeeze)
    return (output[0] if squeeze else output), cache


def conv1d_maxpool_backward(grad_out: Tensor, cache: ConvCache, kernels: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
    """
    卷积层反向传播，梯度只流向每个卷积核的 argmax 位置

    Returns:
        (输入梯度, 卷积核梯度, 偏置梯度)
    """
    grad = grad_out[None] if cache.squeeze else grad_out
    n_batch, length, width = cache.windows.shape
    window = cache.window
    d_in = width // window
    pad = window // 2

    grad_pooled = grad * (1.0 - cache.output ** 2)
    grad_pre = np.zeros((n_batch, length, kernels.shape[0]))
    np.put_along_axis(grad_pre, cache.argmax[:, None, :], grad_pooled[:, None, :], axis=1)

    grad_kernels = np.einsum("bnk,bnw->kw", grad_pre, cache.windows)
    grad_bias = grad_pooled.sum(axis=0)

    grad_windows = (grad_pre @ kernels).reshape(n_batch, length, window, d_in)
    grad_padded = np.zeros((n_batch, length + 2 * pad, d_in))
    for offset in range(window):
        grad_padded[:, offset:offset + length] += grad_windows[:, :, offset]
    grad_inputs = grad_padded[:, pad:pad + length]

    if cache.squeeze:
        grad_inputs = grad_inputs[0]
    return grad_inputs, grad_kernels, grad_bias


# ---------------------------------------------------------------- 输出层与损失

def affine_sigmoid(x: Tensor, w: Tensor, b: float) -> Tuple[Tensor, Tensor]:
    """
    σ(w·x + b)

    概率截断到 [ε, 1-ε]，饱和的 logit 也不会得到恰好 0 或 1，
    阈值 1.0 因此总能把实例判为负例

    Returns:
        (概率, logit)，x 为批量时按行计算
    """
    if x.shape[-1] != w.shape[0]:
        raise ShapeError("输出层维度不匹配", {"x": list(x.shape), "w": list(w.shape)})
    logit = x @ w + b
    return np.clip(expit(logit), LOG_CLAMP_EPS, 1.0 - LOG_CLAMP_EPS), logit


def affine_sigmoid_backward(grad_logit, x: Tensor, w: Tensor) -> Tuple[Tensor, Tensor, float]:
    """
    输出层反向传播

    Returns:
        (x 的梯度, w 的梯度, b 的梯度)
    """
    g = np.asarray(grad_logit, dtype=np.float64).reshape(-1)
    rows = x.reshape(-1, w.shape[0])
    grad_x = (g[:, None] * w).reshape(x.shape)
    grad_w = g @ rows
    grad_b = float(g.sum())
    return grad_x, grad_w, grad_b


def bce_loss(p, y) -> Tuple[Tensor, Tensor]:
    """
    二元交叉熵，梯度对 logit 计算

    Args:
        p: 概率（标量或数组）
        y: 0/1 标签

    Returns:
        (损失, dL/dlogit = p − y)
    """
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    clamped = np.clip(p, LOG_CLAMP_EPS, 1.0 - LOG_CLAMP_EPS)
    loss = -(y * np.log(clamped) + (1.0 - y) * np.log(1.0 - clamped))
    return loss, p - y


# ---------------------------------------------------------------- 优化

def sgd_apply(params: ParamSet, cfg: SgdConfig, direction: Direction = Direction.DESCENT):
    """
    朴素SGD一步：value ← value ∓ lr·grad，随后清空梯度

    Args:
        params: 参数集合
        cfg: SGD 配置
        direction: descent 或 ascent
    """
    for name, param in params.items():
        if not np.all(np.isfinite(param.grad)):
            raise NonFiniteError(f"参数 {name} 的梯度包含非有限值", name=name)

    step = cfg.learning_rate if Direction(direction) is Direction.ASCENT else -cfg.learning_rate
    for _, param in params.items():
        param.value += step * param.grad
        param.grad.fill(0.0)


# ---------------------------------------------------------------- 梯度检验

def grad_check(
    closure: Callable[[], float],
    params: ParamSet,
    h: float = 1e-5,
    max_coordinates: int = 1000,
    seed: int = 0
) -> float:
    """
    用中心差分校验解析梯度

    closure 依据当前参数取值计算损失，并把解析梯度累加进 params 的梯度缓冲。

    Args:
        closure: 前向+反向闭包
        params: 参数集合
        h: 差分步长
        max_coordinates: 坐标数超过该值时按种子随机抽样
        seed: 抽样种子

    Returns:
        最大相对误差
    """
    params.zero_grad()
    closure()
    analytic: Dict[str, Tensor] = {name: param.grad.copy() for name, param in params.items()}

    coords: List[Tuple[str, int]] = [
        (name, i) for name, param in params.items() for i in range(param.value.size)
    ]
    if len(coords) > max_coordinates:
        rng = np.random.default_rng(seed)
        picked = np.sort(rng.choice(len(coords), size=max_coordinates, replace=False))
        coords = [coords[i] for i in picked]

    worst = 0.0
    for name, i in coords:
        flat = params[name].value.reshape(-1)
        original = flat[i]
        flat[i] = original + h
        params.zero_grad()
        f_plus = closure()
        flat[i] = original - h
        params.zero_grad()
        f_minus = closure()
        flat[i] = original

        numeric = (f_plus - f_minus) / (2.0 * h)
        exact = analytic[name].reshape(-1)[i]
        denom = max(abs(numeric), abs(exact), 1e-6)
        worst = max(worst, abs(exact - numeric) / denom)

    params.zero_grad()
    logger.debug(f"梯度检验完成: 坐标数 {len(coords)}, 最大相对误差 {worst:.3e}")
    return worst


def check_finite(name: str, values) -> None:
    """确认数值有限"""
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"{name} 包含非有限值", name=name)
