"""
评估指标
PR 曲线、PR 曲线下面积、配对 t 检验与二分类 P/R/F1
"""

from dataclasses import dataclass
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np
from scipy import stats

from utils.exceptions import ConfigError, DatasetContractError, ShapeError


@dataclass(frozen=True)
class PrCurve:
    """按分数降序扫描阈值得到的 (recall, precision) 点"""
    points: Tuple[Tuple[float, float], ...]

    def __len__(self) -> int:
        return len(self.points)

    @property
    def recalls(self) -> np.ndarray:
        return np.array([r for r, _ in self.points])

    @property
    def precisions(self) -> np.ndarray:
        return np.array([p for _, p in self.points])


class TTestResult(NamedTuple):
    t: float
    p: float
    degenerate: bool


class BinaryScores(NamedTuple):
    precision: float
    recall: float
    f1: float


def pr_curve(scores: Sequence[float], labels: Sequence[int]) -> PrCurve:
    """
    PR 曲线

    分数降序排列，同分按输入顺序；每个前缀给出一个点。

    Args:
        scores: 分数
        labels: 0/1 标签

    Returns:
        PR 曲线
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape:
        raise ShapeError("分数与标签长度不一致", {"scores": scores.size, "labels": labels.size})
    positives = int(labels.sum())
    if positives == 0:
        raise DatasetContractError("PR 曲线需要至少一个正标签")

    order = np.argsort(-scores, kind="stable")
    hits = np.cumsum(labels[order])
    ranks = np.arange(1, scores.size + 1)
    recalls = hits / positives
    precisions = hits / ranks
    return PrCurve(points=tuple(zip(recalls.tolist(), precisions.tolist())))


def auc(curve: PrCurve) -> float:
    """PR 曲线下面积：在 recall 上做梯形积分，前置锚点 (0, 首个 precision)"""
    if len(curve) == 0:
        raise DatasetContractError("PR 曲线为空")
    recalls = np.concatenate([[0.0], curve.recalls])
    precisions = np.concatenate([[curve.precisions[0]], curve.precisions])
    return float(np.sum(np.diff(recalls) * (precisions[1:] + precisions[:-1]) / 2.0))


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """
    双侧配对 t 检验，自由度 n−1

    差值方差为 0 时：均值为 0 则 p=1，否则 p=0 并标记 degenerate。
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigError("配对 t 检验的两组长度必须相同", {"a": a.size, "b": b.size})
    n = a.size
    if n < 2:
        raise ConfigError("配对 t 检验至少需要 2 个种子", {"n": n})

    diff = a - b
    mean = float(diff.mean())
    sd = float(diff.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(t=0.0, p=1.0, degenerate=True)
        return TTestResult(t=float(np.copysign(np.inf, mean)), p=0.0, degenerate=True)

    t = mean / (sd / np.sqrt(n))
    p = float(min(1.0, 2.0 * stats.t.sf(abs(t), df=n - 1)))
    return TTestResult(t=float(t), p=p, degenerate=False)


def binary_scores(predicted: Sequence[bool], actual: Sequence[bool]) -> BinaryScores:
    """二分类精确率、召回率与 F1，分母为 0 时记 0"""
    predicted = np.asarray(predicted, dtype=bool)
    actual = np.asarray(actual, dtype=bool)
    tp = int(np.sum(predicted & actual))
    fp = int(np.sum(predicted & ~actual))
    fn = int(np.sum(~predicted & actual))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return BinaryScores(precision, recall, f1)


def mean_pairs(values: List[Tuple[float, float]]) -> Tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr[:, 0].mean()), float(arr[:, 1].mean())
