"""
结果输出
固定列顺序的 CSV 与可读的 summary.txt，浮点数以 repr 精确写出
"""

import csv
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Union

from agents.adversary import RunReport
from tools.cleaner import CleanReport
from tools.evaluation import ComparisonResult, ExperimentResult

logger = logging.getLogger(__name__)

SUMMARY_FILE = "summary.txt"
# summary.txt 中各节的顺序
SUMMARY_SECTIONS = ["synth", "pretrain", "train", "clean", "eval", "experiment"]

BAG_COLUMNS = ["epoch", "bag", "acc_ND", "p_tilde", "r1", "r2", "t_size", "d_loss", "b1"]
EPOCH_COLUMNS = ["epoch", "acc_ND", "best"]
CLEAN_COLUMNS = ["pair_id", "relation", "decision", "n", "min_pG", "max_pG", "mean_pG"]
PR_COLUMNS = ["condition", "seed", "rank", "recall", "precision"]
AUC_COLUMNS = ["seed", "raw", "cleaned", "oracle"]
TTEST_COLUMNS = ["n", "mean_raw", "mean_cleaned", "t", "p", "degenerate"]
EXPERIMENT_COLUMNS = ["condition", "seed", "epoch", "train_accuracy"]


def format_cell(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(value)
    if value is None:
        return ""
    return str(value)


def write_csv(path: Union[str, Path], columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """写出 CSV，行尾统一为 \\n"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_cell(v) for v in row])
    logger.debug(f"已写出 {path}")
    return path


def write_bag_rows(path: Union[str, Path], report: RunReport) -> Path:
    rows = [
        [b.epoch, b.bag, b.acc_nd, b.p_tilde, b.r1, b.r2, b.t_size, b.d_loss, b.b1]
        for epoch in report.epochs for b in epoch.bags
    ]
    return write_csv(path, BAG_COLUMNS, rows)


def write_epoch_rows(path: Union[str, Path], report: RunReport) -> Path:
    rows = [[e.epoch, e.acc_nd, e.epoch == report.best_epoch] for e in report.epochs]
    return write_csv(path, EPOCH_COLUMNS, rows)


def write_clean_report(path: Union[str, Path], report: CleanReport) -> Path:
    rows = []
    for pair in report.pairs:
        stats = pair.summary()
        rows.append([
            "/".join(pair.pair_id), pair.relation, pair.decision.value, pair.n,
            stats["min"], stats["max"], stats["mean"],
        ])
    return write_csv(path, CLEAN_COLUMNS, rows)


def write_pr_points(path: Union[str, Path], result: ComparisonResult) -> Path:
    rows = []
    for condition in sorted(result.curves):
        for seed, curve in zip(result.seeds, result.curves[condition]):
            for rank, (recall, precision) in enumerate(curve.points, start=1):
                rows.append([condition, seed, rank, recall, precision])
    return write_csv(path, PR_COLUMNS, rows)


def write_auc_rows(path: Union[str, Path], result: ComparisonResult) -> Path:
    oracle = result.oracle_aucs or [None] * len(result.seeds)
    rows = [[seed, a, b, o] for seed, (a, b), o in zip(result.seeds, result.auc_pairs, oracle)]
    return write_csv(path, AUC_COLUMNS, rows)


def write_ttest_row(path: Union[str, Path], result: ComparisonResult) -> Path:
    row = [len(result.seeds), result.mean_raw, result.mean_cleaned, result.t, result.p, result.degenerate]
    return write_csv(path, TTEST_COLUMNS, [row])


def write_experiment_rows(path: Union[str, Path], result: ExperimentResult) -> Path:
    rows = []
    for condition in result.curves:
        for seed, curve in zip(result.seeds, result.curves[condition]):
            for epoch, accuracy in enumerate(curve, start=1):
                rows.append([condition, seed, epoch, accuracy])
    return write_csv(path, EXPERIMENT_COLUMNS, rows)


def write_key_values(path: Union[str, Path], rows: List[Dict[str, Any]]) -> Path:
    """写出字段一致的字典行，列顺序取第一行"""
    columns = list(rows[0].keys()) if rows else []
    return write_csv(path, columns, [[row[c] for c in columns] for row in rows])


def _read_sections(path: Path) -> Dict[str, List[str]]:
    sections: Dict[str, List[str]] = {}
    if not path.exists():
        return sections
    current = None
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections[current] = []
        elif current is not None and line:
            sections[current].append(line)
    return sections


def update_summary(out_dir: Union[str, Path], section: str, lines: Sequence[str]) -> Path:
    """
    替换 summary.txt 中的一节，其余节保持不变

    Args:
        out_dir: 输出目录
        section: 节名
        lines: 该节内容

    Returns:
        summary.txt 路径
    """
    path = Path(out_dir) / SUMMARY_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    sections = _read_sections(path)
    sections[section] = [line for line in lines if line]

    order = [name for name in SUMMARY_SECTIONS if name in sections]
    order += sorted(name for name in sections if name not in SUMMARY_SECTIONS)
    blocks = ["[" + name + "]\n" + "".join(line + "\n" for line in sections[name]) for name in order]
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(blocks))
    return path
