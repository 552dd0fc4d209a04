"""
真值旁路表
合成数据的 tp/fp 标记只存放在这里，训练代码从不接触
"""

from pathlib import Path
from typing import Dict, Iterable, Iterator, Mapping, Tuple, Union

from data.dataset import Instance
from utils.exceptions import DataFormatError, DatasetContractError

TRUE_POSITIVE = "tp"
FALSE_POSITIVE = "fp"
_FLAGS = (TRUE_POSITIVE, FALSE_POSITIVE)


class TruthTable(Mapping):
    """实例ID → tp|fp"""

    def __init__(self, flags: Mapping[str, str] = None):
        self._flags: Dict[str, str] = {}
        for instance_id, flag in (flags or {}).items():
            self.set(instance_id, flag)

    def set(self, instance_id: str, flag: str):
        if flag not in _FLAGS:
            raise DatasetContractError(f"非法的真值标记: {flag}", {"id": instance_id})
        self._flags[instance_id] = flag

    def __getitem__(self, instance_id: str) -> str:
        return self._flags[instance_id]

    def __iter__(self) -> Iterator[str]:
        return iter(self._flags)

    def __len__(self) -> int:
        return len(self._flags)

    def flag_of(self, instance: Instance) -> str:
        """读取单个实例的真值，缺失时报错"""
        try:
            return self._flags[instance.id]
        except KeyError:
            raise DatasetContractError(
                f"实例 {instance.id} 缺少真值标记（非合成数据？）",
                {"id": instance.id}
            ) from None

    def is_true_positive(self, instance: Instance) -> bool:
        return self.flag_of(instance) == TRUE_POSITIVE

    def save(self, path: Union[str, Path]):
        path = Path(path)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for instance_id in sorted(self._flags):
                f.write(f"{instance_id}\t{self._flags[instance_id]}\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "TruthTable":
        path = Path(path)
        table = cls()
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2 or parts[1] not in _FLAGS:
                    raise DataFormatError("真值行必须是 id<TAB>tp|fp", str(path), lineno)
                table.set(parts[0], parts[1])
        return table


def truth_stats(instances: Iterable[Instance], truth: TruthTable) -> Tuple[int, int]:
    """
    统计真正例与假正例数量（仅供评估）

    Args:
        instances: 实例
        truth: 真值表

    Returns:
        (true_positive 数, false_positive 数)
    """
    tp = fp = 0
    for inst in instances:
        if truth.is_true_positive(inst):
            tp += 1
        else:
            fp += 1
    return tp, fp
