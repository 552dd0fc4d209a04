"""
自定义异常类
定义项目统一的异常层次、错误代码与进程退出码
"""

from typing import Any, Dict, Optional


class DSGANError(Exception):
    """项目异常基类"""

    def __init__(
        self,
        message: str,
        error_code: str = "INTERNAL_ERROR",
        details: Optional[Dict[str, Any]] = None,
        exit_code: int = 3
    ):
        self.message = message
        self.error_code = error_code
        self.details = details or {}
        self.exit_code = exit_code
        super().__init__(self.message)

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典格式"""
        return {
            "error": True,
            "error_code": self.error_code,
            "message": self.message,
            "details": self.details
        }


class ConfigError(DSGANError):
    """配置或命令行输入错误"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            error_code="CONFIG_ERROR",
            details=details,
            exit_code=2
        )


class DataFormatError(DSGANError):
    """数据文件格式错误"""

    def __init__(self, message: str, path: str = "", line: int = 0, details: Optional[Dict[str, Any]] = None):
        if line:
            message = f"{path}:{line}: {message}"
        super().__init__(
            message=message,
            error_code="DATA_FORMAT_ERROR",
            details={"path": path, "line": line, **(details or {})},
            exit_code=2
        )


class DatasetContractError(DSGANError):
    """数据集约束被破坏（重复ID、集合重叠、空集合等）"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            error_code="DATASET_CONTRACT",
            details=details,
            exit_code=2
        )


class ShapeError(DSGANError):
    """张量形状或索引越界错误"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            error_code="SHAPE_ERROR",
            details=details,
            exit_code=3
        )


class NonFiniteError(DSGANError):
    """出现非有限数值（NaN / inf）"""

    def __init__(self, message: str, name: str = "", details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            error_code="NON_FINITE",
            details={"name": name, **(details or {})},
            exit_code=3
        )


class CheckpointError(DSGANError):
    """检查点文件损坏或参数名不匹配"""

    def __init__(self, message: str, path: str = "", details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            error_code="CHECKPOINT_ERROR",
            details={"path": path, **(details or {})},
            exit_code=3
        )


class PretrainTargetError(DSGANError):
    """预训练在最大轮数内未达到目标"""

    def __init__(self, message: str, best: float, target: float, role: str = ""):
        super().__init__(
            message=message,
            error_code="PRETRAIN_TARGET",
            details={"best": best, "target": target, "role": role},
            exit_code=3
        )
        self.best = best
        self.target = target
