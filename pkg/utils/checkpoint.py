"""
检查点文件读写
长度前缀的二进制容器：b"DSGN" | u32 版本 | u64 条目数 | 逐条目(名称、形状、小端 f64 数据)
"""

import logging
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Mapping, Union

import numpy as np

from models.nn import ParamSet, ParamSnapshot, snapshot
from utils.exceptions import CheckpointError

logger = logging.getLogger(__name__)

MAGIC = b"DSGN"
FORMAT_VERSION = 1


def encode_tensors(entries: Mapping[str, np.ndarray]) -> bytes:
    """
    序列化命名张量，相同内容得到逐字节相同的输出

    Args:
        entries: 有序的 名称 → 张量 映射

    Returns:
        二进制内容
    """
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<Q", len(entries))]
    for name, value in entries.items():
        encoded_name = name.encode("utf-8")
        array = np.ascontiguousarray(value, dtype="<f8")
        parts.append(struct.pack("<I", len(encoded_name)))
        parts.append(encoded_name)
        parts.append(struct.pack("<I", array.ndim))
        parts.append(struct.pack(f"<{array.ndim}Q", *array.shape))
        parts.append(array.tobytes())
    return b"".join(parts)


def decode_tensors(data: bytes, path: str = "") -> "OrderedDict[str, np.ndarray]":
    """
    反序列化检查点内容

    Args:
        data: 二进制内容
        path: 仅用于错误信息

    Returns:
        有序的 名称 → 张量 映射
    """
    offset = 0

    def take(size: int) -> bytes:
        nonlocal offset
        if offset + size > len(data):
            raise CheckpointError("检查点文件被截断", path, {"offset": offset, "needed": size})
        chunk = data[offset:offset + size]
        offset += size
        return chunk

    if take(4) != MAGIC:
        raise CheckpointError("检查点魔数错误", path)
    (version,) = struct.unpack("<I", take(4))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"不支持的检查点版本: {version}", path, {"version": version})
    (count,) = struct.unpack("<Q", take(8))

    entries: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        try:
            name = take(name_len).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointError("参数名不是合法的 UTF-8", path) from e
        if name in entries:
            raise CheckpointError(f"检查点中参数名重复: {name}", path)
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}Q", take(8 * rank))
        size = int(np.prod(shape, dtype=np.int64)) if rank else 1
        values = np.frombuffer(take(8 * size), dtype="<f8").astype(np.float64)
        entries[name] = values.reshape(shape)

    if offset != len(data):
        raise CheckpointError("检查点末尾存在多余字节", path, {"trailing": len(data) - offset})
    return entries


def save_checkpoint(path: Union[str, Path], params: Union[ParamSet, ParamSnapshot]) -> Path:
    """
    保存检查点

    Args:
        path: 文件路径
        params: 参数集合或快照

    Returns:
        写入的路径
    """
    snap = snapshot(params) if isinstance(params, ParamSet) else params
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_tensors(snap))
    logger.info(f"💾 已保存检查点: {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> ParamSnapshot:
    """读取检查点为参数快照"""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"检查点不存在: {path}", str(path))
    return ParamSnapshot(decode_tensors(path.read_bytes(), str(path)))
