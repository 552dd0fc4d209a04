"""
日志配置
控制台 + 文件两个处理器，json 格式时使用 python-json-logger
"""

import logging
from pathlib import Path
from typing import Optional, Union

from pythonjsonlogger import jsonlogger

from utils.config import Settings

TEXT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
JSON_FORMAT = "%(asctime)s %(name)s %(levelname)s %(message)s"
LOG_FILE = "run.log"


def build_formatter(log_format: str) -> logging.Formatter:
    if log_format == "json":
        return jsonlogger.JsonFormatter(JSON_FORMAT, json_ensure_ascii=False)
    return logging.Formatter(TEXT_FORMAT)


def setup_logging(settings: Settings, out_dir: Optional[Union[str, Path]] = None) -> Optional[Path]:
    """
    配置根日志

    Args:
        settings: 环境级配置
        out_dir: 输出目录，给定时写入 <out>/run.log

    Returns:
        日志文件路径（未写文件时为 None）
    """
    formatter = build_formatter(settings.log_format)
    handlers = [logging.StreamHandler()]
    log_path = None
    if out_dir is not None:
        log_path = Path(out_dir) / LOG_FILE
        log_path.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_path, encoding="utf-8"))
    for handler in handlers:
        handler.setFormatter(formatter)

    logging.basicConfig(level=getattr(logging, settings.log_level), handlers=handlers, force=True)
    return log_path
