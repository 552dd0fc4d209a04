"""
配置管理
环境级配置使用 Pydantic Settings，运行级配置为带点号分节的 key = value 文本
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from agents.adversary import AdversaryConfig
from agents.pretrain import PretrainConfig
from data.synth import SynthConfig
from models.encoder import EncoderConfig
from tools.cleaner import CleanConfig
from tools.evaluation import EvalConfig
from utils.exceptions import ConfigError

logger = logging.getLogger(__name__)

# 各阶段种子相对主种子的偏移
SEED_OFFSETS = {
    "synth": 0,
    "bags": 1,
    "pretrain_discriminator": 2,
    "pretrain_generator": 3,
    "adversary": 4,
    "eval": 5,
    "experiment": 6,
}
RELATION_SEED_STRIDE = 1000


class Settings(BaseSettings):
    """环境级配置（DSGAN_ 前缀的环境变量或 .env）"""
    model_config = SettingsConfigDict(env_prefix="DSGAN_", case_sensitive=False, extra="ignore")

    log_level: str = Field(default="INFO", description="日志级别")
    log_format: Literal["text", "json"] = Field(default="text", description="日志格式")
    workers: int = Field(default=1, ge=1, le=64, description="多关系/多种子任务的线程数")

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v):
        """验证日志级别"""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in valid_levels:
            raise ValueError(f"日志级别必须是以下之一: {valid_levels}")
        return v.upper()


def get_settings(env_file: Union[str, Path, None] = None) -> Settings:
    """加载 .env 后读取环境级配置"""
    load_dotenv(env_file or Path.cwd() / ".env")
    try:
        return Settings()
    except ValidationError as e:
        raise ConfigError(f"环境变量配置无效: {e.errors()[0]['msg']}", {"errors": _error_list(e)}) from e


class PathsConfig(BaseModel):
    """路径配置，空字符串表示使用 --out 下的默认位置"""
    model_config = ConfigDict(extra="forbid")

    dataset: str = Field(default="", description="数据集目录，默认 <out>/dataset")
    cleaned: str = Field(default="", description="清洗后数据集目录，默认 <out>/cleaned")
    checkpoints: str = Field(default="", description="检查点目录，默认 <out>/checkpoints")
    embeddings: str = Field(default="", description="可选的预训练词向量文件")


class RunConfig(BaseModel):
    """一次运行的全部配置，所有字段都有默认值"""
    model_config = ConfigDict(extra="forbid")

    seed: int = Field(default=0, ge=0, description="主种子")
    relations: List[str] = Field(default_factory=list, description="要处理的关系，空表示全部")
    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    pretrain: PretrainConfig = Field(default_factory=PretrainConfig)
    adversary: AdversaryConfig = Field(default_factory=AdversaryConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    clean: CleanConfig = Field(default_factory=CleanConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    paths: PathsConfig = Field(default_factory=PathsConfig)

    @field_validator("relations", mode="before")
    @classmethod
    def split_relations(cls, v):
        if isinstance(v, str):
            return [name.strip() for name in v.split(",") if name.strip()]
        return v

    def with_seed(self, seed: int) -> "RunConfig":
        return self.model_copy(update={"seed": seed})


def derive_seed(master: int, phase: str, relation_index: int = 0) -> int:
    """
    由主种子派生阶段种子

    Args:
        master: 主种子
        phase: 阶段名（见 SEED_OFFSETS）
        relation_index: 关系序号

    Returns:
        阶段种子
    """
    if phase not in SEED_OFFSETS:
        raise ConfigError(f"未知的种子阶段: {phase}", {"phase": phase})
    return master + SEED_OFFSETS[phase] + RELATION_SEED_STRIDE * relation_index


def _error_list(error: ValidationError) -> List[Dict[str, Any]]:
    return [{"loc": ".".join(str(p) for p in err["loc"]), "msg": err["msg"]} for err in error.errors()]


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, Any]:
    """
    把 key = value 文本解析为嵌套字典

    # 之后为注释；空行忽略；键最多一级分节（section.key）；重复键报错。

    Args:
        text: 配置文本
        source: 报错时使用的来源名

    Returns:
        嵌套字典，值均为字符串
    """
    tree: Dict[str, Any] = {}
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: 缺少 '='", {"path": source, "line": lineno})
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: 键为空", {"path": source, "line": lineno})
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: 重复的键 {key}", {"path": source, "line": lineno, "key": key})
        seen.add(key)

        parts = key.split(".")
        if len(parts) > 2 or not all(parts):
            raise ConfigError(f"{source}:{lineno}: 非法的键 {key}", {"path": source, "line": lineno, "key": key})
        if len(parts) == 1:
            if isinstance(tree.get(key), dict):
                raise ConfigError(f"{source}:{lineno}: {key} 是分节名", {"key": key})
            tree[key] = value
        else:
            section = tree.setdefault(parts[0], {})
            if not isinstance(section, dict):
                raise ConfigError(f"{source}:{lineno}: {parts[0]} 不是分节", {"key": key})
            section[parts[1]] = value
    return tree


def build_run_config(tree: Dict[str, Any], source: str = "<config>") -> RunConfig:
    """校验嵌套字典，未知的分节或键会报错"""
    try:
        return RunConfig.model_validate(tree)
    except ValidationError as e:
        errors = _error_list(e)
        first = errors[0]
        raise ConfigError(f"{source}: 配置项 {first['loc']} 无效: {first['msg']}", {"errors": errors}) from e


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """
    读取运行配置文件

    Args:
        path: 配置文件路径

    Returns:
        校验后的运行配置
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"配置文件不存在: {path}", {"path": str(path)})
    text = path.read_text(encoding="utf-8")
    cfg = build_run_config(parse_config_text(text, str(path)), str(path))
    logger.debug(f"已加载配置 {path}")
    return cfg


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_format_value(v) for v in value)
    return str(value)


def dump_run_config(cfg: RunConfig) -> str:
    """
    规范化输出：键排序，数值格式确定；None 值省略

    重新加载输出文本得到相等的配置。
    """
    flat: Dict[str, str] = {}
    for key, value in cfg.model_dump().items():
        if isinstance(value, dict):
            for sub_key, sub_value in value.items():
                if sub_value is not None:
                    flat[f"{key}.{sub_key}"] = _format_value(sub_value)
        elif value is not None:
            flat[key] = _format_value(value)
    return "".join(f"{key} = {flat[key]}\n" for key in sorted(flat))
