#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
DSGAN 命令行
功能：
1. synth      生成带植入噪声的合成数据集
2. pretrain   预训练判别器与生成器
3. train      对抗训练，保存最佳生成器
4. clean      用生成器清洗正例集
5. eval       原始/清洗后数据的下游对比
6. experiment 等规模正例集实验
7. pipeline   按顺序运行以上全部步骤

退出码：0 成功，2 配置或输入错误，3 运行时错误
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

# 添加项目根目录到 Python 路径
project_root = Path(__file__).resolve().parent.parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

from agents.pipeline import run_pipeline
from agents.workflow import (
    RunContext, cmd_clean, cmd_eval, cmd_experiment, cmd_pretrain, cmd_synth, cmd_train,
)
from utils.config import get_settings, load_run_config
from utils.exceptions import DSGANError
from utils.logging_config import setup_logging

logger = logging.getLogger("dsgan")

COMMANDS = {
    "synth": cmd_synth,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "clean": cmd_clean,
    "eval": cmd_eval,
    "experiment": cmd_experiment,
    "pipeline": run_pipeline,
}

EXIT_OK = 0
EXIT_RUNTIME = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="DSGAN 远程监督关系抽取降噪")
    parser.add_argument(
        "command",
        choices=list(COMMANDS),
        help="要执行的命令"
    )
    parser.add_argument(
        "--config",
        type=str,
        required=True,
        help="运行配置文件（key = value）"
    )
    parser.add_argument(
        "--out",
        type=str,
        default="out",
        help="输出目录"
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        help="覆盖配置中的主种子"
    )
    parser.add_argument(
        "--relation",
        type=str,
        default=None,
        help="只处理指定关系"
    )
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """主函数，返回退出码"""
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        settings = get_settings()
        setup_logging(settings, out)
        config = load_run_config(args.config)
        if args.seed is not None:
            config = config.with_seed(args.seed)

        ctx = RunContext(config=config, out=out, settings=settings, relation=args.relation)
        ctx.write_config_copy()
        logger.info(f"🚀 执行命令 {args.command}, 输出目录 {out}")
        COMMANDS[args.command](ctx)
        logger.info(f"✅ 命令 {args.command} 完成")
        return EXIT_OK
    except DSGANError as e:
        logger.error(f"❌ [{e.error_code}] {e.message}")
        print(f"错误: {e.message}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception(f"❌ 未预期的错误: {e}")
        print(f"错误: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
