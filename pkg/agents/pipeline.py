"""
完整流水线
用 LangGraph 状态图串联 synth → pretrain → train → clean → evaluate → experiment，
数据集目录已存在时跳过 synth
"""

import logging
from typing import Any, Dict, List, Literal, TypedDict

from langgraph.graph import END, StateGraph

from agents.workflow import (
    RunContext, cmd_clean, cmd_eval, cmd_experiment, cmd_pretrain, cmd_synth, cmd_train,
)

logger = logging.getLogger(__name__)


class PipelineState(TypedDict):
    """流水线状态"""
    ctx: RunContext
    skip_synth: bool
    completed: List[str]
    results: Dict[str, Any]


def _step(name: str, command):
    def node(state: PipelineState) -> Dict[str, Any]:
        logger.info(f"▶️ 流水线阶段: {name}")
        result = command(state["ctx"])
        return {
            "completed": state["completed"] + [name],
            "results": {**state["results"], name: result},
        }
    return node


def prepare_node(state: PipelineState) -> Dict[str, Any]:
    """写出配置副本，检查数据集目录"""
    ctx = state["ctx"]
    ctx.write_config_copy()
    exists = ctx.dataset_dir.is_dir()
    if exists:
        logger.info(f"数据集目录已存在，跳过 synth: {ctx.dataset_dir}")
    return {"skip_synth": exists, "completed": state["completed"] + ["prepare"]}


def route_after_prepare(state: PipelineState) -> Literal["synth", "pretrain"]:
    """决策函数：数据集已存在时直接预训练"""
    return "pretrain" if state["skip_synth"] else "synth"


def create_pipeline():
    """
    创建流水线图

    Returns:
        编译后的状态图
    """
    workflow = StateGraph(PipelineState)

    workflow.add_node("prepare", prepare_node)
    workflow.add_node("synth", _step("synth", cmd_synth))
    workflow.add_node("pretrain", _step("pretrain", cmd_pretrain))
    workflow.add_node("train", _step("train", cmd_train))
    workflow.add_node("clean", _step("clean", cmd_clean))
    workflow.add_node("evaluate", _step("evaluate", cmd_eval))
    workflow.add_node("experiment", _step("experiment", cmd_experiment))

    workflow.set_entry_point("prepare")
    workflow.add_conditional_edges(
        "prepare",
        route_after_prepare,
        {
            "synth": "synth",
            "pretrain": "pretrain"
        }
    )
    workflow.add_edge("synth", "pretrain")
    workflow.add_edge("pretrain", "train")
    workflow.add_edge("train", "clean")
    workflow.add_edge("clean", "evaluate")
    workflow.add_edge("evaluate", "experiment")
    workflow.add_edge("experiment", END)

    return workflow.compile()


def run_pipeline(ctx: RunContext) -> PipelineState:
    """运行完整流水线，返回最终状态"""
    pipeline = create_pipeline()
    return pipeline.invoke({"ctx": ctx, "skip_synth": False, "completed": [], "results": {}})
