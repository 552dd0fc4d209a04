"""
命令工作流
synth / pretrain / train / clean / eval / experiment 六个命令的实现，
命令行与流水线图都调用这里的函数
"""

import logging
import re
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from agents.adversary import RunReport, run
from agents.pretrain import new_model, pretrain_discriminator, pretrain_generator
from data.dataset import (
    TRUTH_FILE, VOCAB_FILE, DatasetSplits, load_dataset, load_vocab, make_bags,
    save_dataset, save_vocab,
)
from data.synth import synth_generate
from data.truth import TruthTable, truth_stats
from models.encoder import WORD_EMBEDDING, SentenceModel, binary_accuracy, load_word_embeddings
from models.nn import Tensor
from tools.cleaner import DECISION_NOTE, redistribute
from tools.evaluation import (
    downstream_compare, generator_quality, oracle_clean, positive_set_experiment,
    redistribution_precision, resolve_experiment_size,
)
from utils.checkpoint import load_checkpoint, save_checkpoint
from utils.config import RunConfig, Settings, derive_seed, dump_run_config
from utils.exceptions import ConfigError, DatasetContractError
from utils.parallel import ordered_map
from utils.reporting import (
    update_summary, write_auc_rows, write_bag_rows, write_clean_report, write_epoch_rows,
    write_experiment_rows, write_key_values, write_pr_points, write_ttest_row,
)

logger = logging.getLogger(__name__)

CONFIG_COPY = "config.conf"
DISCRIMINATOR = "discriminator"
GENERATOR_PRETRAINED = "generator_pretrained"
GENERATOR = "generator"


def relation_slug(relation: str) -> str:
    """关系名转为可用于文件名的形式"""
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", relation).strip("_") or "relation"


@dataclass
class RunContext:
    """一次命令执行的上下文"""
    config: RunConfig
    out: Path
    settings: Settings
    relation: Optional[str] = None

    @property
    def dataset_dir(self) -> Path:
        return Path(self.config.paths.dataset) if self.config.paths.dataset else self.out / "dataset"

    @property
    def cleaned_dir(self) -> Path:
        return Path(self.config.paths.cleaned) if self.config.paths.cleaned else self.out / "cleaned"

    @property
    def checkpoint_dir(self) -> Path:
        return Path(self.config.paths.checkpoints) if self.config.paths.checkpoints else self.out / "checkpoints"

    def checkpoint_path(self, relation: str, role: str) -> Path:
        return self.checkpoint_dir / f"{relation_slug(relation)}.{role}.ckpt"

    def report_path(self, stage: str, relation: str) -> Path:
        return self.out / f"{stage}_{relation_slug(relation)}.csv"

    def seed(self, phase: str, relation_index: int = 0) -> int:
        return derive_seed(self.config.seed, phase, relation_index)

    def write_config_copy(self) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / CONFIG_COPY
        path.write_text(dump_run_config(self.config), encoding="utf-8")
        return path

    def selected_relations(self, splits: DatasetSplits) -> List[Tuple[int, str]]:
        """
        (关系序号, 关系名)；序号取自全部关系的排序位置，保证过滤不改变派生种子
        """
        available = splits.relations()
        if not available:
            raise DatasetContractError("正例集 P 中没有任何关系")
        wanted = list(self.config.relations) or list(available)
        if self.relation is not None:
            wanted = [self.relation]
        unknown = [name for name in wanted if name not in available]
        if unknown:
            raise ConfigError(f"数据集中不存在关系: {', '.join(unknown)}", {"available": available})
        return [(available.index(name), name) for name in sorted(set(wanted), key=available.index)]

    def truth(self, directory: Path) -> Optional[TruthTable]:
        path = directory / TRUTH_FILE
        return TruthTable.load(path) if path.exists() else None

    def word_vectors(self) -> Optional[Tensor]:
        """配置了词向量文件时，构造覆盖后的词嵌入表"""
        if not self.config.paths.embeddings:
            return None
        vocab_path = self.dataset_dir / VOCAB_FILE
        if not vocab_path.exists():
            raise ConfigError(f"使用预训练词向量需要词表文件: {vocab_path}", {"path": str(vocab_path)})
        embeddings = Path(self.config.paths.embeddings)
        if not embeddings.is_file():
            raise ConfigError(f"词向量文件不存在: {embeddings}", {"path": str(embeddings)})
        model = new_model(self.config.encoder, np.random.default_rng(self.seed("pretrain_discriminator")))
        load_word_embeddings(model, embeddings, load_vocab(vocab_path))
        return model.params[WORD_EMBEDDING].value.copy()

    def load_model(self, relation: str, role: str) -> SentenceModel:
        path = self.checkpoint_path(relation, role)
        if not path.exists():
            raise ConfigError(f"缺少检查点 {path}，请先运行前置命令", {"path": str(path)})
        return SentenceModel.from_snapshot(load_checkpoint(path))


# ---------------------------------------------------------------- 命令

def cmd_synth(ctx: RunContext) -> Path:
    """生成合成数据集并写入数据集目录"""
    cfg = ctx.config.synth
    if cfg.seed is None:
        cfg = cfg.model_copy(update={"seed": ctx.seed("synth")})
    dataset = synth_generate(cfg)
    root = save_dataset(dataset.splits, ctx.dataset_dir)
    dataset.truth.save(root / TRUTH_FILE)
    save_vocab(dataset.vocab, root / VOCAB_FILE)

    lines = [f"dataset = {root}"]
    for relation in dataset.splits.relations():
        tp, fp = truth_stats(dataset.splits.positives_for(relation), dataset.truth)
        lines.append(f"{relation}: |P| = {tp + fp}, true positives = {tp}, false positives = {fp}")
    lines.append(f"|N_G| = {len(dataset.splits.negatives_g)}, |N_D| = {len(dataset.splits.negatives_d)}")
    lines.append(f"|heldout| = {len(dataset.splits.heldout)}")
    update_summary(ctx.out, "synth", lines)
    logger.info(f"💾 合成数据已写入 {root}")
    return root


def cmd_pretrain(ctx: RunContext) -> List[Dict]:
    """预训练每个关系的判别器与生成器，写出检查点与预训练报告"""
    splits = load_dataset(ctx.dataset_dir)
    truth = ctx.truth(ctx.dataset_dir)
    word_vectors = ctx.word_vectors()
    cfg = ctx.config

    def job(item: Tuple[int, str]) -> Dict:
        index, relation = item
        positives = splits.positives_for(relation)
        discriminator, snap, accuracy = pretrain_discriminator(
            positives, splits.negatives_d, cfg.pretrain, cfg.encoder,
            ctx.seed("pretrain_discriminator", index), word_vectors
        )
        generator = pretrain_generator(
            positives, splits.negatives_g, cfg.pretrain, cfg.encoder,
            ctx.seed("pretrain_generator", index), word_vectors
        )
        save_checkpoint(ctx.checkpoint_path(relation, DISCRIMINATOR), snap)
        save_checkpoint(ctx.checkpoint_path(relation, GENERATOR_PRETRAINED), generator.params)

        nd_probs = discriminator.predict_probs(splits.negatives_d)
        row = {
            "relation": relation,
            "discriminator_heldout_accuracy": accuracy,
            "discriminator_accuracy_ND": float(np.mean(nd_probs < 0.5)),
            "generator_mean_prob_P": float(np.mean(generator.predict_probs(positives))),
            "generator_accuracy_ND": binary_accuracy(
                generator.predict_probs(splits.negatives_d), [0] * len(splits.negatives_d)
            ),
        }
        if truth is not None:
            false_positives = [inst for inst in positives if not truth.is_true_positive(inst)]
            row["generator_mean_prob_fp"] = (
                float(np.mean(generator.predict_probs(false_positives))) if false_positives else float("nan")
            )
        return row

    rows = ordered_map(job, ctx.selected_relations(splits), ctx.settings.workers)
    write_key_values(ctx.out / "pretrain.csv", rows)
    update_summary(ctx.out, "pretrain", [
        f"{row['relation']}: D heldout accuracy = {row['discriminator_heldout_accuracy']:.4f}, "
        f"G mean p over P = {row['generator_mean_prob_P']:.4f}"
        for row in rows
    ])
    return rows


def cmd_train(ctx: RunContext) -> Dict[str, RunReport]:
    """每个关系运行对抗训练，保存最佳 epoch 的生成器"""
    splits = load_dataset(ctx.dataset_dir)
    truth = ctx.truth(ctx.dataset_dir)
    cfg = ctx.config

    def job(item: Tuple[int, str]) -> Tuple[str, RunReport, List[str]]:
        index, relation = item
        positives = splits.positives_for(relation)
        generator = ctx.load_model(relation, GENERATOR_PRETRAINED)
        discriminator_path = ctx.checkpoint_path(relation, DISCRIMINATOR)
        if not discriminator_path.exists():
            raise ConfigError(f"缺少检查点 {discriminator_path}，请先运行 pretrain", {"path": str(discriminator_path)})
        snap = load_checkpoint(discriminator_path)

        bags = make_bags(positives, cfg.adversary.bag_size, ctx.seed("bags", index))
        report = run(bags, splits.negatives_d, generator, snap, cfg.adversary, ctx.seed("adversary", index))
        save_checkpoint(ctx.checkpoint_path(relation, GENERATOR), report.generator)
        write_bag_rows(ctx.report_path("adversary_bags", relation), report)
        write_epoch_rows(ctx.report_path("adversary_epochs", relation), report)

        first, best = report.epochs[0], report.best
        lines = [
            f"{relation}: epochs = {len(report.epochs)}, best epoch = {report.best_epoch}, "
            f"ACC_D epoch 1 = {first.acc_nd:.4f}, best = {best.acc_nd:.4f}"
        ]
        if truth is not None:
            trained = SentenceModel.from_snapshot(report.generator)
            before = generator_quality(generator, positives, truth, cfg.eval.threshold)
            after = generator_quality(trained, positives, truth, cfg.eval.threshold)
            lines.append(f"{relation}: generator F1 pretrained = {before.f1:.4f}, trained = {after.f1:.4f}")
        return relation, report, lines

    outcomes = ordered_map(job, ctx.selected_relations(splits), ctx.settings.workers)
    update_summary(ctx.out, "train", [line for _, _, lines in outcomes for line in lines])
    return {relation: report for relation, report, _ in outcomes}


def cmd_clean(ctx: RunContext) -> DatasetSplits:
    """用训练好的生成器清洗正例集，写出清洗后的数据集与清洗报告"""
    splits = load_dataset(ctx.dataset_dir)
    truth = ctx.truth(ctx.dataset_dir)
    threshold = ctx.config.clean.threshold

    positives = list(splits.positives)
    negatives_d = list(splits.negatives_d)
    lines = [DECISION_NOTE]
    for _, relation in ctx.selected_relations(splits):
        generator = ctx.load_model(relation, GENERATOR)
        in_relation = [inst for inst in positives if inst.relation == relation]
        others = [inst for inst in positives if inst.relation != relation]
        kept, grown, report = redistribute(in_relation, negatives_d, generator, threshold)
        moved = grown[len(negatives_d):]
        positives, negatives_d = others + kept, grown
        if not report.is_conserved():
            raise DatasetContractError("清洗前后实例总数不一致", {"relation": relation})

        write_clean_report(ctx.report_path("clean", relation), report)
        lines.append(
            f"{relation}: redistributed pairs = {len(report.redistributed)}/{len(report.pairs)}, "
            f"positives {report.positive_before} -> {report.positive_after}, "
            f"negatives {report.negative_before} -> {report.negative_after}"
        )
        if truth is not None:
            lines.append(f"{relation}: redistribution precision = {redistribution_precision(moved, truth):.4f}")

    order = {inst.id: i for i, inst in enumerate(splits.positives)}
    cleaned = DatasetSplits(
        positives=sorted(positives, key=lambda inst: order[inst.id]),
        negatives_g=list(splits.negatives_g),
        negatives_d=negatives_d,
        heldout=list(splits.heldout),
    )
    if cleaned.total_size() != splits.total_size():
        raise DatasetContractError("清洗前后数据集规模不一致")
    root = save_dataset(cleaned, ctx.cleaned_dir)
    for name in (TRUTH_FILE, VOCAB_FILE):
        if (ctx.dataset_dir / name).exists():
            shutil.copyfile(ctx.dataset_dir / name, root / name)
    lines.append(f"total instances = {cleaned.total_size()} (unchanged)")
    update_summary(ctx.out, "clean", lines)
    return cleaned


def cmd_eval(ctx: RunContext) -> Dict:
    """原始与清洗后数据的下游对比，可选真值清洗条件；有真值时附带生成器质量"""
    cfg = ctx.config
    if len(cfg.eval.seeds) < 2:
        raise ConfigError("下游对比至少需要 2 个种子", {"seeds": cfg.eval.seeds})
    raw = load_dataset(ctx.dataset_dir)
    if not ctx.cleaned_dir.is_dir():
        raise ConfigError(f"清洗后数据集不存在: {ctx.cleaned_dir}，请先运行 clean", {"path": str(ctx.cleaned_dir)})
    cleaned = load_dataset(ctx.cleaned_dir)
    truth = ctx.truth(ctx.dataset_dir)
    word_vectors = ctx.word_vectors()

    results = {}
    lines = []
    quality_rows = []
    for index, relation in ctx.selected_relations(raw):
        oracle = oracle_clean(raw, truth, relation) if (cfg.eval.oracle and truth is not None) else None
        comparison = downstream_compare(
            raw, cleaned, relation, cfg.eval, cfg.encoder, ctx.seed("eval", index),
            oracle=oracle, workers=ctx.settings.workers, word_vectors=word_vectors
        )
        results[relation] = comparison
        write_pr_points(ctx.report_path("pr_points", relation), comparison)
        write_auc_rows(ctx.report_path("auc", relation), comparison)
        write_ttest_row(ctx.report_path("ttest", relation), comparison)
        lines.append(
            f"{relation}: mean AUC raw = {comparison.mean_raw:.4f}, cleaned = {comparison.mean_cleaned:.4f}, "
            f"cleaned wins {comparison.wins()}/{len(comparison.seeds)} seeds, "
            f"t = {comparison.t:.4f}, p = {comparison.p:.4g}"
            + (" (zero-variance differences)" if comparison.degenerate else "")
        )
        if comparison.oracle_aucs is not None:
            lines.append(f"{relation}: mean AUC oracle = {float(np.mean(comparison.oracle_aucs)):.4f}")

        if truth is not None:
            positives = raw.positives_for(relation)
            for role in (GENERATOR_PRETRAINED, GENERATOR):
                path = ctx.checkpoint_path(relation, role)
                if not path.exists():
                    continue
                scores = generator_quality(
                    SentenceModel.from_snapshot(load_checkpoint(path)), positives, truth, cfg.eval.threshold
                )
                quality_rows.append({
                    "relation": relation, "generator": role,
                    "precision": scores.precision, "recall": scores.recall, "f1": scores.f1,
                })
    if quality_rows:
        write_key_values(ctx.out / "generator_quality.csv", quality_rows)
    update_summary(ctx.out, "eval", lines)
    return results


def cmd_experiment(ctx: RunContext) -> Dict:
    """等规模正例集实验：DSGAN / Random / Pre-training"""
    splits = load_dataset(ctx.dataset_dir)
    cfg = ctx.config
    selected = ctx.selected_relations(splits)
    for _, relation in selected:
        resolve_experiment_size(cfg.eval.experiment_size, len(splits.positives_for(relation)))
    word_vectors = ctx.word_vectors()
    results = {}
    lines = []
    for index, relation in selected:
        result = positive_set_experiment(
            splits.positives_for(relation), splits.negatives(),
            ctx.load_model(relation, GENERATOR), ctx.load_model(relation, GENERATOR_PRETRAINED),
            relation, cfg.eval.experiment_size, cfg.eval, cfg.encoder, ctx.seed("experiment", index),
            workers=ctx.settings.workers, word_vectors=word_vectors
        )
        results[relation] = result
        write_experiment_rows(ctx.report_path("experiment", relation), result)
        finals = result.final_means()
        lines.append(
            f"{relation}: m = {result.size}, final training accuracy "
            + ", ".join(f"{name} = {value:.4f}" for name, value in finals.items())
        )
        if result.identical_sets:
            lines.append(f"{relation}: m = |P|, the three positive sets are identical")
    update_summary(ctx.out, "experiment", lines)
    return results
