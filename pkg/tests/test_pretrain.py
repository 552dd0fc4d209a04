"""预训练测试"""

from unittest.mock import patch

import numpy as np
import pytest

from agents.pretrain import (
    ClassifierConfig, PretrainConfig, new_model, pretrain_discriminator, pretrain_generator,
    train_classifier, training_accuracy,
)
from data.synth import synth_generate
from models.encoder import WORD_EMBEDDING
from tests.conftest import make_instance, tiny_encoder_config, tiny_synth_config
from utils.exceptions import DatasetContractError, PretrainTargetError, ShapeError


class TestPretrain:
    """判别器与生成器预训练测试"""

    def setup_method(self):
        # 无噪声时每个正例都带信号词，容易分开
        self.splits = synth_generate(tiny_synth_config(noise_rate=0.0)).splits
        self.encoder = tiny_encoder_config()
        self.cfg = PretrainConfig(max_epochs=200, batch_size=16, learning_rate=0.5)

    def test_discriminator_reaches_target(self):
        model, snap, accuracy = pretrain_discriminator(
            self.splits.positives, self.splits.negatives_d, self.cfg, self.encoder, seed=1
        )
        assert accuracy >= self.cfg.target_accuracy
        assert snap == model.snapshot()

    def test_discriminator_is_deterministic(self):
        _, first, acc_first = pretrain_discriminator(
            self.splits.positives, self.splits.negatives_d, self.cfg, self.encoder, seed=1
        )
        _, second, acc_second = pretrain_discriminator(
            self.splits.positives, self.splits.negatives_d, self.cfg, self.encoder, seed=1
        )
        assert first == second
        assert acc_first == acc_second

    def test_discriminator_fails_on_inseparable_data(self):
        """P 与 N_D 同分布时无法达到目标"""
        fake_positives = [
            make_instance(f"fake-{i}", inst.tokens, inst.head_pos, inst.tail_pos)
            for i, inst in enumerate(self.splits.negatives_g)
        ]
        cfg = PretrainConfig(max_epochs=3, heldout_fraction=0.4)
        with pytest.raises(PretrainTargetError) as exc:
            pretrain_discriminator(fake_positives, self.splits.negatives_d, cfg, self.encoder, seed=1)
        assert exc.value.best < cfg.target_accuracy
        assert exc.value.details["role"] == "discriminator"

    def test_discriminator_needs_two_instances(self):
        with pytest.raises(DatasetContractError):
            pretrain_discriminator(self.splits.positives[:1], self.splits.negatives_d, self.cfg, self.encoder, seed=1)

    def test_generator_overfits_positives(self):
        cfg = PretrainConfig(max_epochs=200, batch_size=16, learning_rate=0.5, target_mean_prob=0.85)
        model = pretrain_generator(self.splits.positives, self.splits.negatives_g, cfg, self.encoder, seed=2)
        assert float(np.mean(model.predict_probs(self.splits.positives))) >= 0.85

    def test_generator_needs_negatives(self):
        with pytest.raises(DatasetContractError):
            pretrain_generator(self.splits.positives, [], self.cfg, self.encoder, seed=2)

    @patch("agents.pretrain.supervised_step", return_value=0.5)
    def test_batches_are_balanced(self, mock_step):
        """每个批次正负交替，较小的一侧循环补齐"""
        cfg = ClassifierConfig(epochs=1, batch_size=4)
        train_classifier(self.splits.positives[:5], self.splits.negatives_g[:12], cfg, self.encoder, seed=0)

        assert mock_step.call_count == 6
        for call in mock_step.call_args_list:
            _, batch, labels, lr = call.args
            assert labels == [1, 0, 1, 0]
            assert len(batch) == 4
            assert call.kwargs["loss_scale"] == 0.25


class TestClassifier:
    """固定轮数分类器测试"""

    def setup_method(self):
        self.splits = synth_generate(tiny_synth_config()).splits
        self.encoder = tiny_encoder_config()
        self.cfg = ClassifierConfig(epochs=2, batch_size=16)

    def test_on_epoch_called_every_epoch(self):
        seen = []
        train_classifier(
            self.splits.positives, self.splits.negatives(), self.cfg, self.encoder, seed=4,
            on_epoch=lambda epoch, model: seen.append((epoch, training_accuracy(model, self.splits.positives, []))),
        )
        assert [epoch for epoch, _ in seen] == [1, 2]
        assert all(0.0 <= acc <= 1.0 for _, acc in seen)

    def test_same_seed_same_model(self):
        first = train_classifier(self.splits.positives, self.splits.negatives(), self.cfg, self.encoder, seed=4)
        second = train_classifier(self.splits.positives, self.splits.negatives(), self.cfg, self.encoder, seed=4)
        assert first.snapshot() == second.snapshot()

    def test_word_vectors_installed(self):
        vectors = np.full((self.encoder.vocab_size, self.encoder.word_dim), 0.01)
        model = new_model(self.encoder, np.random.default_rng(0), vectors)
        assert np.array_equal(model.params[WORD_EMBEDDING].value, vectors)

    def test_word_vectors_shape_mismatch(self):
        with pytest.raises(ShapeError):
            new_model(self.encoder, np.random.default_rng(0), np.zeros((3, 3)))
