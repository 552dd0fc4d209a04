"""句子编码器测试"""

import numpy as np
import pytest

from models.encoder import (
    OUTPUT_BIAS, WORD_EMBEDDING, SentenceModel, binary_accuracy, load_word_embeddings,
    position_index, supervised_step,
)
from models.nn import bce_loss, grad_check
from tests.conftest import make_instance, tiny_encoder_config
from utils.exceptions import DataFormatError, DatasetContractError, ShapeError


class TestSentenceModel:
    """编码器前向/反向测试"""

    def setup_method(self):
        self.cfg = tiny_encoder_config()
        self.model = SentenceModel.initialize(self.cfg, np.random.default_rng(5))
        self.batch = [
            make_instance("a", [3, 17, 40, 41, 42, 9, 60], head_pos=1, tail_pos=5),
            make_instance("b", [50, 51, 4, 88, 90], head_pos=0, tail_pos=3),
            make_instance("c", [33, 7, 71, 72, 73, 74, 75], head_pos=6, tail_pos=2),
        ]

    def test_featurize_shape(self):
        features = self.model.featurize(self.batch[0])
        assert features.shape == (7, self.cfg.word_dim + 2 * self.cfg.position_dim)

    def test_position_index_clipping(self):
        assert position_index(0, 10, 5) == 0
        assert position_index(10, 0, 5) == 10
        assert position_index(3, 3, 5) == 5

    def test_batch_matches_single_predictions(self):
        """不同长度混合的批次与逐条打分一致"""
        probs = self.model.predict_probs(self.batch)
        for inst, p in zip(self.batch, probs):
            assert p == pytest.approx(self.model.predict_prob(inst), abs=1e-12)

    def test_empty_batch_scores(self):
        assert self.model.predict_probs([]).shape == (0,)

    def test_out_of_vocab_token(self):
        with pytest.raises(ShapeError):
            self.model.predict_prob(make_instance("x", [3, 500, 4]))

    def test_zero_output_layer(self):
        self.model.zero_output_layer()
        assert np.array_equal(self.model.predict_probs(self.batch), np.full(3, 0.5))

    def test_gradients_match_finite_differences(self):
        labels = np.array([1.0, 0.0, 1.0])

        def closure():
            fp = self.model.forward(self.batch)
            loss, grad_logits = bce_loss(fp.probs, labels)
            self.model.backward(fp, grad_logits)
            return float(loss.sum())

        assert grad_check(closure, self.model.params, seed=1) < 1e-4

    def test_from_snapshot_infers_config(self):
        restored = SentenceModel.from_snapshot(self.model.snapshot())
        assert restored.config == self.cfg
        assert restored.snapshot() == self.model.snapshot()

    def test_copy_is_independent(self):
        clone = self.model.copy()
        clone.params[OUTPUT_BIAS].value += 1.0
        assert clone.snapshot() != self.model.snapshot()


class TestSupervisedStep:
    """有监督训练步测试"""

    def setup_method(self):
        self.model = SentenceModel.initialize(tiny_encoder_config(), np.random.default_rng(8))
        self.batch = [
            make_instance("p1", [10, 11, 12, 13, 14, 15], head_pos=0, tail_pos=2),
            make_instance("p2", [10, 11, 20, 21, 22, 23], head_pos=0, tail_pos=2),
            make_instance("n1", [90, 91, 92, 93, 94, 95], head_pos=0, tail_pos=2),
            make_instance("n2", [90, 91, 100, 101, 102, 103], head_pos=0, tail_pos=2),
        ]
        self.labels = [1, 1, 0, 0]

    def test_zero_learning_rate_keeps_params(self):
        before = self.model.snapshot()
        loss = supervised_step(self.model, self.batch, self.labels, lr=0.0)
        assert loss > 0
        assert self.model.snapshot() == before

    def test_repeated_steps_reduce_loss(self):
        first = supervised_step(self.model, self.batch, self.labels, lr=0.5, loss_scale=0.25)
        for _ in range(30):
            last = supervised_step(self.model, self.batch, self.labels, lr=0.5, loss_scale=0.25)
        assert last < first

    def test_label_count_mismatch(self):
        with pytest.raises(ShapeError):
            supervised_step(self.model, self.batch, [1, 0], lr=0.1)

    def test_empty_batch(self):
        with pytest.raises(DatasetContractError):
            supervised_step(self.model, [], [], lr=0.1)

    def test_binary_accuracy_threshold(self):
        assert binary_accuracy([0.5, 0.49], [1, 0]) == 1.0
        assert binary_accuracy([], []) == 0.0


class TestWordEmbeddings:
    """预训练词向量加载测试"""

    def setup_method(self):
        self.cfg = tiny_encoder_config()
        self.model = SentenceModel.initialize(self.cfg, np.random.default_rng(2))

    def test_matched_rows_replaced(self, tmp_path):
        path = tmp_path / "vectors.txt"
        row = " ".join(["0.5"] * self.cfg.word_dim)
        path.write_text(f"w3 {row}\nunknown {row}\n", encoding="utf-8")
        before = self.model.params[WORD_EMBEDDING].value.copy()

        matched = load_word_embeddings(self.model, path, {"w3": 3, "w4": 4})

        table = self.model.params[WORD_EMBEDDING].value
        assert matched == 1
        assert np.array_equal(table[3], np.full(self.cfg.word_dim, 0.5))
        assert np.array_equal(table[4], before[4])

    def test_wrong_dimension(self, tmp_path):
        path = tmp_path / "vectors.txt"
        path.write_text("w3 0.1 0.2\n", encoding="utf-8")
        with pytest.raises(DataFormatError):
            load_word_embeddings(self.model, path, {"w3": 3})
