"""对抗训练引擎测试"""

from itertools import combinations
from unittest.mock import patch

import numpy as np
import pytest

import agents.adversary as adversary
from agents.adversary import (
    AdversaryConfig, BagMetrics, RewardState, avg_neg_prob, discriminator_step, generator_step,
    reward_r1, reward_r2, run, run_bag, sample_generated_set,
)
from data.dataset import make_bags
from data.synth import synth_generate
from models.encoder import OUTPUT_BIAS, SentenceModel, supervised_step
from tests.conftest import tiny_encoder_config, tiny_synth_config
from utils.exceptions import DatasetContractError, DSGANError, NonFiniteError, ShapeError


def _same_params(a: SentenceModel, b: SentenceModel) -> bool:
    return all(np.array_equal(a.params[name].value, b.params[name].value) for name in a.params)


class TestSampling:
    """生成集合采样测试"""

    def test_all_ones_and_zeros(self):
        rng = np.random.default_rng(0)
        assert sample_generated_set([1.0, 1.0, 1.0], rng) == ([0, 1, 2], [])
        assert sample_generated_set([0.0, 0.0], rng) == ([], [0, 1])

    def test_half_probability_frequency(self):
        generated, rest = sample_generated_set(np.full(10000, 0.5), np.random.default_rng(1))
        assert 4800 <= len(generated) <= 5200
        assert len(generated) + len(rest) == 10000

    def test_partition_is_ordered_and_disjoint(self):
        generated, rest = sample_generated_set(np.linspace(0, 1, 50), np.random.default_rng(2))
        assert generated == sorted(generated)
        assert sorted(generated + rest) == list(range(50))

    def test_invalid_probability(self):
        with pytest.raises(ShapeError):
            sample_generated_set([0.2, 1.5], np.random.default_rng(0))


class TestRewards:
    """奖励计算测试"""

    def test_r1_examples(self):
        assert reward_r1([0.6, 0.8], 0.5) == pytest.approx(0.2)
        assert reward_r1([0.5], 0.5) == 0.0
        assert reward_r1([0.1], 0.5) == pytest.approx(-0.4)

    def test_r1_empty(self):
        with pytest.raises(DatasetContractError):
            reward_r1([], 0.5)

    def test_r2_first_epoch_is_zero(self):
        state = RewardState(n_bags=2)
        assert reward_r2(0.3, 0, 1, state, 1.0) == 0.0
        assert reward_r2(0.9, 1, 1, state, 1.0) == 0.0
        assert state.p_tilde_history == [[0.3, 0.9]]

    def test_r2_against_best_prior_epoch(self):
        state = RewardState(n_bags=1, p_tilde_history=[[0.3], [0.35]])
        assert reward_r2(0.4, 0, 3, state, 1.0) == pytest.approx(0.05)
        assert state.p_tilde_history[-1] == [0.4]

    def test_r2_scaled_by_eta(self):
        state = RewardState(n_bags=1, p_tilde_history=[[0.3], [0.35]])
        assert reward_r2(0.2, 0, 3, state, 2.0) == pytest.approx(-0.3)

    def test_r2_incomplete_history(self):
        state = RewardState(n_bags=2, p_tilde_history=[[0.3]])
        with pytest.raises(DSGANError) as exc:
            reward_r2(0.4, 0, 2, state, 1.0)
        assert exc.value.error_code == "REWARD_STATE"

    def test_r2_bag_out_of_order(self):
        state = RewardState(n_bags=2)
        with pytest.raises(DSGANError):
            reward_r2(0.4, 1, 1, state, 1.0)

    def test_r2_bag_index_out_of_range(self):
        with pytest.raises(ShapeError):
            reward_r2(0.4, 3, 1, RewardState(n_bags=2), 1.0)

    def test_baseline_moving_average(self):
        state = RewardState(n_bags=1)
        state.update_baseline(0.9, 0.9)
        assert state.b1 == pytest.approx(0.54)


class TestModelSteps:
    """判别器/生成器单步更新测试"""

    def setup_method(self):
        data = synth_generate(tiny_synth_config())
        self.positives = data.splits.positives
        self.negatives_d = data.splits.negatives_d
        self.encoder = tiny_encoder_config()
        self.discriminator = SentenceModel.initialize(self.encoder, np.random.default_rng(1))
        self.generator = SentenceModel.initialize(self.encoder, np.random.default_rng(0))

    def test_empty_generated_set_labels_rest_positive(self):
        """T 为空时等价于 F 全标为 1 的一步"""
        rest = self.positives[:5]
        expected = self.discriminator.copy()
        supervised_step(expected, rest, [1] * 5, 0.1, loss_scale=1.0 / 60)
        discriminator_step(self.discriminator, [], rest, 0.1, 60)
        assert self.discriminator.snapshot() == expected.snapshot()

    def test_update_scales_with_positive_set_size(self):
        before = self.discriminator.snapshot()
        small = self.discriminator.copy()
        large = self.discriminator.copy()
        discriminator_step(small, self.positives[:2], self.positives[2:6], 0.1, 10)
        discriminator_step(large, self.positives[:2], self.positives[2:6], 0.1, 20)
        for name in before:
            delta_small = small.params[name].value - before[name]
            delta_large = large.params[name].value - before[name]
            assert np.allclose(delta_small, 2.0 * delta_large, rtol=1e-6, atol=1e-12)

    def test_both_sets_empty(self):
        before = self.discriminator.snapshot()
        assert discriminator_step(self.discriminator, [], [], 0.1, 60) == 0.0
        assert self.discriminator.snapshot() == before

    def test_repeated_steps_push_generated_below_half(self):
        generated, rest = self.positives[:2], self.positives[2:4]
        for _ in range(200):
            discriminator_step(self.discriminator, generated, rest, 1.0, 1)
        assert np.all(self.discriminator.predict_probs(generated) < 0.5)

    def test_avg_neg_prob_with_zero_output_layer(self):
        self.discriminator.zero_output_layer()
        p_tilde, accuracy = avg_neg_prob(self.discriminator, self.negatives_d)
        assert p_tilde == 0.5
        assert accuracy == 0.0

    def test_avg_neg_prob_empty(self):
        with pytest.raises(DatasetContractError):
            avg_neg_prob(self.discriminator, [])

    def test_zero_reward_keeps_generator(self):
        before = self.generator.copy()
        generator_step(self.generator, self.positives[:4], 0.0, 0.01)
        assert _same_params(self.generator, before)

    def test_positive_reward_raises_probability(self):
        inst = self.positives[0]
        before = self.generator.predict_prob(inst)
        generator_step(self.generator, [inst], 1.0, 0.01)
        assert self.generator.predict_prob(inst) > before

    def test_generator_step_requires_generated_set(self):
        with pytest.raises(DatasetContractError):
            generator_step(self.generator, [], 1.0, 0.01)

    def test_generator_step_rejects_non_finite_reward(self):
        with pytest.raises(NonFiniteError):
            generator_step(self.generator, self.positives[:2], float("nan"), 0.01)


class TestPolicyGradientEstimator:
    """生成器更新是期望判别器得分梯度的无偏估计（以输出偏置为探针）"""

    def setup_method(self):
        data = synth_generate(tiny_synth_config())
        self.bag = data.splits.positives[:3]
        self.generator = SentenceModel.initialize(tiny_encoder_config(), np.random.default_rng(3))
        self.lr = 1e-3
        # 冻结的判别器得分
        self.scores = np.array([0.2, 0.7, 0.4])

    def _bias_gradient(self, subset, reward) -> float:
        model = self.generator.copy()
        before = float(model.params[OUTPUT_BIAS].value[0])
        generator_step(model, [self.bag[j] for j in subset], reward, self.lr)
        return (float(model.params[OUTPUT_BIAS].value[0]) - before) / self.lr

    def test_singleton_bag(self):
        p = self.generator.predict_prob(self.bag[0])
        d = self.scores[0]
        expected_update = p * self._bias_gradient([0], d)
        # ∇_b E[Σ_T p_D] = d·p·(1−p)
        assert expected_update == pytest.approx(d * p * (1.0 - p), abs=1e-6)

    def test_three_instance_bag(self):
        probs = self.generator.predict_probs(self.bag)
        expected_update = 0.0
        closed_form = 0.0
        for size in (1, 2, 3):
            for subset in combinations(range(3), size):
                chance = np.prod([probs[j] if j in subset else 1.0 - probs[j] for j in range(3)])
                reward = float(np.mean(self.scores[list(subset)]))
                expected_update += chance * self._bias_gradient(subset, reward)
                closed_form += chance * reward * float(np.mean([1.0 - probs[j] for j in subset]))
        assert expected_update == pytest.approx(closed_form, abs=1e-6)


class TestRunBag:
    """单袋处理测试"""

    def setup_method(self):
        data = synth_generate(tiny_synth_config())
        self.bag = data.splits.positives[:8]
        self.negatives_d = data.splits.negatives_d
        encoder = tiny_encoder_config()
        self.generator = SentenceModel.initialize(encoder, np.random.default_rng(0))
        self.discriminator = SentenceModel.initialize(encoder, np.random.default_rng(1))
        self.cfg = AdversaryConfig(lr_generator=0.01, lr_discriminator=0.1)
        self.state = RewardState(n_bags=1)

    def _run(self):
        return run_bag(
            self.generator, self.discriminator, self.bag, 0, 1, self.negatives_d,
            self.state, self.cfg, 60, np.random.default_rng(5)
        )

    def test_empty_generated_set_skips_generator(self):
        self.generator.params[OUTPUT_BIAS].value[0] = -50.0
        before = self.generator.snapshot()
        metrics = self._run()
        assert metrics.t_size == 0
        assert metrics.f_size == 8
        assert metrics.r1 == 0.0
        assert self.state.b1 == 0.5
        assert self.generator.snapshot() == before
        assert self.state.p_tilde_history == [[metrics.p_tilde]]

    def test_reward_uses_updated_discriminator(self):
        self.generator.params[OUTPUT_BIAS].value[0] = 50.0
        metrics = self._run()
        assert metrics.t_size == 8
        after = float(np.mean(self.discriminator.predict_probs(self.bag)))
        assert metrics.r1 == pytest.approx(after - 0.5, abs=1e-12)
        assert self.state.b1 == pytest.approx(0.9 * 0.5 + 0.1 * after)

    def test_call_order(self):
        calls = []

        def record(name, original):
            def wrapper(*args, **kwargs):
                calls.append(name)
                return original(*args, **kwargs)
            return wrapper

        with patch.object(adversary, "discriminator_step", record("discriminator", adversary.discriminator_step)), \
                patch.object(adversary, "avg_neg_prob", record("avg_neg_prob", adversary.avg_neg_prob)), \
                patch.object(adversary, "generator_step", record("generator", adversary.generator_step)):
            self.generator.params[OUTPUT_BIAS].value[0] = 50.0
            self._run()
        assert calls == ["discriminator", "avg_neg_prob", "generator"]


class TestRun:
    """完整对抗训练测试"""

    def setup_method(self):
        data = synth_generate(tiny_synth_config())
        self.bags = make_bags(data.splits.positives, bag_size=16, seed=1)
        self.negatives_d = data.splits.negatives_d
        encoder = tiny_encoder_config()
        self.generator = SentenceModel.initialize(encoder, np.random.default_rng(0))
        self.d_snapshot = SentenceModel.initialize(encoder, np.random.default_rng(1)).snapshot()
        self.cfg = AdversaryConfig(lr_generator=0.01, lr_discriminator=0.1, max_epochs=3, patience=3)

    def test_single_epoch(self):
        cfg = AdversaryConfig(lr_generator=0.01, lr_discriminator=0.1, max_epochs=1)
        report = run(self.bags, self.negatives_d, self.generator, self.d_snapshot, cfg, seed=4)
        assert len(report.epochs) == 1
        assert report.best_epoch == 1
        epoch = report.best
        assert len(epoch.bags) == 4
        assert epoch.acc_nd == epoch.bags[-1].acc_nd
        assert all(bag.r2 == 0.0 for bag in epoch.bags)
        assert all(bag.t_size + bag.f_size == len(self.bags[bag.bag]) for bag in epoch.bags)

    def test_inputs_not_modified(self):
        before = self.generator.snapshot()
        run(self.bags, self.negatives_d, self.generator, self.d_snapshot, self.cfg, seed=4)
        assert self.generator.snapshot() == before

    def test_discriminator_restored_every_epoch(self):
        seen = []
        original = adversary.run_bag

        def spy(generator, discriminator, bag, bag_index, *args):
            if bag_index == 0:
                seen.append(discriminator.snapshot())
            return original(generator, discriminator, bag, bag_index, *args)

        with patch.object(adversary, "run_bag", side_effect=spy):
            report = run(self.bags, self.negatives_d, self.generator, self.d_snapshot, self.cfg, seed=4)
        assert len(seen) == len(report.epochs)
        assert all(snap == self.d_snapshot for snap in seen)

    def test_same_seed_same_report(self):
        first = run(self.bags, self.negatives_d, self.generator, self.d_snapshot, self.cfg, seed=4)
        second = run(self.bags, self.negatives_d, self.generator, self.d_snapshot, self.cfg, seed=4)
        assert [e.acc_trace() for e in first.epochs] == [e.acc_trace() for e in second.epochs]
        assert first.best_epoch == second.best_epoch
        assert first.generator == second.generator

    def test_on_epoch_callback(self):
        seen = []
        report = run(self.bags, self.negatives_d, self.generator, self.d_snapshot, self.cfg, seed=4, on_epoch=seen.append)
        assert [m.epoch for m in seen] == [m.epoch for m in report.epochs]

    @pytest.mark.parametrize("patience, expected_epochs, expected_best", [(1, 3, 2), (2, 4, 4)])
    def test_stopping_rule(self, patience, expected_epochs, expected_best):
        """ACC_D 未创新低的 epoch 数达到 patience 时停止"""
        script = [0.9, 0.8, 0.85, 0.7]

        def fake_bag(generator, discriminator, bag, bag_index, epoch, *args):
            return BagMetrics(
                epoch=epoch, bag=bag_index, acc_nd=script[epoch - 1], p_tilde=0.3,
                r1=0.0, r2=0.0, t_size=1, f_size=len(bag) - 1, d_loss=0.1, b1=0.5,
            )

        cfg = AdversaryConfig(max_epochs=4, patience=patience)
        with patch.object(adversary, "run_bag", side_effect=fake_bag):
            report = run(self.bags, self.negatives_d, self.generator, self.d_snapshot, cfg, seed=4)
        assert len(report.epochs) == expected_epochs
        assert report.best_epoch == expected_best

    def test_empty_negatives(self):
        with pytest.raises(DatasetContractError):
            run(self.bags, [], self.generator, self.d_snapshot, self.cfg, seed=4)
