import math

import numpy as np
import pytest

from oracles import random_blueprint
from qcbo.circuit import CircuitBlueprint, complexity_summary, gate
from qcbo.data import Dataset, SearchData, SplitSpec, prepare, synth_generate
from qcbo.vqc import (EvalRecord, HybridModel, PenaltyCaps, TrainConfig, accuracy, cross_entropy, evaluate_objective,
                      fit_and_score, forward, head_forward, loss_and_grads, quantum_gradients,
                      structural_penalty, train)

RY_ONLY = CircuitBlueprint(1, (gate("RY", 0, theta=0.0),))


def toy_data(n=300, seed=0, margin=3.0, Q=2):
    pd = prepare(synth_generate(n + 200, Q, Q, seed=seed, margin=margin), SplitSpec(100, 100, 0), Q)
    return pd


class TestForward:
    def test_zero_head(self):
        m = HybridModel.init(RY_ONLY, np.random.default_rng(0))
        m.head = {k: np.zeros_like(v) for k, v in m.head.items()}
        assert forward(m, [0.3]) == pytest.approx([0.5, 0.5], abs=1e-15)

    def test_probabilities(self):
        rng = np.random.default_rng(1)
        bp = random_blueprint(rng, 3, 10)
        m = HybridModel.init(bp, rng)
        for k in m.head:
            m.head[k] = m.head[k] * 5
        p = forward(m, rng.uniform(0, math.pi, (20, 3)))
        assert np.all((p > 0) & (p < 1))
        assert np.abs(p.sum(1) - 1).max() < 1e-12

    def test_hand_computed_logits(self):
        m = HybridModel.init(CircuitBlueprint(2, (gate("H", 0),)), np.random.default_rng(0), hidden=2)
        m.head = {"W1": np.eye(2), "b1": np.zeros(2), "W2": np.eye(2), "b2": np.zeros(2),
                  "W3": np.array([[1.0, 0.0], [0.0, 2.0]]), "b3": np.array([0.0, -0.5])}
        x = np.array([0.0, 1.0])
        z = np.array([0.0, math.cos(1.0)])  # H on q0 -> <Z0>=0
        logits = np.array([z[0], 2 * z[1] - 0.5])
        expected = np.exp(logits) / np.exp(logits).sum()
        assert forward(m, x) == pytest.approx(expected, abs=1e-12)

    def test_dimension_mismatch(self):
        m = HybridModel.init(RY_ONLY, np.random.default_rng(0))
        with pytest.raises(ValueError):
            forward(m, [0.1, 0.2])

    def test_serialization_roundtrip(self):
        rng = np.random.default_rng(2)
        bp = random_blueprint(rng, 3, 6)
        m = HybridModel.init(bp, rng)
        m2 = HybridModel.from_dict(bp, m.to_dict())
        x = rng.uniform(0, 3, (4, 3))
        assert np.array_equal(forward(m, x), forward(m2, x))


class TestCrossEntropy:
    def test_examples(self):
        assert cross_entropy(np.array([[0.0, 1.0]]), np.array([1])) == 0.0
        assert cross_entropy(np.array([[0.5, 0.5]]), np.array([0])) == pytest.approx(math.log(2))
        probs = np.array([[0.9, 0.1], [0.2, 0.8]])
        assert cross_entropy(probs, np.array([0, 1])) == pytest.approx(-(math.log(0.9) + math.log(0.8)) / 2)
        assert cross_entropy(probs, np.array([0, 1])) == pytest.approx(0.1643, abs=1e-4)

    def test_zero_probability_clamped(self):
        assert cross_entropy(np.array([[1.0, 0.0]]), np.array([1])) == pytest.approx(-math.log(1e-12))


class TestGradients:
    def test_no_parameters(self):
        m = HybridModel.init(CircuitBlueprint(2, (gate("H", 0),)), np.random.default_rng(0))
        assert quantum_gradients(m, [0.1, 0.2]).shape == (0, 2)

    @pytest.mark.parametrize("theta", [math.pi / 2, 0.3, 2.0])
    def test_single_ry(self, theta):
        m = HybridModel.init(CircuitBlueprint(1, (gate("RY", 0, theta=theta),)), np.random.default_rng(0))
        assert quantum_gradients(m, [0.0])[0, 0] == pytest.approx(-math.sin(theta), abs=1e-14)

    def test_full_loss_gradient_fd(self):
        rng = np.random.default_rng(3)
        bp = random_blueprint(rng, 3, 8)
        m = HybridModel.init(bp, rng, hidden=6)
        for k in m.head:
            m.head[k] = rng.normal(size=m.head[k].shape)
        x = rng.uniform(0, math.pi, (5, 3))
        y = rng.integers(0, 2, 5)
        _, g_theta, g_head = loss_and_grads(m, x, y)

        def loss_at(model):
            return cross_entropy(forward(model, x), y)

        h = 1e-6
        for p in range(len(m.theta)):
            a, b = m.copy(), m.copy()
            a.theta[p] += h
            b.theta[p] -= h
            assert g_theta[p] == pytest.approx((loss_at(a) - loss_at(b)) / (2 * h), abs=1e-7)
        for k in ("W1", "b3"):
            idx = (0,) * m.head[k].ndim
            a, b = m.copy(), m.copy()
            a.head[k][idx] += h
            b.head[k][idx] -= h
            assert g_head[k][idx] == pytest.approx((loss_at(a) - loss_at(b)) / (2 * h), abs=1e-7)


class TestTrain:
    def test_zero_epochs(self):
        pd = toy_data()
        m = HybridModel.init(CircuitBlueprint(2, (gate("RY", 0, theta=0.4), gate("CZ", 0, 1))), np.random.default_rng(0))
        m2, trace = train(m, pd.train, TrainConfig(epochs=0))
        assert trace == [] and np.array_equal(m2.theta, m.theta)
        assert all(np.array_equal(m2.head[k], m.head[k]) for k in m.head)

    def test_deterministic(self):
        pd = toy_data()
        bp = CircuitBlueprint(2, (gate("RY", 0, theta=0.4), gate("CX", 0, 1), gate("RX", 1, theta=1.0)))
        cfg = TrainConfig(3, 16, 100, 0.05, "sgd", 5)
        runs = [train(HybridModel.init(bp, np.random.default_rng(0)), pd.train, cfg) for _ in range(2)]
        assert runs[0][1] == runs[1][1]
        assert np.array_equal(runs[0][0].theta, runs[1][0].theta)

    def test_loss_mostly_non_increasing(self):
        pd = toy_data(n=400, margin=3.0)
        bp = CircuitBlueprint(2, (gate("RY", 0, theta=0.2), gate("RY", 1, theta=0.1)))
        ok = 0
        for seed in range(20):
            m = HybridModel.init(bp, np.random.default_rng(seed))
            _, trace = train(m, pd.train, TrainConfig(8, 32, 10 ** 6, 0.05, "sgd", seed))
            ok += all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))
        assert ok >= 18

    def test_toy_reaches_high_accuracy(self):
        pd = toy_data(n=400, margin=3.0)
        bp = CircuitBlueprint(2, (gate("RY", 0, theta=0.0), gate("RY", 1, theta=0.0)))
        m, _ = train(HybridModel.init(bp, np.random.default_rng(0)), pd.train, TrainConfig(30, 16, 10 ** 6, 0.05))
        assert accuracy(m, pd.train) > 0.9

    def test_adam_option(self):
        pd = toy_data()
        m = HybridModel.init(CircuitBlueprint(2, (gate("RY", 0, theta=0.0),)), np.random.default_rng(0))
        _, trace = train(m, pd.train, TrainConfig(3, 32, 10 ** 6, 0.01, "adam"))
        assert trace[-1] < trace[0]

    def test_bad_config(self):
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0).validate()
        with pytest.raises(ValueError):
            TrainConfig(optimizer="rmsprop").validate()


class TestObjective:
    def test_lambda_zero_is_accuracy(self):
        pd = toy_data()
        bp = CircuitBlueprint(2, (gate("RY", 0, theta=0.5), gate("CZ", 0, 1)))
        rec = evaluate_objective(bp, pd.search_view(), TrainConfig(2, 32, 200), seed=3)
        assert rec.perf == rec.val_accuracy
        assert 0 <= rec.val_accuracy <= 1
        again = evaluate_objective(bp, pd.search_view(), TrainConfig(2, 32, 200), seed=3)
        assert again.val_accuracy == rec.val_accuracy

    def test_penalty_prefers_lighter(self):
        light = complexity_summary(CircuitBlueprint(2, (gate("H", 0), gate("H", 1))))
        heavy = complexity_summary(CircuitBlueprint(2, (gate("H", 0), gate("CZ", 0, 1), gate("H", 1))))
        assert structural_penalty(light) < structural_penalty(heavy)
        assert 0 <= structural_penalty(heavy) <= 1

    def test_penalty_caps(self):
        s = complexity_summary(CircuitBlueprint(1, tuple(gate("H", 0) for _ in range(10))))
        assert structural_penalty(s, PenaltyCaps(5, 5)) == pytest.approx(2 / 3)
        assert structural_penalty(s, PenaltyCaps(100, 100)) == pytest.approx((0.1 + 0.1 + 0) / 3)

    def test_equal_accuracy_lighter_wins(self):
        # both circuits leave <Z> untouched, so identical seeds give identical accuracy
        pd = toy_data()
        light = CircuitBlueprint(2, (gate("RZ", 0, theta=0.3),))
        heavy = CircuitBlueprint(2, (gate("RZ", 0, theta=0.3), gate("CZ", 0, 1), gate("CZ", 0, 1)))
        a = evaluate_objective(light, pd.search_view(), TrainConfig(2, 32, 200), lam=0.1, seed=1)
        b = evaluate_objective(heavy, pd.search_view(), TrainConfig(2, 32, 200), lam=0.1, seed=1)
        assert a.val_accuracy == b.val_accuracy and a.perf > b.perf

    def test_random_guess_binomial(self):
        # no-signal task: accuracy within a 4-sigma binomial band around 0.5
        ds = synth_generate(3000, 2, 0, seed=0)
        pd = prepare(ds, SplitSpec(500, 1000, 0), 2)
        rec = evaluate_objective(CircuitBlueprint(2, (gate("H", 0),)), pd.search_view(), TrainConfig(2, 64, 300), seed=0)
        assert abs(rec.val_accuracy - 0.5) < 4 * math.sqrt(0.25 / 1000)

    def test_search_view_has_no_test(self):
        pd = toy_data()
        assert isinstance(pd.search_view(), SearchData)
        with pytest.raises(AttributeError):
            pd.search_view().test  # noqa: B018

    def test_fit_and_score_seeded(self):
        pd = toy_data()
        bp = CircuitBlueprint(2, (gate("RX", 1, theta=0.5),))
        _, a = fit_and_score(bp, pd.train, pd.val, TrainConfig(1, 32, 100), seed=9)
        _, b = fit_and_score(bp, pd.train, pd.val, TrainConfig(1, 32, 100), seed=9)
        assert a == b
        assert fit_and_score(bp, pd.train, None, TrainConfig(1, 32, 100))[1] is None

    def test_record_roundtrip(self):
        pd = toy_data()
        rec = evaluate_objective(CircuitBlueprint(2, (gate("H", 0),)), pd.search_view(), TrainConfig(1, 32, 50))
        assert EvalRecord.from_dict(rec.to_dict()) == rec


def test_head_forward_shapes():
    m = HybridModel.init(CircuitBlueprint(3, (gate("H", 0),)), np.random.default_rng(0))
    probs, cache = head_forward(m.head, np.zeros((4, 3)))
    assert probs.shape == (4, 2) and len(cache) == 5
    assert Dataset(np.zeros((2, 1)), np.array([0, 1])).features.shape == (2, 1)
