from __future__ import annotations

import math

import numpy as np
import pytest

import icppm.vqc as vqc
from icppm.errors import ConfigError, TrainingError
from icppm.qsim import EXACT, FeatureMapKind, ShotConfig, build_feature_map, run
from icppm.vqc import (
    OptimizerConfig,
    VqcModel,
    forward,
    loss,
    parameter_shift_gradient,
    predict,
    train,
)

ANGLE = FeatureMapKind("angle")


def separable_fixture():
    """One qubit; class "a" sits near |0>, class "b" near |1>."""
    xs = np.array([[0.1], [0.2], [0.3], [2.9], [3.0], [2.7]])
    labels = ["a", "a", "a", "b", "b", "b"]
    return xs, labels


def finite_difference(model: VqcModel, xs, labels, step: float = 1e-4) -> np.ndarray:
    grad = np.zeros_like(model.theta)
    for l in range(model.n_layers):
        for q in range(model.n_qubits):
            saved = model.theta[l, q]
            model.theta[l, q] = saved + step
            up = loss(model, xs, labels)
            model.theta[l, q] = saved - step
            down = loss(model, xs, labels)
            model.theta[l, q] = saved
            grad[l, q] = (up - down) / (2.0 * step)
    return grad


class TestOptimizerConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            OptimizerConfig(learning_rate=0.0)
        with pytest.raises(ConfigError):
            OptimizerConfig(epochs=-1)
        with pytest.raises(ConfigError):
            OptimizerConfig(method="adam")
        with pytest.raises(ConfigError):
            OptimizerConfig(batch_size=0)

    def test_zero_epochs_allowed(self):
        assert OptimizerConfig(epochs=0).epochs == 0


class TestVqcModel:
    def test_theta_must_be_two_dimensional(self):
        with pytest.raises(ValueError):
            VqcModel(ANGLE, np.zeros(3), ("a", "b"))

    def test_needs_two_classes(self):
        with pytest.raises(ValueError):
            VqcModel(ANGLE, np.zeros((1, 2)), ("a",))

    def test_readout_must_fit_circuit(self):
        with pytest.raises(ConfigError):
            VqcModel(ANGLE, np.zeros((1, 2)), ("a", "b", "c", "d", "e"))

    def test_readout_qubit_counts(self):
        theta = np.zeros((1, 4))
        assert VqcModel(ANGLE, theta, ("a", "b")).readout_qubits == 1
        assert VqcModel(ANGLE, theta, ("a", "b", "c")).readout_qubits == 2
        assert VqcModel(ANGLE, theta, tuple("abcd")).readout_qubits == 2
        assert VqcModel(ANGLE, theta, tuple("abcde")).readout_qubits == 3


class TestForward:
    def test_probabilities_normalized(self):
        rng = np.random.default_rng(0)
        model = VqcModel(ANGLE, rng.uniform(-1, 1, (2, 3)), ("a", "b", "c"))
        p = forward(model, rng.uniform(0, math.pi, 3))
        assert np.all(p >= 0)
        assert p.sum() == pytest.approx(1.0, abs=1e-9)

    def test_feature_dimension_checked(self):
        model = VqcModel(ANGLE, np.zeros((1, 2)), ("a", "b"))
        with pytest.raises(ValueError):
            forward(model, [0.1, 0.2, 0.3])

    def test_first_qubit_drives_binary_readout(self):
        model = VqcModel(ANGLE, np.zeros((1, 2)), ("a", "b"), entangle=False)
        assert forward(model, [0.0, 0.0])[0] == pytest.approx(1.0)
        assert forward(model, [math.pi, 0.0])[1] == pytest.approx(1.0)

    def test_bitstring_groups_deal_round_robin(self):
        model = VqcModel(ANGLE, np.zeros((1, 2)), ("a", "b", "c"), entangle=False)
        assert forward(model, [0.0, 0.0])[0] == pytest.approx(1.0)
        assert forward(model, [0.0, math.pi])[1] == pytest.approx(1.0)
        assert forward(model, [math.pi, 0.0])[2] == pytest.approx(1.0)
        assert forward(model, [math.pi, math.pi])[0] == pytest.approx(1.0)

    def test_identity_weights_match_bare_feature_map(self):
        x = np.array([0.4, 1.1])
        model = VqcModel(ANGLE, np.zeros((1, 2)), ("a", "b"), entangle=False)
        state = run(build_feature_map(ANGLE, x))
        probs = state.probabilities().reshape(2, 2).sum(axis=1)
        assert forward(model, x) == pytest.approx(probs)

    def test_shot_estimate_near_exact(self):
        rng = np.random.default_rng(1)
        model = VqcModel(ANGLE, rng.uniform(-1, 1, (1, 2)), ("a", "b"))
        x = rng.uniform(0, math.pi, 2)
        exact = forward(model, x)
        shots = 100_000
        est = forward(model, x, ShotConfig(shots, seed=4))
        sigma = math.sqrt(exact[0] * (1 - exact[0]) / shots)
        assert abs(est[0] - exact[0]) < 5 * max(sigma, 1e-4)

    def test_shot_estimate_reproducible(self):
        model = VqcModel(ANGLE, np.full((1, 2), 0.2), ("a", "b"))
        cfg = ShotConfig(500, seed=9)
        a = forward(model, [0.5, 1.0], cfg)
        b = forward(model, [0.5, 1.0], cfg)
        assert np.array_equal(a, b)


class TestPredict:
    def test_follows_argmax(self):
        model = VqcModel(ANGLE, np.zeros((1, 2)), ("a", "b"), entangle=False)
        assert predict(model, [0.0, 0.0]) == "a"
        assert predict(model, [math.pi, 0.0]) == "b"

    def test_tie_goes_to_smaller_class(self, monkeypatch):
        model = VqcModel(ANGLE, np.zeros((1, 2)), ("a", "b", "c"))
        monkeypatch.setattr(
            vqc, "forward", lambda m, x, shots=EXACT: np.array([0.4, 0.4, 0.2])
        )
        assert vqc.predict(model, [0.0, 0.0]) == "a"


class TestGradient:
    @pytest.mark.parametrize("n,layers", [(1, 1), (2, 1), (3, 2), (4, 1)])
    def test_parameter_shift_matches_finite_differences(self, n, layers):
        rng = np.random.default_rng(10 * n + layers)
        xs = rng.uniform(0, math.pi, (3, n))
        labels = ["a", "b", "a"]
        model = VqcModel(ANGLE, rng.uniform(-1.0, 1.0, (layers, n)), ("a", "b"))
        analytic = parameter_shift_gradient(model, xs, labels)
        numeric = finite_difference(model, xs, labels)
        assert np.max(np.abs(analytic - numeric)) < 1e-5

    def test_gradient_zero_at_optimum_direction(self):
        xs = np.array([[0.0], [math.pi]])
        labels = ["a", "b"]
        model = VqcModel(ANGLE, np.zeros((1, 1)), ("a", "b"))
        grad = parameter_shift_gradient(model, xs, labels)
        assert abs(grad[0, 0]) < 1e-9

    def test_unknown_label_rejected(self):
        model = VqcModel(ANGLE, np.zeros((1, 1)), ("a", "b"))
        with pytest.raises(ValueError):
            loss(model, np.array([[0.1]]), ["zzz"])


class TestTrain:
    def test_classes_sorted_and_required(self):
        xs, labels = separable_fixture()
        model = train(xs, ["z" if l == "a" else "y" for l in labels], ANGLE, 1, OptimizerConfig(epochs=1))
        assert model.classes == ("y", "z")
        with pytest.raises(ConfigError):
            train(xs, ["same"] * len(xs), ANGLE, 1)
        with pytest.raises(ConfigError):
            train(xs, labels, ANGLE, 0)

    def test_zero_epochs_returns_seeded_init(self):
        xs, labels = separable_fixture()
        opt = OptimizerConfig(epochs=0, seed=42)
        model = train(xs, labels, ANGLE, 2, opt)
        want = np.random.default_rng(42).uniform(-0.1, 0.1, (2, 1))
        assert np.array_equal(model.theta, want)
        assert len(model.loss_history) == 1

    def test_loss_non_increasing_on_separable_fixture(self):
        xs, labels = separable_fixture()
        opt = OptimizerConfig(learning_rate=0.2, epochs=12, seed=0)
        model = train(xs, labels, ANGLE, 1, opt)
        history = np.array(model.loss_history)
        assert len(history) == 13
        assert np.all(np.diff(history) <= 1e-12)
        assert [predict(model, x) for x in xs] == labels

    def test_training_deterministic(self):
        xs, labels = separable_fixture()
        opt = OptimizerConfig(epochs=3, seed=5)
        a = train(xs, labels, ANGLE, 1, opt)
        b = train(xs, labels, ANGLE, 1, opt)
        assert np.array_equal(a.theta, b.theta)
        assert a.loss_history == b.loss_history

    def test_minibatches_cover_all_samples(self):
        xs, labels = separable_fixture()
        opt = OptimizerConfig(epochs=2, batch_size=2, seed=1)
        model = train(xs, labels, ANGLE, 1, opt)
        assert len(model.loss_history) == 3

    def test_spsa_runs_and_is_seeded(self):
        xs, labels = separable_fixture()
        opt = OptimizerConfig(epochs=3, method="spsa", seed=7)
        a = train(xs, labels, ANGLE, 1, opt)
        b = train(xs, labels, ANGLE, 1, opt)
        assert np.array_equal(a.theta, b.theta)
        assert len(a.loss_history) == 4

    def test_divergence_raises_with_epoch(self, monkeypatch):
        xs, labels = separable_fixture()
        monkeypatch.setattr(vqc, "_batch_loss", lambda *a, **k: math.nan)
        with pytest.raises(TrainingError) as err:
            train(xs, labels, ANGLE, 1, OptimizerConfig(epochs=2))
        assert err.value.epoch == 0

    def test_multiclass_training_smoke(self):
        xs = np.array([[0.1, 0.1], [0.2, 0.1], [2.9, 0.2], [3.0, 0.1], [0.2, 3.0], [0.1, 2.9]])
        labels = ["a", "a", "b", "b", "c", "c"]
        model = train(xs, labels, ANGLE, 1, OptimizerConfig(epochs=2, seed=3))
        assert model.classes == ("a", "b", "c")
        assert model.readout_qubits == 2


class TestCheckpoint:
    def test_json_round_trip(self):
        xs, labels = separable_fixture()
        model = train(xs, labels, ANGLE, 2, OptimizerConfig(epochs=2, seed=8))
        clone = VqcModel.from_json(model.to_json())
        assert np.array_equal(clone.theta, model.theta)
        assert clone.classes == model.classes
        assert clone.feature_map == model.feature_map
        assert clone.entangle == model.entangle
        assert clone.loss_history == model.loss_history
        assert [predict(clone, x) for x in xs] == [predict(model, x) for x in xs]

    def test_unsupported_version_rejected(self):
        with pytest.raises(ValueError):
            VqcModel.from_dict({"version": 2})
