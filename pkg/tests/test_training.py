"""Optimiser, dataset split, training loop and evaluation tests."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from src.errors import ClassMissing, EmptyDataset
from src.formats import write_jtf, write_manifest
from src.models.gru import GruModel
from src.models.training import (
    AdamState,
    Split,
    WindowDataset,
    adam_step,
    clip_gradients,
    evaluate,
    load_dataset,
    split_dataset,
    train,
)
from src.pipeline.dataset import CorpusSpec, generate_corpus
from src.pipeline.dsp_chain import JTFSpectrogram
from src.schemas.schemas import ACTIVITIES, ArchitectureConfig, ChirpConfig, ManifestEntry, TrainConfig

TWO_CLASSES = ["Empty", "Walking"]


def _band_windows(labels: list[int], seed: int = 0) -> np.ndarray:
    """Class 0 lights Doppler bins 20-60, class 1 bins 180-220, over faint noise."""
    rng = np.random.default_rng(seed)
    windows = rng.uniform(0, 0.05, (len(labels), 50, 256))
    for row, label in enumerate(labels):
        band = slice(20, 60) if label == 0 else slice(180, 220)
        windows[row, :, band] += 1.0
    return windows


def _dataset(
    labels: list[int],
    subjects: list[int] | None = None,
    sessions: list[int] | None = None,
    class_names: list[str] | None = None,
) -> WindowDataset:
    n = len(labels)
    return WindowDataset(
        windows=_band_windows(labels),
        labels=np.asarray(labels, dtype=np.int64),
        subjects=np.asarray(subjects or [0] * n, dtype=np.int64),
        sessions=np.asarray(sessions or [0] * n, dtype=np.int64),
        class_names=class_names or TWO_CLASSES,
    )


def _two_class_model(seed: int = 0) -> GruModel:
    arch = ArchitectureConfig(num_layers=1, hidden_size=4, fc_hidden=[])
    return GruModel.create(arch, class_names=TWO_CLASSES, seed=seed)


class TestAdam:
    def test_first_step_moves_by_the_learning_rate(self) -> None:
        params = [np.array([1.0])]
        adam_step(params, [np.array([0.3])], AdamState.zeros(params), TrainConfig(learning_rate=0.01))
        assert 1.0 - params[0][0] == pytest.approx(0.01, abs=1e-6)

    def test_first_step_ignores_gradient_scale(self) -> None:
        params = [np.array([0.0, 0.0])]
        adam_step(params, [np.array([0.2, 2.0])], AdamState.zeros(params), TrainConfig())
        assert params[0][0] == pytest.approx(params[0][1], abs=1e-6)

    def test_zero_gradient_leaves_parameters(self) -> None:
        params = [np.array([[1.5, -2.0]]), np.array([0.25])]
        state = AdamState.zeros(params)
        for _ in range(3):
            adam_step(params, [np.zeros((1, 2)), np.zeros(1)], state, TrainConfig())
        np.testing.assert_array_equal(params[0], [[1.5, -2.0]])
        assert state.step == 3

    def test_converges_on_a_quadratic(self) -> None:
        params = [np.array([-4.0, 10.0])]
        target = np.array([3.0, -1.0])
        state = AdamState.zeros(params)
        config = TrainConfig(learning_rate=0.1)
        for _ in range(1000):
            adam_step(params, [2.0 * (params[0] - target)], state, config)
        np.testing.assert_allclose(params[0], target, atol=1e-2)


def test_clip_gradients_rescales_to_max_norm() -> None:
    grads = [np.array([3.0]), np.array([[4.0]])]
    norm = clip_gradients(grads, 1.0)
    assert norm == pytest.approx(5.0)
    assert grads[0][0] == pytest.approx(0.6)
    assert grads[1][0, 0] == pytest.approx(0.8)
    untouched = [np.array([0.3])]
    clip_gradients(untouched, 1.0)
    assert untouched[0][0] == 0.3


class TestSplits:
    @pytest.fixture
    def corpus(self) -> WindowDataset:
        subjects, sessions, labels = [], [], []
        for subject in range(3):
            for session in range(4):
                for label in (0, 1):
                    subjects.append(subject)
                    sessions.append(session)
                    labels.append(label)
        return _dataset(labels, subjects, sessions)

    def test_session_independent(self, corpus: WindowDataset) -> None:
        sets = split_dataset(corpus, Split.SESSION_INDEPENDENT)
        assert set(sets.test.sessions) == {3}
        assert set(sets.validation.sessions) == {2}
        assert set(sets.train.sessions) == {0, 1}
        assert set(sets.test.subjects) == set(sets.train.subjects) == {0, 1, 2}
        assert len(sets.train) + len(sets.validation) + len(sets.test) == len(corpus)

    def test_unseen_subject(self, corpus: WindowDataset) -> None:
        sets = split_dataset(corpus, "unseen-subject")
        assert set(sets.train.subjects) == set(sets.validation.subjects) == {0}
        assert set(sets.test.subjects) == {1, 2}
        assert set(sets.validation.sessions) == {3}

    def test_two_sessions_leave_no_validation(self) -> None:
        dataset = _dataset([0, 1, 0, 1], subjects=[0, 0, 0, 0], sessions=[0, 0, 1, 1])
        sets = split_dataset(dataset, Split.SESSION_INDEPENDENT)
        assert len(sets.validation) == 0
        assert len(sets.test) == 2

    def test_unknown_split_rejected(self, corpus: WindowDataset) -> None:
        with pytest.raises(ValueError):
            split_dataset(corpus, "leave-one-out")


class TestTrain:
    def test_separable_classes_are_learned(self) -> None:
        labels = [i % 2 for i in range(40)]
        result = train(_two_class_model(), _dataset(labels), TrainConfig(epochs=20, batch_size=8, learning_rate=0.02))
        assert result.history[-1].train_accuracy >= 0.99
        assert evaluate(result.model, _dataset(labels)).accuracy >= 0.99

    def test_tiny_set_loss_keeps_falling(self) -> None:
        config = TrainConfig(epochs=10, batch_size=2, learning_rate=0.001)
        result = train(_two_class_model(), _dataset([0, 1]), config)
        losses = [m.train_loss for m in result.history]
        assert len(losses) == 10
        assert all(later < earlier for earlier, later in zip(losses, losses[1:]))

    def test_fixed_seed_is_bit_identical(self) -> None:
        labels = [0, 1, 1, 0, 1, 0]
        config = TrainConfig(epochs=3, batch_size=4, seed=5)
        first = train(_two_class_model(), _dataset(labels), config).model
        second = train(_two_class_model(), _dataset(labels), config).model
        assert np.array_equal(first.to_vector(), second.to_vector())

    def test_validation_history_and_best_epoch(self) -> None:
        labels = [i % 2 for i in range(12)]
        config = TrainConfig(epochs=6, batch_size=4, patience=2)
        result = train(_two_class_model(), _dataset(labels), config, validation=_dataset(labels))
        assert 1 <= len(result.history) <= 6
        assert 1 <= result.best_epoch <= len(result.history)
        assert all(m.val_loss is not None for m in result.history)

    def test_trained_parameters_are_float32(self) -> None:
        result = train(_two_class_model(), _dataset([0, 1]), TrainConfig(epochs=1))
        for array in result.model.parameter_arrays():
            assert np.array_equal(array, array.astype(np.float32).astype(np.float64))

    def test_empty_dataset_rejected(self) -> None:
        with pytest.raises(EmptyDataset):
            train(_two_class_model(), _dataset([]), TrainConfig())

    def test_missing_class_rejected(self) -> None:
        with pytest.raises(ClassMissing):
            train(_two_class_model(), _dataset([0, 0, 0]), TrainConfig())


class TestEvaluate:
    def test_always_walking_model(self, tiny_model: GruModel) -> None:
        tiny_model.fc[-1].W[...] = 0.0
        tiny_model.fc[-1].b[5] = 10.0
        labels = [0, 1, 5, 5]
        dataset = _dataset(labels, class_names=[a.value for a in ACTIVITIES])
        report = evaluate(tiny_model, dataset, "session-independent")
        assert report.accuracy == pytest.approx(0.5)
        assert report.walking_false_positive_rate == pytest.approx(1.0)
        assert report.confusion_matrix[0][5] == 1
        assert report.confusion_matrix[5][5] == 2
        assert report.per_class["Walking"].recall == pytest.approx(1.0)
        assert report.per_class["Walking"].precision == pytest.approx(0.5)
        assert report.per_class["Empty"].support == 1

    def test_empty_dataset_rejected(self, tiny_model: GruModel) -> None:
        with pytest.raises(EmptyDataset):
            evaluate(tiny_model, _dataset([], class_names=[a.value for a in ACTIVITIES]))


def test_load_dataset_reads_manifest_windows(tmp_path: Path) -> None:
    columns = np.arange(70 * 256, dtype=np.float64).reshape(70, 256) % 97
    spectrogram = JTFSpectrogram(columns=columns, column_period_ms=24.5, v_max=2.54, start_time_ms=0, label="Walking")
    write_jtf(tmp_path / "walk.jtf", spectrogram)
    write_manifest(
        tmp_path / "manifest.jsonl",
        [
            ManifestEntry(path="walk.jtf", label="Walking", subject=2, session=1, column=0),
            ManifestEntry(path="walk.jtf", label="walking", subject=2, session=1, column=20),
            ManifestEntry(path="walk.jtf", label="Empty", subject=3, session=0, column=10),
        ],
    )
    dataset = load_dataset(tmp_path / "manifest.jsonl")
    assert dataset.class_names == ["Empty", "Walking"]
    assert dataset.labels.tolist() == [1, 1, 0]
    assert dataset.subjects.tolist() == [2, 2, 3]
    np.testing.assert_array_equal(dataset.windows[1], columns[20:70].astype(np.float32))


def test_load_dataset_rejects_empty_manifest(tmp_path: Path) -> None:
    write_manifest(tmp_path / "manifest.jsonl", [])
    with pytest.raises(EmptyDataset):
        load_dataset(tmp_path / "manifest.jsonl")


# ---------------------------------------------------------------------------
# Corpus scale (opt in with -m slow)
# ---------------------------------------------------------------------------


def _fit(dataset: WindowDataset, split: Split, seed: int = 0) -> tuple[GruModel, WindowDataset]:
    sets = split_dataset(dataset, split)
    arch = ArchitectureConfig(num_layers=2, hidden_size=32, fc_hidden=[64])
    model = GruModel.create(arch, class_names=dataset.class_names, seed=seed)
    config = TrainConfig(learning_rate=0.01, batch_size=256, epochs=20, seed=seed)
    validation = sets.validation if len(sets.validation) else None
    return train(model, sets.train, config, validation).model, sets.test


@pytest.mark.slow
def test_home_corpus_accuracy(tmp_path: Path, desk_config: ChirpConfig) -> None:
    corpus = CorpusSpec(subjects=2, sessions=5, minutes_per_class=8.0)
    dataset = load_dataset(generate_corpus(tmp_path / "home", desk_config, corpus))

    model, test = _fit(dataset, Split.SESSION_INDEPENDENT)
    report = evaluate(model, test, Split.SESSION_INDEPENDENT)
    assert report.accuracy >= 0.90
    assert report.walking_false_positive_rate is not None
    assert report.walking_false_positive_rate <= 0.05

    model, test = _fit(dataset, Split.UNSEEN_SUBJECT)
    assert evaluate(model, test, Split.UNSEEN_SUBJECT).accuracy >= 0.80


@pytest.mark.slow
def test_open_hall_corpus_accuracy(tmp_path: Path, desk_config: ChirpConfig) -> None:
    corpus = CorpusSpec(subjects=2, sessions=5, minutes_per_class=8.0, classes=4)
    dataset = load_dataset(generate_corpus(tmp_path / "hall", desk_config, corpus))
    assert len(dataset.class_names) == 4
    model, test = _fit(dataset, Split.SESSION_INDEPENDENT)
    assert evaluate(model, test, Split.SESSION_INDEPENDENT).accuracy >= 0.95
