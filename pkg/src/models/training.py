"""Training and evaluation of the GRU classifier.

Covers the Adam optimiser, mini-batch training with early stopping, the
two evaluation splits (session-independent and unseen-subject) and the
metrics written by the ``eval`` command.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from src._compat import StrEnum
from pathlib import Path

import numpy as np
from sklearn.metrics import confusion_matrix, precision_recall_fscore_support
from tqdm import tqdm

from src.errors import ClassMissing, EmptyDataset, ShapeMismatch, UnknownActivity
from src.formats import read_jtf, read_manifest
from src.models.gru import GruModel, cross_entropy, loss_and_gradients, predict_batch
from src.pipeline.dsp_chain import WINDOW_STEPS, GruInputWindow
from src.schemas.schemas import (
    ACTIVITIES,
    Activity,
    ClassMetrics,
    EpochMetrics,
    EvaluationReport,
    ManifestEntry,
    TrainConfig,
    parse_activity,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment estimates and the step counter."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros(cls, params: Sequence[np.ndarray]) -> AdamState:
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> tuple[Sequence[np.ndarray], AdamState]:
    """Apply one bias-corrected Adam update in place.

    Args:
        params: Parameter arrays, modified in place.
        grads: Gradients matching ``params`` one to one.
        state: Moment estimates; advanced by one step.
        config: Supplies learning rate, betas and epsilon.

    Returns:
        The updated parameters and state (the same objects that were passed in).
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatch("parameters, gradients and optimiser state differ in length")
    state.step += 1
    beta1, beta2 = config.beta1, config.beta2
    correction1 = 1.0 - beta1**state.step
    correction2 = 1.0 - beta2**state.step
    for param, grad, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        param -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
    return params, state


def clip_gradients(grads: Sequence[np.ndarray], max_norm: float) -> float:
    """Scale ``grads`` in place so their global L2 norm is at most ``max_norm``."""
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if norm > max_norm:
        scale = max_norm / norm
        for grad in grads:
            grad *= scale
    return norm


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------


@dataclass
class WindowDataset:
    """Labelled GRU input windows with the metadata the splits need.

    Attributes:
        windows: Array of shape ``(n, time_steps, bins)``.
        labels: Class index per window.
        subjects: Subject index per window.
        sessions: Session index per window.
        class_names: Class order the labels index into.
    """

    windows: np.ndarray
    labels: np.ndarray
    subjects: np.ndarray
    sessions: np.ndarray
    class_names: list[str]

    def __post_init__(self) -> None:
        n = self.windows.shape[0]
        if any(a.shape != (n,) for a in (self.labels, self.subjects, self.sessions)):
            raise ShapeMismatch("labels, subjects and sessions must have one entry per window")

    def __len__(self) -> int:
        return int(self.windows.shape[0])

    def subset(self, mask: np.ndarray) -> WindowDataset:
        return WindowDataset(
            windows=self.windows[mask],
            labels=self.labels[mask],
            subjects=self.subjects[mask],
            sessions=self.sessions[mask],
            class_names=self.class_names,
        )

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=len(self.class_names))

    @classmethod
    def from_windows(
        cls,
        windows: Sequence[GruInputWindow],
        class_names: Sequence[str] | None = None,
    ) -> WindowDataset:
        """Stack labelled windows; unlabelled ones are rejected."""
        names = list(class_names or _present_classes(w.label for w in windows))
        labels = []
        for window in windows:
            if window.label is None:
                raise UnknownActivity("window without a label cannot join a dataset")
            labels.append(_class_index(window.label, names))
        if windows:
            matrices = np.stack([w.matrix for w in windows]).astype(np.float32)
        else:
            matrices = np.empty((0, WINDOW_STEPS, 256), dtype=np.float32)
        return cls(
            windows=matrices,
            labels=np.asarray(labels, dtype=np.int64),
            subjects=np.asarray([w.subject_id or 0 for w in windows], dtype=np.int64),
            sessions=np.asarray([w.session_id or 0 for w in windows], dtype=np.int64),
            class_names=names,
        )


def _present_classes(labels: Iterable[str | None]) -> list[str]:
    present = {parse_activity(label) for label in labels if label is not None}
    return [a.value for a in ACTIVITIES if a in present]


def _class_index(label: str, class_names: Sequence[str]) -> int:
    name = parse_activity(label).value
    try:
        return list(class_names).index(name)
    except ValueError:
        raise UnknownActivity(f"label {label!r} is not one of {list(class_names)}") from None


def load_dataset(
    manifest_path: str | Path,
    class_names: Sequence[str] | None = None,
    time_steps: int = WINDOW_STEPS,
) -> WindowDataset:
    """Load every window a manifest lists.

    Each spectrogram file is read once even when many windows point into it.

    Args:
        manifest_path: JSON-lines manifest.
        class_names: Class order; defaults to the classes present, in
            canonical order.
        time_steps: Columns per window.

    Raises:
        EmptyDataset: The manifest lists no windows.
    """
    entries = read_manifest(manifest_path)
    if not entries:
        raise EmptyDataset(f"manifest {manifest_path} lists no windows")
    names = list(class_names or _present_classes(e.label for e in entries))
    cache: dict[str, np.ndarray] = {}
    windows = np.empty((len(entries), time_steps, 256), dtype=np.float32)
    for index, entry in enumerate(entries):
        windows[index] = _window_from_entry(entry, cache, time_steps)
    logger.info("Loaded %d windows from %d spectrograms (%s)", len(entries), len(cache), manifest_path)
    return WindowDataset(
        windows=windows,
        labels=np.asarray([_class_index(e.label, names) for e in entries], dtype=np.int64),
        subjects=np.asarray([e.subject for e in entries], dtype=np.int64),
        sessions=np.asarray([e.session for e in entries], dtype=np.int64),
        class_names=names,
    )


def _window_from_entry(entry: ManifestEntry, cache: dict[str, np.ndarray], time_steps: int) -> np.ndarray:
    if entry.path not in cache:
        cache[entry.path] = read_jtf(entry.path).columns
    columns = cache[entry.path][entry.column : entry.column + time_steps]
    if columns.shape[0] != time_steps:
        raise ShapeMismatch(f"{entry.path} has no {time_steps}-column window at column {entry.column}")
    return columns


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------


class Split(StrEnum):
    SESSION_INDEPENDENT = "session-independent"
    UNSEEN_SUBJECT = "unseen-subject"


@dataclass
class SplitSets:
    train: WindowDataset
    validation: WindowDataset
    test: WindowDataset


def split_dataset(dataset: WindowDataset, split: Split | str) -> SplitSets:
    """Partition a dataset by session or subject metadata.

    ``session-independent``: for every subject the last session is test data,
    the one before it validation data, the rest training data.  With fewer
    than three sessions the validation set is empty.

    ``unseen-subject``: the lowest subject index trains (its last session
    validates); every other subject is test data.
    """
    split = Split(split)
    if split is Split.SESSION_INDEPENDENT:
        test = np.zeros(len(dataset), dtype=bool)
        validation = np.zeros(len(dataset), dtype=bool)
        for subject in np.unique(dataset.subjects):
            mine = dataset.subjects == subject
            sessions = np.unique(dataset.sessions[mine])
            test |= mine & (dataset.sessions == sessions[-1])
            if sessions.size >= 3:
                validation |= mine & (dataset.sessions == sessions[-2])
        train = ~(test | validation)
    else:
        first = int(dataset.subjects.min()) if len(dataset) else 0
        mine = dataset.subjects == first
        sessions = np.unique(dataset.sessions[mine])
        validation = mine & (dataset.sessions == sessions[-1]) if sessions.size >= 2 else np.zeros_like(mine)
        train = mine & ~validation
        test = ~mine
    return SplitSets(dataset.subset(train), dataset.subset(validation), dataset.subset(test))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    model: GruModel
    history: list[EpochMetrics] = field(default_factory=list)
    best_epoch: int = 0


def dataset_loss(model: GruModel, dataset: WindowDataset, batch_size: int = 256) -> tuple[float, float]:
    """Mean cross-entropy and accuracy of ``model`` on ``dataset``."""
    probs = predict_batch(model, dataset.windows, batch_size)
    loss = cross_entropy(probs, dataset.labels)
    accuracy = float(np.mean(np.argmax(probs, axis=1) == dataset.labels))
    return loss, accuracy


def train(
    model: GruModel,
    dataset: WindowDataset,
    config: TrainConfig,
    validation: WindowDataset | None = None,
    progress: bool = False,
) -> TrainResult:
    """Fit ``model`` in place with shuffled mini-batch Adam.

    Training stops after ``config.epochs`` epochs or once the validation
    loss has not improved for ``config.patience`` epochs, in which case the
    best validation parameters are restored.  Parameters are rounded to
    float32 at the end so the saved model reproduces in-memory outputs.

    Args:
        model: Initialised model whose output width equals the class count.
        dataset: Training windows.
        config: Optimiser and schedule settings.
        validation: Optional held-out windows for early stopping.
        progress: Show a progress bar on a terminal.

    Returns:
        The trained model with its per-epoch history.

    Raises:
        EmptyDataset: ``dataset`` has no windows.
        ClassMissing: Some class has no training window.
    """
    if len(dataset) == 0:
        raise EmptyDataset("training set is empty")
    if model.num_classes != len(dataset.class_names):
        raise ShapeMismatch(
            f"model emits {model.num_classes} classes, dataset has {len(dataset.class_names)}"
        )
    missing = [name for name, count in zip(dataset.class_names, dataset.class_counts()) if count == 0]
    if missing:
        raise ClassMissing(f"no training windows for {missing}")

    rng = np.random.default_rng(config.seed)
    params = model.parameter_arrays()
    state = AdamState.zeros(params)
    use_validation = validation is not None and len(validation) > 0
    best_loss = np.inf
    best_vector: np.ndarray | None = None
    result = TrainResult(model=model)
    stale = 0

    logger.info(
        "Training on %d windows (%d validation), %d parameters, %d epochs max",
        len(dataset),
        len(validation) if validation is not None else 0,
        model.num_parameters,
        config.epochs,
    )
    epochs = tqdm(range(1, config.epochs + 1), desc="epochs", disable=None if progress else True)
    for epoch in epochs:
        order = rng.permutation(len(dataset))
        total_loss = 0.0
        correct = 0
        for start in range(0, len(dataset), config.batch_size):
            batch = order[start : start + config.batch_size]
            loss, grads, probs = loss_and_gradients(model, dataset.windows[batch], dataset.labels[batch])
            if config.clip_norm is not None:
                clip_gradients(grads, config.clip_norm)
            adam_step(params, grads, state, config)
            total_loss += loss * batch.size
            correct += int(np.sum(np.argmax(probs, axis=1) == dataset.labels[batch]))

        metrics = EpochMetrics(
            epoch=epoch,
            train_loss=total_loss / len(dataset),
            train_accuracy=correct / len(dataset),
        )
        if use_validation:
            assert validation is not None
            metrics.val_loss, metrics.val_accuracy = dataset_loss(model, validation)
            if metrics.val_loss < best_loss:
                best_loss, stale = metrics.val_loss, 0
                best_vector = np.concatenate([p.ravel() for p in params])
                result.best_epoch = epoch
            else:
                stale += 1
        else:
            result.best_epoch = epoch
        result.history.append(metrics)
        epochs.set_postfix(loss=f"{metrics.train_loss:.4f}", acc=f"{metrics.train_accuracy:.3f}")
        logger.debug("epoch %d: %s", epoch, metrics.model_dump())
        if use_validation and stale >= config.patience:
            logger.info("Validation loss flat for %d epochs; stopping at epoch %d", stale, epoch)
            break

    if best_vector is not None:
        offset = 0
        for param in params:
            param[...] = best_vector[offset : offset + param.size].reshape(param.shape)
            offset += param.size
    model.snap_to_float32()
    last = result.history[-1]
    logger.info(
        "Training finished after %d epochs: loss %.4f, accuracy %.3f (best epoch %d)",
        last.epoch,
        last.train_loss,
        last.train_accuracy,
        result.best_epoch,
    )
    return result


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def evaluate(model: GruModel, dataset: WindowDataset, split: str = "all") -> EvaluationReport:
    """Accuracy, confusion matrix and per-class metrics on ``dataset``.

    The walking false-positive rate is the share of non-walking windows
    predicted as walking; it is omitted when the model has no walking class.

    Raises:
        EmptyDataset: ``dataset`` has no windows.
    """
    if len(dataset) == 0:
        raise EmptyDataset(f"no windows to evaluate for split {split}")
    if list(model.class_names) != list(dataset.class_names):
        raise ShapeMismatch(f"model classes {model.class_names} differ from dataset classes {dataset.class_names}")
    classes = list(range(model.num_classes))
    predicted = np.argmax(predict_batch(model, dataset.windows), axis=1)
    matrix = confusion_matrix(dataset.labels, predicted, labels=classes)
    precision, recall, f1, support = precision_recall_fscore_support(
        dataset.labels, predicted, labels=classes, zero_division=0
    )
    per_class = {
        name: ClassMetrics(
            precision=float(precision[i]),
            recall=float(recall[i]),
            f1=float(f1[i]),
            support=int(support[i]),
        )
        for i, name in enumerate(model.class_names)
    }

    walking_fpr = None
    if Activity.WALKING.value in model.class_names:
        walking = model.class_names.index(Activity.WALKING.value)
        others = dataset.labels != walking
        if np.any(others):
            walking_fpr = float(np.mean(predicted[others] == walking))

    report = EvaluationReport(
        split=split,
        class_names=model.class_names,
        num_windows=len(dataset),
        accuracy=float(np.mean(predicted == dataset.labels)),
        confusion_matrix=matrix.tolist(),
        per_class=per_class,
        walking_false_positive_rate=walking_fpr,
    )
    logger.info("Evaluation on %s: accuracy %.3f over %d windows", split, report.accuracy, len(dataset))
    return report
