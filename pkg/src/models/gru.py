"""Stacked GRU classifier written directly in numpy.

One cell step::

    o_r = sigmoid(W_rh h + W_rx x + b_r)
    h~  = tanh(W_hh (o_r * h) + W_hx x + b_h)
    o_z = sigmoid(W_zh h + W_zx x + b_z)
    h'  = o_z * h + (1 - o_z) * h~

Layers are stacked (layer ``l`` reads layer ``l - 1``'s output at the same
step); the top layer's last hidden state feeds a rectified-linear fully
connected head and a softmax.  Everything runs on batches of shape
``(batch, time_steps, input_dim)`` in float64 and backpropagates exactly
through time.

Parameters live in float64 but always hold float32-representable values,
so a saved model reloads bit-identically.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from src.errors import BadLabel, ShapeMismatch
from src.schemas.schemas import ACTIVITIES, ArchitectureConfig, ModelHeader

logger = logging.getLogger(__name__)

GATE_PARAMS = ("W_rh", "W_rx", "b_r", "W_zh", "W_zx", "b_z", "W_hh", "W_hx", "b_h")
"""Per-layer parameter order, shared by the GRUM blob and gradient lists."""

PROB_FLOOR = 1e-12
NORM_EPS = 1e-12


def _f32(array: np.ndarray) -> np.ndarray:
    return np.asarray(array, dtype=np.float32).astype(np.float64)


@dataclass
class GruLayerParams:
    """Weights of one GRU layer with hidden size H and input size D."""

    W_rh: np.ndarray
    W_rx: np.ndarray
    b_r: np.ndarray
    W_zh: np.ndarray
    W_zx: np.ndarray
    b_z: np.ndarray
    W_hh: np.ndarray
    W_hx: np.ndarray
    b_h: np.ndarray

    def __post_init__(self) -> None:
        hidden, inputs = self.hidden_size, self.input_size
        for name in GATE_PARAMS:
            value = getattr(self, name)
            if name.startswith("b_"):
                expected: tuple[int, ...] = (hidden,)
            elif name.endswith("h"):
                expected = (hidden, hidden)
            else:
                expected = (hidden, inputs)
            if value.shape != expected:
                raise ShapeMismatch(f"{name} has shape {value.shape}, expected {expected}")
            if not np.all(np.isfinite(value)):
                raise ShapeMismatch(f"{name} contains non-finite values")

    @property
    def hidden_size(self) -> int:
        return int(self.W_rx.shape[0])

    @property
    def input_size(self) -> int:
        return int(self.W_rx.shape[1])

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in GATE_PARAMS]

    @classmethod
    def initialise(cls, rng: np.random.Generator, input_size: int, hidden_size: int) -> GruLayerParams:
        """Uniform(+-1/sqrt(fan_in)) weights, zero biases."""
        def weight(fan_in: int, cols: int) -> np.ndarray:
            bound = 1.0 / np.sqrt(fan_in)
            return _f32(rng.uniform(-bound, bound, (hidden_size, cols)))

        zeros = np.zeros(hidden_size)
        return cls(
            W_rh=weight(hidden_size, hidden_size),
            W_rx=weight(input_size, input_size),
            b_r=zeros.copy(),
            W_zh=weight(hidden_size, hidden_size),
            W_zx=weight(input_size, input_size),
            b_z=zeros.copy(),
            W_hh=weight(hidden_size, hidden_size),
            W_hx=weight(input_size, input_size),
            b_h=zeros.copy(),
        )

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> GruLayerParams:
        square = (hidden_size, hidden_size)
        rect = (hidden_size, input_size)
        return cls(
            W_rh=np.zeros(square), W_rx=np.zeros(rect), b_r=np.zeros(hidden_size),
            W_zh=np.zeros(square), W_zx=np.zeros(rect), b_z=np.zeros(hidden_size),
            W_hh=np.zeros(square), W_hx=np.zeros(rect), b_h=np.zeros(hidden_size),
        )  # fmt: skip


@dataclass
class DenseParams:
    """Fully connected layer ``y = W a + b``."""

    W: np.ndarray
    b: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return [self.W, self.b]


@dataclass(frozen=True, slots=True)
class CellCache:
    """Activations of one cell step kept for the backward pass."""

    x: np.ndarray
    h_prev: np.ndarray
    o_r: np.ndarray
    o_z: np.ndarray
    h_tilde: np.ndarray


def gru_cell_forward(
    x: np.ndarray,
    h_prev: np.ndarray,
    params: GruLayerParams,
) -> tuple[np.ndarray, CellCache]:
    """Advance one GRU step.

    Args:
        x: Input of shape ``(D,)`` or ``(batch, D)``.
        h_prev: Previous hidden state, ``(H,)`` or ``(batch, H)``.
        params: Layer weights.

    Returns:
        The new hidden state (same leading shape as ``x``) and the cache.

    Raises:
        ShapeMismatch: Input or state size disagrees with ``params``.
    """
    if x.shape[-1] != params.input_size or h_prev.shape[-1] != params.hidden_size:
        raise ShapeMismatch(
            f"cell expects x[..., {params.input_size}] and h[..., {params.hidden_size}], "
            f"got {x.shape} and {h_prev.shape}"
        )
    o_r = expit(h_prev @ params.W_rh.T + x @ params.W_rx.T + params.b_r)
    h_tilde = np.tanh((o_r * h_prev) @ params.W_hh.T + x @ params.W_hx.T + params.b_h)
    o_z = expit(h_prev @ params.W_zh.T + x @ params.W_zx.T + params.b_z)
    h_new = o_z * h_prev + (1.0 - o_z) * h_tilde
    return h_new, CellCache(x=x, h_prev=h_prev, o_r=o_r, o_z=o_z, h_tilde=h_tilde)


def gru_cell_backward(
    dh_new: np.ndarray,
    cache: CellCache,
    params: GruLayerParams,
    grads: GruLayerParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Backpropagate one batched cell step, accumulating into ``grads``.

    Returns:
        Gradients with respect to the step input and the previous state.
    """
    x, h_prev, o_r, o_z, h_tilde = cache.x, cache.h_prev, cache.o_r, cache.o_z, cache.h_tilde
    dh_prev = dh_new * o_z
    da_z = dh_new * (h_prev - h_tilde) * o_z * (1.0 - o_z)
    da_h = dh_new * (1.0 - o_z) * (1.0 - h_tilde**2)

    gated = o_r * h_prev
    grads.W_hh += da_h.T @ gated
    grads.W_hx += da_h.T @ x
    grads.b_h += da_h.sum(axis=0)
    d_gated = da_h @ params.W_hh
    dh_prev += d_gated * o_r
    da_r = d_gated * h_prev * o_r * (1.0 - o_r)

    grads.W_zh += da_z.T @ h_prev
    grads.W_zx += da_z.T @ x
    grads.b_z += da_z.sum(axis=0)
    grads.W_rh += da_r.T @ h_prev
    grads.W_rx += da_r.T @ x
    grads.b_r += da_r.sum(axis=0)

    dh_prev += da_z @ params.W_zh + da_r @ params.W_rh
    dx = da_z @ params.W_zx + da_r @ params.W_rx + da_h @ params.W_hx
    return dx, dh_prev


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, label: int | Sequence[int] | np.ndarray) -> float:
    """Negative log-likelihood with the probability clamped at 1e-12.

    A single distribution gives its loss; a batch gives the mean loss.

    Raises:
        BadLabel: A label is outside ``[0, num_classes)``.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.atleast_1d(np.asarray(label))
    batch = np.atleast_2d(probs)
    if labels.shape[0] != batch.shape[0]:
        raise ShapeMismatch(f"{labels.shape[0]} labels for {batch.shape[0]} distributions")
    if np.any(labels < 0) or np.any(labels >= batch.shape[1]):
        raise BadLabel(f"labels {labels.tolist()} outside [0, {batch.shape[1]})")
    picked = batch[np.arange(batch.shape[0]), labels]
    return float(np.mean(-np.log(np.maximum(picked, PROB_FLOOR))))


@dataclass
class ForwardCache:
    """Everything ``backward`` needs from one batched forward pass."""

    inputs: np.ndarray
    cells: list[list[CellCache]] = field(default_factory=list)
    fc_inputs: list[np.ndarray] = field(default_factory=list)
    fc_pre: list[np.ndarray] = field(default_factory=list)
    probs: np.ndarray | None = None


class GruModel:
    """Stacked GRU layers, a rectified-linear head and softmax over ``class_names``.

    Args:
        layers: GRU layers, bottom first.
        fc: Dense layers; all but the last use ReLU.
        class_names: Output classes in index order.
        time_steps: Steps per input window.
        normalization: ``"max"`` divides each window by its maximum.
        seed: Initialisation seed, recorded in the model header.
    """

    def __init__(
        self,
        layers: list[GruLayerParams],
        fc: list[DenseParams],
        class_names: Sequence[str],
        time_steps: int,
        normalization: str = "max",
        seed: int = 0,
    ) -> None:
        if not layers or not fc:
            raise ShapeMismatch("a model needs at least one GRU and one dense layer")
        for lower, upper in zip(layers, layers[1:]):
            if upper.input_size != lower.hidden_size:
                raise ShapeMismatch("stacked GRU layer sizes do not chain")
        width = layers[-1].hidden_size
        for dense in fc:
            if dense.W.shape[1] != width or dense.b.shape != (dense.W.shape[0],):
                raise ShapeMismatch(f"dense layer {dense.W.shape} does not follow width {width}")
            width = dense.W.shape[0]
        if width != len(class_names):
            raise ShapeMismatch(f"head emits {width} scores for {len(class_names)} classes")
        self.layers = layers
        self.fc = fc
        self.class_names = list(class_names)
        self.time_steps = time_steps
        self.normalization = normalization
        self.seed = seed

    @classmethod
    def create(
        cls,
        arch: ArchitectureConfig | None = None,
        class_names: Sequence[str] | None = None,
        seed: int = 0,
    ) -> GruModel:
        """Freshly initialised model."""
        arch = arch or ArchitectureConfig()
        class_names = list(class_names or [a.value for a in ACTIVITIES])
        rng = np.random.default_rng(seed)
        layers = []
        inputs = arch.input_dim
        for _ in range(arch.num_layers):
            layers.append(GruLayerParams.initialise(rng, inputs, arch.hidden_size))
            inputs = arch.hidden_size
        fc = []
        for width in [*arch.fc_hidden, len(class_names)]:
            bound = 1.0 / np.sqrt(inputs)
            fc.append(DenseParams(W=_f32(rng.uniform(-bound, bound, (width, inputs))), b=np.zeros(width)))
            inputs = width
        return cls(layers, fc, class_names, arch.time_steps, arch.normalization, seed)

    # -- shape and serialisation ------------------------------------------

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_size

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def parameter_arrays(self) -> list[np.ndarray]:
        """Every parameter array, in GRUM blob order."""
        arrays: list[np.ndarray] = []
        for layer in self.layers:
            arrays.extend(layer.arrays())
        for dense in self.fc:
            arrays.extend(dense.arrays())
        return arrays

    @property
    def num_parameters(self) -> int:
        return sum(a.size for a in self.parameter_arrays())

    def header(self) -> ModelHeader:
        return ModelHeader(
            layer_dims=[[layer.input_size, layer.hidden_size] for layer in self.layers],
            fc_dims=[[int(d.W.shape[1]), int(d.W.shape[0])] for d in self.fc],
            class_names=self.class_names,
            input_dim=self.input_dim,
            time_steps=self.time_steps,
            normalization=self.normalization,  # type: ignore[arg-type]
            seed=self.seed,
        )

    @staticmethod
    def parameter_count(header: ModelHeader) -> int:
        count = 0
        for inputs, hidden in header.layer_dims:
            count += 3 * (hidden * hidden + hidden * inputs + hidden)
        for inputs, outputs in header.fc_dims:
            count += outputs * inputs + outputs
        return count

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.parameter_arrays()]).astype(np.float32)

    @classmethod
    def from_vector(cls, header: ModelHeader, values: np.ndarray) -> GruModel:
        if values.size != cls.parameter_count(header):
            raise ShapeMismatch(f"{values.size} parameters for a model needing {cls.parameter_count(header)}")
        values = np.asarray(values, dtype=np.float64)
        offset = 0

        def take(*shape: int) -> np.ndarray:
            nonlocal offset
            size = int(np.prod(shape))
            out = values[offset : offset + size].reshape(shape).copy()
            offset += size
            return out

        layers = []
        for inputs, hidden in header.layer_dims:
            arrays = {}
            for name in GATE_PARAMS:
                if name.startswith("b_"):
                    arrays[name] = take(hidden)
                elif name.endswith("h"):
                    arrays[name] = take(hidden, hidden)
                else:
                    arrays[name] = take(hidden, inputs)
            layers.append(GruLayerParams(**arrays))
        fc = [DenseParams(W=take(outputs, inputs), b=take(outputs)) for inputs, outputs in header.fc_dims]
        return cls(layers, fc, header.class_names, header.time_steps, header.normalization, header.seed)

    def copy(self) -> GruModel:
        return GruModel.from_vector(self.header(), np.concatenate([a.ravel() for a in self.parameter_arrays()]))

    def snap_to_float32(self) -> None:
        """Round every parameter to the nearest float32 value, in place."""
        for array in self.parameter_arrays():
            array[...] = _f32(array)

    def zero_like(self) -> list[np.ndarray]:
        return [np.zeros_like(a) for a in self.parameter_arrays()]

    # -- inference --------------------------------------------------------

    def prepare(self, windows: np.ndarray) -> np.ndarray:
        """Validate shape, promote to a batch and apply per-window normalisation."""
        batch = np.asarray(windows, dtype=np.float64)
        if batch.ndim == 2:
            batch = batch[None]
        if batch.ndim != 3 or batch.shape[1:] != (self.time_steps, self.input_dim):
            raise ShapeMismatch(
                f"windows of shape {np.shape(windows)} do not match ({self.time_steps}, {self.input_dim})"
            )
        if self.normalization == "max":
            peak = batch.max(axis=(1, 2), keepdims=True)
            batch = batch / (np.maximum(peak, 0.0) + NORM_EPS)
        return batch


def forward(model: GruModel, windows: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Class probabilities for one window ``(T, D)`` or a batch ``(B, T, D)``.

    Hidden states start at zero; only the last step of the top layer feeds
    the head.  A single window returns a 1-D probability vector.

    Raises:
        ShapeMismatch: The window does not match the model's input shape.
    """
    single = np.ndim(windows) == 2
    inputs = model.prepare(windows)
    cache = ForwardCache(inputs=inputs)
    sequence = inputs
    batch = inputs.shape[0]
    for layer in model.layers:
        h = np.zeros((batch, layer.hidden_size))
        steps: list[CellCache] = []
        outputs = np.empty((batch, model.time_steps, layer.hidden_size))
        for t in range(model.time_steps):
            h, step_cache = gru_cell_forward(sequence[:, t], h, layer)
            steps.append(step_cache)
            outputs[:, t] = h
        cache.cells.append(steps)
        sequence = outputs

    activation = sequence[:, -1]
    for index, dense in enumerate(model.fc):
        cache.fc_inputs.append(activation)
        pre = activation @ dense.W.T + dense.b
        cache.fc_pre.append(pre)
        activation = pre if index == len(model.fc) - 1 else np.maximum(pre, 0.0)
    probs = softmax(activation)
    cache.probs = probs
    return (probs[0] if single else probs), cache


def backward(
    model: GruModel,
    cache: ForwardCache,
    labels: int | Sequence[int] | np.ndarray,
) -> list[np.ndarray]:
    """Exact gradients of the mean clamped cross-entropy.

    Args:
        model: Model the cache was computed with.
        cache: Output of ``forward`` on the same batch.
        labels: One class index per window.

    Returns:
        One gradient array per parameter, in ``parameter_arrays`` order.

    Raises:
        BadLabel: A label is outside ``[0, num_classes)``.
    """
    probs = cache.probs
    assert probs is not None
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    batch = probs.shape[0]
    if labels.shape != (batch,):
        raise ShapeMismatch(f"{labels.size} labels for a batch of {batch}")
    if np.any(labels < 0) or np.any(labels >= model.num_classes):
        raise BadLabel(f"labels {labels.tolist()} outside [0, {model.num_classes})")

    rows = np.arange(batch)
    d_act = probs.copy()
    d_act[rows, labels] -= 1.0
    # clamped terms are constant in the parameters
    d_act[probs[rows, labels] < PROB_FLOOR] = 0.0
    d_act /= batch

    fc_grads: list[tuple[np.ndarray, np.ndarray]] = []
    for index in range(len(model.fc) - 1, -1, -1):
        dense = model.fc[index]
        if index != len(model.fc) - 1:
            d_act = d_act * (cache.fc_pre[index] > 0)
        fc_grads.append((d_act.T @ cache.fc_inputs[index], d_act.sum(axis=0)))
        d_act = d_act @ dense.W
    fc_grads.reverse()

    layer_grads = [GruLayerParams.zeros(layer.input_size, layer.hidden_size) for layer in model.layers]
    d_outputs = np.zeros((batch, model.time_steps, model.layers[-1].hidden_size))
    d_outputs[:, -1] = d_act
    for index in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[index]
        d_inputs = np.empty((batch, model.time_steps, layer.input_size))
        carry = np.zeros((batch, layer.hidden_size))
        for t in range(model.time_steps - 1, -1, -1):
            dx, carry = gru_cell_backward(
                d_outputs[:, t] + carry, cache.cells[index][t], layer, layer_grads[index]
            )
            d_inputs[:, t] = dx
        d_outputs = d_inputs

    grads: list[np.ndarray] = []
    for layer_grad in layer_grads:
        grads.extend(layer_grad.arrays())
    for weight, bias in fc_grads:
        grads.extend([weight, bias])
    return grads


def loss_and_gradients(
    model: GruModel,
    windows: np.ndarray,
    labels: Sequence[int] | np.ndarray,
) -> tuple[float, list[np.ndarray], np.ndarray]:
    """Mean loss, gradients and probabilities for one mini-batch."""
    probs, cache = forward(model, np.asarray(windows).reshape(-1, model.time_steps, model.input_dim))
    loss = cross_entropy(probs, labels)
    return loss, backward(model, cache, labels), probs


def predict(model: GruModel, window: np.ndarray) -> tuple[str, float]:
    """Most probable class and its probability; ties go to the lower index."""
    probs, _ = forward(model, window)
    index = int(np.argmax(probs))
    return model.class_names[index], float(probs[index])


def predict_batch(model: GruModel, windows: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Probabilities for many windows, evaluated in chunks."""
    windows = np.asarray(windows)
    out = np.empty((windows.shape[0], model.num_classes))
    for start in range(0, windows.shape[0], batch_size):
        out[start : start + batch_size], _ = forward(model, windows[start : start + batch_size])
    return out
