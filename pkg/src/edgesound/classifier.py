"""Dense tanh/softmax sound classifier: training, inference, and model file I/O."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .dsp import FEATURE_LENGTH

CLASS_LABELS = (
    "air_conditioner",
    "car_horn",
    "children_playing",
    "dog_bark",
    "drilling",
    "engine_idling",
    "gun_shot",
    "jackhammer",
    "siren",
    "street_music",
)

INPUT_DIM = FEATURE_LENGTH
HIDDEN_DIMS = (280, 300)
N_CLASSES = len(CLASS_LABELS)
DEFAULT_DIMS = (INPUT_DIM,) + HIDDEN_DIMS + (N_CLASSES,)

DEFAULT_EPOCHS = 5000
DEFAULT_LEARNING_RATE = 0.1
DEFAULT_TRAIN_SPLIT = 0.7

MODEL_MAGIC = b"USMLP1\x00\x00"
_STD_FLOOR = 1e-12


@dataclass(eq=False)
class MlpModel:
    """Fully connected net plus the input standardization fitted with it."""

    weights: list  # list of [fan_in x fan_out] float64 arrays
    biases: list   # list of [fan_out] float64 arrays
    mean: np.ndarray
    std: np.ndarray
    labels: tuple = CLASS_LABELS

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ValueError("weights and biases must pair up layer by layer")
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise ValueError(f"layer shape mismatch: {w.shape} vs {b.shape}")
        for prev, nxt in zip(self.weights, self.weights[1:]):
            if prev.shape[1] != nxt.shape[0]:
                raise ValueError(f"layer chain mismatch: {prev.shape} -> {nxt.shape}")
        if self.mean.shape != (self.input_dim,) or self.std.shape != (self.input_dim,):
            raise ValueError("mean/std must match the input dimension")
        if len(self.labels) != self.output_dim:
            raise ValueError(
                f"{len(self.labels)} labels for {self.output_dim} outputs"
            )

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def layer_dims(self) -> tuple:
        return (self.input_dim,) + tuple(w.shape[1] for w in self.weights)

    def copy(self) -> "MlpModel":
        """Deep copy (training updates never alias the source model)."""
        return MlpModel(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            mean=self.mean.copy(),
            std=self.std.copy(),
            labels=tuple(self.labels),
        )


@dataclass(eq=False)
class LabeledDataset:
    """Feature matrix [n x d] with integer class labels and a train fraction."""

    features: np.ndarray
    labels: np.ndarray
    split: float = DEFAULT_TRAIN_SPLIT

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels must have one entry per feature row")
        if self.features.shape[0] == 0:
            raise ValueError("dataset is empty")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")
        if not 0.0 < self.split < 1.0:
            raise ValueError(f"split must be in (0, 1), got {self.split}")

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass(eq=False)
class TrainReport:
    """Outcome of a training run: loss curve and split accuracies."""

    epochs: int
    learning_rate: float
    seed: int
    loss_history: np.ndarray
    train_accuracy: float
    test_accuracy: float
    n_train: int
    n_test: int

    @property
    def final_loss(self) -> float:
        return float(self.loss_history[-1])

    def summary(self) -> dict:
        return {
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "final_loss": self.final_loss,
            "train_accuracy": self.train_accuracy,
            "test_accuracy": self.test_accuracy,
            "n_train": self.n_train,
            "n_test": self.n_test,
        }


def init_model(seed: int, dims: tuple = DEFAULT_DIMS, labels: tuple = None) -> MlpModel:
    """Glorot-uniform weights, zero biases, identity standardization."""
    if len(dims) < 2:
        raise ValueError("need at least an input and an output layer")
    if labels is None:
        labels = CLASS_LABELS if dims[-1] == N_CLASSES else tuple(
            f"class_{i}" for i in range(dims[-1])
        )
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights=weights, biases=biases,
                    mean=np.zeros(dims[0]), std=np.ones(dims[0]),
                    labels=tuple(labels))


def standardize(model: MlpModel, features: np.ndarray) -> np.ndarray:
    """Apply the model's stored z-score transform."""
    return (features - model.mean) / model.std


def _forward_batch(model: MlpModel, x_std: np.ndarray):
    """Forward pass on standardized inputs; returns activations per layer."""
    activations = [x_std]
    h = x_std
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        h = z if i == last else np.tanh(z)
        activations.append(h)
    return activations


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def forward(model: MlpModel, features: np.ndarray) -> np.ndarray:
    """Class probabilities for one feature vector."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape != (model.input_dim,):
        raise ValueError(
            f"expected {model.input_dim} features, got shape {features.shape}"
        )
    if not np.all(np.isfinite(features)):
        raise ValueError("features must be finite")
    x = standardize(model, features[None, :])
    logits = _forward_batch(model, x)[-1]
    return _softmax(logits)[0]


def classify(model: MlpModel, features: np.ndarray):
    """(label, class index, confidence) for one feature vector."""
    probs = forward(model, features)
    idx = int(np.argmax(probs))
    return model.labels[idx], idx, float(probs[idx])


def loss_and_gradients(model: MlpModel, x_std: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and its gradients w.r.t. every weight and bias."""
    n = x_std.shape[0]
    activations = _forward_batch(model, x_std)
    logits = activations[-1]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -log_probs[np.arange(n), labels].mean()

    probs = np.exp(log_probs)
    delta = probs
    delta[np.arange(n), labels] -= 1.0
    delta /= n

    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    for i in range(len(model.weights) - 1, -1, -1):
        grads_w[i] = activations[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (1.0 - activations[i] ** 2)
    return float(loss), grads_w, grads_b


def stratified_split(labels: np.ndarray, split: float, seed: int):
    """Per-class shuffled index split; every class keeps >= 1 training row."""
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        n_train = min(max(1, int(round(split * idx.size))), idx.size)
        train_idx.append(idx[:n_train])
        test_idx.append(idx[n_train:])
    train = np.sort(np.concatenate(train_idx))
    test = np.sort(np.concatenate(test_idx)) if any(t.size for t in test_idx) \
        else np.empty(0, dtype=np.int64)
    return train, test


def train(model: MlpModel, data: LabeledDataset,
          epochs: int = DEFAULT_EPOCHS, lr: float = DEFAULT_LEARNING_RATE,
          seed: int = 0):
    """Full-batch gradient descent; returns (trained model, TrainReport)."""
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    if lr <= 0.0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if data.features.shape[1] != model.input_dim:
        raise ValueError(
            f"dataset has {data.features.shape[1]} feature columns; "
            f"model expects {model.input_dim}"
        )
    if data.labels.min() < 0 or data.labels.max() >= model.output_dim:
        raise ValueError("labels outside the model's class range")

    train_idx, test_idx = stratified_split(data.labels, data.split, seed)
    x_train = data.features[train_idx]
    y_train = data.labels[train_idx]

    mean = x_train.mean(axis=0)
    std = x_train.std(axis=0)
    std = np.where(std < _STD_FLOOR, 1.0, std)

    trained = model.copy()
    trained.mean = mean
    trained.std = std

    x_std = (x_train - mean) / std
    losses = np.empty(epochs)
    for epoch in range(epochs):
        loss, grads_w, grads_b = loss_and_gradients(trained, x_std, y_train)
        if not np.isfinite(loss):
            raise RuntimeError(
                f"loss became non-finite at epoch {epoch}; lower the learning rate"
            )
        losses[epoch] = loss
        for w, gw in zip(trained.weights, grads_w):
            w -= lr * gw
        for b, gb in zip(trained.biases, grads_b):
            b -= lr * gb

    train_acc, _ = evaluate(trained, LabeledDataset(x_train, y_train, data.split))
    if test_idx.size:
        test_acc, _ = evaluate(
            trained,
            LabeledDataset(data.features[test_idx], data.labels[test_idx], data.split),
        )
    else:
        test_acc = float("nan")
    report = TrainReport(
        epochs=epochs, learning_rate=lr, seed=seed, loss_history=losses,
        train_accuracy=train_acc, test_accuracy=test_acc,
        n_train=int(train_idx.size), n_test=int(test_idx.size),
    )
    return trained, report


def evaluate(model: MlpModel, data: LabeledDataset):
    """(accuracy, confusion matrix [true x predicted]) over the whole dataset."""
    if data.features.shape[1] != model.input_dim:
        raise ValueError("feature width does not match the model")
    x = standardize(model, data.features)
    logits = _forward_batch(model, x)[-1]
    predicted = logits.argmax(axis=1)
    n_classes = model.output_dim
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (data.labels, predicted), 1)
    accuracy = float((predicted == data.labels).mean())
    return accuracy, confusion


def save_model(model: MlpModel, path) -> None:
    """Write the little-endian binary model file."""
    parts = [MODEL_MAGIC, struct.pack("<I", len(model.weights))]
    for w, b in zip(model.weights, model.biases):
        parts.append(struct.pack("<II", w.shape[0], w.shape[1]))
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(model.mean, dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(model.std, dtype="<f8").tobytes())
    parts.append(struct.pack("<I", len(model.labels)))
    for label in model.labels:
        encoded = label.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class _Cursor:
    """Sequential reader over bytes that errors cleanly on truncation."""

    def __init__(self, data: bytes, context: str):
        self.data = data
        self.pos = 0
        self.context = context

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ValueError(f"{self.context}: truncated model file")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64_array(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)


def load_model(path) -> MlpModel:
    """Read a model file written by save_model."""
    with open(path, "rb") as fh:
        data = fh.read()
    cur = _Cursor(data, str(path))
    if cur.take(len(MODEL_MAGIC)) != MODEL_MAGIC:
        raise ValueError(f"{path}: not a model file")
    n_layers = cur.u32()
    if not 1 <= n_layers <= 64:
        raise ValueError(f"{path}: implausible layer count {n_layers}")
    weights, biases = [], []
    for _ in range(n_layers):
        rows, cols = cur.u32(), cur.u32()
        if rows < 1 or cols < 1:
            raise ValueError(f"{path}: invalid layer shape {rows}x{cols}")
        weights.append(cur.f64_array(rows * cols).reshape(rows, cols))
        biases.append(cur.f64_array(cols))
    input_dim = weights[0].shape[0]
    mean = cur.f64_array(input_dim)
    std = cur.f64_array(input_dim)
    n_labels = cur.u32()
    labels = tuple(
        cur.take(cur.u32()).decode("utf-8") for _ in range(n_labels)
    )
    if cur.pos != len(data):
        raise ValueError(f"{path}: {len(data) - cur.pos} trailing bytes")
    return MlpModel(weights=weights, biases=biases, mean=mean, std=std, labels=labels)
