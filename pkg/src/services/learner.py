"""Desk-scale reference segmentation learner.

A pixelwise multilayer perceptron over local patch statistics stands in for
a segmentation DCNN: it trains in seconds, carries dropout for Monte Carlo
sampling, and overfits to noisy masks the same way a larger network does.
"""

import copy
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Protocol, Sequence, Tuple, Union, runtime_checkable

import numpy as np
import torch
import torch.nn.functional as F
from loguru import logger
from scipy import ndimage
from torch import nn

from exceptions import (
    HeaderError,
    InputFormatError,
    MagicMismatchError,
    MaskWriteError,
    ParameterError,
    TrainingDivergenceError,
    TruncatedPayloadError,
)
from models.grids import BinaryMask, GrayImage, ProbMap
from models.specs import MAX_SEED, TrainConfig

FEATURE_RADII = (1, 2, 4)
FEATURE_COUNT = 1 + 2 * len(FEATURE_RADII) + 2
LAYER_SIZES = (FEATURE_COUNT, 32, 32, 1)

MODEL_MAGIC = b"MMLP"
MODEL_VERSION = 1

Sample = Tuple[GrayImage, BinaryMask]


def extract_features(image: GrayImage) -> np.ndarray:
    """Per-pixel feature grid of shape H×W×9.

    Features: raw intensity; box mean and box variance for radii 1, 2 and 4
    (borders clamped); normalized x and y coordinates in [0, 1].
    """
    data = image.data
    height, width = data.shape
    channels = [data]
    for radius in FEATURE_RADII:
        size = 2 * radius + 1
        mean = ndimage.uniform_filter(data, size=size, mode="nearest")
        mean_sq = ndimage.uniform_filter(data * data, size=size, mode="nearest")
        channels.append(mean)
        channels.append(np.maximum(mean_sq - mean * mean, 0.0))
    xs = np.arange(width) / max(width - 1, 1)
    ys = np.arange(height) / max(height - 1, 1)
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
    channels.extend([grid_x, grid_y])
    return np.stack(channels, axis=-1)


@dataclass
class PixelDataset:
    """Flattened pixel features and labels of a list of (image, mask) pairs."""

    features: torch.Tensor
    labels: torch.Tensor

    @classmethod
    def from_pairs(cls, pairs: Sequence[Sample]) -> "PixelDataset":
        if not pairs:
            raise ParameterError("training data must not be empty")
        features, labels = [], []
        for image, mask in pairs:
            if image.shape != mask.shape:
                raise ParameterError(f"image {image.shape} and mask {mask.shape} differ in size")
            features.append(extract_features(image).reshape(-1, FEATURE_COUNT))
            labels.append(mask.data.reshape(-1))
        return cls(
            features=torch.from_numpy(np.concatenate(features).astype(np.float32)),
            labels=torch.from_numpy(np.concatenate(labels).astype(np.float32)),
        )

    def __len__(self) -> int:
        return int(self.labels.shape[0])


@runtime_checkable
class SegmentationLearner(Protocol):
    """Interface the pipeline and ensemble engine expect from a learner."""

    dropout_rate: float

    def fit_epoch(self, data: "PixelDataset", cfg: TrainConfig) -> "SegmentationLearner":
        """Return a copy trained for one more epoch."""
        ...

    def predict(self, image: GrayImage, dropout_active: bool = False, seed: int = 0) -> ProbMap:
        """Per-pixel foreground probabilities."""
        ...


class PixelClassifier(nn.Module):
    """MLP 9→32→32→1 with ReLU hidden units, sigmoid output and hidden dropout."""

    def __init__(
        self,
        layer_sizes: Sequence[int] = LAYER_SIZES,
        dropout_rate: float = 0.0,
        seed: int = 0,
    ):
        """Initialize the classifier with He-normal weights and zero biases.

        Args:
            layer_sizes: Widths from the input features to the single output
            dropout_rate: Probability of dropping a hidden unit
            seed: Seed of the weight initialization
        """
        super().__init__()
        if not 0.0 <= dropout_rate < 1.0:
            raise ParameterError(f"dropout rate must lie within [0, 1), got {dropout_rate}")
        if len(layer_sizes) < 2 or layer_sizes[0] != FEATURE_COUNT or layer_sizes[-1] != 1:
            raise ParameterError(f"layer sizes must run from {FEATURE_COUNT} to 1, got {layer_sizes}")
        if not 0 <= seed <= MAX_SEED:
            raise ParameterError(f"seed must lie within [0, {MAX_SEED}], got {seed}")
        self.layer_sizes = tuple(int(size) for size in layer_sizes)
        self.dropout_rate = float(dropout_rate)
        self.seed = int(seed)
        self.epochs_trained = 0
        self.layers = nn.ModuleList(
            nn.Linear(fan_in, fan_out) for fan_in, fan_out in zip(layer_sizes, layer_sizes[1:])
        )
        generator = torch.Generator().manual_seed(self.seed)
        with torch.no_grad():
            for layer in self.layers:
                fan_in = layer.weight.shape[1]
                layer.weight.copy_(
                    torch.randn(layer.weight.shape, generator=generator) * np.sqrt(2.0 / fan_in)
                )
                layer.bias.zero_()

    @classmethod
    def from_config(cls, cfg: TrainConfig, seed: Optional[int] = None) -> "PixelClassifier":
        return cls(dropout_rate=cfg.dropout_rate, seed=cfg.seed if seed is None else seed)

    def forward(self, x: torch.Tensor, generator: Optional[torch.Generator] = None) -> torch.Tensor:
        """Logits for a batch of feature rows; dropout is applied when a generator is given."""
        keep = 1.0 - self.dropout_rate
        for layer in self.layers[:-1]:
            x = F.relu(layer(x))
            if generator is not None and self.dropout_rate > 0.0:
                mask = torch.bernoulli(torch.full_like(x, keep), generator=generator)
                x = x * mask / keep
        return self.layers[-1](x).squeeze(-1)

    def clone(self) -> "PixelClassifier":
        return copy.deepcopy(self)

    def fit_epoch(self, data: PixelDataset, cfg: TrainConfig) -> "PixelClassifier":
        """One pass of minibatch SGD over every pixel, reshuffled per epoch under ``cfg.seed``.

        Raises:
            TrainingDivergenceError: If the loss becomes NaN or infinite
        """
        model = self.clone()
        epoch = model.epochs_trained
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(data))
        order_t = torch.from_numpy(order)
        generator = torch.Generator().manual_seed(cfg.seed * 1_000_003 + epoch)
        optimizer = torch.optim.SGD(model.parameters(), lr=cfg.learning_rate, momentum=0.0)

        model.train()
        total = 0.0
        for start in range(0, len(order_t), cfg.batch_size):
            batch = order_t[start : start + cfg.batch_size]
            logits = model(data.features[batch], generator=generator)
            loss = F.binary_cross_entropy_with_logits(logits, data.labels[batch])
            if not torch.isfinite(loss):
                raise TrainingDivergenceError(
                    f"loss became {loss.item()} in epoch {epoch + 1}", epoch=epoch + 1
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += loss.item() * len(batch)
        model.eval()
        model.epochs_trained = epoch + 1
        logger.debug(f"Model seed {model.seed}: epoch {model.epochs_trained} loss {total / len(data):.5f}")
        return model

    @torch.no_grad()
    def predict_features(
        self, features: np.ndarray, dropout_active: bool = False, seed: int = 0
    ) -> np.ndarray:
        """Probabilities for an H×W×9 feature grid."""
        height, width, _ = features.shape
        rows = torch.from_numpy(features.reshape(-1, FEATURE_COUNT).astype(np.float32))
        generator = torch.Generator().manual_seed(seed) if dropout_active else None
        probabilities = torch.sigmoid(self(rows, generator=generator))
        return probabilities.double().numpy().reshape(height, width)

    def predict(self, image: GrayImage, dropout_active: bool = False, seed: int = 0) -> ProbMap:
        return ProbMap(self.predict_features(extract_features(image), dropout_active, seed))


def train_epoch(
    model: SegmentationLearner,
    data: Union[Sequence[Sample], PixelDataset],
    cfg: TrainConfig,
) -> SegmentationLearner:
    """Train a copy of ``model`` for one epoch and return it."""
    dataset = data if isinstance(data, PixelDataset) else PixelDataset.from_pairs(data)
    return model.fit_epoch(dataset, cfg)


def predict(
    model: SegmentationLearner, image: GrayImage, dropout_active: bool = False, seed: int = 0
) -> ProbMap:
    return model.predict(image, dropout_active=dropout_active, seed=seed)


@torch.no_grad()
def dataset_loss(model: PixelClassifier, data: Union[Sequence[Sample], PixelDataset]) -> float:
    """Mean deterministic binary cross-entropy over every pixel of ``data``."""
    dataset = data if isinstance(data, PixelDataset) else PixelDataset.from_pairs(data)
    logits = model(dataset.features)
    return float(F.binary_cross_entropy_with_logits(logits, dataset.labels).item())


def fit(
    model: PixelClassifier, data: Union[Sequence[Sample], PixelDataset], cfg: TrainConfig
) -> PixelClassifier:
    """Train for ``cfg.epochs`` epochs, logging the dataset loss after each."""
    dataset = data if isinstance(data, PixelDataset) else PixelDataset.from_pairs(data)
    for _ in range(cfg.epochs):
        model = model.fit_epoch(dataset, cfg)
        logger.info(f"Epoch {model.epochs_trained}/{cfg.epochs}: loss {dataset_loss(model, dataset):.5f}")
    return model


def parameter_vector(model: PixelClassifier) -> np.ndarray:
    """All weights and biases flattened in float64, layer by layer."""
    return torch.cat([p.detach().reshape(-1) for p in model.parameters()]).double().numpy()


def loss_and_gradient(
    model: PixelClassifier, params: np.ndarray, features: np.ndarray, labels: np.ndarray
) -> Tuple[float, np.ndarray]:
    """Deterministic BCE and its gradient at ``params``, evaluated in float64."""
    shapes = [p.shape for p in model.parameters()]
    names = [name for name, _ in model.named_parameters()]
    flat = torch.tensor(params, dtype=torch.float64, requires_grad=True)
    tensors, offset = [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        tensors.append(flat[offset : offset + size].reshape(shape))
        offset += size
    double_model = model.clone().double()
    logits = torch.func.functional_call(
        double_model, dict(zip(names, tensors)), (torch.from_numpy(np.asarray(features, dtype=np.float64)),)
    )
    loss = F.binary_cross_entropy_with_logits(
        logits, torch.from_numpy(np.asarray(labels, dtype=np.float64))
    )
    (gradient,) = torch.autograd.grad(loss, flat)
    return float(loss.item()), gradient.numpy()


def hidden_preactivations(model: PixelClassifier, params: np.ndarray, features: np.ndarray) -> List[np.ndarray]:
    """Hidden-layer inputs to the ReLUs at ``params`` (used to stay clear of kinks)."""
    x = np.asarray(features, dtype=np.float64)
    outputs, offset = [], 0
    for layer in model.layers:
        fan_out, fan_in = layer.weight.shape
        weight = params[offset : offset + fan_out * fan_in].reshape(fan_out, fan_in)
        offset += fan_out * fan_in
        bias = params[offset : offset + fan_out]
        offset += fan_out
        z = x @ weight.T + bias
        outputs.append(z)
        x = np.maximum(z, 0.0)
    return outputs[:-1]


# --- persistence -------------------------------------------------------------------


def save_model(model: PixelClassifier, path: Union[str, Path]) -> None:
    """Write the MMLP model file.

    Layout: magic, version byte, uint32 layer count, uint32 widths, float32
    dropout rate, uint32 seed, uint32 epochs trained, then per layer the
    out×in weight matrix followed by the bias, all little-endian float32.
    """
    sizes = model.layer_sizes
    header = MODEL_MAGIC + struct.pack("<BI", MODEL_VERSION, len(sizes))
    header += struct.pack(f"<{len(sizes)}I", *sizes)
    header += struct.pack("<fII", model.dropout_rate, model.seed, model.epochs_trained)
    blobs = []
    for layer in model.layers:
        blobs.append(layer.weight.detach().numpy().astype("<f4").tobytes())
        blobs.append(layer.bias.detach().numpy().astype("<f4").tobytes())
    try:
        Path(path).write_bytes(header + b"".join(blobs))
    except OSError as e:
        logger.error(f"Failed to write model {path}: {e}")
        raise MaskWriteError(f"Cannot write model {path}: {e}")


def load_model(path: Union[str, Path]) -> PixelClassifier:
    """Read an MMLP model file written by :func:`save_model`."""
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise InputFormatError(f"Cannot read model {path}: {e}", path=str(path))
    if raw[:4] != MODEL_MAGIC:
        raise MagicMismatchError(f"{path}: not an MMLP model file", path=str(path))
    try:
        version, count = struct.unpack_from("<BI", raw, 4)
        if version != MODEL_VERSION:
            raise HeaderError(f"{path}: unsupported model version {version}", path=str(path))
        offset = 9
        sizes = struct.unpack_from(f"<{count}I", raw, offset)
        offset += 4 * count
        dropout_rate, seed, epochs_trained = struct.unpack_from("<fII", raw, offset)
        offset += 12
    except struct.error:
        raise TruncatedPayloadError(f"{path}: model header is truncated", path=str(path))

    model = PixelClassifier(sizes, dropout_rate=float(np.float32(dropout_rate)), seed=seed)
    model.epochs_trained = epochs_trained
    expected = sum(out * inp + out for inp, out in zip(sizes, sizes[1:]))
    if len(raw) - offset != 4 * expected:
        raise TruncatedPayloadError(
            f"{path}: expected {expected} weights, found {(len(raw) - offset) / 4}", path=str(path)
        )
    weights = np.frombuffer(raw, dtype="<f4", offset=offset)
    position = 0
    with torch.no_grad():
        for layer in model.layers:
            for tensor in (layer.weight, layer.bias):
                size = tensor.numel()
                tensor.copy_(torch.from_numpy(weights[position : position + size].copy()).reshape(tensor.shape))
                position += size
    model.eval()
    return model
