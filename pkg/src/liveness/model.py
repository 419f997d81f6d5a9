"""The liveness classifier: two four-conv blocks, a pooled 2048-wide latent
vector, and a two-layer head ending in a two-class softmax.

Layer sequence with default config:
    [Conv16, BN, ReLU] x4, Pool, Drop,
    [Conv32, BN, ReLU] x4, Pool, Drop,
    Flatten -> 2048,
    Linear(2048 -> 64), ReLU, BN, Drop, Linear(64 -> 2), Softmax

Default configuration totals 171,570 trainable parameters.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict, replace

import numpy as np

from .errors import ShapeError
from .layers import (
    INFER,
    TRAIN,
    BatchNorm,
    Conv3x3,
    Dropout,
    Flatten,
    Linear,
    MaxPool2x2,
    ReLU,
    softmax,
)

BONA_FIDE = "bona_fide"
ATTACK = "attack"

# Class index convention: attack = 0, bona fide = 1. A sample's score is
# P(bona_fide) = probabilities[:, 1].
ATTACK_INDEX = 0
BONA_FIDE_INDEX = 1


@dataclass(frozen=True)
class ArchConfig:
    input_hw: int = 32
    in_channels: int = 3
    block1_channels: int = 16
    block1_depth: int = 4
    block2_channels: int = 32
    block2_depth: int = 4
    hidden_width: int = 64
    classes: int = 2
    conv_dropout: float = 0.25
    head_dropout: float = 0.5
    bn_epsilon: float = 1e-5
    bn_momentum: float = 0.9

    @property
    def feature_hw(self) -> int:
        return self.input_hw // 4

    @property
    def latent_width(self) -> int:
        return self.feature_hw * self.feature_hw * self.block2_channels

    def validate(self) -> None:
        for field_name in ("input_hw", "in_channels", "block1_channels", "block1_depth",
                           "block2_channels", "block2_depth", "hidden_width", "classes"):
            if getattr(self, field_name) < 1:
                raise ShapeError(f"ArchConfig.{field_name} must be positive")
        if self.input_hw % 4 != 0:
            raise ShapeError(
                f"input_hw must be divisible by 4 (two 2x2 pools), got {self.input_hw}")


class LivenessModel:
    """Ordered layers plus config; parameters live inside the layers."""

    def __init__(self, config: ArchConfig, feature_layers, head_layers):
        self.config = config
        self.feature_layers = feature_layers
        self.head_layers = head_layers

    @property
    def layers(self):
        return self.feature_layers + self.head_layers

    def trainable(self):
        """Yield ("layer.param", param, grad) for every trainable tensor."""
        for layer in self.layers:
            for key, param, grad in layer.trainable():
                yield f"{layer.name}.{key}", param, grad

    def state_tensors(self):
        """Yield ("layer.tensor", array) for parameters and buffers, in order."""
        for layer in self.layers:
            for key, arr in layer.state_tensors():
                yield f"{layer.name}.{key}", arr

    def _check_input(self, batch: np.ndarray) -> None:
        hw = self.config.input_hw
        if batch.ndim != 4 or batch.shape[1:] != (self.config.in_channels, hw, hw):
            raise ShapeError(
                f"expected batch shape [N, {self.config.in_channels}, {hw}, {hw}], "
                f"got {batch.shape}")

    def forward_logits(self, batch: np.ndarray, mode: str = INFER, rng=None) -> np.ndarray:
        self._check_input(batch)
        out = batch
        for layer in self.layers:
            out = layer.forward(out, mode=mode, rng=rng)
        return out

    def forward(self, batch: np.ndarray, mode: str = INFER, rng=None) -> np.ndarray:
        """Class probabilities [N, classes]; rows sum to 1."""
        return softmax(self.forward_logits(batch, mode=mode, rng=rng))

    def backward(self, grad_logits: np.ndarray) -> np.ndarray:
        grad = grad_logits
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def extract_features(self, batch: np.ndarray) -> np.ndarray:
        """Latent vectors [N, latent_width]: the flattened output of the conv
        stack in infer mode, before the fully connected head."""
        self._check_input(batch)
        out = batch
        for layer in self.feature_layers:
            out = layer.forward(out, mode=INFER)
        return out

    def head_forward(self, features: np.ndarray, mode: str = INFER, rng=None) -> np.ndarray:
        out = features
        for layer in self.head_layers:
            out = layer.forward(out, mode=mode, rng=rng)
        return softmax(out)

    def predict(self, face: np.ndarray, threshold: float = 0.5):
        """Single-face decision. Returns (label, score) with score = P(bona_fide);
        bona fide wins at score == threshold."""
        if face.ndim == 3:
            face = face[None]
        probs = self.forward(face, mode=INFER)
        score = float(probs[0, BONA_FIDE_INDEX])
        label = BONA_FIDE if score >= threshold else ATTACK
        return label, score


def build_model(config: ArchConfig = ArchConfig(), seed: int = 0) -> LivenessModel:
    """Assemble the network with reproducible Kaiming-style init from `seed`."""
    config.validate()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x11F]))
    eps, mom = config.bn_epsilon, config.bn_momentum
    feature_layers = []
    in_ch = config.in_channels
    for block, (channels, depth) in enumerate(
            [(config.block1_channels, config.block1_depth),
             (config.block2_channels, config.block2_depth)], start=1):
        for i in range(1, depth + 1):
            feature_layers.append(
                Conv3x3(in_ch, channels, rng, name=f"conv{block}_{i}"))
            feature_layers.append(
                BatchNorm(channels, epsilon=eps, momentum=mom, name=f"bn{block}_{i}"))
            feature_layers.append(ReLU(name=f"relu{block}_{i}"))
            in_ch = channels
        feature_layers.append(MaxPool2x2(name=f"pool{block}"))
        feature_layers.append(Dropout(config.conv_dropout, name=f"drop{block}"))
    feature_layers.append(Flatten(name="flatten"))

    head_layers = [
        Linear(config.latent_width, config.hidden_width, rng, name="fc1"),
        ReLU(name="relu_head"),
        BatchNorm(config.hidden_width, epsilon=eps, momentum=mom, name="bn_head"),
        Dropout(config.head_dropout, name="drop_head"),
        Linear(config.hidden_width, config.classes, rng, name="fc2"),
    ]
    return LivenessModel(config, feature_layers, head_layers)


def param_count(model: LivenessModel) -> int:
    """Trainable parameter total; running stats excluded."""
    return sum(param.size for _, param, _ in model.trainable())


def clone_config(config: ArchConfig, **overrides) -> ArchConfig:
    return replace(config, **overrides)


def config_to_dict(config: ArchConfig) -> dict:
    return asdict(config)


def config_from_dict(data: dict) -> ArchConfig:
    return ArchConfig(**data)
