"""Multi-head U-Net used by the FT and LwF baselines and by joint
(ideal) training. One shared encoder/decoder trunk with skip
connections; each task adds a 1x1-conv head over the trunk's final
feature map, and adding a head never touches existing head weights.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import nn
from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import Tensor, make_rng


@dataclass
class UNetConfig:
    image_size: tuple[int, int] = (128, 128)
    base_channels: int = 16
    seed: int = 0

    def __post_init__(self):
        h, w = self.image_size
        if h % 8 != 0 or w % 8 != 0:
            raise ConfigError(f"image size {self.image_size} must be divisible by 8 (depth-3 U-Net)")

    def as_dict(self) -> dict:
        return {
            "image_size": list(self.image_size),
            "base_channels": self.base_channels,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "UNetConfig":
        return cls(
            image_size=tuple(doc["image_size"]),
            base_channels=doc["base_channels"],
            seed=doc["seed"],
        )


class _UpBlock(nn.Module):
    """conv -> leaky_relu -> pixel_shuffle(2): doubles resolution."""

    def __init__(self, cin: int, cout: int, rng):
        super().__init__()
        self.conv = nn.Conv2d(cin, cout * 4, 3, padding=1, rng=rng)

    def forward(self, x):
        return T.pixel_shuffle(T.leaky_relu(self.conv(x)), 2)


class MultiHeadUNet(nn.Module):
    """Depth-3 U-Net trunk (stride-2 conv down, sub-pixel up) with
    per-task 1x1-conv output heads."""

    def __init__(self, config: UNetConfig):
        super().__init__()
        self.config = config
        bc = config.base_channels
        rng = make_rng(config.seed, "unet")
        self.stem = nn.Conv2d(1, bc, 3, padding=1, rng=rng)
        self.down1 = nn.Conv2d(bc, bc, 3, stride=2, padding=1, rng=rng)
        self.enc1 = nn.Conv2d(bc, bc, 3, padding=1, rng=rng)
        self.down2 = nn.Conv2d(bc, 2 * bc, 3, stride=2, padding=1, rng=rng)
        self.enc2 = nn.Conv2d(2 * bc, 2 * bc, 3, padding=1, rng=rng)
        self.down3 = nn.Conv2d(2 * bc, 4 * bc, 3, stride=2, padding=1, rng=rng)
        self.enc3 = nn.Conv2d(4 * bc, 4 * bc, 3, padding=1, rng=rng)
        self.up2 = _UpBlock(4 * bc, 2 * bc, rng)
        self.mix2 = nn.Conv2d(4 * bc, 2 * bc, 3, padding=1, rng=rng)
        self.up1 = _UpBlock(2 * bc, bc, rng)
        self.mix1 = nn.Conv2d(2 * bc, bc, 3, padding=1, rng=rng)
        self.up0 = _UpBlock(bc, bc, rng)
        self.heads = nn.ModuleList()

    @property
    def n_heads(self) -> int:
        return len(self.heads)

    def add_head(self):
        bc = self.config.base_channels
        k = self.n_heads
        self.heads.append(nn.Conv2d(2 * bc, 1, 1, rng=make_rng(self.config.seed, "head", k)))

    def features(self, x: Tensor) -> Tensor:
        """Trunk forward pass shared by every head."""
        h, w = self.config.image_size
        if x.data.ndim != 4 or x.shape[1] != 1 or x.shape[2:] != (h, w):
            raise ShapeError(f"expected input (N, 1, {h}, {w}), got {x.shape}")
        s0 = T.leaky_relu(self.stem(x))
        e1 = T.leaky_relu(self.enc1(T.leaky_relu(self.down1(s0))))
        e2 = T.leaky_relu(self.enc2(T.leaky_relu(self.down2(e1))))
        e3 = T.leaky_relu(self.enc3(T.leaky_relu(self.down3(e2))))
        d2 = T.leaky_relu(self.mix2(T.concat([self.up2(e3), e2], axis=1)))
        d1 = T.leaky_relu(self.mix1(T.concat([self.up1(d2), e1], axis=1)))
        return T.concat([self.up0(d1), s0], axis=1)

    def forward_head(self, k: int, feats: Tensor) -> Tensor:
        if not 0 <= k < self.n_heads:
            raise ShapeError(f"head index {k} out of range for {self.n_heads} heads")
        return self.heads[k](feats)

    def segment(self, k: int, x: Tensor) -> Tensor:
        return self.forward_head(k, self.features(x))

    def trunk_parameters(self) -> list:
        head_ids = {id(p) for head in self.heads for p in head.parameters()}
        return [p for p in self.parameters() if id(p) not in head_ids]

    def archive_config(self) -> dict:
        return {
            "kind": "unet",
            "config": self.config.as_dict(),
            "n_heads": self.n_heads,
        }

    @classmethod
    def from_archive(cls, doc: dict) -> "MultiHeadUNet":
        model = cls(UNetConfig.from_dict(doc["config"]))
        for _ in range(doc["n_heads"]):
            model.add_head()
        return model
