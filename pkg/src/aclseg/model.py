"""The ACLSeg network: a shared ASPP encoder producing task-invariant
latents, one lightweight private encoder and one upsampling head per
task, and a task-label discriminator that drives the adversarial
factorization. Ablation variants swap out ASPP, sub-pixel upsampling,
and the multiplicative fusion.

Task growth is monotone: add_task() appends a freshly initialized
private/head pair, widens the discriminator by one logit (preserving the
existing output weights bit-exactly), and freezes the previous task's
private/head parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import Tensor, make_rng

VARIANTS = ("basic_enc", "aspp_ps", "full")


@dataclass
class ModelConfig:
    image_size: tuple[int, int] = (128, 128)
    base_channels: int = 16
    latent_dim: int = 64
    aspp_rates: tuple[int, ...] = (1, 2, 4, 8)
    variant: str = "full"
    seed: int = 0

    def __post_init__(self):
        h, w = self.image_size
        if h % 16 != 0 or w % 16 != 0:
            raise ConfigError(f"image size {self.image_size} must be divisible by 16")
        if self.latent_dim != (h // 16) * (w // 16):
            raise ConfigError(
                f"latent_dim {self.latent_dim} != (H/16)*(W/16) = {(h // 16) * (w // 16)}"
            )
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.base_channels < 2 or self.base_channels % 2 != 0:
            raise ConfigError(f"base_channels must be even and >= 2, got {self.base_channels}")

    @property
    def latent_grid(self) -> tuple[int, int]:
        return (self.image_size[0] // 16, self.image_size[1] // 16)

    def as_dict(self) -> dict:
        return {
            "image_size": list(self.image_size),
            "base_channels": self.base_channels,
            "latent_dim": self.latent_dim,
            "aspp_rates": list(self.aspp_rates),
            "variant": self.variant,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        return cls(
            image_size=tuple(doc["image_size"]),
            base_channels=doc["base_channels"],
            latent_dim=doc["latent_dim"],
            aspp_rates=tuple(doc["aspp_rates"]),
            variant=doc["variant"],
            seed=doc["seed"],
        )


class ASPP(nn.Module):
    """Parallel dilated 3x3 convs over one feature map, concatenated and
    fused back to the input width with a 1x1 conv."""

    def __init__(self, channels: int, rates, rng):
        super().__init__()
        self.branches = nn.ModuleList(
            nn.Conv2d(channels, channels, 3, padding=r, dilation=r, rng=rng) for r in rates
        )
        self.fuse = nn.Conv2d(channels * len(tuple(rates)), channels, 1, rng=rng)

    def forward(self, x):
        outs = [T.leaky_relu(branch(x)) for branch in self.branches]
        return T.leaky_relu(self.fuse(T.concat(outs, axis=1)))


def _down4(cin: int, cmid: int, cout: int, rng) -> nn.Sequential:
    """One 4x downsampling stage: two stride-2 convs with leaky relu."""
    return nn.Sequential(
        nn.Conv2d(cin, cmid, 3, stride=2, padding=1, rng=rng),
        nn.LeakyReLU(),
        nn.Conv2d(cmid, cout, 3, stride=2, padding=1, rng=rng),
        nn.LeakyReLU(),
    )


class SharedModule(nn.Module):
    """16x-downsampling encoder with ASPP, projected to a single channel
    and flattened into the latent vector Z_S."""

    def __init__(self, config: ModelConfig, rng):
        super().__init__()
        bc = config.base_channels
        self.grid = config.latent_grid
        self.latent_dim = config.latent_dim
        self.image_size = config.image_size
        self.stage1 = _down4(1, bc, bc, rng)
        self.stage2 = _down4(bc, 2 * bc, 2 * bc, rng)
        self.aspp = ASPP(2 * bc, config.aspp_rates, rng) if config.variant != "basic_enc" else None
        self.proj = nn.Conv2d(2 * bc, 1, 1, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        n = x.shape[0]
        h = self.stage2(self.stage1(x))
        if self.aspp is not None:
            h = self.aspp(h)
        return T.reshape(self.proj(h), (n, self.latent_dim))


class PrivateModule(nn.Module):
    """Half-width encoder (no ASPP) producing the task-specific Z_P."""

    def __init__(self, config: ModelConfig, rng):
        super().__init__()
        bc = config.base_channels
        self.latent_dim = config.latent_dim
        self.stage1 = _down4(1, bc // 2, bc // 2, rng)
        self.stage2 = _down4(bc // 2, bc, bc, rng)
        self.proj = nn.Conv2d(bc, 1, 1, rng=rng)


    def forward(self, x: Tensor) -> Tensor:
        n = x.shape[0]
        return T.reshape(self.proj(self.stage2(self.stage1(x))), (n, self.latent_dim))


class TaskHead(nn.Module):
    """Two conv + pixel_shuffle(4) stages (16x total upsampling) followed
    by a 1x1 projection to a single logit channel."""

    def __init__(self, config: ModelConfig, rng):
        super().__init__()
        bc = config.base_channels
        self.conv1 = nn.Conv2d(2, bc * 16, 3, padding=1, rng=rng)
        self.conv2 = nn.Conv2d(bc, (bc // 2) * 16, 3, padding=1, rng=rng)
        self.proj = nn.Conv2d(bc // 2, 1, 1, rng=rng)
        # start near the background prior: with foreground fractions of
        # 0.3-9% a zero init spends most of the step budget learning the
        # constant, while from here the positives dominate the gradient
        self.proj.bias.data[:] = -4.0

    def forward(self, fused: Tensor) -> Tensor:
        h = T.pixel_shuffle(T.leaky_relu(self.conv1(fused)), 4)
        h = T.pixel_shuffle(T.leaky_relu(self.conv2(h)), 4)
        return self.proj(h)


class BasicEncHead(nn.Module):
    """Ablation head: transposed-conv upsampling instead of sub-pixel."""

    def __init__(self, config: ModelConfig, rng):
        super().__init__()
        bc = config.base_channels
        self.up1 = nn.ConvTranspose2d(2, bc, 4, stride=4, rng=rng)
        self.up2 = nn.ConvTranspose2d(bc, bc // 2, 4, stride=4, rng=rng)
        self.proj = nn.Conv2d(bc // 2, 1, 1, rng=rng)
        self.proj.bias.data[:] = -4.0  # same background prior as TaskHead

    def forward(self, fused: Tensor) -> Tensor:
        h = T.leaky_relu(self.up1(fused))
        h = T.leaky_relu(self.up2(h))
        return self.proj(h)


class Discriminator(nn.Module):
    """MLP over Z_S with tasks+1 output logits (index 0 = noise)."""

    def __init__(self, latent_dim: int, rng):
        super().__init__()
        self.latent_dim = latent_dim
        hidden = 4 * latent_dim
        self.hidden = hidden
        self.l1 = nn.Linear(latent_dim, hidden, rng=rng)
        self.l2 = nn.Linear(hidden, hidden, rng=rng)
        self.out = nn.Linear(hidden, 1, rng=rng)

    @property
    def width(self) -> int:
        return self.out.out_features

    def grow(self, rng):
        """Append one output logit, preserving existing weights bit-exactly."""
        old = self.out
        new = nn.Linear(self.hidden, old.out_features + 1, rng=rng)
        new.weight.data[:, : old.out_features] = old.weight.data
        new.bias.data[: old.out_features] = old.bias.data
        self.out = new

    def forward(self, z: Tensor) -> Tensor:
        if z.data.ndim != 2 or z.shape[1] != self.latent_dim:
            raise ShapeError(f"discriminator expects (N, {self.latent_dim}), got {z.shape}")
        h = T.leaky_relu(self.l1(z))
        h = T.leaky_relu(self.l2(h))
        return self.out(h)


class ACLSegModel(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.shared = SharedModule(config, make_rng(config.seed, "shared"))
        self.discriminator = Discriminator(config.latent_dim, make_rng(config.seed, "disc_init"))
        self.privates = nn.ModuleList()
        self.heads = nn.ModuleList()
        self.frozen_through = -1

    @property
    def n_tasks(self) -> int:
        return len(self.privates)

    def add_task(self):
        """Append private/head for the next task; freeze the previous one."""
        k = self.n_tasks
        if k > 0:
            self.freeze_task(k - 1)
        cfg = self.config
        self.privates.append(PrivateModule(cfg, make_rng(cfg.seed, "private", k)))
        head_cls = BasicEncHead if cfg.variant == "basic_enc" else TaskHead
        self.heads.append(head_cls(cfg, make_rng(cfg.seed, "head", k)))
        self.discriminator.grow(make_rng(cfg.seed, "disc", k))

    def freeze_task(self, k: int):
        self.privates[k].freeze()
        self.heads[k].freeze()
        self.frozen_through = max(self.frozen_through, k)

    def set_frozen_through(self, k: int):
        self.frozen_through = k
        for j in range(self.n_tasks):
            frozen = j <= k
            for p in self.privates[j].parameters():
                p.requires_grad = not frozen
            for p in self.heads[j].parameters():
                p.requires_grad = not frozen

    def unfreeze_all_tasks(self):
        self.set_frozen_through(-1)

    def _check_input(self, x: Tensor):
        h, w = self.config.image_size
        if x.data.ndim != 4 or x.shape[1] != 1 or x.shape[2:] != (h, w):
            raise ShapeError(f"expected input (N, 1, {h}, {w}), got {x.shape}")

    def forward_shared(self, x: Tensor) -> Tensor:
        self._check_input(x)
        return self.shared(x)

    def forward_private(self, k: int, x: Tensor) -> Tensor:
        if not 0 <= k < self.n_tasks:
            raise ShapeError(f"private index {k} out of range for {self.n_tasks} tasks")
        self._check_input(x)
        return self.privates[k](x)

    def fuse(self, z_s: Tensor, z_p: Tensor) -> Tensor:
        """Combine latents into a 2-channel latent-grid feature map.

        The full variant uses (Z_S*Z_P, Z_S+Z_P); the ablation variants
        concatenate the raw latents instead.
        """
        if z_s.shape != z_p.shape:
            raise ShapeError(f"fuse: z_s {z_s.shape} vs z_p {z_p.shape}")
        n = z_s.shape[0]
        gh, gw = self.config.latent_grid
        if self.config.variant == "full":
            ch0 = T.mul(z_s, z_p)
            ch1 = T.add(z_s, z_p)
        else:
            ch0, ch1 = z_s, z_p
        return T.concat(
            [T.reshape(ch0, (n, 1, gh, gw)), T.reshape(ch1, (n, 1, gh, gw))], axis=1
        )

    def forward_head(self, k: int, fused: Tensor) -> Tensor:
        if not 0 <= k < self.n_tasks:
            raise ShapeError(f"head index {k} out of range for {self.n_tasks} tasks")
        return self.heads[k](fused)

    def forward_discriminator(self, z: Tensor) -> Tensor:
        return self.discriminator(z)

    def segment(self, k: int, x: Tensor) -> Tensor:
        """Full path for task k: encoders -> fuse -> head logits."""
        z_s = self.forward_shared(x)
        z_p = self.forward_private(k, x)
        return self.forward_head(k, self.fuse(z_s, z_p))

    def task_parameters(self, k: int) -> list:
        """Parameters trained during task k: shared + private_k + head_k."""
        params = self.shared.parameters()
        params += self.privates[k].parameters()
        params += self.heads[k].parameters()
        return [p for p in params if p.requires_grad]

    def archive_config(self) -> dict:
        return {
            "kind": "aclseg",
            "config": self.config.as_dict(),
            "n_tasks": self.n_tasks,
            "frozen_through": self.frozen_through,
        }

    @classmethod
    def from_archive(cls, doc: dict) -> "ACLSegModel":
        model = cls(ModelConfig.from_dict(doc["config"]))
        for _ in range(doc["n_tasks"]):
            model.add_task()
        model.set_frozen_through(doc["frozen_through"])
        return model


def parameter_count(module: nn.Module, trainable_only: bool = False) -> int:
    return sum(
        int(np.prod(p.data.shape))
        for p in module.parameters()
        if p.requires_grad or not trainable_only
    )
