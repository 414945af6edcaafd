"""3D residual CNN regressing three strain-energy densities from voxels.

Input is channels-last (B, D, D, D, 1); output is (B, 3).  The default
layout: 32-filter stem (kernel 3) with batch normalization, four residual
blocks whose filter counts rise 32 -> 64 -> 128 -> 256 with the first
convolution of each block at stride 2, flatten, one hidden dense layer,
three linear outputs.  About 7.7M parameters at input size 65.

Residual-block internals (two 3x3x3 convolutions, 1x1x1 strided shortcut
projection) and the dense-head width are recorded in ModelSpec.metadata.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn


@dataclass(frozen=True)
class ModelSpec:
    input_size: int = 65
    stem_filters: int = 32
    block_filters: tuple = (32, 64, 128, 256)
    head_width: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.input_size < 5 or not self.block_filters:
            raise ValueError(f"invalid model spec {self}")

    @property
    def metadata(self) -> dict:
        return {
            "input_shape": [self.input_size] * 3 + [1],
            "stem": {"filters": self.stem_filters, "kernel": 3, "batch_norm": True},
            "blocks": [
                {"filters": f, "convs": 2, "kernel": 3, "first_stride": 2,
                 "shortcut": "1x1x1 strided projection"}
                for f in self.block_filters
            ],
            "head": {"layout": "flatten + dense", "width": self.head_width},
            "outputs": 3,
        }


class ResidualBlock(nn.Module):
    """Two 3x3x3 convolutions; the first downsamples by stride 2."""

    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.conv1 = nn.Conv3d(c_in, c_out, 3, stride=2, padding=1, bias=False)
        self.bn1 = nn.BatchNorm3d(c_out)
        self.conv2 = nn.Conv3d(c_out, c_out, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm3d(c_out)
        self.shortcut = nn.Conv3d(c_in, c_out, 1, stride=2, bias=False)
        self.act = nn.ReLU(inplace=True)

    def forward(self, x):
        y = self.act(self.bn1(self.conv1(x)))
        y = self.bn2(self.conv2(y))
        return self.act(y + self.shortcut(x))


class EnergySurrogate(nn.Module):
    """Channels-last voxel volumes in, (U_a, U_s, U_d) out.

    Per-target standardization constants live in buffers so predictions
    come back in physical units while training sees standardized targets.
    """

    def __init__(self, spec: ModelSpec = ModelSpec()):
        super().__init__()
        self.spec = spec
        torch.manual_seed(spec.seed)
        self.stem = nn.Sequential(
            nn.Conv3d(1, spec.stem_filters, 3, padding=1, bias=False),
            nn.BatchNorm3d(spec.stem_filters),
            nn.ReLU(inplace=True),
        )
        blocks = []
        c = spec.stem_filters
        for f in spec.block_filters:
            blocks.append(ResidualBlock(c, f))
            c = f
        self.blocks = nn.Sequential(*blocks)
        size = spec.input_size
        for _ in spec.block_filters:
            size = (size + 1) // 2
        self.head = nn.Sequential(
            nn.Flatten(),
            nn.Linear(c * size**3, spec.head_width),
            nn.ReLU(inplace=True),
            nn.Linear(spec.head_width, 3),
        )
        self.register_buffer("target_mean", torch.zeros(3))
        self.register_buffer("target_std", torch.ones(3))

    def set_target_scaling(self, mean, std):
        self.target_mean.copy_(torch.as_tensor(mean, dtype=torch.float32))
        self.target_std.copy_(torch.as_tensor(std, dtype=torch.float32))

    def forward(self, x):
        if x.ndim != 5 or x.shape[-1] != 1:
            raise ValueError(f"expected (B, D, D, D, 1), got {tuple(x.shape)}")
        x = x.permute(0, 4, 1, 2, 3)  # channels-last in, channels-first inside
        z = self.head(self.blocks(self.stem(x)))
        return z * self.target_std + self.target_mean

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build(spec: ModelSpec = ModelSpec()) -> EnergySurrogate:
    return EnergySurrogate(spec)
