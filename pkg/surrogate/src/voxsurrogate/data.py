"""Loading exported voxel tensors with JSON sidecars.

Each sample is a pair of files sharing a stem: <stem>.u8 holds the raw
C-ordered uint8 occupancy tensor and <stem>.json describes its shape and
carries the regression targets under properties.{U_a,U_s,U_d}.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
import torch
from torch.utils.data import Dataset

TARGET_KEYS = ("U_a", "U_s", "U_d")


class SampleFormatError(ValueError):
    pass


def read_sample(stem) -> tuple:
    """-> (occupancy float32 array, target 3-vector) for one file stem."""
    with open(str(stem) + ".json") as fh:
        sidecar = json.load(fh)
    shape = tuple(sidecar["shape"])
    if sidecar.get("dtype", "uint8") != "uint8" or sidecar.get("order", "C") != "C":
        raise SampleFormatError(f"{stem}: unsupported dtype/order")
    raw = np.fromfile(str(stem) + ".u8", dtype=np.uint8)
    if raw.size != int(np.prod(shape)):
        raise SampleFormatError(
            f"{stem}: {raw.size} bytes for shape {shape}"
        )
    props = sidecar.get("properties")
    if props is None or any(k not in props for k in TARGET_KEYS):
        raise SampleFormatError(f"{stem}: sidecar lacks target properties")
    targets = np.array([props[k] for k in TARGET_KEYS], dtype=np.float32)
    return raw.reshape(shape).astype(np.float32), targets


def discover(directory) -> list:
    """Sorted file stems with both .u8 and .json present."""
    stems = []
    for name in sorted(os.listdir(directory)):
        if name.endswith(".u8"):
            stem = os.path.join(directory, name[:-3])
            if os.path.exists(stem + ".json"):
                stems.append(stem)
    return stems


class VoxelSampleSet(Dataset):
    """In-memory dataset of (volume, targets) pairs, channels-last."""

    def __init__(self, volumes: np.ndarray, targets: np.ndarray):
        if volumes.ndim != 4 or targets.shape != (len(volumes), 3):
            raise ValueError("expected volumes (N,D,D,D) and targets (N,3)")
        self.volumes = torch.from_numpy(np.ascontiguousarray(volumes, dtype=np.float32))
        self.targets = torch.from_numpy(np.ascontiguousarray(targets, dtype=np.float32))

    @classmethod
    def from_directory(cls, directory) -> "VoxelSampleSet":
        stems = discover(directory)
        if not stems:
            raise SampleFormatError(f"no .u8/.json sample pairs in {directory}")
        vols, targs = zip(*(read_sample(s) for s in stems))
        return cls(np.stack(vols), np.stack(targs))

    def __len__(self):
        return len(self.volumes)

    def __getitem__(self, i):
        return self.volumes[i].unsqueeze(-1), self.targets[i]


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def split_indices(count: int, fractions=(0.8, 0.1, 0.1), seed: int = 0) -> SplitIndices:
    """Randomized train/val/test split (fractions must sum to 1)."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must sum to 1, got {fractions}")
    rng = np.random.Generator(np.random.Philox(key=np.uint64([seed, 991])))
    order = rng.permutation(count)
    n_train = int(round(fractions[0] * count))
    n_val = int(round(fractions[1] * count))
    return SplitIndices(
        train=order[:n_train],
        val=order[n_train : n_train + n_val],
        test=order[n_train + n_val :],
    )
