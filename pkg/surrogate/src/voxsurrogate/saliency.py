"""SmoothGrad saliency volumes for the energy surrogate.

Mean absolute input-gradient over Gaussian-perturbed copies of the input,
masked to solid voxels, clipped at the 99th percentile, normalized to
[0, 1].  With copies=1 and sigma=0 this reduces to the plain gradient
saliency.  Noise scale: sigma is either an absolute standard deviation on
the binary voxels (default sigma = sqrt(0.2)) or, with
noise_as_range_fraction=True, a fraction of the input value range.
"""

from __future__ import annotations

import warnings

import numpy as np
import torch

DEFAULT_SIGMA = float(np.sqrt(0.2))


def smoothgrad(
    model,
    volume: np.ndarray,
    target_index: int,
    copies: int = 50,
    sigma: float = DEFAULT_SIGMA,
    noise_as_range_fraction: bool = False,
    clip_percentile: float = 99.0,
    seed: int = 0,
) -> np.ndarray:
    """-> float32 saliency volume with the input's spatial shape."""
    if not (0 <= target_index < 3):
        raise ValueError(f"target_index must be 0..2, got {target_index}")
    if copies < 1 or sigma < 0:
        raise ValueError(f"need copies >= 1 and sigma >= 0")
    vol = np.asarray(volume, dtype=np.float32)
    if vol.ndim != 3:
        raise ValueError(f"expected a 3D volume, got shape {vol.shape}")
    if model.training:
        warnings.warn("model is in training mode; saliency uses eval mode")
    model.eval()
    scale = sigma
    if noise_as_range_fraction:
        scale = sigma * float(vol.max() - vol.min())
    gen = torch.Generator().manual_seed(seed)
    base = torch.from_numpy(vol)[None, ..., None]
    grad_sum = torch.zeros_like(base)
    for _ in range(copies):
        noise = torch.randn(base.shape, generator=gen) * scale if scale > 0 else 0.0
        x = (base + noise).requires_grad_(True)
        out = model(x)[0, target_index]
        out.backward()
        grad_sum += x.grad.abs()
    sal = (grad_sum / copies)[0, ..., 0].numpy()
    sal = sal * (vol > 0)  # solid-voxel mask
    top = np.percentile(sal[vol > 0], clip_percentile) if (vol > 0).any() else 0.0
    if top > 0:
        sal = np.minimum(sal, top)
    peak = sal.max()
    if peak > 0:
        sal = sal / peak
    else:
        warnings.warn("degenerate saliency: all gradients vanish on solid voxels")
    return sal.astype(np.float32)


def save_saliency(sal: np.ndarray, stem, extra: dict = None) -> dict:
    """Write <stem>.f32 raw tensor and <stem>.json sidecar; returns the sidecar."""
    import json

    sidecar = {
        "shape": list(sal.shape),
        "dtype": "float32",
        "order": "C",
        "axes": "xyz",
        **(extra or {}),
    }
    sal.astype("<f4").tofile(str(stem) + ".f32")
    with open(str(stem) + ".json", "w") as fh:
        json.dump(sidecar, fh, sort_keys=True)
    return sidecar
