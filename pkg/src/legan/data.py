"""Deterministic data sourcing: CIFAR-10 binary files, synthetic blob
images for desk-scale runs, seeded batching, and noise sampling.

All pixel values live in [0, 1]. Labels in CIFAR files are ignored; the
models here are unconditional.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .autodiff import Tensor
from .rng import Stream

CIFAR_RECORD_BYTES = 3073  # 1 label byte + 3 * 1024 pixel bytes

_SHUFFLE_TAG = 2
_NOISE_TAG = 4
_BLOB_TAG = 11


@dataclass
class DatasetHandle:
    """An in-memory pool of images plus the metadata batching needs."""

    kind: str  # "cifar10-binary" | "synthetic-blobs"
    images: np.ndarray  # [count, 3, size, size] float64 in [0, 1]
    shuffle_seed: int = 0

    @property
    def count(self) -> int:
        return int(self.images.shape[0])

    @property
    def image_size(self) -> int:
        return int(self.images.shape[2])


def load_cifar10_binary(paths: str | Sequence[str], shuffle_seed: int = 0) -> DatasetHandle:
    """Parse CIFAR-10 binary records: per image 1 label byte then 1024 R,
    1024 G, 1024 B bytes row-major; pixels are scaled to [0, 1] by /255."""
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    if not paths:
        raise ValueError("no CIFAR files given")
    pools = []
    for path in paths:
        try:
            with open(path, "rb") as f:
                blob = f.read()
        except OSError as exc:
            raise ValueError(f"cannot read CIFAR file {path}: {exc}") from exc
        if len(blob) % CIFAR_RECORD_BYTES != 0:
            tail = len(blob) % CIFAR_RECORD_BYTES
            raise ValueError(
                f"{path}: {len(blob)} bytes is not a multiple of {CIFAR_RECORD_BYTES} "
                f"(stray {tail} bytes from offset {len(blob) - tail})"
            )
        records = np.frombuffer(blob, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        pixels = records[:, 1:].reshape(-1, 3, 32, 32)  # labels discarded
        pools.append(pixels.astype(np.float64) / 255.0)
    return DatasetHandle("cifar10-binary", np.concatenate(pools, axis=0), shuffle_seed)


def write_cifar10_binary(images: np.ndarray, path) -> None:
    """Export an image pool to the CIFAR-10 binary layout (label byte 0),
    quantizing pixels to bytes."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4 or images.shape[1] != 3 or images.shape[2] != 32 or images.shape[3] != 32:
        raise ValueError(f"expected images [N,3,32,32], got {images.shape}")
    n = images.shape[0]
    records = np.zeros((n, CIFAR_RECORD_BYTES), dtype=np.uint8)
    records[:, 1:] = np.round(images * 255.0).astype(np.uint8).reshape(n, -1)
    with open(path, "wb") as f:
        f.write(records.tobytes())


def synth_blobs(count: int, image_size: int, seed: int, shuffle_seed: int | None = None) -> DatasetHandle:
    """Deterministic images of one or two soft Gaussian intensity blobs
    with seeded centers, widths, and colors; a low-entropy, learnable
    distribution that stands in for natural images."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if image_size < 8:
        raise ValueError("image_size must be >= 8")
    stream = Stream([seed, _BLOB_TAG])
    # Draw every attribute unconditionally so the stream layout is fixed.
    # Ranges are wide enough that the pool keeps visible variety; overly
    # uniform pools let a discriminator collapse real embeddings.
    second = stream.uniform((count,)) < 0.5
    centers = stream.uniform_range(0.15, 0.85, (count, 2, 2)) * image_size
    sigmas = stream.uniform_range(0.08, 0.40, (count, 2)) * image_size
    colors = stream.uniform_range(0.10, 1.0, (count, 2, 3))
    grid = np.arange(image_size, dtype=np.float64) + 0.5
    yy = grid[:, None]
    xx = grid[None, :]
    images = np.zeros((count, 3, image_size, image_size))
    for b in range(2):
        present = np.ones(count) if b == 0 else second.astype(np.float64)
        dy = yy[None] - centers[:, b, 0][:, None, None]
        dx = xx[None] - centers[:, b, 1][:, None, None]
        bump = np.exp(-(dy * dy + dx * dx) / (2.0 * sigmas[:, b][:, None, None] ** 2))
        images += (
            present[:, None, None, None] * colors[:, b][:, :, None, None] * bump[:, None]
        )
    np.clip(images, 0.0, 1.0, out=images)
    return DatasetHandle(
        "synthetic-blobs", images, seed if shuffle_seed is None else shuffle_seed
    )


def batches(handle: DatasetHandle, batch_size: int, epoch_seed) -> Iterator[Tensor]:
    """Seeded shuffle of the pool, yielded in full batches (the final
    partial batch is dropped)."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if batch_size > handle.count:
        raise ValueError(f"batch_size {batch_size} exceeds dataset size {handle.count}")
    key = [handle.shuffle_seed, _SHUFFLE_TAG]
    key += list(epoch_seed) if isinstance(epoch_seed, (tuple, list)) else [int(epoch_seed)]
    perm = Stream(key).permutation(handle.count)
    for start in range(0, handle.count - batch_size + 1, batch_size):
        idx = perm[start : start + batch_size]
        yield Tensor(handle.images[idx])


def sample_noise(
    count: int, dim: int = 100, seed: int = 0, draw_index: int = 0, prior: str = "normal"
) -> Tensor:
    """Noise batch [count, dim, 1, 1]; the stream position is fully
    determined by (seed, draw_index) so draws replay exactly."""
    if count < 1:
        raise ValueError("count must be >= 1")
    stream = Stream([seed, _NOISE_TAG, draw_index])
    if prior == "normal":
        z = stream.normal((count, dim))
    elif prior == "uniform":
        z = stream.uniform_range(-1.0, 1.0, (count, dim))
    else:
        raise ValueError(f"unknown noise prior {prior!r}")
    return Tensor(z.reshape(count, dim, 1, 1))
