"""Adversarial objectives, the weight-norm penalty, weight clipping, and
the empirical Lipschitz probe.

All loss functions take per-image score vectors produced by
:func:`legan.networks.embed` and return scalars to minimize. The vanilla
pair consumes the embeddings as logits and applies its sigmoid head inside
the loss via stable log-sigmoid; the least-squares and critic objectives
consume the raw embeddings.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .networks import DiscriminatorNet, embed


class ObjectiveKind(str, enum.Enum):
    VANILLA = "vanilla"
    LEAST_SQUARES = "least-squares"
    WASSERSTEIN = "wasserstein"


def _check_scores(*tensors: Tensor) -> None:
    for t in tensors:
        if t.data.ndim != 1:
            raise ValueError(f"expected a vector of per-image scores, got shape {t.shape}")


def d_loss_vanilla(d_real: Tensor, d_fake: Tensor) -> Tensor:
    """Binary cross-entropy discriminator loss on logits, minimized."""
    _check_scores(d_real, d_fake)
    return -(ad.reduce_mean(ad.log_sigmoid(d_real)) + ad.reduce_mean(ad.log_sigmoid(-d_fake)))


def g_loss_vanilla(d_fake: Tensor) -> Tensor:
    """Generator loss: mean negative log-probability of fooling D."""
    _check_scores(d_fake)
    return -ad.reduce_mean(ad.log_sigmoid(d_fake))


def d_loss_ls(d_real: Tensor, d_fake: Tensor) -> Tensor:
    """Least-squares discriminator loss: real scores toward 1, fake toward 0."""
    _check_scores(d_real, d_fake)
    r = d_real - 1.0
    return 0.5 * ad.reduce_mean(r * r) + 0.5 * ad.reduce_mean(d_fake * d_fake)


def g_loss_ls(d_fake: Tensor) -> Tensor:
    """Least-squares generator loss: fake scores toward 1."""
    _check_scores(d_fake)
    f = d_fake - 1.0
    return 0.5 * ad.reduce_mean(f * f)


def d_loss_wasserstein(d_real: Tensor, d_fake: Tensor) -> tuple[Tensor, float]:
    """Critic loss plus the critic distance mean(real) - mean(fake).

    The loss is the negated distance so that minimizing it widens the
    critic's separation; the distance itself is the logged estimate.
    """
    _check_scores(d_real, d_fake)
    loss = ad.reduce_mean(d_fake) - ad.reduce_mean(d_real)
    return loss, -loss.item()


def g_loss_wasserstein(d_fake: Tensor) -> Tensor:
    _check_scores(d_fake)
    return -ad.reduce_mean(d_fake)


def l2_penalty(params: Iterable[Tensor], lam: float) -> Tensor:
    """lam times the sum of squared parameter values."""
    if lam < 0:
        raise ValueError("penalty weight must be non-negative")
    if lam == 0.0:
        return Tensor(0.0)
    total = Tensor(0.0)
    for p in params:
        total = total + ad.reduce_sum(p * p)
    return float(lam) * total


def clip_weights(params: Iterable[Tensor], c: float) -> None:
    """Clamp every parameter value into [-c, c] in place."""
    if c <= 0:
        raise ValueError("clip bound must be positive")
    for p in params:
        np.clip(p.data, -c, c, out=p.data)


@dataclass(frozen=True)
class LipschitzProbe:
    """Distances between one image pair and its embeddings."""

    d_x: float  # Euclidean distance between the images
    d_a: float  # absolute difference of the embeddings
    ratio: float  # d_a / d_x


def lipschitz_probe(net: DiscriminatorNet, x, y) -> LipschitzProbe:
    """Empirical embedding-vs-pixel distance ratio for one pair of images.

    Uses inference-mode batch norm so the embeddings do not depend on the
    pairing. Identical images are rejected (the ratio is undefined).
    """
    xd = _image_array(net, x)
    yd = _image_array(net, y)
    if np.array_equal(xd, yd):
        raise ValueError("identical images: Lipschitz ratio is undefined")
    d_x = float(np.sqrt(((xd - yd) ** 2).sum()))
    with ad.no_grad():
        pair = embed(net, Tensor(np.concatenate([xd, yd], axis=0)), training=False)
    d_a = abs(float(pair.data[0]) - float(pair.data[1]))
    return LipschitzProbe(d_x=d_x, d_a=d_a, ratio=d_a / d_x)


def _image_array(net: DiscriminatorNet, image) -> np.ndarray:
    arr = np.asarray(image.data if isinstance(image, Tensor) else image, dtype=np.float64)
    s = net.image_size
    if arr.shape == (3, s, s):
        arr = arr[None]
    if arr.shape != (1, 3, s, s):
        raise ValueError(f"expected one image shaped [3,{s},{s}], got {arr.shape}")
    return arr
