"""Generator and discriminator builders plus the embedding head.

The 32x32 architectures are fixed four-layer stacks; an 8x8 variant keeps
only the first and last layer of each stack (with their strides adjusted by
construction) and exists for fast desk-scale runs. Batch norm sits between
the convolution and its activation; the generator's output layer carries no
batch norm so the sigmoid range survives.

The discriminator's final layer is left without a nonlinearity: its
pre-activation map, averaged over spatial positions, is the per-image
embedding. Score heads (sigmoid for the vanilla objective, identity
otherwise) are applied downstream by the losses.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ConvConfig, Tensor
from .rng import Stream

BN_EPS = 1e-5
BN_MOMENTUM = 0.9  # running = m*running + (1-m)*batch

_GEN_STREAM_TAG = 101
_DISC_STREAM_TAG = 202

_HEADS = {"vanilla": "sigmoid", "least-squares": "raw", "wasserstein": "raw"}


@dataclass(frozen=True)
class LayerSpec:
    """One convolutional block: conv or transposed conv, optional batch
    norm, optional activation."""

    kind: str  # "conv" | "tconv"
    channels: int
    kernel: tuple[int, int] = (4, 4)
    stride: int = 2
    pad_or_crop: int = 1
    activation: str | None = None  # "lrelu" | "sigmoid" | None
    slope: float = 0.2
    batch_norm: bool = False
    init_std: float = 0.02
    init_mean: float = 0.0

    def __post_init__(self):
        if self.kind not in ("conv", "tconv"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.init_std <= 0:
            raise ValueError("init std must be positive")

    def output_size(self, size: int) -> int:
        kh = self.kernel[0]
        if self.kind == "conv":
            out = ad.conv_output_size(size, kh, self.stride, self.pad_or_crop)
        else:
            out = ad.transposed_conv_output_size(size, kh, self.stride, self.pad_or_crop)
        if out < 1:
            raise ValueError(f"layer {self} maps size {size} to {out}")
        return out


GENERATOR_32 = (
    LayerSpec("tconv", 256, (4, 4), 1, 0, "lrelu", batch_norm=True),
    LayerSpec("tconv", 128, (4, 4), 2, 1, "lrelu", batch_norm=True),
    LayerSpec("tconv", 64, (4, 4), 2, 1, "lrelu", batch_norm=True),
    LayerSpec("tconv", 3, (4, 4), 2, 1, "sigmoid"),
)

DISCRIMINATOR_32 = (
    LayerSpec("conv", 64, (4, 4), 2, 1, "lrelu"),
    LayerSpec("conv", 128, (4, 4), 2, 1, "lrelu", batch_norm=True),
    LayerSpec("conv", 256, (2, 2), 2, 1, "lrelu", batch_norm=True),
    LayerSpec("conv", 1, (4, 4), 2, 1, None),
)

# First and last layers of the 32x32 stacks; 1 -> 4 -> 8 and 8 -> 4 -> 2.
GENERATOR_8 = (GENERATOR_32[0], GENERATOR_32[3])
DISCRIMINATOR_8 = (DISCRIMINATOR_32[0], DISCRIMINATOR_32[3])


class _Layer:
    def __init__(self, spec: LayerSpec, in_channels: int, stream: Stream):
        self.spec = spec
        self.in_channels = in_channels
        kh, kw = spec.kernel
        if spec.kind == "conv":
            kshape = (spec.channels, in_channels, kh, kw)
        else:
            kshape = (in_channels, spec.channels, kh, kw)
        self.kernel = Tensor(
            stream.normal(kshape) * spec.init_std + spec.init_mean, requires_grad=True
        )
        self.bias = Tensor(np.zeros(spec.channels), requires_grad=True)
        self.cfg = ConvConfig(spec.stride, spec.pad_or_crop, kh, kw)
        if spec.batch_norm:
            self.gamma = Tensor(np.ones(spec.channels), requires_grad=True)
            self.beta = Tensor(np.zeros(spec.channels), requires_grad=True)
            self.running_mean = np.zeros(spec.channels)
            self.running_var = np.ones(spec.channels)

    def forward(self, x: Tensor, training: bool, update_running: bool) -> Tensor:
        if self.spec.kind == "conv":
            x = ad.conv2d(x, self.kernel, self.bias, self.cfg)
        else:
            x = ad.transposed_conv2d(x, self.kernel, self.bias, self.cfg)
        if self.spec.batch_norm:
            if training:
                if update_running:
                    m = x.data.mean(axis=(0, 2, 3))
                    v = x.data.var(axis=(0, 2, 3))
                    self.running_mean *= BN_MOMENTUM
                    self.running_mean += (1.0 - BN_MOMENTUM) * m
                    self.running_var *= BN_MOMENTUM
                    self.running_var += (1.0 - BN_MOMENTUM) * v
                x = ad.batch_norm(x, self.gamma, self.beta, BN_EPS)
            else:
                x = ad.batch_norm_frozen(
                    x, self.gamma, self.beta, self.running_mean, self.running_var, BN_EPS
                )
        if self.spec.activation == "lrelu":
            x = ad.leaky_relu(x, self.spec.slope)
        elif self.spec.activation == "sigmoid":
            x = ad.sigmoid(x)
        return x

    def parameters(self) -> list[Tensor]:
        ps = [self.kernel, self.bias]
        if self.spec.batch_norm:
            ps += [self.gamma, self.beta]
        return ps

    def named_arrays(self, prefix: str) -> list[tuple[str, np.ndarray]]:
        items = [(f"{prefix}.kernel", self.kernel.data), (f"{prefix}.bias", self.bias.data)]
        if self.spec.batch_norm:
            items += [
                (f"{prefix}.gamma", self.gamma.data),
                (f"{prefix}.beta", self.beta.data),
                (f"{prefix}.running_mean", self.running_mean),
                (f"{prefix}.running_var", self.running_var),
            ]
        return items


class _Sequential:
    def __init__(self, specs, in_channels: int, image_size: int, stream: Stream):
        self.image_size = image_size
        self.layers: list[_Layer] = []
        c = in_channels
        for spec in specs:
            self.layers.append(_Layer(spec, c, stream))
            c = spec.channels

    def parameters(self) -> list[Tensor]:
        ps: list[Tensor] = []
        for layer in self.layers:
            ps.extend(layer.parameters())
        return ps

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def named_arrays(self, prefix: str) -> list[tuple[str, np.ndarray]]:
        items: list[tuple[str, np.ndarray]] = []
        for i, layer in enumerate(self.layers):
            items.extend(layer.named_arrays(f"{prefix}.l{i}"))
        return items

    def _run(self, x: Tensor, training: bool, update_running: bool) -> Tensor:
        for layer in self.layers:
            x = layer.forward(x, training, update_running)
        return x


class GeneratorNet(_Sequential):
    """Noise [N, noise_dim, 1, 1] to images [N, 3, image_size, image_size]."""

    def __init__(self, specs, noise_dim: int, image_size: int, stream: Stream):
        super().__init__(specs, noise_dim, image_size, stream)
        self.noise_dim = noise_dim

    def forward(self, z: Tensor, training: bool = True, update_running: bool | None = None) -> Tensor:
        if z.data.ndim != 4 or z.data.shape[1:] != (self.noise_dim, 1, 1):
            raise ValueError(
                f"generator expects noise [N,{self.noise_dim},1,1], got {z.shape}"
            )
        if update_running is None:
            update_running = training
        return self._run(z, training, update_running)


class DiscriminatorNet(_Sequential):
    """Images [N, 3, image_size, image_size] to a pre-activation score map."""

    def __init__(self, specs, image_size: int, stream: Stream, head: str, objective: str):
        super().__init__(specs, 3, image_size, stream)
        self.head = head
        self.objective = objective

    def embed_map(
        self, images: Tensor, training: bool = False, update_running: bool = False
    ) -> Tensor:
        s = self.image_size
        if images.data.ndim != 4 or images.data.shape[1:] != (3, s, s):
            raise ValueError(f"discriminator expects images [N,3,{s},{s}], got {images.shape}")
        return self._run(images, training, update_running)


def build_generator(noise_dim: int = 100, init_seed: int = 0, image_size: int = 32) -> GeneratorNet:
    if noise_dim < 1:
        raise ValueError("noise_dim must be >= 1")
    specs = _generator_specs(image_size)
    stream = Stream([init_seed, _GEN_STREAM_TAG])
    return GeneratorNet(specs, noise_dim, image_size, stream)


def build_discriminator(
    objective: str = "vanilla", init_seed: int = 0, image_size: int = 32
) -> DiscriminatorNet:
    objective = str(objective)
    if objective not in _HEADS:
        raise ValueError(f"unknown objective {objective!r}")
    specs = _discriminator_specs(image_size)
    stream = Stream([init_seed, _DISC_STREAM_TAG])
    return DiscriminatorNet(specs, image_size, stream, _HEADS[objective], objective)


def _generator_specs(image_size: int):
    if image_size == 32:
        return GENERATOR_32
    if image_size == 8:
        return GENERATOR_8
    raise ValueError(f"unsupported generator image size {image_size} (expected 8 or 32)")


def _discriminator_specs(image_size: int):
    if image_size == 32:
        return DISCRIMINATOR_32
    if image_size == 8:
        return DISCRIMINATOR_8
    raise ValueError(f"unsupported discriminator image size {image_size} (expected 8 or 32)")


def embed(
    net: DiscriminatorNet, images: Tensor, training: bool = False, update_running: bool = False
) -> Tensor:
    """One scalar per image: the final pre-activation map averaged over
    its spatial positions."""
    score_map = net.embed_map(images, training, update_running)
    return ad.reduce_mean(score_map, axes=(1, 2, 3))


def discriminate(net: DiscriminatorNet, images: Tensor, training: bool = False) -> Tensor:
    """Per-image score under the net's head: sigmoid(embedding) for the
    vanilla objective, the raw embedding otherwise."""
    a = embed(net, images, training)
    return ad.sigmoid(a) if net.head == "sigmoid" else a


# ---------------------------------------------------------------------------
# checkpoint format: a plain-text shape manifest followed by all values as
# little-endian float64 in manifest order.

_CKPT_MAGIC = "legan-params"


def save_parameters(path, items: list[tuple[str, np.ndarray]]) -> None:
    names = [name for name, _ in items]
    if len(set(names)) != len(names):
        raise ValueError("duplicate parameter names in checkpoint")
    with open(path, "wb") as f:
        f.write(f"{_CKPT_MAGIC} 1 {len(items)}\n".encode("ascii"))
        for name, arr in items:
            if " " in name:
                raise ValueError(f"parameter name {name!r} must not contain spaces")
            dims = " ".join(str(d) for d in arr.shape)
            f.write(f"{name} {dims}\n".encode("ascii"))
        for _, arr in items:
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_parameters(path) -> list[tuple[str, np.ndarray]]:
    with open(path, "rb") as raw:
        f = io.BufferedReader(raw)
        header = f.readline().decode("ascii").split()
        if len(header) != 3 or header[0] != _CKPT_MAGIC or header[1] != "1":
            raise ValueError(f"{path}: not a parameter checkpoint")
        count = int(header[2])
        entries = []
        for _ in range(count):
            parts = f.readline().decode("ascii").split()
            if not parts:
                raise ValueError(f"{path}: truncated manifest")
            name, dims = parts[0], tuple(int(d) for d in parts[1:])
            entries.append((name, dims))
        blob = f.read()
    expected = sum(int(np.prod(d)) for _, d in entries) * 8
    if len(blob) != expected:
        raise ValueError(f"{path}: expected {expected} data bytes, found {len(blob)}")
    items = []
    offset = 0
    for name, dims in entries:
        n = int(np.prod(dims))
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=offset).reshape(dims).copy()
        items.append((name, arr))
        offset += n * 8
    return items


def restore_arrays(net: _Sequential, prefix: str, mapping: dict[str, np.ndarray]) -> None:
    """Copy checkpoint values back into a network built with the same
    architecture."""
    for name, target in net.named_arrays(prefix):
        if name not in mapping:
            raise ValueError(f"checkpoint is missing {name}")
        src = mapping[name]
        if src.shape != target.shape:
            raise ValueError(f"{name}: shape {src.shape} does not match {target.shape}")
        target[...] = src
