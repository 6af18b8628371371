"""Training loop: Adam updates, the k:1 discriminator/generator schedule,
post-update weight clipping, and per-step fitness measurement.

A run writes into its output directory:

* ``metrics.csv`` - one row per generator step (schema below),
* ``hist_epoch####.txt`` - embedding histogram dumps on a fixed cadence,
* ``ckpt_epoch####.bin`` - parameter checkpoints on a fixed cadence.

Runs are bit-reproducible for a fixed config and seed: every random draw
flows through seeded streams keyed by purpose, and CSV cells are written
with shortest round-trip float formatting.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, zero_grads
from .data import DatasetHandle, batches, load_cifar10_binary, sample_noise, synth_blobs
from .measures import EmbeddingBatch, LeganMeter, LeganRecord, embedding_histogram
from .networks import (
    DiscriminatorNet,
    GeneratorNet,
    build_discriminator,
    build_generator,
    embed,
    save_parameters,
)
from .objectives import (
    ObjectiveKind,
    clip_weights,
    d_loss_ls,
    d_loss_vanilla,
    d_loss_wasserstein,
    g_loss_ls,
    g_loss_vanilla,
    g_loss_wasserstein,
    l2_penalty,
)

METRICS_HEADER = (
    "epoch,step,objective,d_loss,g_loss,l_real,l_fake,l_diff,l_ratio,"
    "critic_distance,l_diff_perimage,l_ratio_perimage"
)

_TRAIN_STREAM = 21
_MEASURE_STREAM = 22


class ConfigError(ValueError):
    """A run configuration that cannot be executed."""


class NumericAbort(RuntimeError):
    """Training produced a non-finite value; the run stops."""


@dataclass
class TrainConfig:
    objective: str = "vanilla"
    batch_size: int = 128
    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_c: float = 0.02
    l2_lambda: float = 1e-4
    d_steps_per_g: int = 5
    epochs: int = 5
    seed: int = 0
    legan_ema: float = 0.0  # 0 disables smoothing; otherwise the EMA decay
    dataset: str = "synth-blobs"  # "synth-blobs" | "cifar10"
    data_paths: str = ""  # comma-separated CIFAR binary files
    synth_count: int = 2000
    image_size: int = 32
    noise_dim: int = 100
    noise_prior: str = "normal"
    hist_every: int = 10
    hist_bins: int = 50
    ckpt_every: int = 50
    out_dir: str = "runs/run"

    def validate(self) -> None:
        try:
            ObjectiveKind(self.objective)
        except ValueError:
            raise ConfigError(f"unknown objective {self.objective!r}") from None
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.d_steps_per_g < 1:
            raise ConfigError("d_steps_per_g must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.clip_c <= 0:
            raise ConfigError("clip_c must be positive")
        if self.l2_lambda < 0:
            raise ConfigError("l2_lambda must be non-negative")
        if not 0.0 <= self.legan_ema < 1.0:
            raise ConfigError("legan_ema must be in [0, 1)")
        if self.dataset not in ("synth-blobs", "cifar10"):
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        if self.dataset == "cifar10" and not self.data_paths:
            raise ConfigError("dataset cifar10 needs data_paths")
        if self.noise_prior not in ("normal", "uniform"):
            raise ConfigError(f"unknown noise prior {self.noise_prior!r}")
        if self.hist_every < 1 or self.ckpt_every < 1:
            raise ConfigError("hist_every and ckpt_every must be >= 1")
        if self.hist_bins < 2:
            raise ConfigError("hist_bins must be >= 2")


class Adam:
    """Bias-corrected Adam over a fixed parameter list."""

    def __init__(
        self,
        params: list[Tensor],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                continue
            if g.shape != p.data.shape:
                raise ValueError(f"gradient shape {g.shape} does not match {p.data.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    d_loss: float
    g_loss: float
    l_real: float
    l_fake: float
    l_diff: float
    l_ratio: float
    critic_distance: float | None
    seconds: float


@dataclass(frozen=True)
class StepResult:
    record: LeganRecord
    d_loss: float
    g_loss: float
    critic_distance: float | None


@dataclass(frozen=True)
class RunResult:
    out_dir: Path
    metrics_path: Path
    epoch_logs: list[EpochLog]


@dataclass
class _RunState:
    noise_draws: int = 0

    def next_noise(self, cfg: TrainConfig) -> Tensor:
        z = sample_noise(
            cfg.batch_size, cfg.noise_dim, cfg.seed, self.noise_draws, cfg.noise_prior
        )
        self.noise_draws += 1
        return z


def _ensure_finite(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise NumericAbort(f"non-finite {what}")
    return value


def _d_loss(objective: str, d_real: Tensor, d_fake: Tensor):
    if objective == "vanilla":
        return d_loss_vanilla(d_real, d_fake), None
    if objective == "least-squares":
        return d_loss_ls(d_real, d_fake), None
    loss, cd = d_loss_wasserstein(d_real, d_fake)
    return loss, cd


def _g_loss(objective: str, d_fake: Tensor) -> Tensor:
    if objective == "vanilla":
        return g_loss_vanilla(d_fake)
    if objective == "least-squares":
        return g_loss_ls(d_fake)
    return g_loss_wasserstein(d_fake)


def train_batch_d(
    gen: GeneratorNet,
    disc: DiscriminatorNet,
    opt_d: Adam,
    real: Tensor,
    noise: Tensor,
    cfg: TrainConfig,
) -> tuple[float, float | None]:
    """One discriminator update: loss, backprop, Adam step on D only, then
    weight clipping. Generator parameters are never touched."""
    with ad.no_grad():
        fake = gen.forward(noise, training=True)
    d_real = embed(disc, real, training=True, update_running=True)
    d_fake = embed(disc, fake, training=True, update_running=True)
    loss, critic_distance = _d_loss(cfg.objective, d_real, d_fake)
    if cfg.l2_lambda > 0:
        loss = loss + l2_penalty(disc.parameters(), cfg.l2_lambda)
    value = _ensure_finite(loss.item(), "d_loss")
    zero_grads(disc.parameters())
    loss.backward()
    opt_d.step()
    clip_weights(disc.parameters(), cfg.clip_c)
    return value, critic_distance


def train_batch_g(
    gen: GeneratorNet, disc: DiscriminatorNet, opt_g: Adam, noise: Tensor, cfg: TrainConfig
) -> float:
    """One generator update through the frozen-parameter discriminator."""
    fake = gen.forward(noise, training=True)
    d_fake = embed(disc, fake, training=True, update_running=False)
    loss = _g_loss(cfg.objective, d_fake)
    value = _ensure_finite(loss.item(), "g_loss")
    zero_grads(gen.parameters())
    zero_grads(disc.parameters())
    loss.backward()
    opt_g.step()
    return value


def _endless_batches(
    handle: DatasetHandle, batch_size: int, stream_tag: int, epoch: int
) -> Iterator[Tensor]:
    # Wraps around with a reshuffled pass when a schedule outruns the epoch.
    pass_index = 0
    while True:
        yield from batches(handle, batch_size, (stream_tag, epoch, pass_index))
        pass_index += 1


def measure_embeddings(
    gen: GeneratorNet, disc: DiscriminatorNet, real: Tensor, noise: Tensor
) -> tuple[np.ndarray, np.ndarray]:
    """Fresh real/fake embeddings in training-mode batch norm (matching
    what the discriminator saw), without touching running statistics."""
    with ad.no_grad():
        fake = gen.forward(noise, training=True, update_running=False)
        a_real = embed(disc, real, training=True, update_running=False)
        a_fake = embed(disc, fake, training=True, update_running=False)
    return a_real.data.copy(), a_fake.data.copy()


def train_epoch(
    gen: GeneratorNet,
    disc: DiscriminatorNet,
    handle: DatasetHandle,
    cfg: TrainConfig,
    epoch: int,
    opt_d: Adam,
    opt_g: Adam,
    meter: LeganMeter,
    state: _RunState,
    d_step_hook: Callable[[DiscriminatorNet], None] | None = None,
) -> tuple[EpochLog, list[StepResult], tuple[np.ndarray, np.ndarray]]:
    """One pass over the data: d_steps_per_g discriminator updates per
    generator update, then a fitness measurement on fresh batches."""
    t0 = time.perf_counter()
    n_batches = handle.count // cfg.batch_size
    if n_batches < 1:
        raise ConfigError("dataset yields no full batch")
    g_steps = max(1, n_batches // cfg.d_steps_per_g)
    train_iter = _endless_batches(handle, cfg.batch_size, _TRAIN_STREAM, epoch)
    measure_iter = _endless_batches(handle, cfg.batch_size, _MEASURE_STREAM, epoch)

    results: list[StepResult] = []
    last_emb: tuple[np.ndarray, np.ndarray] | None = None
    for step in range(1, g_steps + 1):
        d_values = []
        distances = []
        for _ in range(cfg.d_steps_per_g):
            real = next(train_iter)
            d_value, distance = train_batch_d(gen, disc, opt_d, real, state.next_noise(cfg), cfg)
            d_values.append(d_value)
            if distance is not None:
                distances.append(_ensure_finite(distance, "critic_distance"))
            if d_step_hook is not None:
                d_step_hook(disc)
        g_value = train_batch_g(gen, disc, opt_g, state.next_noise(cfg), cfg)
        a_real, a_fake = measure_embeddings(
            gen, disc, next(measure_iter), state.next_noise(cfg)
        )
        record = meter.measure(a_real, a_fake, epoch, step)
        for name in ("l_real", "l_fake", "l_diff", "l_ratio"):
            _ensure_finite(getattr(record, name), name)
        results.append(
            StepResult(
                record=record,
                d_loss=float(np.mean(d_values)),
                g_loss=g_value,
                critic_distance=float(np.mean(distances)) if distances else None,
            )
        )
        last_emb = (a_real, a_fake)

    log = EpochLog(
        epoch=epoch,
        d_loss=float(np.mean([r.d_loss for r in results])),
        g_loss=float(np.mean([r.g_loss for r in results])),
        l_real=float(np.mean([r.record.l_real for r in results])),
        l_fake=float(np.mean([r.record.l_fake for r in results])),
        l_diff=float(np.mean([r.record.l_diff for r in results])),
        l_ratio=float(np.mean([r.record.l_ratio for r in results])),
        critic_distance=(
            float(np.mean([r.critic_distance for r in results]))
            if results[0].critic_distance is not None
            else None
        ),
        seconds=time.perf_counter() - t0,
    )
    assert last_emb is not None
    return log, results, last_emb


def build_dataset(cfg: TrainConfig) -> DatasetHandle:
    if cfg.dataset == "synth-blobs":
        if cfg.synth_count < cfg.batch_size:
            raise ConfigError("synth_count must be at least batch_size")
        return synth_blobs(cfg.synth_count, cfg.image_size, cfg.seed, shuffle_seed=cfg.seed)
    paths = [p.strip() for p in cfg.data_paths.split(",") if p.strip()]
    try:
        handle = load_cifar10_binary(paths, shuffle_seed=cfg.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if handle.count < cfg.batch_size:
        raise ConfigError(
            f"dataset has {handle.count} images, fewer than batch_size {cfg.batch_size}"
        )
    return handle


def _csv_cell(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def _csv_row(cfg: TrainConfig, result: StepResult) -> str:
    r = result.record
    cells = [
        str(r.epoch),
        str(r.batch),
        cfg.objective,
        _csv_cell(result.d_loss),
        _csv_cell(result.g_loss),
        _csv_cell(r.l_real),
        _csv_cell(r.l_fake),
        _csv_cell(r.l_diff),
        _csv_cell(r.l_ratio),
        _csv_cell(result.critic_distance),
        _csv_cell(r.l_diff_perimage),
        _csv_cell(r.l_ratio_perimage),
    ]
    return ",".join(cells)


def train(
    cfg: TrainConfig,
    d_step_hook: Callable[[DiscriminatorNet], None] | None = None,
    epoch_callback: Callable[[EpochLog], None] | None = None,
) -> RunResult:
    """Run the configured training and write metrics, histogram dumps, and
    checkpoints into ``cfg.out_dir``."""
    cfg.validate()
    handle = build_dataset(cfg)
    if handle.image_size not in (8, 32):
        raise ConfigError(f"no architecture for image size {handle.image_size}")
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    gen = build_generator(cfg.noise_dim, init_seed=cfg.seed, image_size=handle.image_size)
    disc = build_discriminator(cfg.objective, init_seed=cfg.seed, image_size=handle.image_size)
    opt_d = Adam(disc.parameters(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    opt_g = Adam(gen.parameters(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    meter = LeganMeter(cfg.legan_ema)
    state = _RunState()

    metrics_path = out_dir / "metrics.csv"
    epoch_logs: list[EpochLog] = []
    with open(metrics_path, "w", encoding="utf-8", newline="\n") as metrics:
        metrics.write(METRICS_HEADER + "\n")
        for epoch in range(1, cfg.epochs + 1):
            log, results, (a_real, a_fake) = train_epoch(
                gen, disc, handle, cfg, epoch, opt_d, opt_g, meter, state, d_step_hook
            )
            for result in results:
                metrics.write(_csv_row(cfg, result) + "\n")
            metrics.flush()
            if epoch % cfg.hist_every == 0 or epoch == cfg.epochs:
                dump = embedding_histogram(
                    EmbeddingBatch.real(a_real),
                    EmbeddingBatch.fake(a_fake),
                    cfg.hist_bins,
                    epoch=epoch,
                )
                (out_dir / f"hist_epoch{epoch:04d}.txt").write_text(
                    dump.to_text(), encoding="utf-8"
                )
            if epoch % cfg.ckpt_every == 0 or epoch == cfg.epochs:
                items = gen.named_arrays("g") + disc.named_arrays("d")
                save_parameters(out_dir / f"ckpt_epoch{epoch:04d}.bin", items)
            epoch_logs.append(log)
            if epoch_callback is not None:
                epoch_callback(log)
    return RunResult(out_dir=out_dir, metrics_path=metrics_path, epoch_logs=epoch_logs)
