"""Likelihood-based fitness measures over discriminator embeddings.

A univariate Gaussian is fit to the embeddings of a batch of real images;
the density of that Gaussian evaluated at the mean real and mean fake
embedding gives per-batch likelihoods, and from those the two fitness
measures: their difference (l_diff) and their min/max ratio (l_ratio).
Raw densities, not log-densities, are used throughout.

A per-image variant (the mean of the per-image densities instead of the
density of the mean) is computed alongside and logged as auxiliary
columns; the batch-mean form is the primary measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

VAR_FLOOR = 1e-8
# Densities this far into the tail would otherwise underflow to 0.0 and
# break the strictly-positive contract; floor keeps ratios well defined.
DENSITY_FLOOR = 1e-300


@dataclass(frozen=True)
class EmbeddingBatch:
    """Scalar embeddings of one batch of images, tagged by source."""

    values: np.ndarray
    source: str  # "real" | "fake"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "values", vals)
        if vals.size == 0:
            raise ValueError("embedding batch must be non-empty")
        if not np.all(np.isfinite(vals)):
            raise ValueError("embedding batch contains non-finite values")
        if self.source not in ("real", "fake"):
            raise ValueError(f"unknown embedding source {self.source!r}")

    @classmethod
    def real(cls, values) -> "EmbeddingBatch":
        return cls(np.asarray(values), "real")

    @classmethod
    def fake(cls, values) -> "EmbeddingBatch":
        return cls(np.asarray(values), "fake")

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class GaussianModel:
    """Mean/variance pair fit to real-image embeddings."""

    mu: float
    var: float
    degenerate: bool = False  # variance hit the floor

    def __post_init__(self):
        if not (self.var >= VAR_FLOOR):
            raise ValueError(f"variance {self.var} below floor {VAR_FLOOR}")


def _ordered(values: np.ndarray) -> np.ndarray:
    # Summation order affects the last float bits; sorting first makes every
    # statistic exactly invariant to batch element order.
    return np.sort(values)


def fit_gaussian(batch: EmbeddingBatch) -> GaussianModel:
    """Sample mean and population (1/N) variance of real embeddings.

    An all-identical batch yields the floored variance with the degenerate
    flag set.
    """
    if batch.source != "real":
        raise ValueError("the likelihood model is fit on real embeddings only")
    if len(batch) < 2:
        raise ValueError("need at least 2 embeddings to fit a Gaussian")
    ordered = _ordered(batch.values)
    mu = float(ordered.mean())
    var = float(ordered.var())
    if var < VAR_FLOOR:
        return GaussianModel(mu=mu, var=VAR_FLOOR, degenerate=True)
    return GaussianModel(mu=mu, var=var)


def density(model: GaussianModel, a) -> np.ndarray:
    """Gaussian density values (vectorized), floored away from zero."""
    a = np.asarray(a, dtype=np.float64)
    norm = 1.0 / math.sqrt(2.0 * math.pi * model.var)
    d = norm * np.exp(-0.5 * (a - model.mu) ** 2 / model.var)
    return np.maximum(d, DENSITY_FLOOR)


def likelihood(model: GaussianModel, a: float) -> float:
    """Density of the fitted Gaussian at ``a``; strictly positive."""
    return float(density(model, a))


def batch_mean_embedding(batch: EmbeddingBatch) -> float:
    return float(_ordered(batch.values).mean())


def legan_diff(l_real: float, l_fake: float) -> float:
    """Likelihood difference l_real - l_fake."""
    if not (math.isfinite(l_real) and math.isfinite(l_fake)):
        raise ValueError("likelihoods must be finite")
    return l_real - l_fake


def legan_ratio(l_real: float, l_fake: float) -> float:
    """min/max likelihood ratio, in (0, 1]."""
    if not (l_real > 0 and l_fake > 0):
        raise ValueError("likelihood ratio needs strictly positive inputs")
    return min(l_real, l_fake) / max(l_real, l_fake)


@dataclass(frozen=True)
class LeganRecord:
    """Per-batch fitness measurements."""

    epoch: int
    batch: int
    l_real: float
    l_fake: float
    l_diff: float
    l_ratio: float
    l_diff_perimage: float
    l_ratio_perimage: float


def legan_step(
    real_emb: EmbeddingBatch,
    fake_emb: EmbeddingBatch,
    epoch: int = 0,
    batch: int = 0,
    model: GaussianModel | None = None,
) -> LeganRecord:
    """Fit (or reuse) the Gaussian on real embeddings and measure both
    batches against it."""
    if real_emb.source != "real" or fake_emb.source != "fake":
        raise ValueError("legan_step takes a real batch and a fake batch")
    if model is None:
        model = fit_gaussian(real_emb)
    l_real = likelihood(model, batch_mean_embedding(real_emb))
    l_fake = likelihood(model, batch_mean_embedding(fake_emb))
    lr_pi = float(density(model, _ordered(real_emb.values)).mean())
    lf_pi = float(density(model, _ordered(fake_emb.values)).mean())
    return LeganRecord(
        epoch=epoch,
        batch=batch,
        l_real=l_real,
        l_fake=l_fake,
        l_diff=legan_diff(l_real, l_fake),
        l_ratio=legan_ratio(l_real, l_fake),
        l_diff_perimage=legan_diff(lr_pi, lf_pi),
        l_ratio_perimage=legan_ratio(lr_pi, lf_pi),
    )


class LeganMeter:
    """Stateful measurement pipeline; optionally smooths the fitted model
    with an exponential moving average across batches (off by default)."""

    def __init__(self, ema_decay: float = 0.0):
        if not 0.0 <= ema_decay < 1.0:
            raise ValueError("ema decay must be in [0, 1)")
        self.ema_decay = ema_decay
        self._ema_mu: float | None = None
        self._ema_var: float | None = None

    def measure(self, real_values, fake_values, epoch: int, batch: int) -> LeganRecord:
        real = EmbeddingBatch.real(real_values)
        fake = EmbeddingBatch.fake(fake_values)
        if self.ema_decay == 0.0:
            return legan_step(real, fake, epoch, batch)
        fit = fit_gaussian(real)
        if self._ema_mu is None:
            self._ema_mu, self._ema_var = fit.mu, fit.var
        else:
            d = self.ema_decay
            self._ema_mu = d * self._ema_mu + (1.0 - d) * fit.mu
            self._ema_var = d * self._ema_var + (1.0 - d) * fit.var
        model = GaussianModel(mu=self._ema_mu, var=max(self._ema_var, VAR_FLOOR))
        return legan_step(real, fake, epoch, batch, model=model)


# ---------------------------------------------------------------------------
# histograms


@dataclass(frozen=True)
class HistogramDump:
    """Binned real/fake embedding counts over a shared uniform grid."""

    edges: np.ndarray
    real_counts: np.ndarray
    fake_counts: np.ndarray
    epoch: int = 0
    degenerate: bool = False  # all pooled values equal; single zero-width bin

    def to_text(self) -> str:
        edges = " ".join(repr(float(e)) for e in self.edges)
        real = " ".join(str(int(c)) for c in self.real_counts)
        fake = " ".join(str(int(c)) for c in self.fake_counts)
        return f"epoch {self.epoch} edges {edges}\nreal {real}\nfake {fake}\n"


class HistogramFormatError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def embedding_histogram(
    real_emb: EmbeddingBatch, fake_emb: EmbeddingBatch, bins: int, epoch: int = 0
) -> HistogramDump:
    """Uniform bins over the pooled [min, max]; the final bin is
    right-inclusive. Constant pooled values collapse to a single
    degenerate bin with the warning flag set."""
    if bins < 2:
        raise ValueError("need at least 2 bins")
    pooled = np.concatenate([real_emb.values, fake_emb.values])
    lo, hi = float(pooled.min()), float(pooled.max())
    if lo == hi:
        return HistogramDump(
            edges=np.array([lo, hi]),
            real_counts=np.array([len(real_emb)]),
            fake_counts=np.array([len(fake_emb)]),
            epoch=epoch,
            degenerate=True,
        )
    edges = np.linspace(lo, hi, bins + 1)

    def counts(values: np.ndarray) -> np.ndarray:
        idx = np.floor((values - lo) / (hi - lo) * bins).astype(np.int64)
        np.clip(idx, 0, bins - 1, out=idx)
        return np.bincount(idx, minlength=bins)

    return HistogramDump(
        edges=edges,
        real_counts=counts(real_emb.values),
        fake_counts=counts(fake_emb.values),
        epoch=epoch,
    )


def parse_histogram(text: str) -> HistogramDump:
    """Inverse of :meth:`HistogramDump.to_text`; errors carry the 1-based
    line number."""
    lines = [ln for ln in text.splitlines()]
    if len(lines) < 3:
        raise HistogramFormatError(len(lines) + 1, "expected 3 lines (header, real, fake)")

    head = lines[0].split()
    if len(head) < 5 or head[0] != "epoch" or head[2] != "edges":
        raise HistogramFormatError(1, "expected 'epoch <n> edges <e0> <e1> ...'")
    try:
        epoch = int(head[1])
        edges = np.array([float(tok) for tok in head[3:]])
    except ValueError as exc:
        raise HistogramFormatError(1, f"bad number: {exc}") from None
    degenerate = edges.size == 2 and edges[0] == edges[1]
    if not degenerate and np.any(np.diff(edges) <= 0):
        raise HistogramFormatError(1, "edges must be strictly increasing")

    def parse_counts(line_no: int, tag: str) -> np.ndarray:
        parts = lines[line_no - 1].split()
        if not parts or parts[0] != tag:
            raise HistogramFormatError(line_no, f"expected a '{tag}' row")
        try:
            c = np.array([int(tok) for tok in parts[1:]])
        except ValueError as exc:
            raise HistogramFormatError(line_no, f"bad count: {exc}") from None
        if c.size != edges.size - 1:
            raise HistogramFormatError(
                line_no, f"expected {edges.size - 1} counts, got {c.size}"
            )
        if np.any(c < 0):
            raise HistogramFormatError(line_no, "counts must be non-negative")
        return c

    return HistogramDump(
        edges=edges,
        real_counts=parse_counts(2, "real"),
        fake_counts=parse_counts(3, "fake"),
        epoch=epoch,
        degenerate=degenerate,
    )
