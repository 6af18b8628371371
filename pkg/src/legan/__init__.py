"""GAN training and evaluation toolkit with likelihood-based fitness
measures on a from-scratch reverse-mode autodiff core."""

from .autodiff import (
    ConvConfig,
    Tensor,
    batch_norm,
    batch_norm_frozen,
    conv2d,
    finite_diff_check,
    leaky_relu,
    log_sigmoid,
    no_grad,
    reduce_mean,
    reduce_sum,
    reshape,
    sigmoid,
    transposed_conv2d,
)
from .data import DatasetHandle, batches, load_cifar10_binary, sample_noise, synth_blobs
from .measures import (
    EmbeddingBatch,
    GaussianModel,
    HistogramDump,
    LeganMeter,
    LeganRecord,
    embedding_histogram,
    fit_gaussian,
    legan_diff,
    legan_ratio,
    legan_step,
    likelihood,
)
from .networks import (
    DiscriminatorNet,
    GeneratorNet,
    build_discriminator,
    build_generator,
    discriminate,
    embed,
)
from .objectives import (
    LipschitzProbe,
    ObjectiveKind,
    clip_weights,
    d_loss_ls,
    d_loss_vanilla,
    d_loss_wasserstein,
    g_loss_ls,
    g_loss_vanilla,
    g_loss_wasserstein,
    l2_penalty,
    lipschitz_probe,
)
from .trainer import Adam, EpochLog, RunResult, TrainConfig, train

__version__ = "0.1.0"
