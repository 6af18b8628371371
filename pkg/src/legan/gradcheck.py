"""Finite-difference verification suite covering every differentiable op
and both network architectures at the reduced spatial size."""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import ConvConfig, GradCheckReport, Tensor, check_gradients, finite_diff_check
from .networks import build_discriminator, build_generator, embed
from .rng import Stream

_SEED = 2024


def _shifted_normal(stream: Stream, shape, margin: float = 0.25) -> np.ndarray:
    # Keep values away from 0 so kinked activations see no FD crossover.
    x = stream.normal(shape)
    return x + np.where(x >= 0, margin, -margin)


def _case_simple(name: str, op: Callable[..., Tensor], shapes, tolerance: float, seed: int):
    return lambda: finite_diff_check(op, shapes, tolerance=tolerance, seed=seed, name=name)


def _case_leaky_relu(tolerance: float, seed: int):
    def run():
        stream = Stream([seed, 3])
        x = Tensor(_shifted_normal(stream, (3, 4)), requires_grad=True)
        proj = Tensor(stream.normal((3, 4)))
        return check_gradients(
            "leaky_relu",
            lambda: ad.reduce_sum(ad.leaky_relu(x, 0.2) * proj),
            [("input0", x)],
            tolerance=tolerance,
            seed=seed,
        )

    return run


def _case_batch_norm_frozen(tolerance: float, seed: int):
    def run():
        stream = Stream([seed, 4])
        x = Tensor(stream.normal((3, 2, 2, 2)), requires_grad=True)
        gamma = Tensor(stream.normal((2,)), requires_grad=True)
        beta = Tensor(stream.normal((2,)), requires_grad=True)
        mean = stream.normal((2,))
        var = np.abs(stream.normal((2,))) + 0.5
        proj = Tensor(stream.normal((3, 2, 2, 2)))
        return check_gradients(
            "batch_norm_frozen",
            lambda: ad.reduce_sum(ad.batch_norm_frozen(x, gamma, beta, mean, var) * proj),
            [("input0", x), ("gamma", gamma), ("beta", beta)],
            tolerance=tolerance,
            seed=seed,
        )

    return run


def _case_network(name: str, tolerance: float, seed: int):
    def run():
        stream = Stream([seed, 5])
        if name == "generator[8x8]":
            net = build_generator(noise_dim=100, init_seed=7, image_size=8)
            z = Tensor(stream.normal((2, 100, 1, 1)), requires_grad=True)
            proj = Tensor(stream.normal((2, 3, 8, 8)))

            def forward():
                return ad.reduce_sum(net.forward(z, training=True, update_running=False) * proj)

            inputs = [("noise", z)]
        else:
            net = build_discriminator("vanilla", init_seed=7, image_size=8)
            x = Tensor(0.5 + 0.2 * stream.normal((2, 3, 8, 8)), requires_grad=True)
            proj = Tensor(stream.normal((2,)))

            def forward():
                return ad.reduce_sum(embed(net, x, training=True, update_running=False) * proj)

            inputs = [("images", x)]
        for i, layer in enumerate(net.layers):
            inputs.append((f"l{i}.kernel", layer.kernel))
            inputs.append((f"l{i}.bias", layer.bias))
            if layer.spec.batch_norm:
                inputs.append((f"l{i}.gamma", layer.gamma))
                inputs.append((f"l{i}.beta", layer.beta))
        # A tighter step keeps probes clear of activation kinks; double
        # precision leaves ample headroom above roundoff.
        return check_gradients(
            name, forward, inputs, tolerance=tolerance, probes=4, seed=seed, step=1e-7
        )

    return run


def suite(tolerance: float = 1e-4, seed: int = _SEED) -> list[Callable[[], GradCheckReport]]:
    """All checks, each returning a report when called."""
    conv_cfg = ConvConfig(2, 1, 3, 3)
    tconv_cfg = ConvConfig(2, 1, 3, 3)
    cases = [
        _case_simple("add", ad.add, [(3, 4), (3, 4)], tolerance, seed),
        _case_simple("sub", ad.sub, [(3, 4), (3, 4)], tolerance, seed),
        _case_simple("mul", ad.mul, [(3, 4), (3, 4)], tolerance, seed),
        _case_simple("neg", ad.neg, [(3, 4)], tolerance, seed),
        _case_simple("reshape", lambda t: ad.reshape(t, (4, 3)), [(3, 4)], tolerance, seed),
        _case_simple("reduce_mean", lambda t: ad.reduce_mean(t, (0, 2)), [(3, 4, 2)], tolerance, seed),
        _case_simple("reduce_sum", lambda t: ad.reduce_sum(t, (1,)), [(3, 4)], tolerance, seed),
        _case_simple("sigmoid", ad.sigmoid, [(3, 4)], tolerance, seed),
        _case_simple("log_sigmoid", ad.log_sigmoid, [(3, 4)], tolerance, seed),
        _case_leaky_relu(tolerance, seed),
        _case_simple(
            "batch_norm",
            lambda x, g, b: ad.batch_norm(x, g, b),
            [(3, 2, 2, 2), (2,), (2,)],
            tolerance,
            seed,
        ),
        _case_batch_norm_frozen(tolerance, seed),
        _case_simple(
            "conv2d",
            lambda x, k, b: ad.conv2d(x, k, b, conv_cfg),
            [(2, 3, 5, 5), (4, 3, 3, 3), (4,)],
            tolerance,
            seed,
        ),
        _case_simple(
            "transposed_conv2d",
            lambda x, k, b: ad.transposed_conv2d(x, k, b, tconv_cfg),
            [(2, 4, 3, 3), (4, 3, 3, 3), (3,)],
            tolerance,
            seed,
        ),
        _case_network("generator[8x8]", tolerance, seed),
        _case_network("discriminator[8x8]", tolerance, seed),
    ]
    return cases


def run_all(tolerance: float = 1e-4, seed: int = _SEED) -> list[GradCheckReport]:
    return [case() for case in suite(tolerance, seed)]
