import numpy as np
import pytest

import legan.autodiff as ad
from legan.autodiff import Tensor, check_gradients
from legan.networks import (
    DISCRIMINATOR_32,
    GENERATOR_32,
    build_discriminator,
    build_generator,
    discriminate,
    embed,
    load_parameters,
    restore_arrays,
    save_parameters,
)
from legan.data import sample_noise


def small_images(n=4, size=32, seed=0):
    rng = np.random.default_rng(seed)
    return Tensor(rng.uniform(0.0, 1.0, size=(n, 3, size, size)))


def test_generator_forward_shape_and_range():
    gen = build_generator(100, init_seed=1, image_size=32)
    out = gen.forward(sample_noise(2, 100, seed=1))
    assert out.shape == (2, 3, 32, 32)
    assert np.all(out.data > 0.0) and np.all(out.data < 1.0)


def test_generator_8x8_variant_shape():
    gen = build_generator(100, init_seed=1, image_size=8)
    out = gen.forward(sample_noise(3, 100, seed=2))
    assert out.shape == (3, 3, 8, 8)


def test_generator_rejects_wrong_noise_shape():
    gen = build_generator(100, init_seed=1, image_size=32)
    with pytest.raises(ValueError, match="noise"):
        gen.forward(Tensor(np.zeros((2, 50, 1, 1))))


def test_builds_are_seed_reproducible():
    for build, args in ((build_generator, (100, 9, 32)), (build_discriminator, ("vanilla", 9, 32))):
        a, b = build(*args), build(*args)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert np.array_equal(pa.data, pb.data)
    a = build_generator(100, init_seed=1)
    b = build_generator(100, init_seed=2)
    assert not np.array_equal(a.layers[0].kernel.data, b.layers[0].kernel.data)


def test_discriminator_map_shape():
    disc = build_discriminator("vanilla", init_seed=3, image_size=32)
    m = disc.embed_map(small_images(2), training=True)
    assert m.shape == (2, 1, 2, 2)
    disc8 = build_discriminator("vanilla", init_seed=3, image_size=8)
    assert disc8.embed_map(small_images(2, size=8), training=True).shape == (2, 1, 2, 2)


def test_zero_parameters_give_zero_embedding():
    disc = build_discriminator("vanilla", init_seed=4, image_size=32)
    for p in disc.parameters():
        p.data[...] = 0.0
    a = embed(disc, small_images(3), training=True)
    np.testing.assert_array_equal(a.data, 0.0)
    a = embed(disc, small_images(3), training=False)
    np.testing.assert_array_equal(a.data, 0.0)


def test_embed_is_spatial_mean_of_score_map():
    disc = build_discriminator("vanilla", init_seed=5, image_size=32)
    x = small_images(3, seed=2)
    m = disc.embed_map(x, training=False)
    a = embed(disc, x, training=False)
    np.testing.assert_allclose(a.data, m.data.mean(axis=(1, 2, 3)), rtol=1e-15)


def test_embed_gradients_to_images():
    disc = build_discriminator("vanilla", init_seed=6, image_size=8)
    x = Tensor(np.random.default_rng(3).uniform(0.2, 0.8, size=(2, 3, 8, 8)), requires_grad=True)
    proj = Tensor(np.random.default_rng(4).normal(size=(2,)))
    report = check_gradients(
        "embed",
        lambda: ad.reduce_sum(embed(disc, x, training=True) * proj),
        [("images", x)],
        tolerance=1e-4,
    )
    assert report.passed, report


def test_embed_batch_invariance_in_inference_mode():
    disc = build_discriminator("vanilla", init_seed=7, image_size=32)
    # Make the frozen statistics non-trivial first.
    disc.embed_map(small_images(8, seed=5), training=True, update_running=True)
    batch = small_images(5, seed=6)
    together = embed(disc, batch, training=False).data
    for i in range(5):
        alone = embed(disc, Tensor(batch.data[i : i + 1]), training=False).data[0]
        assert abs(alone - together[i]) < 1e-9


def test_discriminate_heads():
    for objective, expected in (("vanilla", 0.5), ("wasserstein", 0.0), ("least-squares", 0.0)):
        disc = build_discriminator(objective, init_seed=8, image_size=32)
        for p in disc.parameters():
            p.data[...] = 0.0
        scores = discriminate(disc, small_images(2), training=True)
        np.testing.assert_allclose(scores.data, expected)
    disc = build_discriminator("vanilla", init_seed=8, image_size=32)
    scores = discriminate(disc, small_images(4), training=True).data
    assert np.all((scores > 0.0) & (scores < 1.0))


def test_parameter_counts_are_fixed():
    def conv_params(specs, in_channels):
        total = 0
        c = in_channels
        for s in specs:
            kh, kw = s.kernel
            total += s.channels * c * kh * kw + s.channels
            if s.batch_norm:
                total += 2 * s.channels
            c = s.channels
        return total

    gen = build_generator(100, init_seed=0, image_size=32)
    disc = build_discriminator("vanilla", init_seed=0, image_size=32)
    assert gen.parameter_count() == conv_params(GENERATOR_32, 100) == 1_069_379
    assert disc.parameter_count() == conv_params(DISCRIMINATOR_32, 3) == 270_529


def test_checkpoint_round_trip(tmp_path):
    gen = build_generator(100, init_seed=11, image_size=8)
    disc = build_discriminator("vanilla", init_seed=11, image_size=8)
    disc.embed_map(small_images(4, size=8, seed=9), training=True, update_running=True)
    items = gen.named_arrays("g") + disc.named_arrays("d")
    path = tmp_path / "ckpt.bin"
    save_parameters(path, items)
    loaded = dict(load_parameters(path))
    assert set(loaded) == {name for name, _ in items}
    for name, arr in items:
        assert np.array_equal(loaded[name], arr)

    gen2 = build_generator(100, init_seed=99, image_size=8)
    restore_arrays(gen2, "g", loaded)
    z = sample_noise(2, 100, seed=42)
    np.testing.assert_array_equal(
        gen.forward(z, training=True, update_running=False).data,
        gen2.forward(z, training=True, update_running=False).data,
    )


def test_checkpoint_rejects_truncated_file(tmp_path):
    gen = build_generator(100, init_seed=11, image_size=8)
    path = tmp_path / "ckpt.bin"
    save_parameters(path, gen.named_arrays("g"))
    blob = path.read_bytes()
    path.write_bytes(blob[:-16])
    with pytest.raises(ValueError, match="bytes"):
        load_parameters(path)


def test_unsupported_image_size_rejected():
    with pytest.raises(ValueError, match="image size"):
        build_generator(100, init_seed=0, image_size=16)
    with pytest.raises(ValueError, match="image size"):
        build_discriminator("vanilla", init_seed=0, image_size=64)
