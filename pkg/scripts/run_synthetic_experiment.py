#!/usr/bin/env python3
"""Desk-scale training experiment on the synthetic blob set.

Trains one objective, then renders the measure curves and the final
embedding histogram next to the run's metrics. Example:

    python3 scripts/run_synthetic_experiment.py --objective vanilla \
        --epochs 200 --out runs/vanilla
"""

import argparse
import sys
from pathlib import Path

from legan.charts import line_chart
from legan.cli import main as cli_main
from legan.trainer import TrainConfig, train


def parse_args():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--objective", default="vanilla",
                   choices=["vanilla", "least-squares", "wasserstein"])
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--images", type=int, default=2000)
    p.add_argument("--image-size", type=int, default=8, choices=[8, 32])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--learning-rate", type=float, default=1e-4)
    p.add_argument("--legan-ema", type=float, default=0.0)
    p.add_argument("--out", default="runs/synthetic")
    return p.parse_args()


def main():
    args = parse_args()
    cfg = TrainConfig(
        objective=args.objective,
        dataset="synth-blobs",
        synth_count=args.images,
        image_size=args.image_size,
        epochs=args.epochs,
        seed=args.seed,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        legan_ema=args.legan_ema,
        out_dir=args.out,
    )

    def show(log):
        line = (
            f"epoch {log.epoch:4d}  d_loss {log.d_loss:9.5f}  g_loss {log.g_loss:9.5f}  "
            f"l_diff {log.l_diff:9.5f}  l_ratio {log.l_ratio:.5f}"
        )
        if log.critic_distance is not None:
            line += f"  critic_distance {log.critic_distance:9.5f}"
        print(line)

    result = train(cfg, epoch_callback=show)
    out = Path(args.out)

    logs = result.epoch_logs
    epochs = [float(l.epoch) for l in logs]
    line_chart(
        [("l_diff", epochs, [l.l_diff for l in logs])],
        out / "l_diff.svg",
        title=f"{args.objective}: likelihood difference",
    )
    line_chart(
        [("l_ratio", epochs, [l.l_ratio for l in logs])],
        out / "l_ratio.svg",
        title=f"{args.objective}: likelihood ratio",
    )
    line_chart(
        [
            ("d_loss", epochs, [l.d_loss for l in logs]),
            ("g_loss", epochs, [l.g_loss for l in logs]),
        ],
        out / "losses.svg",
        title=f"{args.objective}: losses",
    )
    if args.objective == "wasserstein":
        line_chart(
            [("critic_distance", epochs, [l.critic_distance for l in logs])],
            out / "critic_distance.svg",
            title="critic distance",
        )
    dumps = sorted(out.glob("hist_epoch*.txt"))
    if dumps:
        cli_main(["hist", str(dumps[-1]), "--out", str(out / "embeddings.svg")])
    print(f"curves and histogram written next to {result.metrics_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
