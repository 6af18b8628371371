"""Command-line surface: train, plot, hist, gradcheck.

Exit codes: 0 success; 1 configuration, input, or I/O error; 2 numeric
abort during training (or argparse usage error); 3 gradient-check failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from pathlib import Path

from . import charts, gradcheck
from .measures import HistogramFormatError, parse_histogram
from .trainer import METRICS_HEADER, ConfigError, NumericAbort, TrainConfig, train

PLOTTABLE_COLUMNS = (
    "d_loss",
    "g_loss",
    "l_real",
    "l_fake",
    "l_diff",
    "l_ratio",
    "critic_distance",
    "l_diff_perimage",
    "l_ratio_perimage",
)


class MetricsError(ValueError):
    pass


def parse_config_file(path) -> TrainConfig:
    """key=value lines onto TrainConfig fields; '#' lines are comments and
    unknown keys are rejected."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    cfg = TrainConfig()
    converters = {f.name: type(f.default) for f in dataclasses.fields(TrainConfig)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in converters:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            setattr(cfg, key, converters[key](value))
        except ValueError:
            raise ConfigError(
                f"{path}:{lineno}: bad value {value!r} for key {key!r}"
            ) from None
    return cfg


def read_metrics(path) -> list[dict]:
    """Parse a metrics CSV; header must match the schema exactly and the
    body must be non-empty. Empty cells become None."""
    columns = METRICS_HEADER.split(",")
    try:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header != columns:
                raise MetricsError(f"{path}: header does not match the metrics schema")
            rows = []
            for lineno, cells in enumerate(reader, 2):
                if len(cells) != len(columns):
                    raise MetricsError(f"{path}:{lineno}: expected {len(columns)} cells")
                row: dict = {}
                for name, cell in zip(columns, cells):
                    if name == "objective":
                        row[name] = cell
                    elif name in ("epoch", "step"):
                        row[name] = int(cell)
                    else:
                        row[name] = float(cell) if cell != "" else None
                rows.append(row)
    except OSError as exc:
        raise MetricsError(f"cannot read metrics file {path}: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, MetricsError):
            raise
        raise MetricsError(f"{path}: bad cell value: {exc}") from None
    if not rows:
        raise MetricsError(f"{path}: no data rows")
    return rows


def per_epoch_means(rows: list[dict], column: str) -> tuple[list[float], list[float]]:
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    for row in rows:
        value = row[column]
        if value is None:
            continue
        epoch = row["epoch"]
        sums[epoch] = sums.get(epoch, 0.0) + value
        counts[epoch] = counts.get(epoch, 0) + 1
    if not sums:
        raise MetricsError(f"column {column!r} has no values")
    epochs = sorted(sums)
    return [float(e) for e in epochs], [sums[e] / counts[e] for e in epochs]


def _err(message: str) -> None:
    print(f"error: {message}", file=sys.stderr)


def cmd_train(args) -> int:
    try:
        cfg = parse_config_file(args.config)
        if args.out is not None:
            cfg.out_dir = args.out
        if args.seed is not None:
            cfg.seed = args.seed
        cfg.validate()
    except ConfigError as exc:
        _err(str(exc))
        return 1

    def show(log):
        print(
            f"epoch {log.epoch} d_loss {log.d_loss:.6g} g_loss {log.g_loss:.6g} "
            f"l_diff {log.l_diff:.6g} l_ratio {log.l_ratio:.6g}"
        )

    try:
        result = train(cfg, epoch_callback=show)
    except ConfigError as exc:
        _err(str(exc))
        return 1
    except NumericAbort as exc:
        _err(f"numeric abort: {exc}")
        return 2
    except OSError as exc:
        _err(f"I/O failure: {exc}")
        return 1
    print(f"run written to {result.out_dir}")
    return 0


def cmd_plot(args) -> int:
    columns = [c.strip() for c in args.columns.split(",") if c.strip()]
    if not columns:
        _err("no columns requested")
        return 1
    for column in columns:
        if column not in PLOTTABLE_COLUMNS:
            _err(f"unknown column {column!r}")
            return 1
    try:
        rows = read_metrics(args.metrics)
        series = []
        for column in columns:
            xs, ys = per_epoch_means(rows, column)
            series.append((column, xs, ys))
    except MetricsError as exc:
        _err(str(exc))
        return 1
    try:
        charts.line_chart(series, args.out, title=Path(args.metrics).name)
    except OSError as exc:
        _err(f"cannot write {args.out}: {exc}")
        return 1
    return 0


def cmd_hist(args) -> int:
    try:
        text = Path(args.dump).read_text(encoding="utf-8")
    except OSError as exc:
        _err(f"cannot read histogram dump {args.dump}: {exc}")
        return 1
    try:
        dump = parse_histogram(text)
    except HistogramFormatError as exc:
        _err(f"{args.dump}: {exc}")
        return 1
    try:
        charts.bar_chart(
            dump.edges,
            [("real", dump.real_counts), ("fake", dump.fake_counts)],
            args.out,
            title=f"embeddings at epoch {dump.epoch}",
        )
    except OSError as exc:
        _err(f"cannot write {args.out}: {exc}")
        return 1
    return 0


def cmd_gradcheck(args) -> int:
    reports = gradcheck.run_all(args.tolerance)
    width = max(len(r.name) for r in reports)
    print(f"{'op'.ljust(width)}  max_rel_err  status")
    failures = 0
    for report in reports:
        status = "ok" if report.passed else "FAIL"
        failures += 0 if report.passed else 1
        print(f"{report.name.ljust(width)}  {report.max_rel_err:<11.3e}  {status}")
    print(f"{len(reports) - failures}/{len(reports)} passed at tolerance {args.tolerance:g}")
    return 0 if failures == 0 else 3


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="legan",
        description="GAN training with likelihood-based fitness measures",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run a training config")
    p_train.add_argument("config", help="key=value config file")
    p_train.add_argument("--out", help="override the output directory")
    p_train.add_argument("--seed", type=int, help="override the config seed")

    p_plot = sub.add_parser("plot", help="render metric curves as SVG")
    p_plot.add_argument("metrics", help="metrics.csv from a run")
    p_plot.add_argument("--out", required=True, help="output .svg path")
    p_plot.add_argument(
        "--columns", default="l_diff,l_ratio", help="comma-separated metric columns"
    )

    p_hist = sub.add_parser("hist", help="render an embedding histogram dump as SVG")
    p_hist.add_argument("dump", help="hist_epoch####.txt from a run")
    p_hist.add_argument("--out", required=True, help="output .svg path")

    p_grad = sub.add_parser("gradcheck", help="finite-difference check of every op")
    p_grad.add_argument("--tolerance", type=float, default=1e-4)

    args = parser.parse_args(argv)
    handlers = {
        "train": cmd_train,
        "plot": cmd_plot,
        "hist": cmd_hist,
        "gradcheck": cmd_gradcheck,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
