#!/usr/bin/env python3
"""Write a CIFAR-10-format binary file filled with synthetic 32x32 blob
images, for exercising the binary loader and the full-size networks
without the real dataset.

    python3 scripts/make_cifar_fixture.py --count 512 --out cifar_subset.bin
"""

import argparse
import sys

from legan.data import synth_blobs, write_cifar10_binary


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--count", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    args = p.parse_args()
    write_cifar10_binary(synth_blobs(args.count, 32, args.seed).images, args.out)
    print(f"wrote {args.count} records to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
