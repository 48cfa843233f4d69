#!/usr/bin/env python3
# Copyright (c) 2026, The NIO Authors
# SPDX-License-Identifier: Apache-2.0
"""Builds the 5000-sample MNIST subset used by the test suite.

The source is mnist_5k.csv.gz shipped inside the mlxtend wheel (784 pixel
columns followed by the label, 500 samples per digit). The first 400 samples
of every digit go to the training split and the remaining 100 to the test
split. Output uses the IDX layout and the usual MNIST file names.

    python3 tools/fetch_mnist_subset.py [--wheel PATH] [--out DIR]

Without --wheel the wheel is fetched with `pip download`.
"""

import argparse
import gzip
import io
import pathlib
import struct
import subprocess
import sys
import tempfile
import zipfile

WHEEL = "mlxtend==0.24.0"
MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"
TRAIN_PER_CLASS = 400


def fetch_wheel(dest):
    subprocess.run(
        [sys.executable, "-m", "pip", "download", WHEEL, "--no-deps", "-d", str(dest)],
        check=True,
    )
    wheels = sorted(pathlib.Path(dest).glob("mlxtend-*.whl"))
    if not wheels:
        sys.exit("pip download produced no mlxtend wheel")
    return wheels[0]


def read_rows(wheel):
    with zipfile.ZipFile(wheel) as z:
        raw = gzip.decompress(z.read(MEMBER))
    rows = []
    for line in io.StringIO(raw.decode("ascii")):
        line = line.strip()
        if not line:
            continue
        values = [int(float(v)) for v in line.split(",")]
        if len(values) != 785:
            sys.exit(f"unexpected row width {len(values)}")
        rows.append((values[-1], bytes(values[:-1])))
    return rows


def write_idx(out, name, rows):
    images = out / f"{name}-images-idx3-ubyte"
    labels = out / f"{name}-labels-idx1-ubyte"
    with open(images, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(rows), 28, 28))
        for _, pixels in rows:
            f.write(pixels)
    with open(labels, "wb") as f:
        f.write(struct.pack(">II", 0x801, len(rows)))
        f.write(bytes(label for label, _ in rows))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--wheel", type=pathlib.Path)
    parser.add_argument("--out", type=pathlib.Path, default=pathlib.Path("tests/data/mnist5k"))
    args = parser.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel or fetch_wheel(tmp)
        rows = read_rows(wheel)

    seen = {}
    train, test = [], []
    for label, pixels in rows:
        k = seen.get(label, 0)
        seen[label] = k + 1
        (train if k < TRAIN_PER_CLASS else test).append((label, pixels))

    args.out.mkdir(parents=True, exist_ok=True)
    write_idx(args.out, "train", train)
    write_idx(args.out, "t10k", test)
    print(f"wrote {len(train)} training and {len(test)} test samples to {args.out}")


if __name__ == "__main__":
    main()
